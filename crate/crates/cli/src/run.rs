//! Simulation, ingestion and analysis of a configured test suite.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use gaitradar::events::{segment_gait, GaitEvent, GaitSegment};
use gaitradar::params::StrideRecord;
use gaitradar::pipeline::{
    extract_all, process_node, radar_segments, run_simulated_trial, score_output, ConfigurationOutput, NodeProducts,
    TrialSetup,
};
use gaitradar::sim::{apply_trial_noise, render_iq, synthesize_walker, GroundTruth, NodeGeometry};
use serde::{Deserialize, Serialize};

use crate::config::{TestConfig, TrialConfig};
use crate::iqfile::{export_iq, ingest_iq, IqRecording};
use crate::plots::emit_plots;
use crate::report::{cycle_errors, foot_label, CycleError, TestSummary, TrialReport};

/// Reference written next to simulated recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub truth: GroundTruth,
    /// Walking bouts delimited from the reference torso velocity.
    pub segments: Vec<GaitSegment>,
}

pub const REFERENCE_FILE: &str = "reference.json";

pub fn recording_path(dir: &Path, test: &str, node_id: u32) -> PathBuf {
    dir.join(test).join(format!("node{node_id}.gwiq"))
}

fn setup_for(cfg: &TrialConfig, index: usize, test: &TestConfig) -> Result<TrialSetup> {
    Ok(TrialSetup {
        profile: cfg.walker.build()?,
        script: test.script(),
        waveform: cfg.waveform.build()?,
        nodes: cfg.node_geometry(test)?,
        snr_db: cfg.snr_db,
        seed: cfg.seed.wrapping_add(index as u64),
    })
}

/// Renders every test to `<dir>/<test>/node<id>.gwiq` plus its reference.
/// Returns the files written.
pub fn simulate(cfg: &TrialConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (i, test) in cfg.tests.iter().enumerate() {
        let setup = setup_for(cfg, i, test)?;
        let wf = setup.waveform;
        let (tracks, truth) = synthesize_walker(&setup.profile, &setup.script, wf.chirp_rate(), setup.seed)
            .with_context(|| format!("simulating test {}", test.name))?;
        let test_dir = dir.join(&test.name);
        fs::create_dir_all(&test_dir).with_context(|| format!("creating {}", test_dir.display()))?;
        for node in &setup.nodes {
            let clean = render_iq(&tracks, node, &wf, f64::INFINITY, 0)?;
            let cube = apply_trial_noise(clean, setup.snr_db, setup.noise_seed(node));
            let path = recording_path(dir, &test.name, node.id);
            export_iq(
                &path,
                &IqRecording {
                    waveform: wf,
                    node_id: node.id,
                    cube,
                },
            )?;
            written.push(path);
        }
        let reference = Reference {
            segments: segment_gait(&tracks.torso_approach_velocity()),
            truth,
        };
        let path = test_dir.join(REFERENCE_FILE);
        fs::write(&path, serde_json::to_vec(&reference)?).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// Node products of one test, with the reference when one is available.
pub struct TestInput {
    pub nodes: Vec<NodeProducts>,
    pub reference: Option<Reference>,
}

fn ingest_test(cfg: &TrialConfig, dir: &Path, test: &TestConfig, nodes: &[NodeGeometry]) -> Result<TestInput> {
    let wf = cfg.waveform.build()?;
    let max_range = (test.path_length_m + 4.0).min(wf.max_range());
    let mut products = Vec::with_capacity(nodes.len());
    for node in nodes {
        let path = recording_path(dir, &test.name, node.id);
        let rec = ingest_iq(&path)?;
        ensure!(
            rec.node_id == node.id,
            "{}: recorded by node {}, expected node {}",
            path.display(),
            rec.node_id,
            node.id
        );
        ensure!(
            rec.waveform == wf,
            "{}: waveform {:?} differs from the configured {:?}",
            path.display(),
            rec.waveform,
            wf
        );
        products.push(
            process_node(&rec.cube, &wf, node, max_range).with_context(|| format!("processing {}", path.display()))?,
        );
    }
    let ref_path = dir.join(&test.name).join(REFERENCE_FILE);
    let reference = if ref_path.exists() {
        let bytes = fs::read(&ref_path).with_context(|| format!("reading {}", ref_path.display()))?;
        Some(serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", ref_path.display()))?)
    } else {
        None
    };
    Ok(TestInput {
        nodes: products,
        reference,
    })
}

/// Loads the recordings of test `index` from the input directory, or
/// simulates it when none is configured.
pub fn load_test(cfg: &TrialConfig, index: usize) -> Result<TestInput> {
    let test = &cfg.tests[index];
    let setup = setup_for(cfg, index, test)?;
    match &cfg.input_dir {
        Some(dir) => ingest_test(cfg, dir, test, &setup.nodes),
        None => {
            let trial = run_simulated_trial(&setup).with_context(|| format!("simulating test {}", test.name))?;
            Ok(TestInput {
                nodes: trial.nodes,
                reference: Some(Reference {
                    truth: trial.truth,
                    segments: trial.truth_segments,
                }),
            })
        }
    }
}

/// Events and cycles of one test. Bouts come from the reference when there
/// is one and from the radar otherwise.
pub fn analyse(cfg: &TrialConfig, input: &TestInput) -> Result<ConfigurationOutput> {
    let f0 = cfg.waveform.build()?.f0;
    let segments = match &input.reference {
        Some(r) => r.segments.clone(),
        None => radar_segments(&input.nodes, f0)?,
    };
    Ok(extract_all(&input.nodes, cfg.configuration, &segments, f0)?)
}

#[derive(Debug, Serialize)]
struct EventRow<'a> {
    test: &'a str,
    kind: &'static str,
    foot: String,
    time_s: f64,
    source: String,
}

#[derive(Debug, Serialize)]
struct CycleRow<'a> {
    test: &'a str,
    foot: String,
    start_s: f64,
    end_s: f64,
    opposite_strike_s: f64,
    toe_off_s: f64,
    stride_time_s: f64,
    step_time_s: f64,
    stance_time_s: f64,
    swing_time_s: f64,
    double_support_time_s: f64,
    cadence_steps_per_min: f64,
    stride_velocity_mps: Option<f64>,
    step_velocity_mps: Option<f64>,
    stride_distance_m: Option<f64>,
    step_distance_m: Option<f64>,
    foot_max_velocity_mps: Option<f64>,
    spatial_method: String,
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_events(path: &Path, outputs: &[(String, Vec<GaitEvent>)]) -> Result<()> {
    let rows = outputs.iter().flat_map(|(test, events)| {
        events.iter().map(move |e| EventRow {
            test,
            kind: match e.kind {
                gaitradar::events::EventKind::HeelStrike => "HS",
                gaitradar::events::EventKind::ToeOff => "TO",
            },
            foot: foot_label(e.foot),
            time_s: e.time,
            source: label(&e.source),
        })
    });
    write_csv(path, rows)
}

fn write_cycles(path: &Path, outputs: &[(String, Vec<StrideRecord>)]) -> Result<()> {
    let rows = outputs.iter().flat_map(|(test, records)| {
        records.iter().map(move |r| CycleRow {
            test,
            foot: foot_label(r.foot),
            start_s: r.start,
            end_s: r.end,
            opposite_strike_s: r.opposite_strike,
            toe_off_s: r.toe_off,
            stride_time_s: r.stride_time,
            step_time_s: r.step_time,
            stance_time_s: r.stance_time,
            swing_time_s: r.swing_time,
            double_support_time_s: r.double_support_time,
            cadence_steps_per_min: r.cadence,
            stride_velocity_mps: r.stride_velocity,
            step_velocity_mps: r.step_velocity,
            stride_distance_m: r.stride_distance,
            step_distance_m: r.step_distance,
            foot_max_velocity_mps: r.foot_max_velocity,
            spatial_method: r.spatial_method.as_ref().map(label).unwrap_or_default(),
        })
    });
    write_csv(path, rows)
}

pub const EVENTS_CSV: &str = "events.csv";
pub const CYCLES_CSV: &str = "cycles.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const REPORT_JSON: &str = "report.json";
pub const PLOTS_DIR: &str = "plots";

/// Extracts events and cycles of every test and writes `events.csv` and
/// `cycles.csv` to the output directory.
pub fn process(cfg: &TrialConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut events = Vec::new();
    let mut cycles = Vec::new();
    for (i, test) in cfg.tests.iter().enumerate() {
        let input = load_test(cfg, i)?;
        let output = analyse(cfg, &input).with_context(|| format!("analysing test {}", test.name))?;
        events.push((test.name.clone(), output.events));
        cycles.push((test.name.clone(), output.records));
    }
    let paths = vec![out.join(EVENTS_CSV), out.join(CYCLES_CSV)];
    write_events(&paths[0], &events)?;
    write_cycles(&paths[1], &cycles)?;
    Ok(paths)
}

/// Full validation run: analysis of every test against its reference,
/// the report, the per-cycle tables and the plots.
pub struct RunOutcome {
    pub report: TrialReport,
    pub rows: Vec<CycleError>,
    pub notices: Vec<String>,
}

pub fn run_trial(cfg: &TrialConfig) -> Result<RunOutcome> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    let mut events = Vec::new();
    let mut cycles = Vec::new();
    for (i, test) in cfg.tests.iter().enumerate() {
        let input = load_test(cfg, i)?;
        let Some(reference) = &input.reference else {
            bail!("test {} has no {REFERENCE_FILE} to validate against", test.name);
        };
        let output = analyse(cfg, &input).with_context(|| format!("analysing test {}", test.name))?;
        let score = score_output(output, &reference.truth);
        summaries.push(TestSummary::new(
            &test.name,
            score.output.records.len(),
            score.pairs.len(),
            score.output.low_snr.len(),
            &score.matches,
        ));
        rows.extend(cycle_errors(&test.name, cfg.configuration.name(), &score.pairs));
        events.push((test.name.clone(), score.output.events));
        cycles.push((test.name.clone(), score.output.records));
    }
    let report = TrialReport::build(cfg, summaries, &rows);
    fs::write(out.join(REPORT_JSON), report.to_json())?;
    write_csv(&out.join(ERRORS_CSV), &rows)?;
    write_events(&out.join(EVENTS_CSV), &events)?;
    write_cycles(&out.join(CYCLES_CSV), &cycles)?;
    let (_, notices) = emit_plots(&out.join(PLOTS_DIR), &rows)?;
    Ok(RunOutcome { report, rows, notices })
}

pub fn read_errors(path: &Path) -> Result<Vec<CycleError>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{} row {}", path.display(), i + 1)))
        .collect()
}

pub fn read_report(path: &Path) -> Result<TrialReport> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}
