//! End-to-end processing: per-node matrices, the six node configurations
//! and scoring against simulator truth.

use serde::{Deserialize, Serialize};

use crate::dsp::{
    clutter_filter, doppler_transform, estimate_frame_snr, integrate_bins, range_transform,
    select_target_bins, DopplerTimeMatrix, RangeTimeMatrix, TargetMask,
};
use crate::events::{
    assign_feet, detect_events_feet, detect_events_torso, match_events, segment_gait, torso_velocity,
    GaitEvent, GaitSegment, MatchReport,
};
use crate::fusion::{combine, doppler_flip, FusedDopplerMatrix, Source};
use crate::params::{
    foot_max_velocity, pair_records, spatial_from_range, spatial_from_range_one,
    spatial_from_torso_velocity, strides_in_segments, truth_records, StrideRecord,
};
use crate::series::{median, median_filter, odd_width, TimeSeries};
use crate::sim::{
    apply_trial_noise, render_iq, standard_layout, synthesize_walker, Focus, GroundTruth, IqCube, NodeGeometry,
    RadarWaveform, Side, TrialScript, WalkerProfile,
};
use crate::{Error, Result};

/// Median-filter length of the range track, seconds.
pub const RANGE_TRACK_SMOOTHING: f64 = 0.25;

/// Node configurations compared in the validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Configuration {
    /// Torso node at end 1.
    C1,
    /// Feet node at end 1.
    C2,
    /// Torso nodes at both ends, fused.
    C3,
    /// Feet nodes at both ends, fused.
    C4,
    /// Fused feet nodes for events, torso node 1 for distances.
    C5,
    /// Fused feet nodes for events, fused torso nodes for distances.
    C6,
}

impl Configuration {
    pub const ALL: [Configuration; 6] = [
        Configuration::C1,
        Configuration::C2,
        Configuration::C3,
        Configuration::C4,
        Configuration::C5,
        Configuration::C6,
    ];

    /// Nodes needed, as (end, focus).
    pub fn roles(self) -> &'static [(Side, Focus)] {
        use Focus::*;
        use Side::*;
        match self {
            Configuration::C1 => &[(One, Torso)],
            Configuration::C2 => &[(One, Feet)],
            Configuration::C3 => &[(One, Torso), (Two, Torso)],
            Configuration::C4 => &[(One, Feet), (Two, Feet)],
            Configuration::C5 => &[(One, Torso), (One, Feet), (Two, Feet)],
            Configuration::C6 => &[(One, Torso), (Two, Torso), (One, Feet), (Two, Feet)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Configuration::C1 => "C1",
            Configuration::C2 => "C2",
            Configuration::C3 => "C3",
            Configuration::C4 => "C4",
            Configuration::C5 => "C5",
            Configuration::C6 => "C6",
        }
    }

    /// Whether events come from the feet detector.
    pub fn uses_feet_events(self) -> bool {
        !matches!(self, Configuration::C1 | Configuration::C3)
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Configuration {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Configuration::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown configuration {s:?} (expected C1..C6)"))
    }
}

/// Everything later stages need from one node.
#[derive(Debug, Clone)]
pub struct NodeProducts {
    pub node: NodeGeometry,
    /// Doppler-time matrix in the node's own sign convention.
    pub dtm: DopplerTimeMatrix,
    /// Smoothed per-frame SNR, dB.
    pub snr: TimeSeries,
    /// Median-filtered target range, metres; NaN without detection.
    pub range_track: TimeSeries,
    /// Fraction of frames with a target detection.
    pub detection_fraction: f64,
}

/// Power-weighted centroid range of the masked bins of every frame.
pub fn centroid_range_track(rtm: &RangeTimeMatrix, mask: &TargetMask) -> TimeSeries {
    let raw: Vec<f64> = mask
        .runs
        .iter()
        .enumerate()
        .map(|(f, run)| match run {
            Some((a, b)) => {
                let frame = rtm.frame(f);
                let (mut num, mut den) = (0.0, 0.0);
                for bin in *a..*b {
                    let p = frame[bin].norm_sqr();
                    num += p * bin as f64 * rtm.range_resolution;
                    den += p;
                }
                num / den
            }
            None => f64::NAN,
        })
        .collect();
    let width = odd_width(RANGE_TRACK_SMOOTHING, rtm.frame_rate);
    TimeSeries::new(rtm.start_time, rtm.frame_rate, median_filter(&raw, width))
}

/// Range, clutter, target and Doppler processing of one node's chirps.
/// Bins beyond `max_range` are discarded right after the range FFT.
pub fn process_node(iq: &IqCube, wf: &RadarWaveform, node: &NodeGeometry, max_range: f64) -> Result<NodeProducts> {
    let rtm = range_transform(iq, wf)?.cropped(max_range);
    let rtm = clutter_filter(&rtm)?;
    let mask = select_target_bins(&rtm);
    let range_track = centroid_range_track(&rtm, &mask);
    let series = integrate_bins(&rtm, &mask)?;
    let detection_fraction = mask.detected_frames() as f64 / mask.runs.len().max(1) as f64;
    drop(rtm);
    let dtm = doppler_transform(&series)?;
    let snr = estimate_frame_snr(&dtm);
    Ok(NodeProducts {
        node: node.clone(),
        dtm,
        snr,
        range_track,
        detection_fraction,
    })
}

/// Events, low-SNR segments and stride records of one configuration.
#[derive(Debug, Clone)]
pub struct ConfigurationOutput {
    pub configuration: Configuration,
    pub events: Vec<GaitEvent>,
    pub low_snr: Vec<GaitSegment>,
    pub records: Vec<StrideRecord>,
}

struct Nodes<'a> {
    nodes: &'a [NodeProducts],
}

impl<'a> Nodes<'a> {
    fn get(&self, side: Side, focus: Focus) -> Option<&'a NodeProducts> {
        self.nodes
            .iter()
            .find(|n| n.node.side == side && n.node.focus == focus)
    }

    /// Matrix in the node-1 sign convention.
    fn oriented(&self, side: Side, focus: Focus) -> Result<DopplerTimeMatrix> {
        let n = self.get(side, focus).expect("roles checked");
        match side {
            Side::One => Ok(n.dtm.clone()),
            Side::Two => doppler_flip(&n.dtm),
        }
    }

    fn fused(&self, focus: Focus) -> Result<FusedDopplerMatrix> {
        let near = self.get(Side::One, focus).expect("roles checked");
        let far = self.get(Side::Two, focus).expect("roles checked");
        combine(&near.dtm, &doppler_flip(&far.dtm)?, &near.snr, &far.snr)
    }
}

fn check_roles(nodes: &[NodeProducts], config: Configuration) -> Result<()> {
    let roles = config.roles();
    if nodes.len() < roles.len() {
        return Err(Error::MissingNodes {
            configuration: config.name().into(),
            required: roles.len(),
            found: nodes.len(),
        });
    }
    let lookup = Nodes { nodes };
    for &(side, focus) in roles {
        if lookup.get(side, focus).is_none() {
            return Err(Error::MissingNodeRole {
                configuration: config.name().into(),
                role: format!(
                    "{} node at end {}",
                    match focus {
                        Focus::Torso => "torso",
                        Focus::Feet => "feet",
                    },
                    match side {
                        Side::One => 1,
                        Side::Two => 2,
                    }
                ),
            });
        }
    }
    Ok(())
}

/// Node whose frames dominate `[t0, t1]` in a fused matrix.
fn majority_source(fused: &FusedDopplerMatrix, t0: f64, t1: f64) -> Source {
    let frames = fused.matrix.frame_range(t0, t1);
    let far = fused.provenance[frames.clone()]
        .iter()
        .filter(|&&s| s == Source::Far)
        .count();
    if 2 * far > frames.len() {
        Source::Far
    } else {
        Source::Near
    }
}

/// Runs one configuration: events from the torso or feet detector, feet
/// labels, cycle records and the configuration's spatial method.
pub fn extract_all(
    nodes: &[NodeProducts],
    config: Configuration,
    segments: &[GaitSegment],
    f0: f64,
) -> Result<ConfigurationOutput> {
    check_roles(nodes, config)?;
    let lookup = Nodes { nodes };
    let (events, low_snr, mut records) = match config {
        Configuration::C1 | Configuration::C3 => {
            let dtm = if config == Configuration::C1 {
                lookup.oriented(Side::One, Focus::Torso)?
            } else {
                lookup.fused(Focus::Torso)?.matrix
            };
            let det = detect_events_torso(&dtm, f0, segments);
            let events = assign_feet(&det.events, segments);
            let mut records = strides_in_segments(&events, segments);
            spatial_from_torso_velocity(&mut records, &det.velocity);
            (events, det.low_snr, records)
        }
        Configuration::C2 => {
            let dtm = lookup.oriented(Side::One, Focus::Feet)?;
            let det = detect_events_feet(&dtm, f0, segments);
            let events = assign_feet(&det.events, segments);
            let mut records = strides_in_segments(&events, segments);
            let node = lookup.get(Side::One, Focus::Feet).expect("roles checked");
            spatial_from_range(&mut records, &node.range_track);
            foot_max_velocity(&mut records, &det.ridge);
            (events, det.low_snr, records)
        }
        Configuration::C4 | Configuration::C5 | Configuration::C6 => {
            let fused = lookup.fused(Focus::Feet)?;
            let det = detect_events_feet(&fused.matrix, f0, segments);
            let events = assign_feet(&det.events, segments);
            let mut records = strides_in_segments(&events, segments);
            match config {
                Configuration::C4 => {
                    for r in &mut records {
                        let side = match majority_source(&fused, r.start, r.end) {
                            Source::Near => Side::One,
                            Source::Far => Side::Two,
                        };
                        let node = lookup.get(side, Focus::Feet).expect("roles checked");
                        spatial_from_range_one(r, &node.range_track);
                    }
                }
                Configuration::C5 => {
                    let torso = lookup.oriented(Side::One, Focus::Torso)?;
                    let (speed, _) = torso_velocity(&torso, f0, segments);
                    spatial_from_torso_velocity(&mut records, &speed);
                }
                _ => {
                    let torso = lookup.fused(Focus::Torso)?;
                    let (speed, _) = torso_velocity(&torso.matrix, f0, segments);
                    spatial_from_torso_velocity(&mut records, &speed);
                }
            }
            foot_max_velocity(&mut records, &det.ridge);
            (events, det.low_snr, records)
        }
    };
    records.sort_by(|a, b| a.start.total_cmp(&b.start));
    Ok(ConfigurationOutput {
        configuration: config,
        events,
        low_snr,
        records,
    })
}

/// Walking bouts from the radar alone: the torso velocity of node 1, or of
/// both torso nodes fused when the far one is present. Feet-only setups fall
/// back to the feet nodes, whose slow band is dominated by the lower body.
pub fn radar_segments(nodes: &[NodeProducts], f0: f64) -> Result<Vec<GaitSegment>> {
    let lookup = Nodes { nodes };
    let focus = if nodes.iter().any(|n| n.node.focus == Focus::Torso) {
        Focus::Torso
    } else {
        Focus::Feet
    };
    let dtm = match (lookup.get(Side::One, focus), lookup.get(Side::Two, focus)) {
        (Some(_), Some(_)) => lookup.fused(focus)?.matrix,
        (Some(_), None) => lookup.oriented(Side::One, focus)?,
        (None, Some(_)) => lookup.oriented(Side::Two, focus)?,
        (None, None) => {
            return Err(Error::MissingNodeRole {
                configuration: "segmentation".into(),
                role: "radar".into(),
            })
        }
    };
    Ok(segment_gait(&crate::events::radial_torso_velocity(&dtm, f0)))
}

// ---------------------------------------------------------------------------
// Simulated trials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSetup {
    pub profile: WalkerProfile,
    pub script: TrialScript,
    pub waveform: RadarWaveform,
    pub nodes: Vec<NodeGeometry>,
    /// Mean echo power of each node's whole recording over the added noise
    /// power, dB.
    pub snr_db: f64,
    pub seed: u64,
}

impl TrialSetup {
    /// Standard four-node layout around the script's walkway.
    pub fn standard(profile: WalkerProfile, script: TrialScript, seed: u64) -> Self {
        let nodes = standard_layout(script.path_length, 0.3);
        Self {
            profile,
            script,
            waveform: RadarWaveform::default(),
            nodes,
            snr_db: DEFAULT_SNR_DB,
            seed,
        }
    }

    /// Range bins kept after the range FFT.
    pub fn max_range(&self) -> f64 {
        (self.script.path_length + 4.0).min(self.waveform.max_range())
    }

    pub fn noise_seed(&self, node: &NodeGeometry) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(u64::from(node.id))
    }
}

/// Default receiver SNR for simulated trials, dB.
pub const DEFAULT_SNR_DB: f64 = 20.0;

/// Simulated walker seen by every node of the setup.
pub struct SimulatedTrial {
    pub truth: GroundTruth,
    pub truth_segments: Vec<GaitSegment>,
    pub nodes: Vec<NodeProducts>,
}

/// Renders and processes every node, one at a time to bound memory. Walking
/// bouts come from the simulated torso velocity, the way a reference motion
/// capture system would delimit them.
pub fn run_simulated_trial(setup: &TrialSetup) -> Result<SimulatedTrial> {
    run_simulated_trial_with(setup, |_, _| {})
}

/// As [`run_simulated_trial`], handing each rendered cube to `inspect`
/// before it is processed (e.g. to write it to disk).
pub fn run_simulated_trial_with(
    setup: &TrialSetup,
    mut inspect: impl FnMut(&NodeGeometry, &IqCube),
) -> Result<SimulatedTrial> {
    let wf = &setup.waveform;
    let (tracks, truth) = synthesize_walker(&setup.profile, &setup.script, wf.chirp_rate(), setup.seed)?;
    let truth_segments = segment_gait(&tracks.torso_approach_velocity());
    let mut nodes = Vec::with_capacity(setup.nodes.len());
    for node in &setup.nodes {
        let clean = render_iq(&tracks, node, wf, f64::INFINITY, 0)?;
        let iq = apply_trial_noise(clean, setup.snr_db, setup.noise_seed(node));
        inspect(node, &iq);
        nodes.push(process_node(&iq, wf, node, setup.max_range())?);
    }
    Ok(SimulatedTrial {
        truth,
        truth_segments,
        nodes,
    })
}

/// One configuration scored against the simulator.
#[derive(Debug, Clone)]
pub struct ConfigurationScore {
    pub output: ConfigurationOutput,
    pub matches: MatchReport,
    /// (reference, estimate) record pairs.
    pub pairs: Vec<(StrideRecord, StrideRecord)>,
}

pub fn score_configuration(
    trial: &SimulatedTrial,
    config: Configuration,
    f0: f64,
) -> Result<ConfigurationScore> {
    let output = extract_all(&trial.nodes, config, &trial.truth_segments, f0)?;
    Ok(score_output(output, &trial.truth))
}

/// Matches an extraction against reference events and pairs its cycles with
/// the reference cycles opening within half a step of them.
pub fn score_output(output: ConfigurationOutput, truth: &GroundTruth) -> ConfigurationScore {
    let matches = match_events(&output.events, &truth.events, &truth.segments);
    let reference = truth_records(truth);
    let steps: Vec<f64> = reference.iter().map(|r| r.step_time).collect();
    let tolerance = 0.5 * median(&steps).unwrap_or(0.0);
    let pairs = pair_records(&output.records, &reference, tolerance)
        .into_iter()
        .map(|(t, e)| (t.clone(), e.clone()))
        .collect();
    ConfigurationScore {
        output,
        matches,
        pairs,
    }
}
