use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gaitradar_cli::config::TrialConfig;
use gaitradar_cli::plots::emit_plots;
use gaitradar_cli::run::{self, ERRORS_CSV, PLOTS_DIR, REPORT_JSON};

#[derive(Parser)]
#[command(name = "gaitradar", version, about = "Radar-network gait analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file and the flags that override its keys.
#[derive(Args)]
struct ConfigArgs {
    /// TOML trial configuration; defaults apply to missing keys
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Node configuration, C1 to C6
    #[arg(long)]
    configuration: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Receiver SNR of simulated recordings, dB
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Directory of `<test>/node<id>.gwiq` recordings
    #[arg(short, long)]
    input_dir: Option<PathBuf>,
    /// Any other key, e.g. `--set waveform.f0_ghz=24`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<TrialConfig> {
        let mut overrides = Vec::new();
        let quoted = |p: &PathBuf| format!("{:?}", p.display().to_string());
        if let Some(c) = &self.configuration {
            overrides.push(format!("configuration={c:?}"));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(s) = self.snr_db {
            overrides.push(format!("snr_db={s:?}"));
        }
        if let Some(p) = &self.output_dir {
            overrides.push(format!("output_dir={}", quoted(p)));
        }
        if let Some(p) = &self.input_dir {
            overrides.push(format!("input_dir={}", quoted(p)));
        }
        overrides.extend(self.overrides.iter().cloned());
        Ok(TrialConfig::load(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render every test to GWIQ recordings with their reference
    Simulate(ConfigArgs),
    /// Extract events and gait cycles from recordings (or fresh simulations)
    Process(ConfigArgs),
    /// Score every test against its reference and write the full report
    Validate(ConfigArgs),
    /// Redraw plots and print the summary of an existing report
    Report {
        /// Directory holding report.json and errors.csv
        dir: PathBuf,
    },
    /// Print the effective configuration as TOML
    ShowConfig(ConfigArgs),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let dir = cfg.input_dir.clone().unwrap_or_else(|| cfg.output_dir.join("iq"));
            let files = run::simulate(&cfg, &dir)?;
            println!("wrote {} files under {}", files.len(), dir.display());
        }
        Command::Process(args) => {
            let cfg = args.load()?;
            for p in run::process(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Validate(args) => {
            let cfg = args.load()?;
            let outcome = run::run_trial(&cfg)?;
            for n in &outcome.notices {
                eprintln!("note: {n}");
            }
            print!("{}", outcome.report.summary_table());
            println!("wrote {}", cfg.output_dir.join(REPORT_JSON).display());
        }
        Command::Report { dir } => {
            let report = run::read_report(&dir.join(REPORT_JSON))?;
            let rows = run::read_errors(&dir.join(ERRORS_CSV))?;
            let (written, notices) = emit_plots(&dir.join(PLOTS_DIR), &rows)
                .with_context(|| format!("writing plots under {}", dir.display()))?;
            for n in &notices {
                eprintln!("note: {n}");
            }
            print!("{}", report.summary_table());
            println!("wrote {} plots", written.len());
        }
        Command::ShowConfig(args) => print!("{}", args.load()?.to_toml()),
    }
    Ok(())
}
