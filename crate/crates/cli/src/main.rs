//! `predcoh` — synthetic-iEEG seizure prediction with two classifiers and
//! coherence-of-false-prediction analysis.

use clap::{Parser, Subcommand};
use predcoh_cli::config::PipelineConfig;
use predcoh_cli::pipeline::{Pipeline, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "predcoh",
    version,
    about = "Seizure-prediction pipeline on synthetic iEEG: feature-MLP and raw-CNN classifiers, \
             plus coherence and information-transfer analysis of their false predictions"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scenario override (separable | confounded | null).
    #[arg(long, global = true)]
    scenario: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic recording (or ingest an external one).
    Synth,
    /// Validate and canonicalize an external recording (alias of synth for
    /// recording inputs).
    Ingest,
    /// Label clips and write the manifest.
    Label,
    /// Extract the feature caches.
    Features,
    /// Train both methods (feature search + ensembles).
    Train,
    /// Produce per-clip prediction series for both methods.
    Evaluate,
    /// Correlations c and c_w with permutation p-values.
    Coherence,
    /// Information-transfer curves (both directions + random control).
    Transfer,
    /// Full report and plot data.
    Report,
    /// All stages end to end.
    Run {
        /// Stop after this stage.
        #[arg(long)]
        stage: Option<String>,
    },
}

fn target_stage(cmd: &Command) -> Result<Stage, String> {
    Ok(match cmd {
        Command::Synth | Command::Ingest => Stage::Synth,
        Command::Label => Stage::Label,
        Command::Features => Stage::Features,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Coherence => Stage::Coherence,
        Command::Transfer => Stage::Transfer,
        Command::Report => Stage::Report,
        Command::Run { stage } => match stage {
            None => Stage::Report,
            Some(name) => {
                Stage::parse(name).ok_or_else(|| format!("unknown stage {name:?}"))?
            }
        },
    })
}

fn build_config(cli: &Cli) -> Result<(PipelineConfig, String), String> {
    let (mut cfg, mut text) = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| e.to_string())?,
        None => {
            let mut cfg = PipelineConfig::default();
            if cli.scenario.is_none() {
                return Err("either --config or --scenario is required".into());
            }
            cfg.input.scenario = cli.scenario.clone();
            let text = cfg.to_toml();
            (cfg, text)
        }
    };
    if let Some(s) = &cli.scenario {
        cfg.input.scenario = Some(s.clone());
        cfg.input.synth = None;
        cfg.input.recording = None;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    if cli.seed.is_some() || cli.out.is_some() || cli.scenario.is_some() {
        // Provenance copy must reflect the effective config.
        text = cfg.to_toml();
    }
    Ok((cfg, text))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; keep usage failures on code 1.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let upto = match target_stage(&cli.command) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let (cfg, text) = match build_config(&cli) {
        Ok(x) => x,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };

    let out = cfg.out_dir.clone();
    let mut pipeline = Pipeline::new(cfg, text);
    match pipeline.run(upto) {
        Ok(Some(report)) => {
            println!("run complete: {}", out.display());
            println!(
                "  manifest: train {}p/{}i, test {}p/{}i",
                report.manifest.train_preictal,
                report.manifest.train_interictal,
                report.manifest.test_preictal,
                report.manifest.test_interictal
            );
            println!(
                "  method1 (combo {} {} {}): AUC {:.3} (Hanley p {:.4})",
                report.chosen_combo.uni.as_str(),
                report.chosen_combo.bi.as_str(),
                report.chosen_combo.variant.as_str(),
                report.method1.auc,
                report.method1.hanley_p
            );
            println!(
                "  method2: AUC {:.3} (Hanley p {:.4})",
                report.method2.auc, report.method2.hanley_p
            );
            println!(
                "  c = {:.3} (p {}), c_w = {:.3} (p {})",
                report.coherence.c,
                predcoh_core::eval::PermutationPvalues::display_p(
                    report.coherence.permutation.p_c,
                    report.coherence.permutation.n_pairings
                ),
                report.coherence.c_w,
                predcoh_core::eval::PermutationPvalues::display_p(
                    report.coherence.permutation.p_cw,
                    report.coherence.permutation.n_pairings
                ),
            );
            for w in &report.warnings {
                println!("  warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Ok(None) => {
            println!(
                "stages up to '{}' complete: {}",
                upto.name(),
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
