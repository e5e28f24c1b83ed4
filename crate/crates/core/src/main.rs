use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use myowave::classifier::MlpModel;
use myowave::pipeline::{
    bench_latency, emit_report, evaluate, feature_condition_sweep, load_data, prepare, run_experiment, summary,
    train_model, ExperimentConfig, TrainedModel,
};
use myowave::signal_io::write_recordings;

#[derive(Parser)]
#[command(name = "myowave", version, about = "Wavelet-feature EMG gesture classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key/value config file (`key = value` per line, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set window_ms=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let Some((key, value)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            cfg.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic data set as CSV.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the training trials and save the model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate accuracy against signal length and write the report files.
    /// Trains first unless `--model` is given.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Compare the conventional and full feature sets on the same split.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Time feature extraction, classification and fusion for one decision.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn trained_for(cfg: &ExperimentConfig, model: Option<&PathBuf>, split: &myowave::signal_io::DatasetSplit) -> Result<TrainedModel> {
    match model {
        Some(path) => {
            let channels = split.test.first().context("no test recordings")?.channel_count();
            let layout = cfg.extractor(cfg.feature_set)?.layout(channels).signature();
            let model = MlpModel::load(path, Some(&layout))?;
            Ok(TrainedModel::from_model(cfg, model, channels)?)
        }
        None => Ok(train_model(cfg, cfg.feature_set, &split.train)?),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { common, out } => {
            let cfg = common.load()?;
            let recordings = load_data(&cfg)?;
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_recordings(BufWriter::new(file), &recordings)?;
            println!("wrote {} recordings to {}", recordings.len(), out.display());
        }
        Command::Train { common, model } => {
            let cfg = common.load()?;
            let split = prepare(&cfg)?;
            let trained = train_model(&cfg, cfg.feature_set, &split.train)?;
            trained.model.save(&model)?;
            println!(
                "trained on {} windows ({} epochs, best {}); saved {}",
                trained.training_windows,
                trained.loss_history.len(),
                trained.best_epoch,
                model.display()
            );
        }
        Command::Eval { common, model, out } => {
            let cfg = common.load()?;
            let report = match model {
                None => run_experiment(&cfg)?,
                Some(path) => {
                    let split = prepare(&cfg)?;
                    let trained = trained_for(&cfg, Some(&path), &split)?;
                    let mut report = evaluate(&cfg, &trained, &split.test)?;
                    report.latency = Some(bench_latency(&cfg, &trained, &split.test[0])?);
                    report
                }
            };
            let reports = [report];
            emit_report(&reports, &out)?;
            print!("{}", summary(&reports));
        }
        Command::Sweep { common, out } => {
            let cfg = common.load()?;
            let reports = feature_condition_sweep(&cfg)?;
            emit_report(&reports, &out)?;
            print!("{}", summary(&reports));
        }
        Command::Bench { common, model } => {
            let cfg = common.load()?;
            let split = prepare(&cfg)?;
            let trained = trained_for(&cfg, model.as_ref(), &split)?;
            let lat = bench_latency(&cfg, &trained, &split.test[0])?;
            println!(
                "{} ms segment: {} windows x {} channels, {} repetitions",
                lat.length_ms, lat.windows, lat.channels, lat.repetitions
            );
            for st in &lat.stages {
                println!(
                    "{:<20} mean {:>9.4} ms  p95 {:>9.4} ms  per window {:>8.4} ms",
                    st.stage, st.mean_ms, st.p95_ms, st.per_window_mean_ms
                );
            }
        }
    }
    Ok(())
}
