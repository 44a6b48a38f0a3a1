use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landtime_core::geo::{read_scenes, read_tracks, write_scenes, write_tracks};
use landtime_core::metrics::{format_table, EvalReport};
use landtime_core::numerics::container::read_manifest;
use landtime_core::pipeline::{
    attention_records, evaluate_predictions, predict_scenes, prepare_scenes, read_jsonl,
    train_model, write_jsonl, Checkpoint, MlrBaseline, PredictionRow, RunConfig,
};
use landtime_core::synth::{check_separation, generate_corpus, AirspaceConfig};
use landtime_core::Error;

#[derive(Parser)]
#[command(name = "landtime", version, about = "Multi-aircraft landing-time prediction")]
struct Cli {
    /// Worker threads; computation is single-threaded, so only 1 is honoured.
    #[arg(long, global = true, default_value_t = 1)]
    device_threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunOpts {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic arrival corpus.
    GenData {
        /// Airspace configuration (TOML or JSON); the bundled one by default.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Track file to write (.csv or .jsonl).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        flights: usize,
        /// Mean arrivals per hour.
        #[arg(long, default_value_t = 20.0)]
        rate: f64,
    },
    /// Truncate, resample, window, split and normalize a track file.
    Preprocess {
        #[arg(long)]
        tracks: PathBuf,
        #[command(flatten)]
        run: RunOpts,
        /// Output directory for scene files and statistics.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a track file.
    Train {
        #[arg(long)]
        tracks: PathBuf,
        #[command(flatten)]
        run: RunOpts,
        /// Output directory for checkpoints, log and split files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Continue from `last.ckpt` in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs without validation improvement.
        #[arg(long)]
        patience: Option<usize>,
        /// Train and validate on this many scenes.
        #[arg(long)]
        overfit: Option<usize>,
    },
    /// Predict remaining flight time for every aircraft in a scene file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        batch: usize,
    },
    /// Score predictions against labelled scenes.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Scene file holding the true remaining times.
        #[arg(long)]
        labels: PathBuf,
        /// Fitted linear baseline (`mlr.json` from `train`).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-layer agent attention for every scene.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a checkpoint's metadata and tensor list.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if cli.device_threads != 1 {
        log::warn!("--device-threads {} ignored; running on one thread", cli.device_threads);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn mkdir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::GenData {
            config,
            seed,
            out,
            flights,
            rate,
        } => {
            let cfg = match config {
                Some(p) => AirspaceConfig::from_path(&p)?,
                None => AirspaceConfig::bundled(),
            };
            let corpus = generate_corpus(&cfg, flights, rate, seed)?;
            for w in &corpus.report.warnings {
                eprintln!("warning: {w}");
            }
            let tracks: Vec<_> = corpus.flights.iter().map(|f| f.track.clone()).collect();
            write_tracks(&out, &tracks)?;
            let violations = check_separation(&corpus.flights, &cfg.separation);
            println!("flights: {}", corpus.report.flights);
            println!("landings_per_hr: {:.2}", corpus.report.landings_per_hr);
            println!("separation_violations: {}", violations.len());
            println!("mean_delay_s: {:.1}", corpus.report.mean_delay_s);
        }
        Command::Preprocess { tracks, run, out } => {
            let cfg = run.load()?;
            let data = prepare_scenes(&read_tracks(&tracks)?, &cfg)?;
            mkdir(&out)?;
            write_scenes(&out.join("scenes_train.jsonl"), &data.train)?;
            write_scenes(&out.join("scenes_val.jsonl"), &data.val)?;
            write_scenes(&out.join("scenes_test.jsonl"), &data.test)?;
            write_json(&out.join("norm_stats.json"), &data.stats)?;
            let p = data.preprocess;
            println!(
                "tracks: {} kept, {} never inside the boundary, {} too short",
                p.kept, p.outside_boundary, p.too_short
            );
            println!(
                "scenes: {} built, {} dropped across splits; train {} val {} test {}",
                data.scenes_built,
                data.scenes_dropped,
                data.train.len(),
                data.val.len(),
                data.test.len()
            );
        }
        Command::Train {
            tracks,
            run,
            out,
            epochs,
            batch,
            resume,
            patience,
            overfit,
        } => {
            let mut cfg = run.load()?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(b) = batch {
                cfg.batch_scenes = b;
            }
            if patience.is_some() {
                cfg.patience = patience;
            }
            if overfit.is_some() {
                cfg.data.overfit_scenes = overfit;
            }
            cfg.validate()?;
            let data = prepare_scenes(&read_tracks(&tracks)?, &cfg)?;
            mkdir(&out)?;
            write_scenes(&out.join("scenes_train.jsonl"), &data.train)?;
            write_scenes(&out.join("scenes_val.jsonl"), &data.val)?;
            write_scenes(&out.join("scenes_test.jsonl"), &data.test)?;
            std::fs::write(out.join("run_config.toml"), cfg.to_toml_string())
                .map_err(|e| Error::io(out.join("run_config.toml"), e))?;
            let n_max = cfg.data.scene.n_max;
            match MlrBaseline::fit(&data.train, &data.stats, n_max) {
                Ok(b) => write_json(&out.join("mlr.json"), &b)?,
                Err(e) => log::warn!("linear baseline not fitted: {e}"),
            }
            let summary = train_model(&cfg, &data, &out, resume)?;
            println!(
                "epochs: {} (this run {}){}",
                summary.completed_epochs,
                summary.log.len(),
                if summary.stopped_early { ", stopped early" } else { "" }
            );
            if let (Some(v), Some(e)) = (summary.best_val_nll, summary.best_epoch) {
                println!("best_val_nll: {v:.6} at epoch {e}");
            }
            println!("checkpoint: {}", summary.best_path.display());
        }
        Command::Predict {
            checkpoint,
            scenes,
            out,
            batch,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let scenes = read_scenes(&scenes)?;
            let n_max = ckpt.meta.config.data.scene.n_max;
            let rows = predict_scenes(&ckpt.model, &ckpt.meta.stats, &scenes, n_max, batch)?;
            write_jsonl(&out, &rows)?;
            println!("predictions: {} rows for {} scenes", rows.len(), scenes.len());
        }
        Command::Evaluate {
            predictions,
            labels,
            baseline,
            out,
        } => {
            let rows: Vec<PredictionRow> = read_jsonl(&predictions)?;
            let labels = read_scenes(&labels)?;
            let base: Option<MlrBaseline> = match baseline {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    Some(serde_json::from_str(&text)?)
                }
                None => None,
            };
            let n_max = labels.iter().map(|s| s.n_agents()).max().unwrap_or(1);
            let (ours, mlr) = evaluate_predictions(&rows, &labels, base.as_ref().map(|b| (b, n_max)))?;
            let mut reports: Vec<&EvalReport> = vec![&ours];
            reports.extend(mlr.as_ref());
            print!("{}", format_table(&reports));
            if ours.mape_excluded > 0 {
                println!("note: {} samples under 1 s left out of MAPE", ours.mape_excluded);
            }
            if let Some(p) = out {
                let json = serde_json::json!({ "model": ours, "baseline": mlr });
                write_json(&p, &json)?;
            }
        }
        Command::ExportAttention {
            checkpoint,
            scenes,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let scenes = read_scenes(&scenes)?;
            let n_max = ckpt.meta.config.data.scene.n_max;
            let records = attention_records(&ckpt.model, &ckpt.meta.stats, &scenes, n_max, 64)?;
            write_jsonl(&out, &records)?;
            println!("attention records: {}", records.len());
        }
        Command::InspectCheckpoint { checkpoint } => {
            let bytes = std::fs::read(&checkpoint).map_err(|e| Error::io(&checkpoint, e))?;
            let (meta, entries, _) = read_manifest(&bytes)?;
            let meta: serde_json::Value = serde_json::from_str(&meta)?;
            println!("{}", serde_json::to_string_pretty(&meta)?);
            let total: usize = entries.iter().map(|e| e.len / 4).sum();
            for e in &entries {
                let dims: Vec<String> = e.shape.iter().map(|d| d.to_string()).collect();
                println!("{:<40} {:>12}", e.name, dims.join("x"));
            }
            println!("tensors: {}  values: {total}", entries.len());
        }
    }
    Ok(())
}
