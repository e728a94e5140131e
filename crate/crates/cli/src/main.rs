mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use prosody_slu::data::{build_synth_dataset, extract_features, load_wav, Dataset, Manifest, Split};
use prosody_slu::dsp::{write_feature_dump, FeatureKind};
use prosody_slu::eval::{compare_runs, dump_attention, evaluate};
use prosody_slu::model::Architecture;
use prosody_slu::train::{train, TeacherSource};
use prosody_slu::{par, Error};

use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "prosody-slu", version, about = "Prosody-aware speech-to-intent training and evaluation")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Feature-extraction and evaluation threads (default: cores, at most 8).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Mel,
    Prosody,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest.
    SynthData {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the log-mel or prosodic features of one WAV file.
    Extract {
        wav: PathBuf,
        out: PathBuf,
        #[arg(long, value_enum, default_value = "prosody")]
        kind: Kind,
    },
    /// Train the configured architecture into the run directory.
    Train {
        #[arg(long)]
        arch: Option<Architecture>,
        /// Pretrained teacher checkpoint for a student run.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Accuracy and macro-F1 of a checkpoint on a manifest split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Export per-frame attention weights as CSV.
    AttnDump {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate metrics of several runs grouped by configuration.
    Compare {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Stage(&'static str, String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn stage(name: &'static str) -> impl Fn(Error) -> Failure {
    move |e| match e {
        Error::Config(m) => Failure::Config(m),
        other => Failure::Stage(name, other.to_string()),
    }
}

fn io_stage<'a>(name: &'static str, path: &'a Path) -> impl Fn(std::io::Error) -> Failure + 'a {
    move |e| Failure::Stage(name, format!("{}: {e}", path.display()))
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(dir) = &cli.run_dir {
        cfg.paths.run_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = resolve(&cli)?;
    match cli.command {
        Command::SynthData { out } => {
            if let Some(out) = out {
                cfg.paths.data_dir = out;
            }
            cfg.validate()?;
            let m = build_synth_dataset(&cfg.synth, &cfg.paths.data_dir).map_err(stage("synth-data"))?;
            log::info!(
                "synth-data wrote {} utterances to {}",
                m.entries.len(),
                cfg.paths.data_dir.display()
            );
        }
        Command::Extract { wav, out, kind } => {
            cfg.validate()?;
            let w = load_wav(&wav).map_err(stage("extract"))?;
            let f = extract_features(&w, &cfg.features).map_err(stage("extract"))?;
            let (m, k) = match kind {
                Kind::Mel => (&f.mel, FeatureKind::Mel),
                Kind::Prosody => (&f.prosody, FeatureKind::Prosody),
            };
            let file = fs::File::create(&out).map_err(io_stage("extract", &out))?;
            let mut w = BufWriter::new(file);
            write_feature_dump(&mut w, m, k).map_err(stage("extract"))?;
            w.flush().map_err(io_stage("extract", &out))?;
            log::info!("extract wrote {} frames x {} to {}", m.rows(), m.cols(), out.display());
        }
        Command::Train {
            arch,
            teacher,
            epochs,
            manifest,
        } => {
            if let Some(a) = arch {
                cfg.train.arch = a;
            }
            if let Some(t) = teacher {
                cfg.train.teacher = Some(TeacherSource::PretrainedFrozen { checkpoint: t });
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(m) = manifest {
                cfg.paths.manifest = Some(m);
            }
            cfg.validate()?;
            let run_dir = cfg.paths.run_dir.clone();
            fs::create_dir_all(&run_dir).map_err(io_stage("train", &run_dir))?;
            let resolved = serde_json::to_string_pretty(&cfg).map_err(|e| Failure::Stage("train", e.to_string()))?;
            let rc = run_dir.join("run_config.json");
            fs::write(&rc, resolved).map_err(io_stage("train", &rc))?;

            let manifest = Manifest::load(&cfg.paths.manifest()).map_err(stage("load manifest"))?;
            log::info!("extracting features for {} utterances", manifest.entries.len());
            let ds = Dataset::load(&manifest, &cfg.features, cfg.paths.cache_dir.as_deref())
                .map_err(stage("feature extraction"))?;
            let out = train(&ds, &cfg.train, Some(&run_dir), None).map_err(stage("train"))?;
            match &out.metrics {
                Some(m) => log::info!(
                    "train done: best epoch {} val {:.4} test accuracy {:.4} macro_f1 {:.4}",
                    out.best.meta.epoch,
                    out.best.meta.best_val_accuracy,
                    m.accuracy,
                    m.macro_f1
                ),
                None => log::info!("train done: best epoch {}", out.best.meta.epoch),
            }
        }
        Command::Eval {
            checkpoint,
            manifest,
            split,
        } => {
            cfg.validate()?;
            let report = evaluate(
                &checkpoint,
                &manifest,
                split.into(),
                &cfg.features,
                cfg.paths.cache_dir.as_deref(),
            )
            .map_err(stage("eval"))?;
            let line = serde_json::to_string(&report).map_err(|e| Failure::Stage("eval", e.to_string()))?;
            println!("{line}");
        }
        Command::AttnDump { checkpoint, wav, out } => {
            cfg.validate()?;
            let rows = dump_attention(&checkpoint, &wav, &out, &cfg.features).map_err(stage("attn-dump"))?;
            log::info!("attn-dump wrote {} frames to {}", rows.len(), out.display());
        }
        Command::Compare { run_dirs, out } => {
            let table = compare_runs(&run_dirs).map_err(stage("compare"))?;
            print!("{}", table.to_text());
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&table).map_err(|e| Failure::Stage("compare", e.to_string()))?;
                fs::write(&out, json).map_err(io_stage("compare", &out))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let workers = cli.workers.unwrap_or_else(par::default_workers);
    match par::with_threads(workers, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: config: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(s, m)) => {
            eprintln!("error: {s}: {m}");
            ExitCode::from(1)
        }
    }
}
