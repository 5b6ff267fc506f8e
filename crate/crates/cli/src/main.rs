use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gres_core::geodata::IngestFormat;
use gres_core::objectives::{run_gradient_checks, DEFAULT_DICE_EPS};
use gres_core::pipeline::{self, PipelineError, RunConfig, Workspace};
use serde::Serialize;

/// Dataset synthesis and evaluation for reasoning segmentation on satellite chips.
#[derive(Parser, Debug)]
#[command(name = "gres", version)]
struct Cli {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, default_value = "gres-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse an annotation file into raw detections.
    Ingest(InputArgs),
    /// Tile source images into chips.
    Chip {
        /// JSON map of image id to {width, height}.
        #[arg(long)]
        sizes: PathBuf,
    },
    /// Class distribution of the chipped detections.
    Stats,
    /// Keep unique and interesting detections.
    Filter,
    /// Generate queries with the configured language model.
    Synth,
    /// Generate and merge masks with the configured segmenter.
    Masks,
    /// Assign chips to train/val/test.
    Split,
    /// Join queries, masks and splits into the dataset manifest.
    Package,
    /// Score predictions against ground truth.
    Eval {
        kind: EvalKind,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Numerical checks of the training objectives.
    Losses {
        #[command(subcommand)]
        action: LossAction,
    },
    /// Export random manifest records for manual verification.
    SampleForReview {
        #[arg(short, long, default_value_t = 20)]
        n: usize,
    },
    /// Every stage from ingest to package.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        sizes: PathBuf,
    },
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "xview-geojson")]
    format: IngestFormat,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EvalKind {
    Seg,
    Caption,
    Vqa,
}

#[derive(Subcommand, Debug)]
enum LossAction {
    /// Finite-difference gradient checks on random instances.
    Check {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = DEFAULT_DICE_EPS)]
        eps: f64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn validation(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn print_json<T: Serialize>(v: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("summary serializes")
    );
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report<T: Serialize>(ws: &Workspace, name: &str, v: &T) -> Result<PathBuf, Failure> {
    let path = ws.root().join(name);
    let text = serde_json::to_string_pretty(v).expect("report serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(path)
}

fn print_unmatched(pred: &[String], gt: &[String]) {
    if !pred.is_empty() || !gt.is_empty() {
        eprintln!(
            "excluded {} predictions without ground truth and {} ground-truth items without predictions",
            pred.len(),
            gt.len()
        );
    }
}

fn eval(kind: EvalKind, pred: &Path, gt: &Path, ws: &Workspace) -> Result<(), Failure> {
    match kind {
        EvalKind::Seg => {
            let o = pipeline::eval_seg_files(pred, gt)?;
            print_unmatched(&o.unmatched_pred, &o.unmatched_gt);
            write_report(ws, "eval_seg.json", &o)?;
            print!("{}", o.report.to_table());
        }
        EvalKind::Caption => {
            let o = pipeline::eval_caption_files(pred, gt)?;
            print_unmatched(&o.unmatched_pred, &o.unmatched_gt);
            write_report(ws, "eval_caption.json", &o)?;
            print!("{}", o.report.to_table());
        }
        EvalKind::Vqa => {
            let o = pipeline::eval_vqa_files(pred, gt)?;
            print_unmatched(&o.unmatched_pred, &o.unmatched_gt);
            write_report(ws, "eval_vqa.json", &o)?;
            print!("{}", o.report.to_table());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    let ws = Workspace::new(&cli.out)?;
    match cli.command {
        Command::Ingest(InputArgs { input, format }) => {
            let s = pipeline::ingest_stage(&input, format, &ws)?;
            print_json(&s);
            if !s.errors.is_empty() {
                for e in &s.errors {
                    eprintln!("{e}");
                }
                return Err(validation(format!("{} malformed records", s.errors.len())));
            }
        }
        Command::Chip { sizes } => print_json(&pipeline::chip_stage(&cfg, &sizes, &ws)?),
        Command::Stats => print!("{}", pipeline::stats_stage(&ws)?.to_table()),
        Command::Filter => {
            let rows = pipeline::filter_stage(&cfg, &ws)?;
            println!(
                "{} candidates written to {}",
                rows.len(),
                ws.candidates().display()
            );
        }
        Command::Synth => {
            let chat = pipeline::build_chat_backend(&cfg, &ws)?;
            print_json(&pipeline::synth_stage(&cfg, &ws, &chat)?);
        }
        Command::Masks => {
            let seg = pipeline::build_segmenter(&cfg)?;
            print_json(&pipeline::masks_stage(&cfg, &ws, seg.as_ref())?);
        }
        Command::Split => {
            let a = pipeline::split_stage(&cfg, &ws)?;
            let [train, val, test] = a.counts();
            println!("train {train}, val {val}, test {test}");
        }
        Command::Package => print_json(&pipeline::package_stage(&cfg, &ws)?),
        Command::Eval { kind, pred, gt } => eval(kind, &pred, &gt, &ws)?,
        Command::Losses {
            action: LossAction::Check { instances, eps },
        } => {
            if instances == 0 {
                return Err(validation("--instances must be positive"));
            }
            let report = run_gradient_checks(cfg.seed, instances, eps);
            print!("{}", report.to_table());
            write_report(&ws, "losses_check.json", &report)?;
            if !report.all_passed() {
                return Err(validation("gradient check failed"));
            }
        }
        Command::SampleForReview { n } => {
            let items = pipeline::sample_for_review(&ws, n, cfg.seed)?;
            println!(
                "{} records written to {}",
                items.len(),
                ws.review().display()
            );
        }
        Command::Run { input, sizes } => {
            print_json(&pipeline::run_all(
                &cfg,
                &input.input,
                input.format,
                &sizes,
                &ws,
            )?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
