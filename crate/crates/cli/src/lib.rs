//! `strokeseg` command line: phantom generation, training, evaluation,
//! cross-validation and report merging.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use strokeseg::data::{generate_phantoms, FoldSplit, Manifest, PhantomSpec, NUM_FOLDS};
use strokeseg::evaluation::{aggregate, emit_report, render_overlay, FoldSummary, ReportFormat, ReportTable, SubjectMetrics};
use strokeseg::training::{
    evaluate_samples, fit, folds_for, load_checkpoint, prepare_fold, train_fold, FitData, FoldData, SubjectPrediction,
    TrainConfig, TrainError, CHECKPOINT_BEST, CHECKPOINT_LAST,
};

pub const CONFIG_ECHO: &str = "config.txt";
pub const TRAIN_LOG: &str = "train.log";
pub const SPLIT_FILE: &str = "split.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const OVERLAY_DIR: &str = "overlays";
pub const EVAL_DIR: &str = "eval";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";

pub const METRICS_HEADER: &str = "subject,split,dice_pen,dice_core,prec_pen,prec_core,rec_pen,rec_core,\
tp_pen,fp_pen,fn_pen,tn_pen,tp_core,fp_core,fn_core,tn_core";

#[derive(Parser, Debug)]
#[command(name = "strokeseg", version, about = "Adversarial core/penumbra segmentation of stroke MRI slices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic phantom dataset with a manifest
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
        subjects: u32,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
        slices: u32,
        #[arg(long, default_value_t = 96, value_parser = clap::value_parser!(u32).range(1..))]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        noise: f32,
        #[arg(long, default_value_t = 1.0)]
        contrast: f32,
    },
    /// Train on one fold
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        out: PathBuf,
        /// Continue from OUT/last.ckpt; the config may only raise `epochs`
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on one split of a fold
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        /// Skip writing overlay images
        #[arg(long)]
        no_overlays: bool,
    },
    /// Train and evaluate all three folds, then write the report
    Crossval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Row name in the report (defaults to the config file stem)
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        no_overlays: bool,
    },
    /// Merge report CSVs into one table
    Report {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    fn usage(e: impl Into<anyhow::Error>) -> Self {
        CliError { code: 2, error: e.into() }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError { code: 1, error: e.into() }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Phantom {
            out,
            subjects,
            slices,
            size,
            seed,
            noise,
            contrast,
        } => {
            let spec = PhantomSpec {
                subjects: *subjects as usize,
                slices: *slices as usize,
                size: *size as usize,
                seed: *seed,
                noise: *noise,
                contrast: *contrast,
            };
            let m = generate_phantoms(&spec, out)?;
            println!("wrote {} subjects to {}", m.subjects.len(), out.display());
            Ok(())
        }
        Command::Train {
            config,
            manifest,
            fold,
            out,
            resume,
        } => cmd_train(config, manifest, *fold, out, *resume),
        Command::Eval {
            checkpoint,
            manifest,
            fold,
            split,
            out,
            no_overlays,
        } => {
            let manifest = load_manifest(manifest)?;
            let summary = cmd_eval(checkpoint, &manifest, *fold, *split, out, !no_overlays)?;
            println!("{}", summary_line(*fold, *split, &summary)?);
            Ok(())
        }
        Command::Crossval {
            config,
            manifest,
            out,
            name,
            no_overlays,
        } => {
            let name = match name {
                Some(n) => n.clone(),
                None => config
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "config".into()),
            };
            cmd_crossval(config, manifest, out, &name, !no_overlays)
        }
        Command::Report { inputs, out } => {
            let mut table = ReportTable::default();
            for p in inputs {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                table
                    .rows
                    .extend(ReportTable::from_csv(&text).with_context(|| format!("parsing {}", p.display()))?.rows);
            }
            write_report(&table, out)?;
            print!("{}", table.to_markdown());
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(CliError::usage)?;
    TrainConfig::parse_kv(&text)
        .with_context(|| format!("config {}", path.display()))
        .map_err(CliError::usage)
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).map_err(CliError::usage)
}

/// Configuration problems exit with 2, everything else with 1.
fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) => CliError::usage(e),
        other => other.into(),
    }
}

fn split_text(split: &FoldSplit) -> String {
    format!(
        "fold={}\ntrain={}\nval={}\ntest={}\n",
        split.fold,
        split.train.join(","),
        split.val.join(","),
        split.test.join(",")
    )
}

pub fn cmd_train(config: &Path, manifest: &Path, fold: usize, out: &Path, resume: bool) -> Result<()> {
    let cfg = load_config(config)?;
    let manifest = load_manifest(manifest)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if resume {
        let mut trainer = load_checkpoint(&out.join(CHECKPOINT_LAST))?;
        let stored = trainer.config().clone();
        if (TrainConfig { epochs: stored.epochs, ..cfg.clone() }) != stored || cfg.epochs < stored.epochs {
            return Err(CliError::usage(anyhow!(
                "config differs from the checkpoint's in more than a raised epoch count"
            )));
        }
        if trainer.fold != Some(fold) {
            return Err(anyhow!("checkpoint was trained on fold {:?}, not {fold}", trainer.fold).into());
        }
        trainer.set_epochs(cfg.epochs).map_err(train_err)?;
        let data = prepare_fold(&manifest, &cfg, fold, trainer.whitening.clone()).map_err(train_err)?;
        fs::write(out.join(CONFIG_ECHO), cfg.to_kv())?;
        let mut log = BufWriter::new(fs::OpenOptions::new().append(true).create(true).open(out.join(TRAIN_LOG))?);
        let outcome = fit(
            &mut trainer,
            FitData {
                train: &data.train,
                val: &data.val,
            },
            Some(out),
            &mut log,
        )
        .map_err(train_err)?;
        log.flush()?;
        report_best(outcome.best);
        return Ok(());
    }
    let data = prepare_fold(&manifest, &cfg, fold, None).map_err(train_err)?;
    train_into(&cfg, &data, fold, out)
}

fn train_into(cfg: &TrainConfig, data: &FoldData, fold: usize, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(CONFIG_ECHO), cfg.to_kv())?;
    fs::write(out.join(SPLIT_FILE), split_text(&data.split))?;
    let mut log = BufWriter::new(fs::File::create(out.join(TRAIN_LOG))?);
    let result = train_fold(cfg, data, fold, Some(out), &mut log);
    log.flush()?;
    let (_, outcome) = result.map_err(train_err)?;
    report_best(outcome.best);
    Ok(())
}

fn report_best(best: Option<(f64, usize)>) {
    if let Some((m, e)) = best {
        println!("best val_metric={m} at epoch {e}");
    }
}

pub fn metrics_row(p: &SubjectPrediction, split: Split) -> String {
    let m = p.metrics();
    let mut cells: Vec<String> = vec![p.subject.clone(), split.name().into()];
    cells.extend(m.row().iter().map(|v| v.to_string()));
    for c in &p.counts.classes {
        cells.extend([c.tp, c.fp, c.fn_, c.tn].iter().map(|v| v.to_string()));
    }
    cells.join(",")
}

/// Evaluate `checkpoint` and write metrics, a summary and overlays under
/// `out`. Returns the per-subject metrics.
pub fn cmd_eval(
    checkpoint: &Path,
    manifest: &Manifest,
    fold: usize,
    split: Split,
    out: &Path,
    overlays: bool,
) -> Result<FoldSummary> {
    let trainer = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    if let Some(f) = trainer.fold {
        if f != fold {
            return Err(anyhow!("checkpoint was trained on fold {f}, not {fold}").into());
        }
    }
    let cfg = trainer.config().clone();
    let data = prepare_fold(manifest, &cfg, fold, trainer.whitening.clone()).map_err(|e| match e {
        TrainError::Config(m) => anyhow!("checkpoint incompatible with manifest: {m}"),
        other => other.into(),
    })?;
    let slices = data.slices(split.name()).expect("known split");
    let preds = evaluate_samples(&trainer.seg, slices, cfg.batch_size)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for p in &preds {
        csv.push_str(&metrics_row(p, split));
        csv.push('\n');
    }
    fs::write(out.join(METRICS_FILE), csv)?;

    let summary = FoldSummary {
        fold,
        subjects: preds.iter().map(SubjectPrediction::metrics).collect::<Vec<SubjectMetrics>>(),
    };
    fs::write(out.join(SUMMARY_FILE), summary_line(fold, split, &summary)? + "\n")?;

    if overlays {
        let dir = out.join(OVERLAY_DIR);
        fs::create_dir_all(&dir)?;
        for p in &preds {
            for s in &p.slices {
                for (class, tag) in [(1u8, "pen"), (2u8, "core")] {
                    render_overlay(&s.pred, &s.gt, s.height, s.width, class)?
                        .save(&dir.join(format!("{}_z{:03}_{tag}.ppm", p.subject, s.z)))?;
                }
            }
        }
    }
    Ok(summary)
}

fn summary_line(fold: usize, split: Split, summary: &FoldSummary) -> Result<String> {
    let means = summary.means()?;
    let mut s = format!("split={} fold={fold} subjects={}", split.name(), summary.subjects.len());
    for (k, v) in strokeseg::evaluation::METRIC_COLUMNS.iter().zip(means) {
        s.push_str(&format!(" {k}={v}"));
    }
    Ok(s)
}

fn write_report(table: &ReportTable, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    emit_report(table, ReportFormat::Markdown, &out.join(REPORT_MD))?;
    emit_report(table, ReportFormat::Csv, &out.join(REPORT_CSV))?;
    Ok(())
}

pub fn cmd_crossval(config: &Path, manifest_path: &Path, out: &Path, name: &str, overlays: bool) -> Result<()> {
    let cfg = load_config(config)?;
    let manifest = load_manifest(manifest_path)?;
    let folds = folds_for(&manifest, &cfg).map_err(train_err)?;
    for a in 0..NUM_FOLDS {
        for b in a + 1..NUM_FOLDS {
            if folds[a].test.iter().any(|id| folds[b].test.contains(id)) {
                return Err(anyhow!("test sets of folds {a} and {b} overlap").into());
            }
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(CONFIG_ECHO), cfg.to_kv())?;
    let mut summaries = Vec::with_capacity(NUM_FOLDS);
    for fold in 0..NUM_FOLDS {
        let dir = out.join(format!("fold{fold}"));
        let data = prepare_fold(&manifest, &cfg, fold, None).map_err(train_err)?;
        train_into(&cfg, &data, fold, &dir).map_err(|e| CliError {
            code: e.code,
            error: e.error.context(format!("fold {fold}")),
        })?;
        let summary = cmd_eval(&dir.join(CHECKPOINT_BEST), &manifest, fold, Split::Test, &dir.join(EVAL_DIR), overlays)?;
        println!("{}", summary_line(fold, Split::Test, &summary)?);
        summaries.push(summary);
    }
    let table = ReportTable {
        rows: vec![aggregate(name, &summaries)?],
    };
    write_report(&table, out)?;
    print!("{}", table.to_markdown());
    Ok(())
}
