//! The `usc` command-line tool.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad files, bad flags,
//! undefined results), 2 when a file cannot be read or written.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, match_frame, pearson, FrameRecord, MetricsReport, Summary};
use crate::io::{
    generate_synthetic, load_config, load_dataset, load_report, merge_datasets, render_table,
    save_dataset, write_report, Config, ReportFormat, SyntheticSpec,
};
use crate::loss::loss_terms;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "usc",
    version,
    about = "Safety-aware evaluation of 3D object detectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a dataset and write a metrics report.
    Eval(EvalArgs),
    /// Mean regression losses over matched pairs, per class.
    Loss(LossArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Correlate report metrics with per-detector outcomes.
    Corr(CorrArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Combined dataset with ground truths and predictions.
    #[arg(long, conflicts_with_all = ["gt", "pred"], required_unless_present_all = ["gt", "pred"])]
    data: Option<PathBuf>,
    /// Ground-truth dataset, merged with --pred by frame id.
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
    #[arg(long, requires = "gt")]
    pred: Option<PathBuf>,
    /// JSON config; defaults apply when omitted or missing.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Table,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of the --out file.
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON generator spec; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    depth_bias: Option<f64>,
    #[arg(long)]
    lateral_noise: Option<f64>,
    #[arg(long)]
    size_noise: Option<f64>,
    #[arg(long)]
    yaw_noise: Option<f64>,
    #[arg(long)]
    miss_rate: Option<f64>,
    #[arg(long)]
    fp_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CorrArgs {
    /// Metric reports; each is identified by its file stem.
    #[arg(long, num_args = 2.., required = true)]
    reports: Vec<PathBuf>,
    /// JSON object mapping report id to outcome rate.
    #[arg(long)]
    outcomes: PathBuf,
    /// Use one bucket's summary instead of the overall one.
    #[arg(long)]
    bucket: Option<usize>,
}

fn load_config_or_default(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) if !p.exists() => {
            eprintln!("warning: config {} not found, using defaults", p.display());
            Ok(Config::default())
        }
        Some(p) => load_config(p),
    }
}

fn load_frames(args: &DataArgs) -> Result<Vec<FrameRecord>> {
    match (&args.data, &args.gt, &args.pred) {
        (Some(d), _, _) => load_dataset(d),
        (None, Some(g), Some(p)) => {
            let merged = merge_datasets(load_dataset(g)?, load_dataset(p)?);
            Ok(merged)
        }
        _ => Err(Error::Config(
            "either --data or both --gt and --pred are required".into(),
        )),
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let config = load_config_or_default(args.data.config.as_deref())?;
    let frames = load_frames(&args.data)?;
    let report = evaluate(&frames, &config.protocol)?;
    if let Some(out) = &args.out {
        let format = match args.format {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Table => ReportFormat::Table,
        };
        write_report(&report, out, format)?;
    }
    print!("{}", render_table(&report));
    Ok(())
}

/// Per-class mean losses over all pairs matched at the loosest configured
/// threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassLoss {
    pub pairs: usize,
    pub smooth_l1: f64,
    pub iogt: f64,
    pub safety: f64,
}

pub fn loss_summary(
    frames: &[FrameRecord],
    config: &Config,
) -> Result<BTreeMap<String, ClassLoss>> {
    config.loss.validate()?;
    config.protocol.validate()?;
    let threshold = config
        .protocol
        .match_thresholds
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sums: BTreeMap<String, ClassLoss> = BTreeMap::new();
    for f in frames {
        let classes: std::collections::BTreeSet<&str> = f
            .ground_truths
            .iter()
            .map(|a| a.class_name.as_str())
            .collect();
        for class in classes {
            let set = match_frame(&f.predictions, &f.ground_truths, class, threshold);
            for pair in set.pairs {
                let t = loss_terms(
                    &f.predictions[pair.detection].bbox,
                    &f.ground_truths[pair.annotation].bbox,
                    &config.loss,
                );
                let acc = sums.entry(class.to_string()).or_default();
                acc.pairs += 1;
                acc.smooth_l1 += t.smooth_l1;
                acc.iogt += t.iogt;
                acc.safety += t.safety;
            }
        }
    }
    if sums.is_empty() {
        return Err(Error::Config("no matched pairs".into()));
    }
    for v in sums.values_mut() {
        let n = v.pairs as f64;
        v.smooth_l1 /= n;
        v.iogt /= n;
        v.safety /= n;
    }
    Ok(sums)
}

fn cmd_loss(args: &LossArgs) -> Result<()> {
    let config = load_config_or_default(args.data.config.as_deref())?;
    let frames = load_frames(&args.data)?;
    let summary = loss_summary(&frames, &config)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "lambda = {}  beta = {}",
        config.loss.lambda, config.loss.smooth_l1_beta
    );
    let _ = writeln!(
        out,
        "{:<14}{:>7}{:>12}{:>12}{:>12}",
        "class", "pairs", "smooth_l1", "iogt_loss", "safety"
    );
    for (class, l) in &summary {
        let _ = writeln!(
            out,
            "{:<14}{:>7}{:>12.6}{:>12.6}{:>12.6}",
            class, l.pairs, l.smooth_l1, l.iogt, l.safety
        );
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SyntheticSpec>(&text).map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })?
        }
        None => SyntheticSpec::default(),
    };
    let overrides = [
        (&mut spec.depth_bias, args.depth_bias),
        (&mut spec.lateral_noise, args.lateral_noise),
        (&mut spec.size_noise, args.size_noise),
        (&mut spec.yaw_noise, args.yaw_noise),
        (&mut spec.miss_rate, args.miss_rate),
        (&mut spec.fp_rate, args.fp_rate),
    ];
    for (field, value) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(frames) = args.frames {
        spec.frames = frames;
    }
    let frames = generate_synthetic(&spec)?;
    save_dataset(&frames, &args.out)
}

pub const CORRELATED_METRICS: [&str; 4] = ["mAP", "NDS", "mAUSC", "USC-NDS"];

fn summary_values(s: &Summary) -> [Option<f64>; 4] {
    [s.mean_ap, s.nds, s.mausc, s.usc_nds]
}

/// `|r|` between each summary metric and the outcome series, in the order of
/// [`CORRELATED_METRICS`]. `reports` pairs an id with its report.
pub fn correlations(
    reports: &[(String, MetricsReport)],
    outcomes: &BTreeMap<String, f64>,
    bucket: Option<usize>,
) -> Result<Vec<Result<f64>>> {
    if reports.len() < 2 {
        return Err(Error::SeriesLength(reports.len(), outcomes.len()));
    }
    let mut ys = Vec::with_capacity(reports.len());
    let mut columns: [Vec<Option<f64>>; 4] = Default::default();
    for (id, report) in reports {
        let y = outcomes
            .get(id)
            .ok_or_else(|| Error::schema(id.as_str(), "no outcome for report"))?;
        ys.push(*y);
        let summary = match bucket {
            None => report.overall,
            Some(b) => {
                report
                    .buckets
                    .get(b)
                    .ok_or_else(|| Error::Config(format!("report {id} has no bucket {b}")))?
                    .summary
            }
        };
        for (col, v) in columns.iter_mut().zip(summary_values(&summary)) {
            col.push(v);
        }
    }
    Ok(columns
        .iter()
        .zip(CORRELATED_METRICS)
        .map(|(col, name)| {
            let xs: Option<Vec<f64>> = col.iter().copied().collect();
            let xs = xs.ok_or_else(|| Error::Config(format!("{name} undefined in some report")))?;
            pearson(&xs, &ys).map(f64::abs)
        })
        .collect())
}

fn cmd_corr(args: &CorrArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.outcomes).map_err(|e| Error::io(&args.outcomes, e))?;
    let outcomes: BTreeMap<String, f64> =
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    let mut reports = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        reports.push((id, load_report(path)?));
    }
    let results = correlations(&reports, &outcomes, args.bucket)?;
    let mut first_error = None;
    for (name, r) in CORRELATED_METRICS.iter().zip(results) {
        match r {
            Ok(v) => println!("{name:<8} |r| = {v:.6}"),
            Err(e) => {
                println!("{name:<8} |r| = undefined ({e})");
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    let result = match &cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Corr(a) => cmd_corr(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
