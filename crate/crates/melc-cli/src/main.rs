//! Command-line frontend: train, predict, evaluate, and export plotting
//! data for the multithreshold projection classifier.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error. All
//! randomness derives from --seed, so identical invocations on identical
//! files produce byte-identical outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use melc::classifier::{
    classify_density, density_curve, extract_thresholds, fit, load_model, save_model, SavedModel,
};
use melc::data::{parse_csv, parse_libsvm, stratified_kfold, Dataset, LabelColumn};
use melc::density;
use melc::eval::{anthony_bound, anthony_margin_bound, cross_validate, write_cv_report, SelectBy};
use melc::gradient::finite_diff_check;
use melc::optimizer::{seed_vector, OptOptions, SeedMethod};
use melc::{MelcError, Result};

/// Default gamma grid for eval; brackets the kernel-width scales that
/// matter on the bundled datasets.
const DEFAULT_GAMMAS: [f64; 9] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.9, 4.0];

#[derive(Parser)]
#[command(
    name = "melc",
    version,
    about = "Multithreshold entropy linear classifier",
    after_help = "Numeric flag ranges: --gamma > 0, --folds >= 2, --binsearch-iters >= 1, \
                  --delta in (0,1), --margin in (0,1], --step > 0.\n\
                  MELC_THREADS caps the worker pool (0 or unset = auto)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a projection on labeled data and save the model
    Train(TrainArgs),
    /// Classify rows with a saved model, one "label<TAB>likelihood" line each
    Predict(PredictArgs),
    /// Cross-validate over a gamma grid and emit the report as TSV
    Eval(EvalArgs),
    /// Print the decision thresholds of a saved model
    Thresholds(ThresholdsArgs),
    /// Emit "x<TAB>kde_pos<TAB>kde_neg" rows along the projection axis
    DensityCurve(CurveArgs),
    /// Compare the analytic gradient against finite differences
    Gradcheck(GradcheckArgs),
    /// Evaluate a generalization bound
    Bound(BoundArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Libsvm,
    Csv,
}

#[derive(Args)]
struct DataArgs {
    /// Labeled input file
    #[arg(long)]
    data: PathBuf,

    /// Input format
    #[arg(long, value_enum, default_value = "libsvm")]
    format: Format,

    /// CSV only: label column, as a 0-based index or a header name
    #[arg(long, default_value = "0")]
    label_column: String,

    /// libsvm only: accept label 0 and read it as -1
    #[arg(long)]
    zero_negative: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Kernel width scale, > 0
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,

    /// Random restarts of the projection search
    #[arg(long, default_value_t = 10)]
    restarts: usize,

    /// Base seed for all randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Maximize only the cross-class term instead of the full divergence
    #[arg(long)]
    cip_only: bool,

    /// File with one whitespace-separated start direction to try as well
    #[arg(long)]
    seed_vector: Option<PathBuf>,

    /// Bisection depth for threshold extraction, >= 1
    #[arg(long, default_value_t = 5)]
    binsearch_iters: usize,

    /// Model file to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model file
    #[arg(long)]
    model: PathBuf,

    #[command(flatten)]
    data: DataArgs,

    /// Write predictions here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Fold count for stratified cross-validation, >= 2
    #[arg(long, default_value_t = 10)]
    folds: usize,

    /// Comma-separated gamma grid, each > 0
    #[arg(long)]
    gammas: Option<String>,

    /// Random restarts per (gamma, fold) cell
    #[arg(long, default_value_t = 10)]
    restarts: usize,

    /// Base seed for all randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Maximize only the cross-class term instead of the full divergence
    #[arg(long)]
    cip_only: bool,

    /// Select gamma by mean MCC instead of mean weighted accuracy
    #[arg(long)]
    select_mcc: bool,

    /// Write the TSV report here; a 3-decimal summary then goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdsArgs {
    /// Saved model file
    #[arg(long)]
    model: PathBuf,

    /// Bisection depth when thresholds must be recomputed, >= 1
    #[arg(long, default_value_t = 5)]
    binsearch_iters: usize,
}

#[derive(Args)]
struct CurveArgs {
    /// Saved model file; must contain the projection blocks
    #[arg(long)]
    model: PathBuf,

    /// Left end of the axis; default is the sample range minus 3 widths
    #[arg(long)]
    lo: Option<f64>,

    /// Right end of the axis; default is the sample range plus 3 widths
    #[arg(long)]
    hi: Option<f64>,

    /// Number of axis samples, >= 2
    #[arg(long, default_value_t = 512)]
    samples: usize,

    /// Write the TSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Kernel width scale, > 0
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,

    /// Random projection directions to test
    #[arg(long, default_value_t = 10)]
    trials: usize,

    /// Central-difference step, > 0
    #[arg(long, default_value_t = 1e-6)]
    step: f64,

    /// Base seed for the tested directions
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct BoundKind {
    /// Input dimension: use the distribution-free bound
    #[arg(long)]
    dim: Option<usize>,

    /// Margin in (0,1]: use the margin bound
    #[arg(long)]
    margin: Option<f64>,
}

#[derive(Args)]
struct BoundArgs {
    /// Sample count
    #[arg(long)]
    n: usize,

    /// Threshold count
    #[arg(long)]
    k: usize,

    #[command(flatten)]
    kind: BoundKind,

    /// Confidence parameter in (0,1)
    #[arg(long, default_value_t = 0.05)]
    delta: f64,

    /// Empirical error in [0,1]
    #[arg(long, default_value_t = 0.0)]
    empirical: f64,
}

fn open_file(path: &PathBuf) -> Result<File> {
    File::open(path).map_err(|e| MelcError::Data(format!("cannot open {}: {e}", path.display())))
}

fn load_dataset(args: &DataArgs) -> Result<Dataset> {
    let reader = BufReader::new(open_file(&args.data)?);
    match args.format {
        Format::Libsvm => parse_libsvm(reader, args.zero_negative),
        Format::Csv => {
            let column = match args.label_column.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(args.label_column.clone()),
            };
            parse_csv(reader, &column)
        }
    }
}

/// libsvm leaves trailing zero features implicit, so rows may come out
/// shorter than the model expects; pad them. A wider dataset is a real
/// mismatch.
fn align_dim(ds: Dataset, dim: usize) -> Result<Dataset> {
    if ds.dim() == dim {
        return Ok(ds);
    }
    if ds.dim() > dim {
        return Err(MelcError::Data(format!(
            "data has dimension {}, model has {dim}",
            ds.dim()
        )));
    }
    let mut points = Vec::with_capacity(ds.len() * dim);
    for i in 0..ds.len() {
        points.extend_from_slice(ds.point(i));
        points.extend(std::iter::repeat(0.0).take(dim - ds.dim()));
    }
    Dataset::new(dim, points, ds.labels().to_vec())
}

fn with_output<F>(out: &Option<PathBuf>, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let (xp, xn) = ds.split_classes();
    let opts = OptOptions {
        gamma: args.gamma,
        restarts: args.restarts,
        seed: args.seed,
        cip_only: args.cip_only,
        ..OptOptions::default()
    };
    let extra = match &args.seed_vector {
        Some(path) => vec![seed_vector(SeedMethod::File(path), &xp, &xn)?],
        None => Vec::new(),
    };
    let model = fit(&xp, &xn, &opts, &extra)?;
    let tc = extract_thresholds(&model, args.binsearch_iters)?;
    let dcs = density::dcs(&model.v, &xp, &xn, args.gamma)?;
    let saved = SavedModel::with_thresholds(&model, &tc);
    let mut w = BufWriter::new(File::create(&args.out)?);
    save_model(&saved, &mut w)?;
    w.flush()?;
    println!("dcs\t{dcs}");
    println!("k\t{}", tc.thresholds.len());
    Ok(())
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    let saved = load_model(BufReader::new(open_file(&args.model)?))?;
    let model = saved
        .projection_model()
        .ok_or_else(|| {
            MelcError::Model(
                "model file has no projection blocks; predict needs the density estimate".into(),
            )
        })??;
    let ds = align_dim(load_dataset(&args.data)?, model.v.len())?;
    with_output(&args.out, |w| {
        for i in 0..ds.len() {
            let (label, likelihood) = classify_density(&model, ds.point(i))?;
            writeln!(w, "{label}\t{likelihood}")?;
        }
        Ok(())
    })
}

fn parse_gammas(text: &Option<String>) -> Result<Vec<f64>> {
    match text {
        None => Ok(DEFAULT_GAMMAS.to_vec()),
        Some(t) => t
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| MelcError::Config(format!("bad gamma value {tok:?}")))
            })
            .collect(),
    }
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let gammas = parse_gammas(&args.gammas)?;
    let plan = stratified_kfold(&ds, args.folds, args.seed)?;
    let opts = OptOptions {
        restarts: args.restarts,
        seed: args.seed,
        cip_only: args.cip_only,
        ..OptOptions::default()
    };
    let select_by = if args.select_mcc { SelectBy::Mcc } else { SelectBy::Wac };
    let report = cross_validate(&ds, &plan, &gammas, &opts, select_by)?;
    with_output(&args.out, |w| write_cv_report(&report, w))?;

    let chosen = report
        .summaries
        .iter()
        .find(|s| s.gamma == report.chosen_gamma)
        .expect("chosen gamma comes from the summaries");
    let summary = format!(
        "chosen_gamma\t{}\nmean_wac\t{:.3}\nmean_mcc\t{:.3}\nmean_k\t{:.3}",
        chosen.gamma, chosen.mean_wac, chosen.mean_mcc, chosen.mean_thresholds
    );
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn run_thresholds(args: &ThresholdsArgs) -> Result<()> {
    let saved = load_model(BufReader::new(open_file(&args.model)?))?;
    let tc = match saved.threshold_classifier() {
        Some(tc) => tc,
        None => {
            let model = saved
                .projection_model()
                .expect("loader guarantees thresholds or projections")?;
            extract_thresholds(&model, args.binsearch_iters)?
        }
    };
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    writeln!(w, "k\t{}", tc.thresholds.len())?;
    writeln!(w, "leftmost\t{}", tc.leftmost_label)?;
    for t in &tc.thresholds {
        writeln!(w, "t\t{t}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_curve(args: &CurveArgs) -> Result<()> {
    let saved = load_model(BufReader::new(open_file(&args.model)?))?;
    let model = saved
        .projection_model()
        .ok_or_else(|| {
            MelcError::Model(
                "model file has no projection blocks; the density curve needs them".into(),
            )
        })??;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in model.proj_pos.samples().iter().chain(model.proj_neg.samples()) {
        lo = lo.min(*s);
        hi = hi.max(*s);
    }
    let pad = 3.0 * model.width_pos.max(model.width_neg);
    let lo = args.lo.unwrap_or(lo - pad);
    let hi = args.hi.unwrap_or(hi + pad);
    let curve = density_curve(&model, lo, hi, args.samples)?;
    with_output(&args.out, |w| {
        writeln!(w, "x\tkde_pos\tkde_neg")?;
        for (x, dp, dn) in curve {
            // densities underflow to long positional tails, so print them
            // in scientific form; both forms parse back exactly
            writeln!(w, "{x}\t{dp:e}\t{dn:e}")?;
        }
        Ok(())
    })
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<()> {
    if args.trials == 0 {
        return Err(MelcError::Config("need at least one trial".into()));
    }
    let ds = load_dataset(&args.data)?;
    let (xp, xn) = ds.split_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst = 0.0f64;
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    for trial in 0..args.trials {
        let v = loop {
            let raw: Vec<f64> = (0..ds.dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                break raw.into_iter().map(|x| x / norm).collect::<Vec<f64>>();
            }
        };
        let report = finite_diff_check(&v, &xp, &xn, args.gamma, args.step)?;
        writeln!(w, "trial\t{trial}\t{}", report.max_rel_error)?;
        worst = worst.max(report.max_rel_error);
    }
    writeln!(w, "max\t{worst}")?;
    w.flush()?;
    Ok(())
}

fn run_bound(args: &BoundArgs) -> Result<()> {
    let value = match (args.kind.dim, args.kind.margin) {
        (Some(d), None) => anthony_bound(args.n, d, args.k, args.delta, args.empirical)?,
        (None, Some(m)) => anthony_margin_bound(args.n, m, args.k, args.delta, args.empirical)?,
        _ => unreachable!("clap enforces exactly one of --dim/--margin"),
    };
    println!("bound\t{value}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Eval(args) => run_eval(args),
        Command::Thresholds(args) => run_thresholds(args),
        Command::DensityCurve(args) => run_curve(args),
        Command::Gradcheck(args) => run_gradcheck(args),
        Command::Bound(args) => run_bound(args),
    }
}

fn init_thread_pool() -> Result<()> {
    if let Ok(text) = std::env::var("MELC_THREADS") {
        let n: usize = text
            .parse()
            .map_err(|_| MelcError::Config(format!("MELC_THREADS must be an integer, got {text:?}")))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| MelcError::Config(format!("thread pool setup failed: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(MelcError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
