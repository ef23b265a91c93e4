//! Command-line entry point: simulation, fitting, bootstrap bands, metric
//! reports, and SVG figures, all reproducible from a manifest.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or file problem, 4 numerical
//! failure.

use crate::bootstrap::{band_to_csv, bootstrap_fit, BootstrapBand};
use crate::em::{multi_start, EmConfig, EmResult, InitKind, MstepKind};
use crate::metrics::{contraction_constants, d2_distance, grid_errors, PairMeasure};
use crate::mstep::{fit_drop_missing, fit_mle, fit_pseudo, MstepFit, WeightedIntervals};
use crate::panel::{self, IngestOptions, Jitter};
use crate::plot::{
    Band, Curve, LineStyle, Plot, COLOR_BAND, COLOR_BASELINE, COLOR_ESTIMATE, COLOR_SECONDARY,
    COLOR_TRUTH,
};
use crate::simulate::{
    corrupt, sample_panel, FrailtyLaw, MeanFunctionSpec, MeanKind, MissingnessSpec, ScheduleSpec,
};
use crate::stepfn::StepFunction;
use crate::util::{derive_seed, linspace};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn usage_err(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn numeric_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

#[derive(Parser)]
#[command(name = "panelem", version)]
#[command(about = "Mean-function estimation for panel count data with missing counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate synthetic panel count data with missingness
    Simulate(SimulateArgs),
    /// Fit the EM estimator, with optional bootstrap band and baselines
    Fit(FitArgs),
    /// Emit metric rows (errors vs truth or a reference, theory constants)
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanArg {
    Sqrt,
    Square,
    Linear,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissArg {
    Mcar,
    Het,
    Mar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrailtyArg {
    None,
    Uniform02,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MstepArg {
    Pseudo,
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineArg {
    ZeroFill,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Zero,
    Poisson { mean: f64 },
}

fn parse_init(s: &str) -> Result<InitArg, String> {
    if s == "zero" {
        return Ok(InitArg::Zero);
    }
    if let Some(rest) = s.strip_prefix("poisson:") {
        let mean: f64 = rest
            .parse()
            .map_err(|_| format!("bad poisson mean `{rest}`"))?;
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(format!("poisson mean must be >= 0, got {mean}"));
        }
        return Ok(InitArg::Poisson { mean });
    }
    Err(format!("expected `zero` or `poisson:MEAN`, got `{s}`"))
}

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    /// Mean function shape
    #[arg(long, value_enum, default_value_t = MeanArg::Sqrt)]
    pub mean: MeanArg,
    /// CSV of `t,value` rows, required for `--mean table`
    #[arg(long)]
    pub mean_table: Option<PathBuf>,
    /// Number of trajectories
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Observations per trajectory
    #[arg(long, default_value_t = 30)]
    pub k: usize,
    /// Missingness probability (mcar), or its mean (het); unused for mar
    #[arg(long, default_value_t = 0.2)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = MissArg::Mcar)]
    pub missingness: MissArg,
    /// mar: missingness probability after a zero count
    #[arg(long, default_value_t = 0.1)]
    pub eps_zero: f64,
    /// mar: missingness probability after a positive count
    #[arg(long, default_value_t = 0.3)]
    pub eps_pos: f64,
    /// Per-subject multiplier on the conditional mean function
    #[arg(long, value_enum, default_value_t = FrailtyArg::Uniform02)]
    pub frailty: FrailtyArg,
    #[arg(long, default_value_t = 0.1)]
    pub tau0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    /// Minimum spacing between observations (0 disables)
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (not part of the experiment identity)
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    /// Panel CSV to fit
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = MstepArg::Mle)]
    pub mstep: MstepArg,
    /// `poisson:MEAN` or `zero`
    #[arg(long, value_parser = parse_init, default_value = "poisson:1")]
    pub init: InitArg,
    /// EM stopping tolerance on the sup distance between iterates
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Bootstrap replicates (0 = point estimate only)
    #[arg(long, default_value_t = 0)]
    pub boot: usize,
    /// Band level for the bootstrap envelope
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Evaluation grid size over the study window
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Number of EM starts; the best final log-likelihood wins
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also fit comparators (repeatable)
    #[arg(long, value_enum)]
    pub baseline: Vec<BaselineArg>,
    /// Overlay the true mean function in the plot
    #[arg(long, value_enum)]
    pub truth: Option<MeanArg>,
    /// CSV of `t,value` rows for `--truth table`
    #[arg(long)]
    pub truth_table: Option<PathBuf>,
    /// Accept fractional counts in the input
    #[arg(long, default_value_t = false)]
    pub allow_fractional: bool,
    /// Perturb observation times by uniform(-j, +j) at ingestion (0 = off)
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Output directory (not part of the experiment identity)
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ReportArgs {
    /// Step-function JSON files to score (repeatable)
    #[arg(long = "estimate")]
    pub estimates: Vec<PathBuf>,
    /// Compare against another step-function JSON instead of a truth curve
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub truth: Option<MeanArg>,
    #[arg(long)]
    pub truth_table: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Evaluation window `lo:hi` (default: 0 to the last jump)
    #[arg(long)]
    pub window: Option<String>,
    /// Panel CSV whose pair measure weights the d2 metric
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Contraction calculator input, e.g. `eps=0.2,c=1,b=1`
    #[arg(long)]
    pub constants: Option<String>,
    /// Output directory; metrics go to stdout when absent
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Everything needed to rerun a command bit-exactly: canonical arguments
/// (excluding the output directory), the seed, a parameter echo, and the
/// artifact names.
#[derive(Serialize)]
pub struct ExperimentManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub args: Vec<String>,
    pub params: serde_json::Value,
    pub artifacts: Vec<String>,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Report(args) => cmd_report(&args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("panelem: error: {}", e.message());
            e.code()
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    fs::write(dir.join(name), text).map_err(data_err)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(data_err)?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn write_manifest(
    dir: &Path,
    command: &'static str,
    seed: u64,
    args: Vec<String>,
    params: serde_json::Value,
    artifacts: Vec<String>,
) -> CliResult<()> {
    let manifest = ExperimentManifest {
        tool: "panelem",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        args,
        params,
        artifacts,
    };
    write_json(dir, "manifest.json", &manifest)
}

fn load_table(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(data_err)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "t,value") {
            continue;
        }
        let mut parts = line.split(',');
        let t: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Data(format!("{}: bad table row `{line}`", path.display())))?;
        let v: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Data(format!("{}: bad table row `{line}`", path.display())))?;
        rows.push((t, v));
    }
    Ok(rows)
}

fn mean_spec(
    kind: MeanArg,
    table: Option<&PathBuf>,
    window: (f64, f64),
    frailty: Option<FrailtyLaw>,
) -> CliResult<MeanFunctionSpec> {
    let kind = match kind {
        MeanArg::Sqrt => MeanKind::Sqrt,
        MeanArg::Square => MeanKind::Square,
        MeanArg::Linear => MeanKind::Linear,
        MeanArg::Table => {
            let path = table.ok_or_else(|| {
                usage_err("--mean-table/--truth-table is required for the table mean")
            })?;
            MeanKind::Table(load_table(path)?)
        }
    };
    MeanFunctionSpec::new(kind, window, frailty).map_err(usage_err)
}

fn simulate_canonical_args(args: &SimulateArgs) -> Vec<String> {
    let mut v = vec!["simulate".into()];
    let mut push = |flag: &str, value: String| {
        v.push(format!("--{flag}"));
        v.push(value);
    };
    push(
        "mean",
        match args.mean {
            MeanArg::Sqrt => "sqrt".into(),
            MeanArg::Square => "square".into(),
            MeanArg::Linear => "linear".into(),
            MeanArg::Table => "table".into(),
        },
    );
    if let Some(path) = &args.mean_table {
        push("mean-table", path.display().to_string());
    }
    push("n", args.n.to_string());
    push("k", args.k.to_string());
    push("eps", fmt_f64(args.eps));
    push(
        "missingness",
        match args.missingness {
            MissArg::Mcar => "mcar".into(),
            MissArg::Het => "het".into(),
            MissArg::Mar => "mar".into(),
        },
    );
    push("eps-zero", fmt_f64(args.eps_zero));
    push("eps-pos", fmt_f64(args.eps_pos));
    push(
        "frailty",
        match args.frailty {
            FrailtyArg::None => "none".into(),
            FrailtyArg::Uniform02 => "uniform02".into(),
        },
    );
    push("tau0", fmt_f64(args.tau0));
    push("tau", fmt_f64(args.tau));
    push("alpha", fmt_f64(args.alpha));
    push("seed", args.seed.to_string());
    v
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.n == 0 {
        return Err(usage_err("--n must be >= 1"));
    }
    let frailty = match args.frailty {
        FrailtyArg::None => None,
        FrailtyArg::Uniform02 => Some(FrailtyLaw::uniform_0_2()),
    };
    let window = (args.tau0, args.tau);
    let mean = mean_spec(args.mean, args.mean_table.as_ref(), window, frailty)?;
    let sched = ScheduleSpec {
        k: args.k,
        window,
        alpha: args.alpha,
    };
    let missingness = match args.missingness {
        MissArg::Mcar => MissingnessSpec::Mcar { eps: args.eps },
        MissArg::Het => MissingnessSpec::Heterogeneous {
            eps_mean: args.eps,
            multiplier: FrailtyLaw::uniform_0_2(),
        },
        MissArg::Mar => MissingnessSpec::Mar {
            eps_zero: args.eps_zero,
            eps_pos: args.eps_pos,
        },
    };
    missingness.validate().map_err(usage_err)?;

    let complete = sample_panel(&mean, &sched, args.n, args.seed).map_err(usage_err)?;
    let dataset = corrupt(&complete, &missingness, derive_seed(args.seed, 1)).map_err(usage_err)?;

    fs::create_dir_all(&args.out).map_err(data_err)?;
    write_text(&args.out, "panel.csv", &panel::to_csv_string(&dataset))?;
    write_manifest(
        &args.out,
        "simulate",
        args.seed,
        simulate_canonical_args(args),
        serde_json::to_value(args).map_err(data_err)?,
        vec!["panel.csv".into(), "manifest.json".into()],
    )?;
    Ok(())
}

fn fit_canonical_args(args: &FitArgs) -> Vec<String> {
    let mut v = vec!["fit".into()];
    let mut push = |flag: &str, value: String| {
        v.push(format!("--{flag}"));
        v.push(value);
    };
    push("input", args.input.display().to_string());
    push(
        "mstep",
        match args.mstep {
            MstepArg::Pseudo => "pseudo".into(),
            MstepArg::Mle => "mle".into(),
        },
    );
    push(
        "init",
        match args.init {
            InitArg::Zero => "zero".into(),
            InitArg::Poisson { mean } => format!("poisson:{}", fmt_f64(mean)),
        },
    );
    push("tol", fmt_f64(args.tol));
    push("max-iter", args.max_iter.to_string());
    push("boot", args.boot.to_string());
    push("level", fmt_f64(args.level));
    push("grid", args.grid.to_string());
    push("starts", args.starts.to_string());
    push("seed", args.seed.to_string());
    for b in &args.baseline {
        push(
            "baseline",
            match b {
                BaselineArg::ZeroFill => "zero-fill".into(),
                BaselineArg::Drop => "drop".into(),
            },
        );
    }
    if let Some(truth) = args.truth {
        push(
            "truth",
            match truth {
                MeanArg::Sqrt => "sqrt".into(),
                MeanArg::Square => "square".into(),
                MeanArg::Linear => "linear".into(),
                MeanArg::Table => "table".into(),
            },
        );
    }
    if let Some(path) = &args.truth_table {
        push("truth-table", path.display().to_string());
    }
    push("jitter", fmt_f64(args.jitter));
    if args.allow_fractional {
        v.push("--allow-fractional".into());
    }
    v
}

fn staircase(curve: &StepFunction, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&t| curve.eval(t)).collect()
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    if args.starts == 0 {
        return Err(usage_err("--starts must be >= 1"));
    }
    if args.grid < 2 {
        return Err(usage_err("--grid must be >= 2"));
    }
    let text = fs::read_to_string(&args.input).map_err(data_err)?;
    let options = IngestOptions {
        require_integer_counts: !args.allow_fractional,
        jitter: (args.jitter > 0.0).then_some(Jitter {
            magnitude: args.jitter,
            seed: derive_seed(args.seed, 7777),
        }),
    };
    let dataset = panel::from_csv_str(&text, options).map_err(data_err)?;
    let report = dataset.validate();
    if !report.is_clean() {
        eprintln!("{report}");
        return Err(CliError::Data(format!(
            "dataset fails validation with {} violation(s)",
            report.violations.len()
        )));
    }

    let init_kind = match args.init {
        InitArg::Zero => InitKind::ZeroFill,
        InitArg::Poisson { mean } => InitKind::PoissonFill { mean },
    };
    let mstep_kind = match args.mstep {
        MstepArg::Pseudo => MstepKind::Pseudo,
        MstepArg::Mle => MstepKind::Mle,
    };
    let configs: Vec<EmConfig> = (0..args.starts)
        .map(|s| EmConfig {
            mstep_kind,
            init_kind: init_kind.clone(),
            tol: args.tol,
            max_iter: args.max_iter,
            rng_seed: derive_seed(args.seed, s as u64),
            ..Default::default()
        })
        .collect();
    let result: EmResult = multi_start(&dataset, &configs).map_err(numeric_err)?;

    fs::create_dir_all(&args.out).map_err(data_err)?;
    let mut artifacts = vec![
        "fit.json".into(),
        "estimate.json".into(),
        "plot.svg".into(),
        "manifest.json".into(),
    ];
    write_json(&args.out, "fit.json", &result)?;
    write_json(&args.out, "estimate.json", &result.estimate)?;

    let grid = linspace(dataset.tau0(), dataset.tau(), args.grid);
    let mut curves = vec![Curve {
        label: "EM estimate".into(),
        xs: grid.clone(),
        ys: staircase(&result.estimate, &grid),
        color: COLOR_ESTIMATE,
        style: LineStyle::Solid,
        step: true,
    }];

    for baseline in &args.baseline {
        let (name, fit): (&str, MstepFit) = match baseline {
            BaselineArg::ZeroFill => {
                let filled = crate::simulate::zero_fill_baseline(&dataset);
                let w = WeightedIntervals::from_complete(&filled).map_err(numeric_err)?;
                let fit = match mstep_kind {
                    MstepKind::Pseudo => fit_pseudo(&w).map_err(numeric_err)?,
                    MstepKind::Mle => {
                        let c = &configs[0];
                        fit_mle(&w, c.mstep_tol, c.mstep_max_iter).map_err(numeric_err)?
                    }
                };
                ("baseline_zero_fill.json", fit)
            }
            BaselineArg::Drop => {
                let c = &configs[0];
                let fit =
                    fit_drop_missing(&dataset, c.mstep_tol, c.mstep_max_iter).map_err(numeric_err)?;
                ("baseline_drop.json", fit)
            }
        };
        write_json(&args.out, name, &fit.estimate)?;
        artifacts.push(name.into());
        curves.push(Curve {
            label: match baseline {
                BaselineArg::ZeroFill => "zero-fill baseline".into(),
                BaselineArg::Drop => "drop-missing baseline".into(),
            },
            xs: grid.clone(),
            ys: staircase(&fit.estimate, &grid),
            color: COLOR_BASELINE,
            style: match baseline {
                BaselineArg::ZeroFill => LineStyle::Dashed,
                BaselineArg::Drop => LineStyle::Dotted,
            },
            step: true,
        });
    }

    let mut band_layer = None;
    if args.boot > 0 {
        let band: BootstrapBand = bootstrap_fit(
            &dataset,
            &configs[0],
            &grid,
            args.boot,
            args.level,
            derive_seed(args.seed, 1_000_003),
        )
        .map_err(numeric_err)?;
        write_text(&args.out, "band.csv", &band_to_csv(&band))?;
        artifacts.push("band.csv".into());
        curves.push(Curve {
            label: "bootstrap mean".into(),
            xs: band.grid.clone(),
            ys: band.mean.clone(),
            color: COLOR_SECONDARY,
            style: LineStyle::Dashed,
            step: false,
        });
        band_layer = Some(Band {
            xs: band.grid.clone(),
            lower: band.lower.clone(),
            upper: band.upper.clone(),
            color: COLOR_BAND,
        });
    }

    if let Some(truth) = args.truth {
        let spec = mean_spec(
            truth,
            args.truth_table.as_ref(),
            (dataset.tau0(), dataset.tau()),
            None,
        )?;
        curves.push(Curve {
            label: "truth".into(),
            xs: grid.clone(),
            ys: grid.iter().map(|&t| spec.eval(t)).collect(),
            color: COLOR_TRUTH,
            style: LineStyle::Dotted,
            step: false,
        });
    }

    let plot = Plot {
        title: format!(
            "panelem fit: {}",
            args.input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        ),
        x_window: (dataset.tau0(), dataset.tau()),
        band: band_layer,
        curves,
    };
    write_text(&args.out, "plot.svg", &plot.render_svg())?;

    write_manifest(
        &args.out,
        "fit",
        args.seed,
        fit_canonical_args(args),
        serde_json::to_value(args).map_err(data_err)?,
        artifacts,
    )?;
    Ok(())
}

fn parse_window(spec: &str) -> CliResult<(f64, f64)> {
    let mut parts = spec.split(':');
    let lo: f64 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| usage_err(format!("bad window `{spec}`, expected LO:HI")))?;
    let hi: f64 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| usage_err(format!("bad window `{spec}`, expected LO:HI")))?;
    if parts.next().is_some() || !(lo >= 0.0 && lo < hi) {
        return Err(usage_err(format!("bad window `{spec}`, expected 0 <= LO < HI")));
    }
    Ok((lo, hi))
}

fn parse_constants(spec: &str) -> CliResult<(f64, f64, f64)> {
    let mut eps = None;
    let mut c = None;
    let mut b = None;
    for part in spec.split(',') {
        let mut kv = part.split('=');
        let key = kv.next().unwrap_or_default().trim();
        let value: f64 = kv
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| usage_err(format!("bad constants entry `{part}`")))?;
        match key {
            "eps" => eps = Some(value),
            "c" => c = Some(value),
            "b" => b = Some(value),
            other => return Err(usage_err(format!("unknown constants key `{other}`"))),
        }
    }
    match (eps, c, b) {
        (Some(eps), Some(c), Some(b)) => Ok((eps, c, b)),
        _ => Err(usage_err("constants need eps=..,c=..,b=..")),
    }
}

fn report_canonical_args(args: &ReportArgs) -> Vec<String> {
    let mut v = vec!["report".into()];
    let mut push = |flag: &str, value: String| {
        v.push(format!("--{flag}"));
        v.push(value);
    };
    for e in &args.estimates {
        push("estimate", e.display().to_string());
    }
    if let Some(r) = &args.reference {
        push("reference", r.display().to_string());
    }
    if let Some(t) = args.truth {
        push(
            "truth",
            match t {
                MeanArg::Sqrt => "sqrt".into(),
                MeanArg::Square => "square".into(),
                MeanArg::Linear => "linear".into(),
                MeanArg::Table => "table".into(),
            },
        );
    }
    if let Some(p) = &args.truth_table {
        push("truth-table", p.display().to_string());
    }
    push("grid", args.grid.to_string());
    if let Some(w) = &args.window {
        push("window", w.clone());
    }
    if let Some(p) = &args.pairs {
        push("pairs", p.display().to_string());
    }
    if let Some(c) = &args.constants {
        push("constants", c.clone());
    }
    v
}

fn load_stepfn(path: &Path) -> CliResult<StepFunction> {
    let text = fs::read_to_string(path).map_err(data_err)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: not a step function: {e}", path.display())))
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let mut rows: Vec<(String, String)> = Vec::new();

    let estimates: Vec<(String, StepFunction)> = args
        .estimates
        .iter()
        .map(|path| {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            load_stepfn(path).map(|f| (name, f))
        })
        .collect::<CliResult<_>>()?;

    let reference = args.reference.as_ref().map(|p| load_stepfn(p)).transpose()?;
    let pairs = args
        .pairs
        .as_ref()
        .map(|p| -> CliResult<PairMeasure> {
            let text = fs::read_to_string(p).map_err(data_err)?;
            let ds = panel::from_csv_str(
                &text,
                IngestOptions {
                    require_integer_counts: false,
                    jitter: None,
                },
            )
            .map_err(data_err)?;
            Ok(PairMeasure::from_dataset(&ds))
        })
        .transpose()?;

    if !estimates.is_empty() {
        let hi_default = estimates
            .iter()
            .flat_map(|(_, f)| f.jump_times().last().copied())
            .fold(1.0f64, f64::max);
        let window = match &args.window {
            Some(spec) => parse_window(spec)?,
            None => (0.0, hi_default),
        };
        let grid = linspace(window.0, window.1, args.grid.max(2));

        enum Target {
            Truth(MeanFunctionSpec),
            Reference(StepFunction),
        }
        let target = if let Some(reference) = reference {
            Target::Reference(reference)
        } else if let Some(truth) = args.truth {
            Target::Truth(mean_spec(truth, args.truth_table.as_ref(), window, None)?)
        } else {
            return Err(usage_err(
                "--estimate needs --truth or --reference to compare against",
            ));
        };

        for (name, estimate) in &estimates {
            let errors = match &target {
                Target::Truth(spec) => {
                    grid_errors(estimate, |u| spec.eval(u), &grid).map_err(numeric_err)?
                }
                Target::Reference(f) => {
                    grid_errors(estimate, |u| f.eval(u), &grid).map_err(numeric_err)?
                }
            };
            rows.push((format!("sup({name})"), fmt_f64(errors.sup)));
            rows.push((format!("rmse({name})"), fmt_f64(errors.rmse)));
            if let Some(pairs) = &pairs {
                let other = match &target {
                    Target::Reference(f) => f.clone(),
                    Target::Truth(spec) => {
                        // Step version of the truth, exact at every pair point.
                        let mut times: Vec<f64> = pairs
                            .entries()
                            .iter()
                            .flat_map(|&(u, v, _)| [u, v])
                            .filter(|&t| t > 0.0)
                            .collect();
                        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
                        times.dedup();
                        let values: Vec<f64> = times.iter().map(|&t| spec.eval(t)).collect();
                        StepFunction::new(times, values, None)
                            .expect("monotone truth evaluations")
                    }
                };
                let d2 = d2_distance(estimate, &other, pairs).map_err(numeric_err)?;
                rows.push((format!("d2({name})"), fmt_f64(d2)));
            }
        }
    }

    if let Some(spec) = &args.constants {
        let (eps, c, b) = parse_constants(spec)?;
        let constants = contraction_constants(eps, c, b).map_err(usage_err)?;
        rows.push(("gamma".into(), fmt_f64(constants.gamma)));
        rows.push(("nu".into(), fmt_f64(constants.nu)));
        rows.push(("kappa".into(), fmt_f64(constants.kappa)));
        rows.push(("threshold".into(), fmt_f64(constants.threshold)));
        rows.push(("contracts".into(), constants.contracts.to_string()));
    }

    if rows.is_empty() {
        return Err(usage_err(
            "nothing to report: pass --estimate and/or --constants",
        ));
    }

    let mut csv = String::from("metric,value\n");
    for (metric, value) in &rows {
        csv.push_str(&format!("{metric},{value}\n"));
    }

    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(data_err)?;
            write_text(dir, "metrics.csv", &csv)?;
            write_manifest(
                dir,
                "report",
                0,
                report_canonical_args(args),
                serde_json::to_value(args).map_err(data_err)?,
                vec!["metrics.csv".into(), "manifest.json".into()],
            )?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
