//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::accuracy::{mar, AccuracyReport, PredictionRun};
use crate::baseline::{self, exact_expected_mar, BaselineDistribution, OutcomeSample, DEFAULT_HISTOGRAM_BINS};
use crate::effect::{glass_delta, EffectSize};
use crate::error::{Error, Result};
use crate::harness::{self, evaluation_actuals, StatsConfig, ValidationScheme};
use crate::ingest::{self, DatasetOptions};
use crate::predictors::{FeatureSearch, PredictorKind, PredictorSpec};
use crate::preference::{build_order, compare_all, emit_dot, hasse_edges, DecisionConfig, Pairing, TailPolicy};
use crate::report::{render_report, BaselineSummary, Format, Report, RunTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_CYCLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "predeval", version, about = "Evaluate continuous prediction systems against random guessing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Monte Carlo runs for the guessing baseline
    #[arg(long, global = true, default_value_t = baseline::DEFAULT_RUNS)]
    runs: usize,
    /// Seed for every randomized step
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Significance level
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    /// Minimum |Glass's delta| for a strict preference
    #[arg(long, global = true, default_value_t = 0.2)]
    delta_threshold: f64,
    /// Relative error level for pred(l)
    #[arg(long, global = true, default_value_t = crate::accuracy::DEFAULT_PRED_LEVEL)]
    pred_level: f64,
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Markdown,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Markdown => Format::Markdown,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TailArg {
    Two,
    One,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PairingArg {
    Auto,
    Paired,
    Unpaired,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Dataset CSV with a header row
    dataset: PathBuf,
    /// Outcome column (default: last column)
    #[arg(long)]
    target: Option<String>,
    /// Column holding case labels
    #[arg(long)]
    id_column: Option<String>,
    /// Columns to ignore
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
}

impl DatasetArgs {
    fn options(&self) -> DatasetOptions {
        DatasetOptions {
            target: self.target.clone(),
            id_column: self.id_column.clone(),
            exclude: self.exclude.clone(),
            name: None,
        }
    }
}

#[derive(Debug, Args)]
struct DecisionArgs {
    /// Test tail: two-sided, or one-sided toward the lower MAR
    #[arg(long, value_enum, default_value_t = TailArg::Two)]
    tail: TailArg,
    #[arg(long, value_enum, default_value_t = PairingArg::Auto)]
    pairing: PairingArg,
    /// Keep strict preferences between systems that both fail to beat guessing
    #[arg(long)]
    include_not_predicting: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-validate predictors on a dataset and report accuracy, effects and verdicts
    Evaluate {
        #[command(flatten)]
        data: DatasetArgs,
        /// Predictor spec such as `eba:k=2`; repeatable
        #[arg(long = "predictor", short = 'p', required = true)]
        predictors: Vec<String>,
        /// Validation scheme: loocv, loocv:xR, kfold:FxR or holdout:F
        #[arg(long, default_value = "loocv")]
        scheme: String,
        /// Greedy rather than exhaustive feature search
        #[arg(long)]
        fast_selection: bool,
        #[command(flatten)]
        decision: DecisionArgs,
        /// Write the preference graph as DOT
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Write the per-case predictions as CSV
        #[arg(long)]
        predictions_out: Option<PathBuf>,
    },
    /// Random-guessing baseline of a dataset or prediction file
    Baseline {
        input: PathBuf,
        /// Treat the input as a predictions file and use its actual column
        #[arg(long)]
        predictions: bool,
        /// Outcome column when the input is a dataset (default: last column)
        #[arg(long)]
        target: Option<String>,
        /// Column holding case labels
        #[arg(long)]
        id_column: Option<String>,
        /// Extra quantile level to report
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
        bins: usize,
        /// Write the MAR histogram as CSV
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Pairwise verdicts between the systems of a predictions file
    Compare {
        predictions: Vec<PathBuf>,
        #[command(flatten)]
        decision: DecisionArgs,
    },
    /// Preference order of the systems as DOT and JSON
    Rank {
        predictions: Vec<PathBuf>,
        #[command(flatten)]
        decision: DecisionArgs,
        /// Write DOT here instead of standard output
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Write the JSON report here
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Accuracy statistics only
    Stats { predictions: Vec<PathBuf> },
}

/// Maps an error to its exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CycleDetected(_) | Error::ConflictingVerdicts(..) => EXIT_CYCLE,
        Error::OutOfRange(_) => EXIT_USAGE,
        Error::FoldFit { source, .. } => exit_code(source),
        e if e.is_degenerate() => EXIT_DEGENERATE,
        _ => EXIT_DATA,
    }
}

/// Runs the CLI; returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn decision_config(g: &Global, d: &DecisionArgs) -> Result<DecisionConfig> {
    let config = DecisionConfig {
        alpha: g.alpha,
        delta_threshold: g.delta_threshold,
        tail: match d.tail {
            TailArg::Two => TailPolicy::TwoSided,
            TailArg::One => TailPolicy::OneSided,
        },
        pairing: match d.pairing {
            PairingArg::Auto => Pairing::Auto,
            PairingArg::Paired => Pairing::Paired,
            PairingArg::Unpaired => Pairing::Unpaired,
        },
        include_not_predicting: d.include_not_predicting,
    };
    config.validate()?;
    Ok(config)
}

fn check_global(g: &Global) -> Result<()> {
    if g.runs == 0 {
        return Err(Error::OutOfRange("--runs must be at least 1".into()));
    }
    if !(g.pred_level > 0.0 && g.pred_level < 1.0) {
        return Err(Error::OutOfRange(format!("--pred-level {} must lie in (0, 1)", g.pred_level)));
    }
    Ok(())
}

/// Runs from one or more prediction files, required to share one evaluation set.
fn load_runs(paths: &[PathBuf]) -> Result<Vec<PredictionRun>> {
    if paths.is_empty() {
        return Err(Error::InvalidInput("no predictions file given".into()));
    }
    let mut runs = Vec::new();
    for p in paths {
        runs.extend(ingest::load_predictions(p)?.into_iter().map(|r| r.with_dataset("")));
    }
    let first = &runs[0];
    let key = |r: &PredictionRun| {
        let mut v: Vec<(String, u64)> =
            r.case_ids().iter().cloned().zip(r.actuals().iter().map(|a| a.to_bits())).collect();
        v.sort();
        v
    };
    let reference = key(first);
    let mut seen = std::collections::HashSet::new();
    for r in &runs {
        if !seen.insert(r.system_id().to_string()) {
            return Err(Error::InvalidInput(format!("system '{}' appears twice", r.system_id())));
        }
        if key(r) != reference {
            return Err(Error::MismatchedEvaluationSet(format!(
                "{} and {} cover different cases or actuals",
                first.system_id(),
                r.system_id()
            )));
        }
    }
    Ok(runs)
}

fn guessing_baseline(runs: &[PredictionRun], g: &Global) -> Result<BaselineDistribution> {
    let sample = OutcomeSample::new(evaluation_actuals(&runs[0]))?;
    baseline::simulate(&sample, g.runs, g.seed)
}

/// Glass's Δ of every system against guessing.
fn guessing_effects(runs: &[PredictionRun], dist: &BaselineDistribution) -> Result<Vec<EffectSize>> {
    runs.iter()
        .map(|r| {
            Ok(glass_delta(mar(r), dist.mean_mar, dist.sd_abs_residuals)?
                .labelled(crate::preference::GUESSING_ID, r.system_id()))
        })
        .collect()
}

/// Verdicts, Hasse covers and effects for a set of runs.
fn full_report(
    title: String,
    runs: &[PredictionRun],
    g: &Global,
    decision: &DecisionArgs,
    dist: &BaselineDistribution,
) -> Result<(Report, String)> {
    let config = decision_config(g, decision)?;
    let summary = BaselineSummary::from_distribution(dist, g.alpha)?;
    let reports = runs
        .iter()
        .map(|r| AccuracyReport::compute(r, g.pred_level, Some(dist.mean_mar)))
        .collect::<Result<Vec<_>>>()?;
    let table = RunTable::build(&reports, Some(&summary), g.pred_level)?;
    let verdicts = compare_all(runs, dist, &config)?;
    let graph = build_order(&verdicts, config.include_not_predicting)?;
    let hasse = hasse_edges(&graph)?;
    let dot = emit_dot(&graph)?;
    let mut report = Report::new(title, table);
    report.seed = Some(g.seed);
    report.baseline = Some(summary);
    report.effects = guessing_effects(runs, dist)?;
    report.verdicts = verdicts;
    report.hasse = hasse;
    report.header.push(("alpha".into(), g.alpha.to_string()));
    report.header.push(("delta threshold".into(), g.delta_threshold.to_string()));
    Ok((report, dot))
}

fn execute(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    check_global(g)?;
    let format = Format::from(g.format);
    match &cli.command {
        Command::Evaluate { data, predictors, scheme, fast_selection, decision, dot, predictions_out } => {
            let dataset = ingest::load_dataset(&data.dataset, &data.options())?;
            let scheme: ValidationScheme = scheme.parse::<ValidationScheme>()?.with_seed(g.seed);
            let specs = predictors
                .iter()
                .map(|p| {
                    let mut spec: PredictorSpec = p.parse()?;
                    if !p.contains("seed=") {
                        spec.seed = g.seed;
                    }
                    if *fast_selection && matches!(spec.kind, PredictorKind::EbaFss | PredictorKind::EbaCss) {
                        spec.feature_search = FeatureSearch::Greedy;
                    }
                    Ok(spec)
                })
                .collect::<Result<Vec<_>>>()?;
            let stats = StatsConfig { runs: g.runs, seed: g.seed, pred_level: g.pred_level };
            let runs =
                specs.iter().map(|s| harness::run_validation(&dataset, s, &scheme)).collect::<Result<Vec<_>>>()?;
            let sample = OutcomeSample::new(evaluation_actuals(&runs[0]))?;
            let dist = baseline::simulate(&sample, stats.runs, stats.seed)?;
            let title = format!("{} ({} cases, {})", dataset.name, dataset.len(), scheme);
            let (report, dot_text) = full_report(title, &runs, g, decision, &dist)?;
            if let Some(path) = dot {
                write_file(path, &dot_text)?;
            }
            if let Some(path) = predictions_out {
                write_file(path, &ingest::predictions_csv(&runs)?)?;
            }
            Ok(render_report(&report, format))
        }
        Command::Baseline { input, predictions, target, id_column, quantile, bins, histogram } => {
            let actuals = if *predictions {
                let runs = load_runs(std::slice::from_ref(input))?;
                evaluation_actuals(&runs[0])
            } else {
                let opts = DatasetOptions {
                    target: target.clone(),
                    id_column: id_column.clone(),
                    ..DatasetOptions::default()
                };
                ingest::load_dataset(input, &opts)?.outcomes()
            };
            let sample = OutcomeSample::new(actuals)?;
            let dist = baseline::simulate(&sample, g.runs, g.seed)?;
            if dist.is_degenerate() {
                return Err(Error::DegenerateBaseline("all outcomes are equal".into()));
            }
            let mut summary = BaselineSummary::from_distribution(&dist, g.alpha)?;
            if let Some(q) = quantile {
                if !summary.quantiles.iter().any(|(l, _)| l == q) {
                    summary.quantiles.push((*q, dist.quantile(*q)?));
                    summary.quantiles.sort_by(|a, b| a.0.total_cmp(&b.0));
                }
            }
            let bins = dist.histogram(*bins)?;
            if let Some(path) = histogram {
                write_file(path, &baseline::histogram_csv(&bins))?;
            }
            let exact = exact_expected_mar(&sample);
            let mut report = Report::new(
                format!(
                    "{} ({} outcomes)",
                    input.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default(),
                    sample.len()
                ),
                RunTable::build(&[], Some(&summary), g.pred_level)?,
            );
            report.seed = Some(g.seed);
            report.baseline = Some(summary);
            report.header.push(("exact mean MAR".into(), format!("{:.4}", exact.mean)));
            report.header.push(("exact SD of absolute residuals".into(), format!("{:.4}", exact.sd)));
            let mut text = render_report(&report, format);
            if histogram.is_none() && format != Format::Json {
                text.push_str("\nHistogram of guessing MAR\n");
                text.push_str(&baseline::histogram_csv(&bins));
            }
            Ok(text)
        }
        Command::Compare { predictions, decision } => {
            let runs = load_runs(predictions)?;
            let dist = guessing_baseline(&runs, g)?;
            let (report, _) = full_report(title_of(predictions), &runs, g, decision, &dist)?;
            Ok(render_report(&report, format))
        }
        Command::Rank { predictions, decision, dot, json } => {
            let runs = load_runs(predictions)?;
            let dist = guessing_baseline(&runs, g)?;
            let (report, dot_text) = full_report(title_of(predictions), &runs, g, decision, &dist)?;
            let json_text = render_report(&report, Format::Json);
            if let Some(path) = json {
                write_file(path, &json_text)?;
            }
            match (dot, format) {
                (Some(path), _) => {
                    write_file(path, &dot_text)?;
                    Ok(render_report(&report, format))
                }
                (None, Format::Json) => Ok(json_text),
                (None, _) => Ok(dot_text),
            }
        }
        Command::Stats { predictions } => {
            let runs = load_runs(predictions)?;
            let reports =
                runs.iter().map(|r| AccuracyReport::compute(r, g.pred_level, None)).collect::<Result<Vec<_>>>()?;
            let report = Report::new(title_of(predictions), RunTable::build(&reports, None, g.pred_level)?);
            Ok(render_report(&report, format))
        }
    }
}

fn title_of(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect::<Vec<_>>()
        .join(", ")
}
