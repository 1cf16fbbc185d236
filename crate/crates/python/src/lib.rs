//! Python bindings for predeval.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use predeval::accuracy::{self, AccuracyReport};
use predeval::baseline::{self, BaselineDistribution, OutcomeSample};
use predeval::harness::{self, StatsConfig};
use predeval::inference::{self, Tail};
use predeval::preference::{self, DecisionConfig, Pairing, TailPolicy, GUESSING_ID};
use predeval::report::{self, BaselineSummary, Format, Report, RunTable};
use predeval::{effect, ingest, Dataset, DatasetOptions, PredictionRun, PredictorSpec, ValidationScheme};

create_exception!(predeval_py, PredevalError, PyValueError);

fn err(e: predeval::Error) -> PyErr {
    PredevalError::new_err(e.to_string())
}

/// Converts a serializable value into plain Python dicts and lists.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PredevalError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_tail(s: &str) -> PyResult<Tail> {
    match s {
        "two-sided" | "two" => Ok(Tail::TwoSided),
        "less" => Ok(Tail::Less),
        "greater" => Ok(Tail::Greater),
        other => Err(PredevalError::new_err(format!("unknown tail '{other}'"))),
    }
}

fn decision_config(alpha: f64, delta_threshold: f64, one_sided: bool, pairing: &str) -> PyResult<DecisionConfig> {
    let pairing = match pairing {
        "auto" => Pairing::Auto,
        "paired" => Pairing::Paired,
        "unpaired" => Pairing::Unpaired,
        other => return Err(PredevalError::new_err(format!("unknown pairing '{other}'"))),
    };
    let config = DecisionConfig {
        alpha,
        delta_threshold,
        tail: if one_sided { TailPolicy::OneSided } else { TailPolicy::TwoSided },
        pairing,
        include_not_predicting: false,
    };
    config.validate().map_err(err)?;
    Ok(config)
}

fn inner_runs(runs: &[PyRef<'_, PyPredictionRun>]) -> Vec<PredictionRun> {
    runs.iter().map(|r| r.inner.clone()).collect()
}

/// Actual and predicted values of one prediction system.
#[pyclass(name = "PredictionRun", module = "predeval_py")]
pub struct PyPredictionRun {
    inner: PredictionRun,
}

#[pymethods]
impl PyPredictionRun {
    #[new]
    #[pyo3(signature = (system_id, actuals, predictions, case_ids=None))]
    fn new(
        system_id: String,
        actuals: Vec<f64>,
        predictions: Vec<f64>,
        case_ids: Option<Vec<String>>,
    ) -> PyResult<Self> {
        if actuals.len() != predictions.len() {
            return Err(PredevalError::new_err(format!(
                "{} actuals for {} predictions",
                actuals.len(),
                predictions.len()
            )));
        }
        let pairs: Vec<(f64, f64)> = actuals.into_iter().zip(predictions).collect();
        let inner = match case_ids {
            Some(ids) => PredictionRun::with_case_ids(system_id, ids, &pairs),
            None => PredictionRun::new(system_id, &pairs),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn system_id(&self) -> &str {
        self.inner.system_id()
    }

    #[getter]
    fn case_ids(&self) -> Vec<String> {
        self.inner.case_ids().to_vec()
    }

    #[getter]
    fn actuals(&self) -> Vec<f64> {
        self.inner.actuals().to_vec()
    }

    #[getter]
    fn predictions(&self) -> Vec<f64> {
        self.inner.predictions().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("PredictionRun('{}', {} cases)", self.inner.system_id(), self.inner.len())
    }

    fn absolute_residuals(&self) -> Vec<f64> {
        accuracy::absolute_residuals(&self.inner)
    }

    fn mar(&self) -> f64 {
        accuracy::mar(&self.inner)
    }

    /// Mean magnitude of relative error, in percent.
    fn mmre(&self) -> PyResult<f64> {
        accuracy::mmre(&self.inner).map_err(err)
    }

    fn mdmre(&self) -> PyResult<f64> {
        accuracy::mdmre(&self.inner).map_err(err)
    }

    #[pyo3(signature = (level=accuracy::DEFAULT_PRED_LEVEL))]
    fn pred(&self, level: f64) -> PyResult<f64> {
        accuracy::pred(&self.inner, level).map_err(err)
    }

    /// All accuracy statistics; SA is included when a baseline mean is given.
    #[pyo3(signature = (baseline_mean_mar=None, pred_level=accuracy::DEFAULT_PRED_LEVEL))]
    fn report(&self, py: Python<'_>, baseline_mean_mar: Option<f64>, pred_level: f64) -> PyResult<Py<PyAny>> {
        let r = AccuracyReport::compute(&self.inner, pred_level, baseline_mean_mar).map_err(err)?;
        to_py(py, &r)
    }
}

/// Cases with numeric features and a positive outcome.
#[pyclass(name = "Dataset", module = "predeval_py")]
pub struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (rows, outcomes, name="data".to_string()))]
    fn new(rows: Vec<Vec<f64>>, outcomes: Vec<f64>, name: String) -> PyResult<Self> {
        Ok(Self { inner: Dataset::from_rows(name, &rows, &outcomes).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn case_ids(&self) -> Vec<String> {
        self.inner.cases.iter().map(|c| c.id.clone()).collect()
    }

    fn outcomes(&self) -> Vec<f64> {
        self.inner.outcomes()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset('{}', {} cases, {} features)", self.inner.name, self.inner.len(), self.inner.n_features())
    }
}

/// Monte Carlo distribution of MAR under random guessing.
#[pyclass(name = "Baseline", module = "predeval_py")]
pub struct PyBaseline {
    inner: BaselineDistribution,
}

#[pymethods]
impl PyBaseline {
    #[getter]
    fn runs(&self) -> usize {
        self.inner.runs
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn mean_mar(&self) -> f64 {
        self.inner.mean_mar
    }

    #[getter]
    fn sd(&self) -> f64 {
        self.inner.sd_abs_residuals
    }

    #[getter]
    fn mar_samples(&self) -> Vec<f64> {
        self.inner.mar_samples.clone()
    }

    fn quantile(&self, q: f64) -> PyResult<f64> {
        self.inner.quantile(q).map_err(err)
    }

    fn empirical_p(&self, observed_mar: f64) -> f64 {
        self.inner.empirical_p(observed_mar)
    }

    #[pyo3(signature = (bins=20))]
    fn histogram_csv(&self, bins: usize) -> PyResult<String> {
        Ok(baseline::histogram_csv(&self.inner.histogram(bins).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!("Baseline(runs={}, mean_mar={})", self.inner.runs, self.inner.mean_mar)
    }
}

#[pyfunction]
#[pyo3(signature = (actuals, runs=1000, seed=0))]
fn simulate_baseline(actuals: Vec<f64>, runs: usize, seed: u64) -> PyResult<PyBaseline> {
    let sample = OutcomeSample::new(actuals).map_err(err)?;
    Ok(PyBaseline { inner: baseline::simulate(&sample, runs, seed).map_err(err)? })
}

/// Exact mean MAR of random guessing and the SD of its absolute residuals.
#[pyfunction]
fn exact_expected_mar(actuals: Vec<f64>) -> PyResult<(f64, f64)> {
    let e = baseline::exact_expected_mar(&OutcomeSample::new(actuals).map_err(err)?);
    Ok((e.mean, e.sd))
}

#[pyfunction]
fn standardised_accuracy(mar: f64, baseline_mean_mar: f64) -> PyResult<f64> {
    accuracy::standardised_accuracy(mar, baseline_mean_mar).map_err(err)
}

#[pyfunction]
fn glass_delta(py: Python<'_>, treatment_mar: f64, control_mean_mar: f64, control_sd: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &effect::glass_delta(treatment_mar, control_mean_mar, control_sd).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (a, b, tail="two-sided"))]
fn mann_whitney_u(py: Python<'_>, a: Vec<f64>, b: Vec<f64>, tail: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &inference::mann_whitney_u(&a, &b, parse_tail(tail)?).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (x, y, tail="two-sided"))]
fn wilcoxon_paired(py: Python<'_>, x: Vec<f64>, y: Vec<f64>, tail: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &inference::wilcoxon_paired(&x, &y, parse_tail(tail)?).map_err(err)?)
}

/// Verdicts against guessing and between every pair of runs.
#[pyfunction]
#[pyo3(signature = (runs, baseline, alpha=0.05, delta_threshold=0.2, one_sided=false, pairing="auto"))]
fn compare(
    py: Python<'_>,
    runs: Vec<PyRef<'_, PyPredictionRun>>,
    baseline: &PyBaseline,
    alpha: f64,
    delta_threshold: f64,
    one_sided: bool,
    pairing: &str,
) -> PyResult<Py<PyAny>> {
    let config = decision_config(alpha, delta_threshold, one_sided, pairing)?;
    let verdicts = preference::compare_all(&inner_runs(&runs), &baseline.inner, &config).map_err(err)?;
    to_py(py, &verdicts)
}

#[derive(Serialize)]
struct Ranking {
    nodes: Vec<String>,
    strict_edges: Vec<(String, String)>,
    hasse: Vec<(String, String)>,
    minimal: Vec<String>,
    dot: String,
}

/// Preference order over the runs: nodes, `(worse, better)` edges, Hasse
/// covers, minimal elements and DOT text.
#[pyfunction]
#[pyo3(signature = (runs, baseline, alpha=0.05, delta_threshold=0.2, one_sided=false, pairing="auto", include_not_predicting=false))]
#[allow(clippy::too_many_arguments)]
fn rank(
    py: Python<'_>,
    runs: Vec<PyRef<'_, PyPredictionRun>>,
    baseline: &PyBaseline,
    alpha: f64,
    delta_threshold: f64,
    one_sided: bool,
    pairing: &str,
    include_not_predicting: bool,
) -> PyResult<Py<PyAny>> {
    let config = decision_config(alpha, delta_threshold, one_sided, pairing)?;
    let verdicts = preference::compare_all(&inner_runs(&runs), &baseline.inner, &config).map_err(err)?;
    let graph = preference::build_order(&verdicts, include_not_predicting).map_err(err)?;
    let ranking = Ranking {
        nodes: graph.nodes.iter().cloned().collect(),
        strict_edges: graph.strict_edges.iter().cloned().collect(),
        hasse: preference::hasse_edges(&graph).map_err(err)?,
        minimal: graph.minimal_elements(),
        dot: preference::emit_dot(&graph).map_err(err)?,
    };
    to_py(py, &ranking)
}

#[pyfunction]
fn load_predictions(path: &str) -> PyResult<Vec<PyPredictionRun>> {
    Ok(ingest::load_predictions(path).map_err(err)?.into_iter().map(|inner| PyPredictionRun { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (path, target=None, id_column=None, exclude=Vec::new()))]
fn load_dataset(
    path: &str,
    target: Option<String>,
    id_column: Option<String>,
    exclude: Vec<String>,
) -> PyResult<PyDataset> {
    let opts = DatasetOptions { target, id_column, exclude, name: None };
    Ok(PyDataset { inner: ingest::load_dataset(path, &opts).map_err(err)? })
}

/// Validates a predictor on a dataset and returns the run, its accuracy
/// report and the guessing baseline over the evaluated outcomes.
#[pyfunction]
#[pyo3(signature = (dataset, predictor="eba", scheme="loocv", runs=1000, seed=0, pred_level=accuracy::DEFAULT_PRED_LEVEL))]
fn evaluate(
    py: Python<'_>,
    dataset: &PyDataset,
    predictor: &str,
    scheme: &str,
    runs: usize,
    seed: u64,
    pred_level: f64,
) -> PyResult<(PyPredictionRun, Py<PyAny>, PyBaseline)> {
    let spec: PredictorSpec = predictor.parse::<PredictorSpec>().map_err(err)?.with_seed(seed);
    let scheme = scheme.parse::<ValidationScheme>().map_err(err)?.with_seed(seed);
    let config = StatsConfig { runs, seed, pred_level };
    let e = py.detach(|| harness::evaluate(&dataset.inner, &spec, &scheme, &config)).map_err(err)?;
    let report = to_py(py, &e.report)?;
    Ok((PyPredictionRun { inner: e.run }, report, PyBaseline { inner: e.baseline }))
}

/// Full report over runs sharing one baseline, rendered as text, markdown or json.
#[pyfunction]
#[pyo3(signature = (runs, baseline, title="predeval".to_string(), format="text", alpha=0.05, delta_threshold=0.2, pred_level=accuracy::DEFAULT_PRED_LEVEL))]
#[allow(clippy::too_many_arguments)]
fn render_report(
    runs: Vec<PyRef<'_, PyPredictionRun>>,
    baseline: &PyBaseline,
    title: String,
    format: &str,
    alpha: f64,
    delta_threshold: f64,
    pred_level: f64,
) -> PyResult<String> {
    let format: Format = format.parse().map_err(err)?;
    let config = decision_config(alpha, delta_threshold, false, "auto")?;
    let runs = inner_runs(&runs);
    let dist = &baseline.inner;
    let summary = BaselineSummary::from_distribution(dist, alpha).map_err(err)?;
    let reports = runs
        .iter()
        .map(|r| AccuracyReport::compute(r, pred_level, Some(dist.mean_mar)))
        .collect::<predeval::Result<Vec<_>>>()
        .map_err(err)?;
    let table = RunTable::build(&reports, Some(&summary), pred_level).map_err(err)?;
    let verdicts = preference::compare_all(&runs, dist, &config).map_err(err)?;
    let graph = preference::build_order(&verdicts, false).map_err(err)?;
    let mut out = Report::new(title, table);
    out.seed = Some(dist.seed);
    out.baseline = Some(summary);
    out.effects = runs
        .iter()
        .map(|r| {
            effect::glass_delta(accuracy::mar(r), dist.mean_mar, dist.sd_abs_residuals)
                .map(|e| e.labelled(GUESSING_ID, r.system_id()))
        })
        .collect::<predeval::Result<Vec<_>>>()
        .map_err(err)?;
    out.hasse = preference::hasse_edges(&graph).map_err(err)?;
    out.verdicts = verdicts;
    Ok(report::render_report(&out, format))
}

#[pymodule]
pub fn predeval_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PredevalError", m.py().get_type::<PredevalError>())?;
    m.add_class::<PyPredictionRun>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyBaseline>()?;
    m.add_function(wrap_pyfunction!(simulate_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(exact_expected_mar, m)?)?;
    m.add_function(wrap_pyfunction!(standardised_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(glass_delta, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney_u, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_paired, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(load_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    Ok(())
}
