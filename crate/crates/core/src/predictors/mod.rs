//! Prediction systems: trivial baselines, guessing, estimation by analogy
//! (with feature- and case-subset selection) and forward stepwise regression.

mod analogy;
mod stepwise;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary;

pub use analogy::{
    case_subset_objective, inverse_distance_estimate, loocv_abs_residuals, select_cases_css, select_features_fss,
    AnalogyModel, Normalizer,
};
pub use stepwise::{fit_stepwise, ols, OlsFit, StepwiseModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub id: String,
    pub features: Vec<f64>,
    pub outcome: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub cases: Vec<Case>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, feature_names: Vec<String>, cases: Vec<Case>) -> Result<Self> {
        let f = feature_names.len();
        let mut ids = HashSet::new();
        for c in &cases {
            if c.features.len() != f {
                return Err(Error::DimensionMismatch { expected: f, got: c.features.len() });
            }
            if !(c.outcome > 0.0) || !c.outcome.is_finite() {
                return Err(Error::InvalidInput(format!("case {} has non-positive outcome {}", c.id, c.outcome)));
            }
            if c.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("case {} has a non-finite feature", c.id)));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate case id {}", c.id)));
            }
        }
        Ok(Self { name: name.into(), feature_names, cases })
    }

    /// Builds a dataset from a feature matrix and outcomes, with ids 1..=n.
    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>], outcomes: &[f64]) -> Result<Self> {
        if rows.len() != outcomes.len() {
            return Err(Error::InvalidInput(format!("{} feature rows for {} outcomes", rows.len(), outcomes.len())));
        }
        let f = rows.first().map_or(0, Vec::len);
        let feature_names = (1..=f).map(|i| format!("x{i}")).collect();
        let cases = rows
            .iter()
            .zip(outcomes)
            .enumerate()
            .map(|(i, (x, &y))| Case { id: (i + 1).to_string(), features: x.clone(), outcome: y })
            .collect();
        Self::new(name, feature_names, cases)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.cases.iter().map(|c| c.outcome).collect()
    }

    pub fn feature_rows(&self) -> Vec<&[f64]> {
        self.cases.iter().map(|c| c.features.as_slice()).collect()
    }

    /// Cases at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            cases: indices.iter().map(|&i| self.cases[i].clone()).collect(),
        }
    }

    /// Every case except the one at `index`.
    pub fn without(&self, index: usize) -> Dataset {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| i != index).collect();
        self.subset(&keep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Mean,
    Median,
    Guess,
    Eba,
    EbaFss,
    /// Case-subset selection on top of feature-subset selection.
    EbaCss,
    Stepwise,
}

impl PredictorKind {
    pub fn default_label(self) -> &'static str {
        match self {
            PredictorKind::Mean => "mean",
            PredictorKind::Median => "median",
            PredictorKind::Guess => "guess",
            PredictorKind::Eba => "EBA",
            PredictorKind::EbaFss => "EBA+",
            PredictorKind::EbaCss => "EBA++",
            PredictorKind::Stepwise => "SWR",
        }
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mean" => PredictorKind::Mean,
            "median" => PredictorKind::Median,
            "guess" => PredictorKind::Guess,
            "eba" => PredictorKind::Eba,
            "eba_fss" | "eba+" => PredictorKind::EbaFss,
            "eba_css" | "eba++" => PredictorKind::EbaCss,
            "stepwise" | "swr" => PredictorKind::Stepwise,
            other => return Err(Error::InvalidInput(format!("unknown predictor kind '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    InverseDistance,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSearch {
    /// Exhaustive up to `max_exhaustive_features`, greedy forward beyond.
    Auto,
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub label: Option<String>,
    pub k: usize,
    pub weighting: Weighting,
    pub feature_search: FeatureSearch,
    pub max_exhaustive_features: usize,
    /// Entry p-value for stepwise regression.
    pub alpha_in: f64,
    /// Lower clamp for stepwise predictions, in outcome units.
    pub floor: f64,
    pub seed: u64,
}

impl PredictorSpec {
    pub fn new(kind: PredictorKind) -> Self {
        Self {
            kind,
            label: None,
            k: 2,
            weighting: Weighting::InverseDistance,
            feature_search: FeatureSearch::Auto,
            max_exhaustive_features: 16,
            alpha_in: 0.05,
            floor: 1.0,
            seed: 0,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_weighting(mut self, w: Weighting) -> Self {
        self.weighting = w;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_feature_search(mut self, search: FeatureSearch) -> Self {
        self.feature_search = search;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// System id used in reports.
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.default_label().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::OutOfRange("k must be at least 1".into()));
        }
        if !(self.alpha_in > 0.0 && self.alpha_in < 1.0) {
            return Err(Error::OutOfRange(format!("alpha_in {} must lie in (0, 1)", self.alpha_in)));
        }
        if !(self.floor > 0.0) {
            return Err(Error::OutOfRange("prediction floor must be positive".into()));
        }
        Ok(())
    }
}

/// Parses `kind[:key=value,...]`, e.g. `eba:k=3,weighting=uniform` or
/// `stepwise:alpha=0.1`.
impl FromStr for PredictorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = PredictorSpec::new(kind.trim().to_ascii_lowercase().parse()?);
        for kv in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) =
                kv.split_once('=').ok_or_else(|| Error::InvalidInput(format!("expected key=value, got '{kv}'")))?;
            let bad = || Error::InvalidInput(format!("bad value for {key}: '{value}'"));
            match key {
                "k" => spec.k = value.parse().map_err(|_| bad())?,
                "weighting" => {
                    spec.weighting = match value {
                        "inverse-distance" | "inverse" | "idw" => Weighting::InverseDistance,
                        "uniform" => Weighting::Uniform,
                        _ => return Err(bad()),
                    }
                }
                "search" => {
                    spec.feature_search = match value {
                        "auto" => FeatureSearch::Auto,
                        "exhaustive" => FeatureSearch::Exhaustive,
                        "greedy" => FeatureSearch::Greedy,
                        _ => return Err(bad()),
                    }
                }
                "max-exhaustive" => spec.max_exhaustive_features = value.parse().map_err(|_| bad())?,
                "alpha" => spec.alpha_in = value.parse().map_err(|_| bad())?,
                "floor" => spec.floor = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                "name" | "label" => spec.label = Some(value.to_string()),
                _ => return Err(Error::InvalidInput(format!("unknown predictor parameter '{key}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[derive(Debug)]
enum Model {
    Constant(f64),
    Guess { outcomes: Vec<f64>, rng: Mutex<ChaCha8Rng> },
    Analogy(AnalogyModel),
    Stepwise(StepwiseModel),
}

/// A trained predictor. Immutable apart from the guessing predictor's generator.
#[derive(Debug)]
pub struct FittedPredictor {
    kind: PredictorKind,
    n_features: usize,
    model: Model,
}

impl FittedPredictor {
    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn analogy(&self) -> Option<&AnalogyModel> {
        match &self.model {
            Model::Analogy(m) => Some(m),
            _ => None,
        }
    }

    pub fn stepwise(&self) -> Option<&StepwiseModel> {
        match &self.model {
            Model::Stepwise(m) => Some(m),
            _ => None,
        }
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: features.len() });
        }
        Ok(match &self.model {
            Model::Constant(v) => *v,
            Model::Guess { outcomes, rng } => {
                let mut rng = rng.lock().expect("guess generator poisoned");
                outcomes[rng.gen_range(0..outcomes.len())]
            }
            Model::Analogy(m) => m.predict(features),
            Model::Stepwise(m) => m.predict(features),
        })
    }
}

pub fn fit(spec: &PredictorSpec, train: &Dataset) -> Result<FittedPredictor> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let outcomes = train.outcomes();
    let model = match spec.kind {
        PredictorKind::Mean => Model::Constant(summary::mean(&outcomes)),
        PredictorKind::Median => Model::Constant(summary::median(&outcomes)),
        PredictorKind::Guess => Model::Guess { outcomes, rng: Mutex::new(ChaCha8Rng::seed_from_u64(spec.seed)) },
        PredictorKind::Eba => {
            let all: Vec<usize> = (0..train.n_features()).collect();
            Model::Analogy(AnalogyModel::fit(train, &all, None, spec)?)
        }
        PredictorKind::EbaFss => {
            let features = select_features_fss(train, spec)?;
            Model::Analogy(AnalogyModel::fit(train, &features, None, spec)?)
        }
        PredictorKind::EbaCss => {
            let features = select_features_fss(train, spec)?;
            let cases = select_cases_css(train, &features, spec)?;
            Model::Analogy(AnalogyModel::fit(train, &features, Some(&cases), spec)?)
        }
        PredictorKind::Stepwise => Model::Stepwise(fit_stepwise(train, spec.alpha_in, spec.floor)?),
    };
    Ok(FittedPredictor { kind: spec.kind, n_features: train.n_features(), model })
}

pub fn predict(fitted: &FittedPredictor, features: &[f64]) -> Result<f64> {
    fitted.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes_only(ys: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = ys.iter().map(|&y| vec![y]).collect();
        Dataset::from_rows("t", &rows, ys).unwrap()
    }

    #[test]
    fn constant_predictors() {
        let d = outcomes_only(&[10.0, 20.0, 30.0]);
        let m = fit(&PredictorSpec::new(PredictorKind::Mean), &d).unwrap();
        assert_eq!(m.predict(&[99.0]).unwrap(), 20.0);
        let d = outcomes_only(&[1.0, 2.0, 100.0]);
        let m = fit(&PredictorSpec::new(PredictorKind::Median), &d).unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn dimension_checked() {
        let d = outcomes_only(&[10.0, 20.0, 30.0]);
        let m = fit(&PredictorSpec::new(PredictorKind::Mean), &d).unwrap();
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn guess_draws_training_outcomes() {
        let d = outcomes_only(&[3.0, 7.0, 11.0]);
        let m = fit(&PredictorSpec::new(PredictorKind::Guess).with_seed(4), &d).unwrap();
        let draws: Vec<f64> = (0..200).map(|_| m.predict(&[0.0]).unwrap()).collect();
        assert!(draws.iter().all(|v| [3.0, 7.0, 11.0].contains(v)));
        for v in [3.0, 7.0, 11.0] {
            assert!(draws.contains(&v));
        }
        let again = fit(&PredictorSpec::new(PredictorKind::Guess).with_seed(4), &d).unwrap();
        let replay: Vec<f64> = (0..200).map(|_| again.predict(&[0.0]).unwrap()).collect();
        assert_eq!(draws, replay);
    }

    #[test]
    fn spec_parsing() {
        let s: PredictorSpec = "eba:k=3,weighting=uniform".parse().unwrap();
        assert_eq!(s.kind, PredictorKind::Eba);
        assert_eq!(s.k, 3);
        assert_eq!(s.weighting, Weighting::Uniform);
        let s: PredictorSpec = "stepwise:alpha=0.1,name=SWR2".parse().unwrap();
        assert_eq!(s.alpha_in, 0.1);
        assert_eq!(s.label(), "SWR2");
        assert_eq!("eba_css".parse::<PredictorSpec>().unwrap().label(), "EBA++");
        assert!("eba:k=0".parse::<PredictorSpec>().is_err());
        assert!("forest".parse::<PredictorSpec>().is_err());
        assert!("eba:depth=3".parse::<PredictorSpec>().is_err());
    }

    #[test]
    fn dataset_validation() {
        let bad = Dataset::from_rows("t", &[vec![1.0], vec![2.0]], &[1.0, 0.0]);
        assert!(bad.is_err());
        let dup = Dataset::new(
            "t",
            vec!["x".into()],
            vec![
                Case { id: "a".into(), features: vec![1.0], outcome: 1.0 },
                Case { id: "a".into(), features: vec![2.0], outcome: 2.0 },
            ],
        );
        assert!(dup.is_err());
    }
}
