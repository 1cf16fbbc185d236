//! Cross-validation harness producing prediction runs.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accuracy::{AccuracyReport, PredictionRun, DEFAULT_PRED_LEVEL};
use crate::baseline::{self, BaselineDistribution, OutcomeSample, DEFAULT_RUNS};
use crate::error::{Error, Result};
use crate::predictors::{self, Dataset, PredictorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Loocv,
    RepeatedKfold,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationScheme {
    pub kind: SchemeKind,
    pub folds: usize,
    pub repeats: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl ValidationScheme {
    pub fn loocv() -> Self {
        Self { kind: SchemeKind::Loocv, folds: 0, repeats: 1, holdout_fraction: 0.0, seed: 0 }
    }

    pub fn repeated_kfold(folds: usize, repeats: usize, seed: u64) -> Self {
        Self { kind: SchemeKind::RepeatedKfold, folds, repeats, holdout_fraction: 0.0, seed }
    }

    pub fn holdout(fraction: f64, seed: u64) -> Self {
        Self { kind: SchemeKind::Holdout, folds: 0, repeats: 1, holdout_fraction: fraction, seed }
    }

    pub fn with_repeats(mut self, repeats: usize) -> Self {
        self.repeats = repeats;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::OutOfRange("repeats must be at least 1".into()));
        }
        match self.kind {
            SchemeKind::RepeatedKfold if self.folds < 2 => {
                Err(Error::OutOfRange(format!("k-fold needs at least 2 folds, got {}", self.folds)))
            }
            SchemeKind::Holdout if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) => {
                Err(Error::OutOfRange(format!("hold-out fraction {} must lie in (0, 1)", self.holdout_fraction)))
            }
            _ => Ok(()),
        }
    }
}

/// Parses `loocv`, `loocv:x3`, `kfold:5`, `kfold:5x2` or `holdout:0.3`.
impl FromStr for ValidationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unrecognised validation scheme '{s}'"));
        let (kind, arg) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let scheme = match kind.to_ascii_lowercase().as_str() {
            "loocv" => {
                let repeats = match arg.strip_prefix('x') {
                    Some(r) => r.parse().map_err(|_| bad())?,
                    None if arg.is_empty() => 1,
                    None => return Err(bad()),
                };
                Self::loocv().with_repeats(repeats)
            }
            "kfold" | "repeated-kfold" | "cv" => {
                let (folds, repeats) = arg.split_once('x').unwrap_or((arg, "1"));
                Self::repeated_kfold(folds.parse().map_err(|_| bad())?, repeats.parse().map_err(|_| bad())?, 0)
            }
            "holdout" => Self::holdout(arg.parse().map_err(|_| bad())?, 0),
            _ => return Err(bad()),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl fmt::Display for ValidationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SchemeKind::Loocv if self.repeats == 1 => write!(f, "loocv"),
            SchemeKind::Loocv => write!(f, "loocv:x{}", self.repeats),
            SchemeKind::RepeatedKfold => write!(f, "kfold:{}x{}", self.folds, self.repeats),
            SchemeKind::Holdout => write!(f, "holdout:{}", self.holdout_fraction),
        }
    }
}

struct Fold {
    repeat: usize,
    test: Vec<usize>,
}

/// Test-index sets for every (repeat, fold), in execution order.
fn plan_folds(n: usize, scheme: &ValidationScheme) -> Vec<Fold> {
    let mut folds = Vec::new();
    for repeat in 0..scheme.repeats {
        match scheme.kind {
            SchemeKind::Loocv => folds.extend((0..n).map(|t| Fold { repeat, test: vec![t] })),
            SchemeKind::RepeatedKfold => {
                let order = shuffled(n, scheme.seed, repeat);
                let k = scheme.folds.min(n);
                let (base, extra) = (n / k, n % k);
                let mut start = 0;
                for f in 0..k {
                    let size = base + usize::from(f < extra);
                    let mut test = order[start..start + size].to_vec();
                    test.sort_unstable();
                    folds.push(Fold { repeat, test });
                    start += size;
                }
            }
            SchemeKind::Holdout => {
                let order = shuffled(n, scheme.seed, repeat);
                let size = ((n as f64 * scheme.holdout_fraction).round() as usize).clamp(1, n - 1);
                let mut test = order[..size].to_vec();
                test.sort_unstable();
                folds.push(Fold { repeat, test });
            }
        }
    }
    folds
}

fn shuffled(n: usize, seed: u64, repeat: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Per-fold seed so stochastic predictors do not depend on scheduling.
fn fold_seed(base: u64, fold: usize) -> u64 {
    let mut z = base ^ (fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits on each training split and predicts its held-out cases. Folds run in
/// parallel and are reduced in fold order; output is in dataset order within
/// each repeat. Case ids gain a `#r` suffix when there is more than one repeat.
pub fn run_validation(data: &Dataset, spec: &PredictorSpec, scheme: &ValidationScheme) -> Result<PredictionRun> {
    scheme.validate()?;
    spec.validate()?;
    let n = data.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("validation needs at least 3 cases, got {n}")));
    }
    let folds = plan_folds(n, scheme);
    let predictions: Vec<Vec<(usize, usize, f64)>> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let train_idx: Vec<usize> = (0..n).filter(|j| fold.test.binary_search(j).is_err()).collect();
            let train = data.subset(&train_idx);
            let fold_spec = spec.clone().with_seed(fold_seed(spec.seed, i));
            let wrap = |e: Error| Error::FoldFit { fold: i, source: Box::new(e) };
            let fitted = predictors::fit(&fold_spec, &train).map_err(wrap)?;
            fold.test
                .iter()
                .map(|&t| Ok((fold.repeat, t, fitted.predict(&data.cases[t].features).map_err(wrap)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut flat: Vec<(usize, usize, f64)> = predictions.into_iter().flatten().collect();
    flat.sort_by_key(|&(r, t, _)| (r, t));
    let multi = scheme.repeats > 1;
    let ids = flat
        .iter()
        .map(|&(r, t, _)| {
            let id = &data.cases[t].id;
            if multi {
                format!("{id}#{r}")
            } else {
                id.clone()
            }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = flat.iter().map(|&(_, t, p)| (data.cases[t].outcome, p)).collect();
    Ok(PredictionRun::with_case_ids(spec.label(), ids, &pairs)?.with_dataset(data.name.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub runs: usize,
    pub seed: u64,
    pub pred_level: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { runs: DEFAULT_RUNS, seed: 0, pred_level: DEFAULT_PRED_LEVEL }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub run: PredictionRun,
    pub report: AccuracyReport,
    pub baseline: BaselineDistribution,
}

/// The outcomes of the distinct cases a run evaluates, in first-seen order.
pub fn evaluation_actuals(run: &PredictionRun) -> Vec<f64> {
    let mut seen = std::collections::HashSet::new();
    run.case_ids()
        .iter()
        .zip(run.actuals())
        .filter(|(id, _)| seen.insert(id.split('#').next().unwrap_or(id).to_string()))
        .map(|(_, &y)| y)
        .collect()
}

/// Validation followed by a guessing baseline on the evaluated outcomes and
/// the full set of accuracy statistics including SA.
pub fn evaluate(
    data: &Dataset,
    spec: &PredictorSpec,
    scheme: &ValidationScheme,
    config: &StatsConfig,
) -> Result<Evaluation> {
    let run = run_validation(data, spec, scheme)?;
    let sample = OutcomeSample::new(evaluation_actuals(&run))?;
    let baseline = baseline::simulate(&sample, config.runs, config.seed)?;
    let report = AccuracyReport::compute(&run, config.pred_level, Some(baseline.mean_mar))?;
    Ok(Evaluation { run, report, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::PredictorKind;

    fn linear(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let ys: Vec<f64> = (0..n).map(|i| 10.0 + 3.0 * i as f64).collect();
        Dataset::from_rows("lin", &rows, &ys).unwrap()
    }

    #[test]
    fn loocv_mean_hand_values() {
        let d = Dataset::from_rows("t", &[vec![1.0], vec![2.0], vec![3.0]], &[10.0, 20.0, 30.0]).unwrap();
        let run = run_validation(&d, &PredictorSpec::new(PredictorKind::Mean), &ValidationScheme::loocv()).unwrap();
        assert_eq!(run.predictions(), &[25.0, 20.0, 15.0]);
        assert_eq!(crate::accuracy::mar(&run), 10.0);
        assert_eq!(run.dataset(), Some("t"));
    }

    #[test]
    fn loocv_mean_leaves_target_out() {
        let ys = [3.0, 8.0, 1.0, 9.0, 4.0];
        let rows: Vec<Vec<f64>> = ys.iter().map(|&y| vec![y]).collect();
        let d = Dataset::from_rows("t", &rows, &ys).unwrap();
        let run = run_validation(&d, &PredictorSpec::new(PredictorKind::Mean), &ValidationScheme::loocv()).unwrap();
        let total: f64 = ys.iter().sum();
        for (i, p) in run.predictions().iter().enumerate() {
            assert!((p - (total - ys[i]) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kfold_counts_and_determinism() {
        let d = linear(23);
        let spec = PredictorSpec::new(PredictorKind::Eba);
        let scheme = ValidationScheme::repeated_kfold(5, 2, 11);
        let a = run_validation(&d, &spec, &scheme).unwrap();
        let b = run_validation(&d, &spec, &scheme).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 46);
        for r in 0..2 {
            for c in &d.cases {
                let id = format!("{}#{r}", c.id);
                assert_eq!(a.case_ids().iter().filter(|x| **x == id).count(), 1);
            }
        }
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| run_validation(&d, &spec, &scheme)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn fold_sizes_balanced() {
        let folds = plan_folds(12, &ValidationScheme::repeated_kfold(5, 1, 3));
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2, 2]);
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn holdout_split() {
        let d = linear(20);
        let run =
            run_validation(&d, &PredictorSpec::new(PredictorKind::Median), &ValidationScheme::holdout(0.3, 5)).unwrap();
        assert_eq!(run.len(), 6);
    }

    #[test]
    fn holdout_integrity() {
        let d = linear(15);
        for kind in [PredictorKind::Eba, PredictorKind::EbaFss, PredictorKind::Stepwise, PredictorKind::Mean] {
            let spec = PredictorSpec::new(kind);
            let scheme = ValidationScheme::repeated_kfold(5, 1, 9);
            let before = run_validation(&d, &spec, &scheme).unwrap();
            let target = 4;
            let fold = plan_folds(d.len(), &scheme).into_iter().find(|f| f.test.contains(&target)).unwrap();
            let mut mutated = d.clone();
            mutated.cases[target].outcome *= 50.0;
            mutated.cases[target].features[0] += 1000.0;
            let after = run_validation(&mutated, &spec, &scheme).unwrap();
            // fold mates were fitted without the mutated case
            for &i in &fold.test {
                if i != target {
                    assert_eq!(before.predictions()[i].to_bits(), after.predictions()[i].to_bits(), "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn holdout_mutation_leaves_other_predictions() {
        let d = linear(20);
        let scheme = ValidationScheme::holdout(0.3, 2);
        let test = &plan_folds(d.len(), &scheme)[0].test;
        let spec = PredictorSpec::new(PredictorKind::EbaCss);
        let before = run_validation(&d, &spec, &scheme).unwrap();
        let mut mutated = d.clone();
        mutated.cases[test[0]].outcome = 1e6;
        mutated.cases[test[0]].features[1] = -1e6;
        let after = run_validation(&mutated, &spec, &scheme).unwrap();
        assert_eq!(before.predictions(), after.predictions());
        assert_ne!(before.actuals(), after.actuals());
    }

    #[test]
    fn degenerate_outcomes_reject_sa() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_rows("c", &rows, &[5.0; 6]).unwrap();
        let spec = PredictorSpec::new(PredictorKind::Mean);
        let run = run_validation(&d, &spec, &ValidationScheme::loocv()).unwrap();
        assert_eq!(crate::accuracy::mar(&run), 0.0);
        let err = evaluate(&d, &spec, &ValidationScheme::loocv(), &StatsConfig::default()).unwrap_err();
        assert!(err.is_degenerate());
    }

    #[test]
    fn fold_errors_name_the_fold() {
        let d = linear(4);
        let spec = PredictorSpec::new(PredictorKind::Eba).with_k(5);
        match run_validation(&d, &spec, &ValidationScheme::loocv()) {
            Err(Error::FoldFit { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("loocv".parse::<ValidationScheme>().unwrap(), ValidationScheme::loocv());
        let s: ValidationScheme = "kfold:5x2".parse().unwrap();
        assert_eq!((s.folds, s.repeats), (5, 2));
        let h: ValidationScheme = "holdout:0.25".parse().unwrap();
        assert_eq!(h.holdout_fraction, 0.25);
        assert!("kfold:1".parse::<ValidationScheme>().is_err());
        assert!("holdout:1.5".parse::<ValidationScheme>().is_err());
        assert_eq!("loocv:x3".parse::<ValidationScheme>().unwrap().to_string(), "loocv:x3");
    }
}
