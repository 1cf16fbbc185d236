//! Residual-based accuracy statistics for a single prediction run.
//!
//! MAR is the unbiased statistic everything downstream is built on. The
//! relative-error family (MMRE, MdMRE, pred) is provided for comparison with
//! published results; it is asymmetric and should not drive inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary;

/// Default pred(l) threshold.
pub const DEFAULT_PRED_LEVEL: f64 = 0.25;

/// Paired (actual, predicted) values for one prediction system over one
/// evaluation set. Pair order is stable so paired tests can line runs up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRun {
    system_id: String,
    dataset: Option<String>,
    case_ids: Vec<String>,
    actuals: Vec<f64>,
    predictions: Vec<f64>,
}

impl PredictionRun {
    /// Builds a run from `(actual, predicted)` pairs. Case ids default to
    /// 1-based row numbers.
    pub fn new(system_id: impl Into<String>, pairs: &[(f64, f64)]) -> Result<Self> {
        let case_ids = (1..=pairs.len()).map(|i| i.to_string()).collect();
        Self::with_case_ids(system_id, case_ids, pairs)
    }

    pub fn with_case_ids(system_id: impl Into<String>, case_ids: Vec<String>, pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("a prediction run needs at least one pair".into()));
        }
        if case_ids.len() != pairs.len() {
            return Err(Error::InvalidInput(format!("{} case ids for {} pairs", case_ids.len(), pairs.len())));
        }
        if let Some(i) = pairs.iter().position(|(y, p)| !y.is_finite() || !p.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value in pair {}", i + 1)));
        }
        Ok(Self {
            system_id: system_id.into(),
            dataset: None,
            case_ids,
            actuals: pairs.iter().map(|p| p.0).collect(),
            predictions: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn with_dataset(mut self, dataset: impl Into<String>) -> Self {
        self.dataset = Some(dataset.into());
        self
    }

    pub fn with_system_id(mut self, system_id: impl Into<String>) -> Self {
        self.system_id = system_id.into();
        self
    }

    pub fn system_id(&self) -> &str {
        &self.system_id
    }

    pub fn dataset(&self) -> Option<&str> {
        self.dataset.as_deref()
    }

    pub fn case_ids(&self) -> &[String] {
        &self.case_ids
    }

    pub fn actuals(&self) -> &[f64] {
        &self.actuals
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn len(&self) -> usize {
        self.actuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actuals.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.actuals.iter().copied().zip(self.predictions.iter().copied())
    }

    /// Same run with every actual and prediction multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.actuals.iter_mut().for_each(|y| *y *= c);
        out.predictions.iter_mut().for_each(|p| *p *= c);
        out
    }
}

/// Which way a statistic improves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mar,
    Mmre,
    Mdmre,
    Pred,
    Sa,
}

impl Statistic {
    pub fn direction(self) -> Direction {
        match self {
            Statistic::Mar | Statistic::Mmre | Statistic::Mdmre => Direction::LowerIsBetter,
            Statistic::Pred | Statistic::Sa => Direction::HigherIsBetter,
        }
    }
}

/// Accuracy summary for one run. Percent-valued fields are already scaled by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub system_id: String,
    pub n: usize,
    pub mar: f64,
    /// `None` when some actual is not positive.
    pub mmre: Option<f64>,
    pub mdmre: Option<f64>,
    pub pred_level: f64,
    pub pred_l: Option<f64>,
    /// `None` when no baseline was supplied.
    pub sa: Option<f64>,
}

impl AccuracyReport {
    /// Computes every statistic; SA only when `baseline_mean_mar` is given.
    pub fn compute(run: &PredictionRun, pred_level: f64, baseline_mean_mar: Option<f64>) -> Result<Self> {
        let mar = mar(run);
        let sa = baseline_mean_mar.map(|b| standardised_accuracy(mar, b)).transpose()?;
        // MRE-family statistics are simply absent for runs with non-positive actuals.
        let mres = relative_errors(run).ok();
        let pred_l = match &mres {
            Some(m) => Some(pred_from_mres(m, pred_level)?),
            None => {
                check_pred_level(pred_level)?;
                None
            }
        };
        Ok(Self {
            system_id: run.system_id().to_string(),
            n: run.len(),
            mar,
            mmre: mres.as_ref().map(|m| summary::mean(m) * 100.0),
            mdmre: mres.as_ref().map(|m| summary::median(m) * 100.0),
            pred_level,
            pred_l,
            sa,
        })
    }
}

/// |y_i − ŷ_i| in run order.
pub fn absolute_residuals(run: &PredictionRun) -> Vec<f64> {
    run.pairs().map(|(y, p)| (y - p).abs()).collect()
}

/// Mean absolute residual.
pub fn mar(run: &PredictionRun) -> f64 {
    summary::mean(&absolute_residuals(run))
}

/// Per-case magnitude of relative error as fractions (not percent).
pub fn relative_errors(run: &PredictionRun) -> Result<Vec<f64>> {
    run.pairs()
        .enumerate()
        .map(|(i, (y, p))| if y > 0.0 { Ok((y - p).abs() / y) } else { Err(Error::Divisor { index: i, value: y }) })
        .collect()
}

/// Mean magnitude of relative error, in percent.
pub fn mmre(run: &PredictionRun) -> Result<f64> {
    Ok(summary::mean(&relative_errors(run)?) * 100.0)
}

/// Median magnitude of relative error, in percent.
pub fn mdmre(run: &PredictionRun) -> Result<f64> {
    Ok(summary::median(&relative_errors(run)?) * 100.0)
}

/// Fraction of cases whose relative error is at most `level`.
pub fn pred(run: &PredictionRun, level: f64) -> Result<f64> {
    check_pred_level(level)?;
    pred_from_mres(&relative_errors(run)?, level)
}

fn check_pred_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("pred level {level} must lie in (0, 1)")))
    }
}

fn pred_from_mres(mres: &[f64], level: f64) -> Result<f64> {
    check_pred_level(level)?;
    let hits = mres.iter().filter(|&&m| m <= level).count();
    Ok(hits as f64 / mres.len() as f64)
}

/// Standardised accuracy: percentage improvement of `mar` over the mean MAR of
/// random guessing. Zero means guessing-equivalent, negative means worse.
pub fn standardised_accuracy(mar: f64, baseline_mean_mar: f64) -> Result<f64> {
    if !(baseline_mean_mar > 0.0) || !baseline_mean_mar.is_finite() {
        return Err(Error::DegenerateBaseline(format!("baseline mean MAR must be positive, got {baseline_mean_mar}")));
    }
    Ok((1.0 - mar / baseline_mean_mar) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn swapped_pair() -> PredictionRun {
        PredictionRun::new("P", &[(10.0, 100.0), (100.0, 10.0)]).unwrap()
    }

    fn run(ys: &[f64], ps: &[f64]) -> PredictionRun {
        let pairs: Vec<_> = ys.iter().copied().zip(ps.iter().copied()).collect();
        PredictionRun::new("P", &pairs).unwrap()
    }

    #[test]
    fn residuals_of_swapped_pair() {
        assert_eq!(absolute_residuals(&swapped_pair()), vec![90.0, 90.0]);
        assert_eq!(absolute_residuals(&run(&[1.0], &[3.0])), vec![2.0]);
        assert_eq!(absolute_residuals(&run(&[4.0, 5.0], &[4.0, 5.0])), vec![0.0, 0.0]);
    }

    #[test]
    fn mar_examples() {
        assert_eq!(mar(&swapped_pair()), 90.0);
        assert_eq!(mar(&run(&[3.0, 7.0], &[3.0, 7.0])), 0.0);
        assert_relative_eq!(mar(&run(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0])), 2.0 / 3.0);
    }

    #[test]
    fn mmre_is_asymmetric() {
        assert_relative_eq!(mmre(&run(&[10.0], &[100.0])).unwrap(), 900.0);
        assert_relative_eq!(mmre(&run(&[100.0], &[10.0])).unwrap(), 90.0);
        assert_relative_eq!(mmre(&swapped_pair()).unwrap(), 495.0);
        assert_eq!(mmre(&run(&[5.0, 6.0], &[5.0, 6.0])).unwrap(), 0.0);
    }

    #[test]
    fn mmre_rejects_zero_actual() {
        let r = run(&[0.0, 10.0], &[1.0, 10.0]);
        assert!(matches!(mmre(&r), Err(Error::Divisor { index: 0, .. })));
        assert!(mdmre(&r).is_err());
        // MAR is still defined.
        assert_eq!(mar(&r), 0.5);
    }

    #[test]
    fn mdmre_examples() {
        assert_relative_eq!(mdmre(&swapped_pair()).unwrap(), 495.0);
        assert_relative_eq!(mdmre(&run(&[100.0], &[10.0])).unwrap(), 90.0);
        // MREs 10%, 20%, 1000%
        let r = run(&[100.0, 100.0, 100.0], &[110.0, 80.0, 1100.0]);
        assert_relative_eq!(mdmre(&r).unwrap(), 20.0, epsilon = 1e-9);
    }

    #[test]
    fn pred_examples() {
        assert_eq!(pred(&run(&[1.0, 2.0], &[1.0, 2.0]), 0.25).unwrap(), 1.0);
        assert_eq!(pred(&swapped_pair(), 0.25).unwrap(), 0.0);
        let r = run(&[100.0, 100.0], &[110.0, 130.0]);
        assert_eq!(pred(&r, 0.25).unwrap(), 0.5);
        assert!(pred(&r, 0.0).is_err());
        assert!(pred(&r, 1.0).is_err());
    }

    #[test]
    fn sa_golden_values() {
        let cases = [
            (291.6, 283.0, -3.0, 0.1),
            (331.6, 283.0, -17.2, 0.3),
            (136.0, 269.2, 49.5, 0.1),
            (1346.0, 4149.0, 67.6, 0.1),
        ];
        for (m, b, want, tol) in cases {
            let sa = standardised_accuracy(m, b).unwrap();
            assert!((sa - want).abs() <= tol, "SA({m}, {b}) = {sa}");
        }
        assert_eq!(standardised_accuracy(50.0, 50.0).unwrap(), 0.0);
        assert_eq!(standardised_accuracy(0.0, 12.0).unwrap(), 100.0);
        assert!(standardised_accuracy(1.0, 0.0).is_err());
        assert!(standardised_accuracy(1.0, -3.0).is_err());
    }

    #[test]
    fn statistic_directions() {
        assert_eq!(Statistic::Mar.direction(), Direction::LowerIsBetter);
        assert_eq!(Statistic::Mdmre.direction(), Direction::LowerIsBetter);
        assert_eq!(Statistic::Pred.direction(), Direction::HigherIsBetter);
        assert_eq!(Statistic::Sa.direction(), Direction::HigherIsBetter);
    }

    #[test]
    fn report_skips_mre_family_for_zero_actuals() {
        let r = run(&[0.0, 10.0], &[2.0, 10.0]);
        let rep = AccuracyReport::compute(&r, 0.25, Some(5.0)).unwrap();
        assert_eq!(rep.mar, 1.0);
        assert!(rep.mmre.is_none());
        assert_eq!(rep.sa, Some(80.0));
    }

    #[test]
    fn empty_run_rejected() {
        assert!(PredictionRun::new("P", &[]).is_err());
        assert!(PredictionRun::new("P", &[(1.0, f64::NAN)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn run_strategy() -> impl Strategy<Value = PredictionRun> {
            prop::collection::vec((0.1f64..1e4, 0.0f64..1e4), 1..40)
                .prop_map(|pairs| PredictionRun::new("P", &pairs).unwrap())
        }

        proptest! {
            #[test]
            fn mar_is_mean_of_residuals(r in run_strategy()) {
                let res = absolute_residuals(&r);
                let direct = res.iter().sum::<f64>() / res.len() as f64;
                prop_assert!((mar(&r) - direct).abs() <= 1e-9 * direct.max(1.0));
            }

            #[test]
            fn pred_nondecreasing(r in run_strategy(), a in 0.01f64..0.98, b in 0.01f64..0.98) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(pred(&r, lo).unwrap() <= pred(&r, hi).unwrap());
            }

            #[test]
            fn sa_scale_invariant(r in run_strategy(), base in 1.0f64..1e4, c in 0.01f64..100.0) {
                let sa = standardised_accuracy(mar(&r), base).unwrap();
                let scaled = standardised_accuracy(mar(&r.scaled(c)), base * c).unwrap();
                prop_assert!((sa - scaled).abs() <= 1e-9 * sa.abs().max(1.0));
            }

            #[test]
            fn sa_strictly_decreasing(m1 in 0.0f64..1e4, d in 1e-3f64..1e3, base in 1.0f64..1e4) {
                prop_assert!(standardised_accuracy(m1, base).unwrap() > standardised_accuracy(m1 + d, base).unwrap());
            }

            #[test]
            fn mre_asymmetry(y in 1.0f64..1e4, p in 1.0f64..1e4) {
                prop_assume!((y - p).abs() > 1e-6);
                let fwd = mmre(&PredictionRun::new("P", &[(y, p)]).unwrap()).unwrap();
                let rev = mmre(&PredictionRun::new("P", &[(p, y)]).unwrap()).unwrap();
                prop_assert!(fwd != rev);
                let a = absolute_residuals(&PredictionRun::new("P", &[(y, p)]).unwrap());
                let b = absolute_residuals(&PredictionRun::new("P", &[(p, y)]).unwrap());
                prop_assert_eq!(a, b);
            }

            #[test]
            fn mdmre_is_exact_median(r in run_strategy()) {
                let mut m = relative_errors(&r).unwrap();
                m.sort_by(f64::total_cmp);
                let n = m.len();
                let med = if n % 2 == 1 { m[n / 2] } else { (m[n / 2 - 1] + m[n / 2]) / 2.0 };
                prop_assert!((mdmre(&r).unwrap() - med * 100.0).abs() <= 1e-9 * med.max(1.0) * 100.0);
            }
        }
    }
}
