//! Random-guessing baseline P0.
//!
//! Each target case is "predicted" by the actual outcome of another case drawn
//! uniformly from the remaining n − 1. Repeating this many times gives the
//! distribution of MAR under guessing, which anchors SA, Q1 and Glass's Δ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary;

pub const DEFAULT_RUNS: usize = 1000;
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

/// Actual outcomes of an evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSample {
    values: Vec<f64>,
}

impl OutcomeSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "random guessing needs at least 2 outcomes, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("outcomes must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when every outcome is identical, so guessing is never wrong.
    pub fn is_degenerate(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RunTotals {
    mar: f64,
    mmre: Option<f64>,
    abs_sum: f64,
    abs_sq_sum: f64,
}

fn guess_once<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> RunTotals {
    let n = values.len();
    let all_positive = values.iter().all(|&v| v > 0.0);
    let mut totals = RunTotals::default();
    let mut mre_sum = 0.0;
    for (t, &y) in values.iter().enumerate() {
        // uniform over the other n - 1 indices
        let j = rng.gen_range(0..n - 1);
        let r = if j >= t { j + 1 } else { j };
        let res = (y - values[r]).abs();
        totals.abs_sum += res;
        totals.abs_sq_sum += res * res;
        if all_positive {
            mre_sum += res / y;
        }
    }
    totals.mar = totals.abs_sum / n as f64;
    totals.mmre = all_positive.then(|| mre_sum / n as f64 * 100.0);
    totals
}

/// One run of random guessing; returns its MAR.
pub fn random_guess_run<R: Rng + ?Sized>(sample: &OutcomeSample, rng: &mut R) -> f64 {
    guess_once(&sample.values, rng).mar
}

/// Generator for run `index` of a simulation seeded with `seed`. Each run gets
/// its own ChaCha stream, so results do not depend on scheduling.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo characterization of random guessing over one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDistribution {
    pub runs: usize,
    pub seed: u64,
    /// One MAR per run, in run order.
    pub mar_samples: Vec<f64>,
    /// Mean MAR over runs.
    pub mean_mar: f64,
    /// SD of the per-case absolute residuals pooled over all runs.
    pub sd_abs_residuals: f64,
    /// One MMRE (percent) per run; absent when some outcome is not positive.
    pub mmre_samples: Option<Vec<f64>>,
    pub mean_mmre: Option<f64>,
    actuals: Vec<f64>,
    #[serde(skip)]
    sorted_mar: Vec<f64>,
    #[serde(skip)]
    sorted_mmre: Option<Vec<f64>>,
}

/// Runs `runs` independent rounds of random guessing.
pub fn simulate(sample: &OutcomeSample, runs: usize, seed: u64) -> Result<BaselineDistribution> {
    if runs == 0 {
        return Err(Error::OutOfRange("baseline needs at least one run".into()));
    }
    let totals: Vec<RunTotals> =
        (0..runs).into_par_iter().map(|i| guess_once(&sample.values, &mut run_rng(seed, i as u64))).collect();

    let mar_samples: Vec<f64> = totals.iter().map(|t| t.mar).collect();
    let mmre_samples: Option<Vec<f64>> = totals.iter().map(|t| t.mmre).collect();

    let count = (runs * sample.len()) as f64;
    let (abs_sum, sq_sum) = totals.iter().fold((0.0, 0.0), |(a, s), t| (a + t.abs_sum, s + t.abs_sq_sum));
    let pooled_mean = abs_sum / count;
    let sd_abs_residuals = (sq_sum / count - pooled_mean * pooled_mean).max(0.0).sqrt();

    Ok(BaselineDistribution::from_samples(seed, mar_samples, mmre_samples, sd_abs_residuals, sample.values.clone()))
}

impl BaselineDistribution {
    /// Builds a distribution from precomputed per-run samples.
    pub fn from_samples(
        seed: u64,
        mar_samples: Vec<f64>,
        mmre_samples: Option<Vec<f64>>,
        sd_abs_residuals: f64,
        actuals: Vec<f64>,
    ) -> Self {
        let mut sorted_mar = mar_samples.clone();
        sorted_mar.sort_by(f64::total_cmp);
        let sorted_mmre = mmre_samples.as_ref().map(|m| {
            let mut s = m.clone();
            s.sort_by(f64::total_cmp);
            s
        });
        Self {
            runs: mar_samples.len(),
            seed,
            mean_mar: summary::mean(&mar_samples),
            mean_mmre: mmre_samples.as_deref().map(summary::mean),
            mar_samples,
            sd_abs_residuals,
            mmre_samples,
            actuals,
            sorted_mar,
            sorted_mmre,
        }
    }

    /// Rebuilds the sorted caches after deserialization.
    pub fn restore(self) -> Self {
        Self::from_samples(self.seed, self.mar_samples, self.mmre_samples, self.sd_abs_residuals, self.actuals)
    }

    /// The outcomes the baseline was built on.
    pub fn actuals(&self) -> &[f64] {
        &self.actuals
    }

    pub fn sorted_mar(&self) -> &[f64] {
        &self.sorted_mar
    }

    pub fn is_degenerate(&self) -> bool {
        self.mean_mar == 0.0
    }

    /// MAR at quantile `q` of the guessing distribution.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        quantile(self, q)
    }

    /// MMRE (percent) at quantile `q`, when defined.
    pub fn mmre_quantile(&self, q: f64) -> Result<Option<f64>> {
        check_q(q)?;
        Ok(self.sorted_mmre.as_deref().map(|s| summary::interpolated_quantile(s, q)))
    }

    pub fn empirical_p(&self, observed_mar: f64) -> f64 {
        empirical_p(self, observed_mar)
    }

    pub fn histogram(&self, bins: usize) -> Result<Vec<HistogramBin>> {
        histogram(self, bins)
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("quantile level {q} must lie in (0, 1)")))
    }
}

/// Linear interpolation between adjacent order statistics of the MAR samples.
pub fn quantile(dist: &BaselineDistribution, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(summary::interpolated_quantile(&dist.sorted_mar, q))
}

/// Fraction of guessing runs at least as good as `observed_mar`, as
/// `(count + 1) / (runs + 1)` so it is never zero.
pub fn empirical_p(dist: &BaselineDistribution, observed_mar: f64) -> f64 {
    let count = dist.sorted_mar.partition_point(|&m| m <= observed_mar);
    (count + 1) as f64 / (dist.runs + 1) as f64
}

/// Exact mean MAR of random guessing and the population SD of the per-case
/// absolute residual over all ordered pairs t ≠ r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactBaseline {
    pub mean: f64,
    pub sd: f64,
}

pub fn exact_expected_mar(sample: &OutcomeSample) -> ExactBaseline {
    let y = &sample.values;
    let n = y.len();
    let mut sum = 0.0;
    let mut sq = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        for (r, &yr) in y.iter().enumerate() {
            if r != t {
                let d = (yt - yr).abs();
                sum += d;
                sq += d * d;
            }
        }
    }
    let pairs = (n * (n - 1)) as f64;
    // Every target averages over exactly n - 1 draws, so the mean of per-target
    // means equals the mean over all ordered pairs.
    let mean = sum / pairs;
    let sd = (sq / pairs - mean * mean).max(0.0).sqrt();
    ExactBaseline { mean, sd }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Equal-width bins spanning the observed MAR range. The last bin is closed.
pub fn histogram(dist: &BaselineDistribution, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::OutOfRange("histogram needs at least one bin".into()));
    }
    let lo = dist.sorted_mar[0];
    let hi = dist.sorted_mar[dist.runs - 1];
    if hi == lo {
        return Ok(vec![HistogramBin { lower: lo, upper: hi, count: dist.runs }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: lo + width * b as f64,
            upper: if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 },
            count: 0,
        })
        .collect();
    for &m in &dist.sorted_mar {
        let b = (((m - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    Ok(out)
}

/// CSV with header `bin_lower,bin_upper,count`.
pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut s = String::from("bin_lower,bin_upper,count\n");
    for b in bins {
        s.push_str(&format!("{},{},{}\n", b.lower, b.upper, b.count));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64]) -> OutcomeSample {
        OutcomeSample::new(v.to_vec()).unwrap()
    }

    /// Enumerates every joint draw (each target picks one of the other n − 1).
    fn enumerate_mean_mar(y: &[f64]) -> f64 {
        let n = y.len();
        let combos = (n - 1).pow(n as u32);
        let mut total = 0.0;
        for code in 0..combos {
            let mut c = code;
            let mut sum = 0.0;
            for t in 0..n {
                let j = c % (n - 1);
                c /= n - 1;
                let r = if j >= t { j + 1 } else { j };
                sum += (y[t] - y[r]).abs();
            }
            total += sum / n as f64;
        }
        total / combos as f64
    }

    #[test]
    fn guess_run_forced_and_constant() {
        let mut rng = run_rng(7, 0);
        for _ in 0..20 {
            assert_eq!(random_guess_run(&sample(&[0.0, 10.0]), &mut rng), 10.0);
            assert_eq!(random_guess_run(&sample(&[5.0, 5.0, 5.0]), &mut rng), 0.0);
        }
    }

    #[test]
    fn too_small_sample_rejected() {
        assert!(OutcomeSample::new(vec![3.0]).is_err());
        assert!(simulate(&sample(&[1.0, 2.0]), 0, 1).is_err());
    }

    #[test]
    fn exact_oracle_matches_enumeration() {
        let y = [1.0, 2.0, 4.0];
        let brute = enumerate_mean_mar(&y);
        assert!((brute - 2.0).abs() < 1e-12);
        let exact = exact_expected_mar(&sample(&y));
        assert!((exact.mean - 2.0).abs() < 1e-12);

        let y = [3.0, 9.0, 4.5, 20.0, 1.0];
        assert!((exact_expected_mar(&sample(&y)).mean - enumerate_mean_mar(&y)).abs() < 1e-9);
    }

    #[test]
    fn exact_degenerate_cases() {
        let e = exact_expected_mar(&sample(&[0.0, 10.0]));
        assert_eq!((e.mean, e.sd), (10.0, 0.0));
        let e = exact_expected_mar(&sample(&[4.0; 6]));
        assert_eq!((e.mean, e.sd), (0.0, 0.0));
    }

    #[test]
    fn simulate_forced_sample() {
        let d = simulate(&sample(&[0.0, 10.0]), 50, 3).unwrap();
        assert!(d.mar_samples.iter().all(|&m| m == 10.0));
        assert_eq!(d.mean_mar, 10.0);
        assert_eq!(d.sd_abs_residuals, 0.0);
        assert_eq!(d.runs, 50);
    }

    #[test]
    fn simulate_converges_to_exact_mean() {
        let d = simulate(&sample(&[1.0, 2.0, 4.0]), 100_000, 11).unwrap();
        assert!((d.mean_mar - 2.0).abs() / 2.0 < 0.01, "mean {}", d.mean_mar);
    }

    #[test]
    fn simulate_is_deterministic_across_thread_counts() {
        let s = sample(&[3.0, 8.0, 1.0, 40.0, 12.0, 7.5]);
        let a = simulate(&s, 500, 42).unwrap();
        let b = simulate(&s, 500, 42).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| simulate(&s, 500, 42).unwrap());
        assert_eq!(a, c);
        let d = simulate(&s, 500, 43).unwrap();
        assert_ne!(a.mar_samples, d.mar_samples);
    }

    #[test]
    fn quantile_examples() {
        let d = simulate(&sample(&[0.0, 10.0]), 30, 0).unwrap();
        assert_eq!(d.quantile(0.05).unwrap(), 10.0);
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());

        let samples: Vec<f64> = (1..=100).map(f64::from).collect();
        let d = BaselineDistribution::from_samples(0, samples, None, 1.0, vec![1.0, 2.0]);
        assert!((d.quantile(0.5).unwrap() - 50.5).abs() < 1e-12);
    }

    #[test]
    fn empirical_p_extremes_and_quantile() {
        let s = sample(&[1.0, 3.0, 7.0, 12.0, 30.0, 2.0, 9.0, 15.0]);
        let d = simulate(&s, 4000, 5).unwrap();
        let min = d.sorted_mar()[0];
        let max = d.sorted_mar()[d.runs - 1];
        assert_eq!(d.empirical_p(min - 1.0), 1.0 / 4001.0);
        assert_eq!(d.empirical_p(max + 1.0), 1.0);
        let q05 = d.quantile(0.05).unwrap();
        // ties in the discrete MAR distribution widen the band somewhat
        let p = d.empirical_p(q05);
        assert!((p - 0.05).abs() < 0.02, "p at 5% quantile = {p}");
    }

    #[test]
    fn histogram_counts_everything() {
        let s = sample(&[1.0, 3.0, 7.0, 12.0, 30.0, 2.0]);
        let d = simulate(&s, 1000, 9).unwrap();
        let h = d.histogram(DEFAULT_HISTOGRAM_BINS).unwrap();
        assert_eq!(h.len(), 20);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 1000);
        let csv = histogram_csv(&h);
        assert!(csv.starts_with("bin_lower,bin_upper,count\n"));
        assert_eq!(csv.lines().count(), 21);
    }

    #[test]
    fn pooled_sd_converges_to_exact() {
        let s = sample(&[2.0, 5.0, 11.0, 3.0, 8.0, 21.0, 1.5]);
        let d = simulate(&s, 20_000, 1).unwrap();
        let e = exact_expected_mar(&s);
        assert!((d.sd_abs_residuals - e.sd).abs() / e.sd < 0.02);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn quantile_and_p_monotone(
                ys in prop::collection::vec(1.0f64..100.0, 3..12),
                seed in 0u64..1000,
                q1 in 0.01f64..0.99, q2 in 0.01f64..0.99,
                o1 in 0.0f64..100.0, o2 in 0.0f64..100.0,
            ) {
                let d = simulate(&OutcomeSample::new(ys).unwrap(), 200, seed).unwrap();
                let (qa, qb) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
                prop_assert!(d.quantile(qa).unwrap() <= d.quantile(qb).unwrap());
                let (oa, ob) = if o1 <= o2 { (o1, o2) } else { (o2, o1) };
                prop_assert!(d.empirical_p(oa) <= d.empirical_p(ob));
            }
        }
    }
}
