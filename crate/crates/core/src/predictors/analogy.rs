//! Estimation by analogy: k nearest neighbours on min-max normalized features
//! with inverse-distance weighting, plus wrapper searches for feature and case
//! subsets that minimise leave-one-out absolute residuals on the training set.

use crate::error::{Error, Result};

use super::{Dataset, FeatureSearch, PredictorSpec, Weighting};

/// Added to every distance so an exact match dominates without dividing by zero.
pub const DISTANCE_EPSILON: f64 = 1e-9;

/// Relative tolerance under which two objective values count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

fn strictly_better(candidate: f64, incumbent: f64) -> bool {
    if incumbent.is_infinite() {
        return candidate < incumbent;
    }
    candidate < incumbent - TIE_TOLERANCE * incumbent.abs().max(1e-12)
}

/// Per-feature min-max scaling fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    mins: Vec<f64>,
    ranges: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let f = rows.first().map_or(0, |r| r.len());
        let mut mins = vec![f64::INFINITY; f];
        let mut maxs = vec![f64::NEG_INFINITY; f];
        for row in rows {
            for (j, &x) in row.iter().enumerate() {
                mins[j] = mins[j].min(x);
                maxs[j] = maxs[j].max(x);
            }
        }
        let ranges = mins.iter().zip(&maxs).map(|(lo, hi)| hi - lo).collect();
        Self { mins, ranges }
    }

    /// Scaled value of feature `j`; constant features map to 0.
    pub fn scale(&self, j: usize, x: f64) -> f64 {
        if self.ranges[j] > 0.0 {
            (x - self.mins[j]) / self.ranges[j]
        } else {
            0.0
        }
    }

    pub fn transform(&self, row: &[f64], features: &[usize]) -> Vec<f64> {
        features.iter().map(|&j| self.scale(j, row[j])).collect()
    }
}

/// Weighted mean of neighbour outcomes from `(distance, outcome)` pairs.
pub fn inverse_distance_estimate(neighbours: &[(f64, f64)], weighting: Weighting) -> f64 {
    let (num, den) = neighbours.iter().fold((0.0, 0.0), |(num, den), &(d, y)| {
        let w = match weighting {
            Weighting::InverseDistance => 1.0 / (d + DISTANCE_EPSILON),
            Weighting::Uniform => 1.0,
        };
        (num + w * y, den + w)
    });
    num / den
}

/// Keeps the `k` smallest `(distance, index)` entries, ordered.
struct NearestK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl NearestK {
    fn new(k: usize) -> Self {
        Self { k, items: Vec::with_capacity(k + 1) }
    }

    fn offer(&mut self, d: f64, idx: usize) {
        if self.items.len() == self.k {
            let (wd, wi) = self.items[self.k - 1];
            if (d, idx) >= (wd, wi) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&(od, oi)| (od, oi) < (d, idx));
        self.items.insert(pos, (d, idx));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogyModel {
    features: Vec<usize>,
    normalizer: Normalizer,
    donors: Vec<Vec<f64>>,
    outcomes: Vec<f64>,
    donor_ids: Vec<String>,
    k: usize,
    weighting: Weighting,
}

impl AnalogyModel {
    /// Fits on `train`, restricted to `features` and (optionally) the donor
    /// cases at `cases`. Normalization always uses the whole training set.
    pub fn fit(train: &Dataset, features: &[usize], cases: Option<&[usize]>, spec: &PredictorSpec) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InsufficientData("analogy needs at least one feature".into()));
        }
        if let Some(&bad) = features.iter().find(|&&j| j >= train.n_features()) {
            return Err(Error::InvalidInput(format!("feature index {bad} out of range")));
        }
        let normalizer = Normalizer::fit(&train.feature_rows());
        let all: Vec<usize>;
        let donors_idx = match cases {
            Some(c) => c,
            None => {
                all = (0..train.len()).collect();
                &all
            }
        };
        if spec.k > donors_idx.len() {
            return Err(Error::InsufficientData(format!(
                "k = {} exceeds the {} available donor cases",
                spec.k,
                donors_idx.len()
            )));
        }
        Ok(Self {
            features: features.to_vec(),
            donors: donors_idx.iter().map(|&i| normalizer.transform(&train.cases[i].features, features)).collect(),
            outcomes: donors_idx.iter().map(|&i| train.cases[i].outcome).collect(),
            donor_ids: donors_idx.iter().map(|&i| train.cases[i].id.clone()).collect(),
            normalizer,
            k: spec.k,
            weighting: spec.weighting,
        })
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn donor_ids(&self) -> &[String] {
        &self.donor_ids
    }

    pub fn predict(&self, target: &[f64]) -> f64 {
        let x = self.normalizer.transform(target, &self.features);
        let mut near = NearestK::new(self.k);
        for (i, donor) in self.donors.iter().enumerate() {
            let d2: f64 = donor.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum();
            near.offer(d2, i);
        }
        let neighbours: Vec<(f64, f64)> = near.items.iter().map(|&(d2, i)| (d2.sqrt(), self.outcomes[i])).collect();
        inverse_distance_estimate(&neighbours, self.weighting)
    }
}

/// Training-set view used by the selection searches: normalized features and
/// per-feature squared differences between every pair of cases.
struct SearchSpace {
    n: usize,
    outcomes: Vec<f64>,
    /// `sq[f][i * n + j]` = squared normalized difference on feature f.
    sq: Vec<Vec<f64>>,
}

impl SearchSpace {
    fn new(train: &Dataset) -> Self {
        let n = train.len();
        let f = train.n_features();
        let normalizer = Normalizer::fit(&train.feature_rows());
        let all: Vec<usize> = (0..f).collect();
        let norm: Vec<Vec<f64>> = train.cases.iter().map(|c| normalizer.transform(&c.features, &all)).collect();
        let sq = (0..f)
            .map(|j| {
                let mut m = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        m[a * n + b] = (norm[a][j] - norm[b][j]).powi(2);
                    }
                }
                m
            })
            .collect();
        Self { n, outcomes: train.outcomes(), sq }
    }

    fn distances(&self, features: &[usize]) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for &j in features {
            for (acc, v) in d.iter_mut().zip(&self.sq[j]) {
                *acc += v;
            }
        }
        d
    }

    /// LOOCV absolute residuals among `active` cases given squared distances.
    fn loocv(&self, d2: &[f64], k: usize, weighting: Weighting) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut near = NearestK::new(k);
                for j in (0..n).filter(|&j| j != i) {
                    near.offer(d2[i * n + j].max(0.0), j);
                }
                let neighbours: Vec<(f64, f64)> =
                    near.items.iter().map(|&(v, j)| (v.sqrt(), self.outcomes[j])).collect();
                (self.outcomes[i] - inverse_distance_estimate(&neighbours, weighting)).abs()
            })
            .collect()
    }

    fn sar(&self, d2: &[f64], k: usize, weighting: Weighting) -> f64 {
        self.loocv(d2, k, weighting).iter().sum()
    }
}

fn check_loocv_size(train: &Dataset, k: usize) -> Result<()> {
    if train.len() < k + 1 {
        return Err(Error::InsufficientData(format!(
            "leave-one-out with k = {k} needs at least {} cases, got {}",
            k + 1,
            train.len()
        )));
    }
    Ok(())
}

/// Leave-one-out absolute residuals of analogy restricted to `features`, with
/// normalization fitted once on the whole of `train`.
pub fn loocv_abs_residuals(train: &Dataset, features: &[usize], spec: &PredictorSpec) -> Result<Vec<f64>> {
    check_loocv_size(train, spec.k)?;
    let space = SearchSpace::new(train);
    Ok(space.loocv(&space.distances(features), spec.k, spec.weighting))
}

fn mask_features(mask: u64) -> Vec<usize> {
    (0..64).filter(|b| mask >> b & 1 == 1).collect()
}

/// Feature subset minimising the leave-one-out sum of absolute residuals.
/// Ties go to the lexicographically smallest subset.
pub fn select_features_fss(train: &Dataset, spec: &PredictorSpec) -> Result<Vec<usize>> {
    let f = train.n_features();
    if f == 0 {
        return Err(Error::InsufficientData("feature selection needs at least one feature".into()));
    }
    check_loocv_size(train, spec.k)?;
    if f == 1 {
        return Ok(vec![0]);
    }
    let space = SearchSpace::new(train);
    let exhaustive = match spec.feature_search {
        FeatureSearch::Exhaustive => true,
        FeatureSearch::Greedy => false,
        FeatureSearch::Auto => f <= spec.max_exhaustive_features,
    };
    if exhaustive && f >= 63 {
        return Err(Error::OutOfRange(format!("exhaustive search over {f} features")));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut consider = |sar: f64, subset: Vec<usize>| {
        let replace = match &best {
            None => true,
            Some((b, bs)) => strictly_better(sar, *b) || (!strictly_better(*b, sar) && subset < *bs),
        };
        if replace {
            best = Some((sar, subset));
        }
    };

    if exhaustive {
        // Gray-code walk: each step toggles one feature in the running distances.
        let n = space.n;
        let mut d2 = vec![0.0; n * n];
        let mut mask = 0u64;
        for g in 1u64..(1u64 << f) {
            let bit = g.trailing_zeros() as usize;
            mask ^= 1 << bit;
            let add = mask >> bit & 1 == 1;
            for (acc, v) in d2.iter_mut().zip(&space.sq[bit]) {
                if add {
                    *acc += v;
                } else {
                    *acc -= v;
                }
            }
            consider(space.sar(&d2, spec.k, spec.weighting), mask_features(mask));
        }
    } else {
        let mut chosen: Vec<usize> = Vec::new();
        let mut current = f64::INFINITY;
        loop {
            let mut step: Option<(f64, usize)> = None;
            for j in (0..f).filter(|j| !chosen.contains(j)) {
                let mut trial = chosen.clone();
                trial.push(j);
                let sar = space.sar(&space.distances(&trial), spec.k, spec.weighting);
                if step.is_none_or(|(b, _)| strictly_better(sar, b)) {
                    step = Some((sar, j));
                }
            }
            match step {
                Some((sar, j)) if strictly_better(sar, current) => {
                    chosen.push(j);
                    current = sar;
                }
                _ => break,
            }
        }
        chosen.sort_unstable();
        consider(current, chosen);
        // greedy search may miss the full set; never do worse than it
        let all: Vec<usize> = (0..f).collect();
        consider(space.sar(&space.distances(&all), spec.k, spec.weighting), all);
    }
    Ok(best.expect("at least one subset evaluated").1)
}

/// Greedy backward elimination of donor cases. Every training case is still
/// predicted leave-one-out, but only retained cases serve as donors. Each step
/// removes the donor whose removal gives the lowest sum of absolute residuals;
/// stops when nothing improves or fewer than k + 2 donors would remain. Returns
/// retained case indices in dataset order.
pub fn select_cases_css(train: &Dataset, features: &[usize], spec: &PredictorSpec) -> Result<Vec<usize>> {
    let n = train.len();
    let k = spec.k;
    if n < k + 2 {
        return Err(Error::InsufficientData(format!(
            "case selection with k = {k} needs at least {} cases, got {n}",
            k + 2
        )));
    }
    let space = SearchSpace::new(train);
    let d2 = space.distances(features);
    // neighbour lists by increasing distance, ties by index
    let order: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut js: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            js.sort_by(|&a, &b| d2[i * n + a].total_cmp(&d2[i * n + b]).then(a.cmp(&b)));
            js
        })
        .collect();

    let mut active = vec![true; n];
    let mut count = n;

    let residual_sum = |active: &[bool], skip: Option<usize>| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let neighbours: Vec<(f64, f64)> = order[i]
                .iter()
                .filter(|&&j| active[j] && Some(j) != skip)
                .take(k)
                .map(|&j| (d2[i * n + j].max(0.0).sqrt(), space.outcomes[j]))
                .collect();
            total += (space.outcomes[i] - inverse_distance_estimate(&neighbours, spec.weighting)).abs();
        }
        total
    };

    let mut current = residual_sum(&active, None);
    while count > k + 2 {
        let mut best: Option<(f64, usize)> = None;
        for c in (0..n).filter(|&c| active[c]) {
            let score = residual_sum(&active, Some(c));
            if best.is_none_or(|(b, _)| strictly_better(score, b)) {
                best = Some((score, c));
            }
        }
        match best {
            Some((score, c)) if strictly_better(score, current) => {
                active[c] = false;
                count -= 1;
                current = score;
            }
            _ => break,
        }
    }
    Ok((0..n).filter(|&i| active[i]).collect())
}

/// Leave-one-out sum of absolute residuals over every case of `train`, with
/// donors restricted to `cases` (never the target itself); normalization is
/// fitted on the whole of `train`. This is the objective minimised by
/// [`select_cases_css`].
pub fn case_subset_objective(
    train: &Dataset,
    features: &[usize],
    cases: &[usize],
    spec: &PredictorSpec,
) -> Result<f64> {
    if cases.len() < spec.k + 1 {
        return Err(Error::InsufficientData(format!("{} donor cases for k = {}", cases.len(), spec.k)));
    }
    let space = SearchSpace::new(train);
    let d2 = space.distances(features);
    let n = space.n;
    Ok((0..n)
        .map(|i| {
            let mut near = NearestK::new(spec.k);
            for &j in cases.iter().filter(|&&j| j != i) {
                near.offer(d2[i * n + j].max(0.0), j);
            }
            let neighbours: Vec<(f64, f64)> = near.items.iter().map(|&(v, j)| (v.sqrt(), space.outcomes[j])).collect();
            (space.outcomes[i] - inverse_distance_estimate(&neighbours, spec.weighting)).abs()
        })
        .sum())
}
