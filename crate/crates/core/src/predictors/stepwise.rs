//! Forward stepwise ordinary least squares.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::summary;

use super::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
}

/// Least squares of `y` on the given columns plus an intercept, solved through
/// the normal equations on centred and scaled columns.
pub fn ols(columns: &[&[f64]], y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    let p = columns.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("design columns differ in length".into()));
    }
    if n < p + 1 {
        return Err(Error::InsufficientData(format!("{n} cases for {p} predictors plus intercept")));
    }
    let y_mean = summary::mean(y);
    let means: Vec<f64> = columns.iter().map(|c| summary::mean(c)).collect();
    let scales: Vec<f64> =
        columns.iter().zip(&means).map(|(c, m)| c.iter().map(|x| (x - m).powi(2)).sum::<f64>().sqrt()).collect();
    if let Some(j) = scales.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateFeature(format!("design column {j} has zero variance")));
    }
    let z: Vec<Vec<f64>> = columns
        .iter()
        .zip(means.iter().zip(&scales))
        .map(|(c, (m, s))| c.iter().map(|x| (x - m) / s).collect())
        .collect();

    // Z'Z has unit diagonal; Z'y on centred y
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for i in 0..p {
        for j in i..p {
            let v: f64 = z[i].iter().zip(&z[j]).map(|(u, w)| u * w).sum();
            a[i][j] = v;
            a[j][i] = v;
        }
        b[i] = z[i].iter().zip(y).map(|(u, yy)| u * (yy - y_mean)).sum();
    }
    let beta_z = cholesky_solve(a, b)?;

    let coefficients: Vec<f64> = beta_z.iter().zip(&scales).map(|(bz, s)| bz / s).collect();
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    let rss = (0..n)
        .map(|i| {
            let fitted = intercept + (0..p).map(|j| coefficients[j] * columns[j][i]).sum::<f64>();
            (y[i] - fitted).powi(2)
        })
        .sum();
    Ok(OlsFit { intercept, coefficients, rss })
}

#[allow(clippy::needless_range_loop)]
fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let p = b.len();
    for j in 0..p {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        // columns are standardized, so the diagonal starts at 1
        if d <= 1e-10 {
            return Err(Error::DegenerateFeature(format!("design column {j} is collinear")));
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..p {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..p {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseModel {
    /// Selected feature indices in order of entry.
    pub selected: Vec<usize>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub floor: f64,
}

impl StepwiseModel {
    /// Linear prediction before clamping.
    pub fn raw(&self, features: &[f64]) -> f64 {
        self.intercept + self.selected.iter().zip(&self.coefficients).map(|(&j, c)| c * features[j]).sum::<f64>()
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        self.raw(features).max(self.floor)
    }
}

/// Forward selection: starting from the intercept-only model, repeatedly add
/// the feature with the smallest partial-F p-value while it is below
/// `alpha_in`. Zero-variance and collinear candidates are skipped.
pub fn fit_stepwise(train: &Dataset, alpha_in: f64, floor: f64) -> Result<StepwiseModel> {
    let n = train.len();
    let f = train.n_features();
    if n < 3 {
        return Err(Error::InsufficientData(format!("stepwise regression needs at least 3 cases, got {n}")));
    }
    if f == 0 {
        return Err(Error::InsufficientData("stepwise regression needs a candidate feature".into()));
    }
    let y = train.outcomes();
    let columns: Vec<Vec<f64>> = (0..f).map(|j| train.cases.iter().map(|c| c.features[j]).collect()).collect();
    let mut candidates: Vec<usize> = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        if col.iter().all(|&x| x == col[0]) {
            log::warn!("stepwise: feature {} has zero variance, skipped", train.feature_names[j]);
        } else {
            candidates.push(j);
        }
    }
    if candidates.is_empty() {
        return Err(Error::DegenerateFeature("every candidate feature has zero variance".into()));
    }

    let y_mean = summary::mean(&y);
    let mut selected: Vec<usize> = Vec::new();
    let mut current =
        OlsFit { intercept: y_mean, coefficients: Vec::new(), rss: y.iter().map(|v| (v - y_mean).powi(2)).sum() };
    let scale = current.rss.max(f64::MIN_POSITIVE);

    loop {
        if current.rss <= 1e-12 * scale || candidates.is_empty() {
            break;
        }
        let df_resid = n as i64 - selected.len() as i64 - 2;
        if df_resid < 1 {
            break;
        }
        let mut best: Option<(f64, usize, OlsFit)> = None;
        let mut collinear = Vec::new();
        for &j in &candidates {
            let mut trial: Vec<&[f64]> = selected.iter().map(|&s| columns[s].as_slice()).collect();
            trial.push(&columns[j]);
            let fit = match ols(&trial, &y) {
                Ok(fit) => fit,
                Err(Error::DegenerateFeature(_)) => {
                    log::warn!("stepwise: feature {} is collinear with the model, skipped", train.feature_names[j]);
                    collinear.push(j);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let p = entry_p_value(current.rss, fit.rss, df_resid as f64, scale);
            if best.as_ref().is_none_or(|(bp, _, _)| p < *bp) {
                best = Some((p, j, fit));
            }
        }
        candidates.retain(|j| !collinear.contains(j));
        match best {
            Some((p, j, fit)) if p < alpha_in => {
                selected.push(j);
                candidates.retain(|&c| c != j);
                current = fit;
            }
            _ => break,
        }
    }

    Ok(StepwiseModel { selected, intercept: current.intercept, coefficients: current.coefficients, floor })
}

fn entry_p_value(rss_old: f64, rss_new: f64, df_resid: f64, scale: f64) -> f64 {
    let gain = (rss_old - rss_new).max(0.0);
    if rss_new <= 1e-12 * scale {
        return if gain > 0.0 { 0.0 } else { 1.0 };
    }
    let f = gain / (rss_new / df_resid);
    let dist = FisherSnedecor::new(1.0, df_resid).expect("positive degrees of freedom");
    dist.sf(f)
}
