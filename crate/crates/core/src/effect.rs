//! Glass's Δ relative to a control, with Cohen's magnitude categories.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary;

/// Samples smaller than this trigger a small-sample bias warning.
pub const SMALL_SAMPLE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectCategory {
    Negligible,
    Small,
    Medium,
    Large,
}

impl fmt::Display for EffectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectCategory::Negligible => "negligible",
            EffectCategory::Small => "small",
            EffectCategory::Medium => "medium",
            EffectCategory::Large => "large",
        })
    }
}

/// Half-open bins at 0.2 / 0.5 / 0.8; a boundary value goes to the larger category.
pub fn categorize(magnitude: f64) -> EffectCategory {
    if magnitude >= 0.8 {
        EffectCategory::Large
    } else if magnitude >= 0.5 {
        EffectCategory::Medium
    } else if magnitude >= 0.2 {
        EffectCategory::Small
    } else {
        EffectCategory::Negligible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    /// Signed Δ: negative when the treatment's MAR is below the control mean.
    pub delta: f64,
    pub magnitude: f64,
    pub improved: bool,
    pub category: EffectCategory,
    pub control_id: String,
    pub treatment_id: String,
    /// Set when either sample was smaller than [`SMALL_SAMPLE`]; Glass's Δ is
    /// biased for small samples.
    pub small_sample: bool,
}

impl EffectSize {
    pub fn labelled(mut self, control_id: impl Into<String>, treatment_id: impl Into<String>) -> Self {
        self.control_id = control_id.into();
        self.treatment_id = treatment_id.into();
        self
    }
}

/// Δ = (treatment MAR − control mean MAR) / control SD.
pub fn glass_delta(treatment_mar: f64, control_mean_mar: f64, control_sd: f64) -> Result<EffectSize> {
    if !(control_sd > 0.0) || !control_sd.is_finite() {
        return Err(Error::DegenerateControl);
    }
    let delta = (treatment_mar - control_mean_mar) / control_sd;
    let magnitude = delta.abs();
    Ok(EffectSize {
        delta,
        magnitude,
        improved: treatment_mar < control_mean_mar,
        category: categorize(magnitude),
        control_id: String::new(),
        treatment_id: String::new(),
        small_sample: false,
    })
}

/// Glass's Δ from two samples of absolute residuals; the control's spread is
/// its sample SD.
pub fn glass_delta_from_residuals(treatment: &[f64], control: &[f64]) -> Result<EffectSize> {
    if treatment.is_empty() || control.is_empty() {
        return Err(Error::EmptySample("effect size needs residuals for both systems".into()));
    }
    let t = summary::mean(treatment);
    let c = summary::mean(control);
    let mut effect = if t == c {
        // equal means give Δ = 0 even when the control has no spread
        EffectSize {
            delta: 0.0,
            magnitude: 0.0,
            improved: false,
            category: EffectCategory::Negligible,
            control_id: String::new(),
            treatment_id: String::new(),
            small_sample: false,
        }
    } else {
        glass_delta(t, c, summary::sample_sd(control))?
    };
    if treatment.len() < SMALL_SAMPLE || control.len() < SMALL_SAMPLE {
        log::warn!("Glass's delta on small samples ({} vs {}) is biased", treatment.len(), control.len());
        effect.small_sample = true;
    }
    Ok(effect)
}
