use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevianceConfig {
    /// Dispersion parameter; 1 for Poisson.
    pub dispersion: f64,
}

impl Default for DevianceConfig {
    fn default() -> Self {
        Self { dispersion: 1.0 }
    }
}

/// Poisson unit deviance `2 (y ln(y/m) - y + m)`, with `0 ln 0 = 0`.
pub fn unit_deviance(y: f64, m: f64) -> f64 {
    let d = if y == 0.0 {
        2.0 * m
    } else {
        2.0 * (y * (y / m).ln() - y + m)
    };
    // Rounding can push the near-saturated case marginally below zero.
    d.max(0.0)
}

/// Mean Poisson unit deviance on the count scale, divided by the dispersion.
///
/// Each pair is `(claim count, predicted count)`; exposure enters through the
/// predicted count.
pub fn poisson_deviance_loss(obs: &[(f64, f64)], cfg: DevianceConfig) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(cfg.dispersion > 0.0 && cfg.dispersion.is_finite()) {
        return Err(Error::config(format!(
            "dispersion must be positive, got {}",
            cfg.dispersion
        )));
    }
    let mut total = CompensatedSum::new();
    for (i, &(y, m)) in obs.iter().enumerate() {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::NonpositivePrediction { row: i + 1 });
        }
        total.add(unit_deviance(y, m));
    }
    Ok(total.value() / (obs.len() as f64 * cfg.dispersion))
}

/// Deviance loss of a dataset's predictions.
pub fn dataset_deviance_loss(d: &Dataset, cfg: DevianceConfig) -> Result<f64> {
    poisson_deviance_loss(&super::count_pairs(d)?, cfg)
}
