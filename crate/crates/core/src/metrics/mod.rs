//! Model performance metrics: cumulative accuracy profiles, the Gini index,
//! Poisson deviance loss and balance correction.

mod calibration;
mod cap;
mod deviance;
mod gini;

pub use calibration::{
    balance_correct, calibration_table, write_calibration_csv, Binning, CalibrationRow,
};
pub use cap::{empirical_cap, CapCurve, OrderBy};
pub use deviance::{dataset_deviance_loss, poisson_deviance_loss, unit_deviance, DevianceConfig};
pub use gini::{gini, GiniResult};

pub(crate) use gini::PreparedGini;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// How the x-axis of a CAP curve accumulates observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Every observation counts once.
    CountWeighting,
    /// Observations count with their exposure.
    ExposureWeighting,
}

impl fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightingMode::CountWeighting => "count",
            WeightingMode::ExposureWeighting => "exposure",
        })
    }
}

impl FromStr for WeightingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(WeightingMode::CountWeighting),
            "exposure" => Ok(WeightingMode::ExposureWeighting),
            _ => Err(Error::config(format!(
                "unknown weighting `{s}` (count|exposure)"
            ))),
        }
    }
}

/// Ordering rule among observations whose ranking keys are bitwise equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Seeded uniform shuffle within each tie block (ChaCha8 stream).
    RandomWithinTies { seed: u64 },
    /// Larger responses first.
    BestWithinTies,
    /// Smaller responses first.
    WorstWithinTies,
    /// Mean of the best-case and worst-case Gini.
    AverageOfExtremes,
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TiePolicy::RandomWithinTies { seed } => write!(f, "random:{seed}"),
            TiePolicy::BestWithinTies => f.write_str("best"),
            TiePolicy::WorstWithinTies => f.write_str("worst"),
            TiePolicy::AverageOfExtremes => f.write_str("average-extremes"),
        }
    }
}

impl FromStr for TiePolicy {
    type Err = Error;
    /// Accepts `best`, `worst`, `average-extremes`, `random` (seed 0) or `random:<seed>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(TiePolicy::BestWithinTies),
            "worst" => Ok(TiePolicy::WorstWithinTies),
            "average-extremes" | "average" => Ok(TiePolicy::AverageOfExtremes),
            "random" => Ok(TiePolicy::RandomWithinTies { seed: 0 }),
            _ => match s.strip_prefix("random:") {
                Some(seed) => seed
                    .parse()
                    .map(|seed| TiePolicy::RandomWithinTies { seed })
                    .map_err(|_| Error::config(format!("bad random tie seed `{seed}`"))),
                None => Err(Error::config(format!(
                    "unknown tie policy `{s}` (best|worst|average-extremes|random:<seed>)"
                ))),
            },
        }
    }
}

/// Which quantity ranks observations on the CAP x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingKey {
    /// Predicted claim count, frequency times exposure.
    #[default]
    PredictedCount,
    /// Raw predicted frequency; for sensitivity analysis only.
    Frequency,
}

/// A response paired with its ranking score and exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredObservation {
    pub response: f64,
    pub exposure: f64,
    pub score: f64,
}

impl ScoredObservation {
    pub fn new(response: f64, exposure: f64, score: f64) -> Self {
        Self {
            response,
            exposure,
            score,
        }
    }

    /// Weight of this observation on the CAP x-axis.
    #[inline]
    pub fn weight(&self, mode: WeightingMode) -> f64 {
        match mode {
            WeightingMode::CountWeighting => 1.0,
            WeightingMode::ExposureWeighting => self.exposure,
        }
    }
}

pub(crate) fn validate_observations(obs: &[ScoredObservation]) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (i, o) in obs.iter().enumerate() {
        if !(o.response >= 0.0
            && o.response.is_finite()
            && o.exposure > 0.0
            && o.exposure.is_finite()
            && o.score.is_finite())
        {
            return Err(Error::InvalidValue {
                row: i + 1,
                column: "observation".into(),
                reason: format!("{o:?} violates response >= 0, exposure > 0, finite score"),
            });
        }
    }
    Ok(())
}

/// Turns every record into a scored observation, keeping record order.
pub fn score_dataset(d: &Dataset, ranking: RankingKey) -> Result<Vec<ScoredObservation>> {
    d.records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let p = r
                .prediction
                .ok_or(Error::MissingPrediction { row: i + 1 })?;
            let score = match ranking {
                RankingKey::PredictedCount => p * r.exposure,
                RankingKey::Frequency => p,
            };
            Ok(ScoredObservation::new(r.response as f64, r.exposure, score))
        })
        .collect()
}

/// Pairs of (claim count, predicted count) for deviance computations.
pub fn count_pairs(d: &Dataset) -> Result<Vec<(f64, f64)>> {
    d.records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.predicted_count()
                .map(|m| (r.response as f64, m))
                .ok_or(Error::MissingPrediction { row: i + 1 })
        })
        .collect()
}
