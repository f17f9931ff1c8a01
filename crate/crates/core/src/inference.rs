//! Bootstrap null distribution of the holdout Gini index and the drift z-test.
//!
//! Under "no real concept drift" the Gini index of the deployed model on new
//! data is taken to follow the normal distribution fitted by bootstrapping the
//! training-period holdout. The model is never refitted: replicates resample
//! `(response, score, exposure)` tuples of the holdout.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{preaggregate, AggregationKey, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{
    gini, score_dataset, validate_observations, GiniResult, PreparedGini, RankingKey,
    ScoredObservation, TiePolicy, WeightingMode,
};
use crate::numeric::{derive_seed, mean_sd, normal_cdf, normal_sf};

/// Version of the JSON layout of [`MonitoringReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Resamples drawn for one replicate before giving up on all-equal responses.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub tie_policy: TiePolicy,
    pub weighting: WeightingMode,
    /// Keep every replicate Gini in the result.
    pub retain_replicates: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            seed: 0,
            tie_policy: TiePolicy::AverageOfExtremes,
            weighting: WeightingMode::CountWeighting,
            retain_replicates: false,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::config(format!(
                "at least 2 bootstrap replicates needed, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// Bootstrap estimate of the holdout Gini distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub mean: f64,
    /// Sample standard deviation of the replicates (divisor `B - 1`).
    pub sd: f64,
    pub replicates: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate_values: Option<Vec<f64>>,
}

/// Seed of the resampling stream for replicate `replicate`, attempt `attempt`.
///
/// Streams are ChaCha8 generators seeded with
/// `derive_seed(derive_seed(seed, replicate), attempt)`; each draws `n`
/// indices with `gen_range(0..n)`.
pub fn resample_stream_seed(seed: u64, replicate: usize, attempt: usize) -> u64 {
    derive_seed(derive_seed(seed, replicate as u64), attempt as u64)
}

fn draw_indices(rng: &mut ChaCha8Rng, n: usize) -> impl Iterator<Item = usize> + '_ {
    (0..n).map(move |_| rng.random_range(0..n))
}

/// Estimates mean and standard deviation of the Gini index by resampling
/// `obs` with replacement `cfg.replicates` times.
///
/// Every replicate owns an RNG stream derived from `(cfg.seed, replicate)`,
/// so the result is bit-identical for any number of worker threads.
/// A replicate whose resample has all-equal responses is redrawn from the
/// next attempt stream, at most [`MAX_RESAMPLE_ATTEMPTS`] times.
pub fn bootstrap_null(
    obs: &[ScoredObservation],
    cfg: &BootstrapConfig,
) -> Result<NullDistribution> {
    cfg.validate()?;
    validate_observations(obs)?;
    // Surfaces EmptyInput / ZeroTotalResponse / DegenerateDenominator on the base sample.
    gini(obs, tie_for_check(cfg.tie_policy), cfg.weighting)?;

    let n = obs.len();
    let values: Vec<f64> = match cfg.tie_policy {
        TiePolicy::RandomWithinTies { seed: tie_seed } => (0..cfg.replicates)
            .into_par_iter()
            .map(|b| {
                let mut sample = Vec::with_capacity(n);
                for attempt in 0..MAX_RESAMPLE_ATTEMPTS {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(resample_stream_seed(cfg.seed, b, attempt));
                    sample.clear();
                    sample.extend(draw_indices(&mut rng, n).map(|i| obs[i]));
                    let policy = TiePolicy::RandomWithinTies {
                        seed: derive_seed(tie_seed, b as u64),
                    };
                    match gini(&sample, policy, cfg.weighting) {
                        Ok(g) => return Ok(g.value),
                        Err(Error::DegenerateDenominator | Error::ZeroTotalResponse) => continue,
                        Err(e) => return Err(e),
                    }
                }
                Err(Error::DegenerateResamples {
                    replicate: b,
                    attempts: MAX_RESAMPLE_ATTEMPTS,
                })
            })
            .collect::<Result<_>>()?,
        policy => {
            let prepared = PreparedGini::new(obs, policy, cfg.weighting)?;
            (0..cfg.replicates)
                .into_par_iter()
                .map_init(
                    || vec![0u32; n],
                    |counts, b| {
                        for attempt in 0..MAX_RESAMPLE_ATTEMPTS {
                            let mut rng = ChaCha8Rng::seed_from_u64(resample_stream_seed(
                                cfg.seed, b, attempt,
                            ));
                            counts.iter_mut().for_each(|c| *c = 0);
                            for i in draw_indices(&mut rng, n) {
                                counts[i] += 1;
                            }
                            match prepared.areas(Some(counts)) {
                                Ok((num, den)) => return Ok(num / den),
                                Err(Error::DegenerateDenominator) => continue,
                                Err(e) => return Err(e),
                            }
                        }
                        Err(Error::DegenerateResamples {
                            replicate: b,
                            attempts: MAX_RESAMPLE_ATTEMPTS,
                        })
                    },
                )
                .collect::<Result<_>>()?
        }
    };

    let (mean, sd) = mean_sd(&values);
    Ok(NullDistribution {
        mean,
        sd,
        replicates: cfg.replicates,
        n,
        replicate_values: cfg.retain_replicates.then_some(values),
    })
}

fn tie_for_check(p: TiePolicy) -> TiePolicy {
    match p {
        TiePolicy::RandomWithinTies { .. } => TiePolicy::BestWithinTies,
        other => other,
    }
}

/// One-column CSV (`gini`) of replicate values.
pub fn write_replicates_csv<W: Write>(values: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["gini"])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// Detects deterioration and improvement.
    TwoSided,
    /// Detects deterioration (lower Gini) only.
    OneSidedDeterioration,
}

impl fmt::Display for Sidedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sidedness::TwoSided => "two-sided",
            Sidedness::OneSidedDeterioration => "one-sided",
        })
    }
}

impl FromStr for Sidedness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" => Ok(Sidedness::TwoSided),
            "one-sided" => Ok(Sidedness::OneSidedDeterioration),
            _ => Err(Error::config(format!(
                "unknown sidedness `{s}` (two-sided|one-sided)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftTestResult {
    pub gini_new: f64,
    pub z: f64,
    /// `2 (1 - Φ(|z|))`.
    pub p_two_sided: f64,
    /// `Φ(z)`: small when the new Gini is low.
    pub p_one_sided_deterioration: f64,
    pub alpha: f64,
    pub sided: Sidedness,
    pub reject: bool,
}

/// z-test of a new Gini value against the bootstrap null distribution.
///
/// `z = (gini_new - mean) / sd` uses the bootstrap mean, not the point Gini of
/// the holdout. The null is rejected when the p-value of the chosen sidedness
/// is strictly below `alpha`.
pub fn drift_test(
    gini_new: f64,
    null: &NullDistribution,
    alpha: f64,
    sided: Sidedness,
) -> Result<DriftTestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(null.sd > 0.0) {
        return Err(Error::ZeroSd);
    }
    let z = (gini_new - null.mean) / null.sd;
    let p_two_sided = (2.0 * normal_sf(z.abs())).min(1.0);
    let p_one_sided_deterioration = normal_cdf(z);
    let p = match sided {
        Sidedness::TwoSided => p_two_sided,
        Sidedness::OneSidedDeterioration => p_one_sided_deterioration,
    };
    Ok(DriftTestResult {
        gini_new,
        z,
        p_two_sided,
        p_one_sided_deterioration,
        alpha,
        sided,
        reject: p < alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub bootstrap: BootstrapConfig,
    pub alpha: f64,
    pub sided: Sidedness,
    /// Proceed (with a warning) when the new data has fewer observations than the holdout.
    pub allow_smaller: bool,
    /// Aggregate both datasets over all covariates before scoring.
    pub preaggregate: bool,
    pub ranking: RankingKey,
}

impl MonitorConfig {
    pub fn new(bootstrap: BootstrapConfig, alpha: f64) -> Self {
        Self {
            bootstrap,
            alpha,
            sided: Sidedness::TwoSided,
            allow_smaller: false,
            preaggregate: true,
            ranking: RankingKey::PredictedCount,
        }
    }
}

/// Versioned record of one monitoring decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringReport {
    pub schema_version: u32,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<String>,
    pub old_provenance: String,
    pub new_provenance: String,
    pub n_old: usize,
    pub n_new: usize,
    pub tie_policy: TiePolicy,
    pub weighting: WeightingMode,
    pub ranking: RankingKey,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
    pub mean: f64,
    pub sd: f64,
    /// Point Gini of the holdout, for reference; the test uses `mean`.
    pub gini_old: f64,
    pub gini_new: f64,
    pub z: f64,
    pub p_two_sided: f64,
    pub p_one_sided: f64,
    pub sided: Sidedness,
    pub alpha: f64,
    pub reject: bool,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate_values: Option<Vec<f64>>,
}

impl MonitoringReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: MonitoringReport = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported report schema version {}",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

fn prepare(
    d: &Dataset,
    cfg: &MonitorConfig,
    stage: &'static str,
) -> Result<Vec<ScoredObservation>> {
    let d = if cfg.preaggregate {
        let key = AggregationKey::all(d.schema()).map_err(|e| e.at(stage))?;
        preaggregate(d, &key).map_err(|e| e.at(stage))?
    } else {
        d.clone()
    };
    score_dataset(&d, cfg.ranking).map_err(|e| e.at(stage))
}

/// Full monitoring pipeline: pre-aggregate, score, bootstrap the holdout,
/// compute the Gini on the new data with the same policies, z-test.
pub fn monitor(
    old_holdout: &Dataset,
    new_data: &Dataset,
    cfg: &MonitorConfig,
) -> Result<MonitoringReport> {
    let old_obs = prepare(old_holdout, cfg, "holdout")?;
    let new_obs = prepare(new_data, cfg, "new data")?;

    let mut warnings = Vec::new();
    if new_obs.len() < old_obs.len() {
        if !cfg.allow_smaller {
            return Err(Error::NewDataTooSmall {
                n_old: old_obs.len(),
                n_new: new_obs.len(),
            }
            .at("size check"));
        }
        warnings.push(format!(
            "new data has {} observations, fewer than the {} used for the bootstrap; the null distribution may be too narrow",
            new_obs.len(),
            old_obs.len()
        ));
    }

    let bcfg = &cfg.bootstrap;
    let null = bootstrap_null(&old_obs, bcfg).map_err(|e| e.at("bootstrap"))?;
    let gini_old: GiniResult =
        gini(&old_obs, bcfg.tie_policy, bcfg.weighting).map_err(|e| e.at("holdout gini"))?;
    let gini_new = gini(&new_obs, bcfg.tie_policy, bcfg.weighting).map_err(|e| e.at("new gini"))?;
    let test =
        drift_test(gini_new.value, &null, cfg.alpha, cfg.sided).map_err(|e| e.at("drift test"))?;

    Ok(MonitoringReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        period: None,
        old_provenance: old_holdout.provenance().to_string(),
        new_provenance: new_data.provenance().to_string(),
        n_old: old_obs.len(),
        n_new: new_obs.len(),
        tie_policy: bcfg.tie_policy,
        weighting: bcfg.weighting,
        ranking: cfg.ranking,
        replicates: bcfg.replicates,
        seed: bcfg.seed,
        mean: null.mean,
        sd: null.sd,
        gini_old: gini_old.value,
        gini_new: gini_new.value,
        z: test.z,
        p_two_sided: test.p_two_sided,
        p_one_sided: test.p_one_sided_deterioration,
        sided: cfg.sided,
        alpha: cfg.alpha,
        reject: test.reject,
        warnings,
        replicate_values: null.replicate_values,
    })
}

/// Bootstrap seed used for period `index`; the first period keeps the base seed.
pub fn period_seed(seed: u64, index: usize) -> u64 {
    if index == 0 {
        seed
    } else {
        derive_seed(seed, index as u64)
    }
}

/// Tests the new data separately against each period's holdout.
///
/// p-values are raw: no multiple-testing correction is applied, and every
/// report says so when more than one period is tested.
pub fn per_period_monitor(
    old_holdouts: &[(String, Dataset)],
    new_data: &Dataset,
    cfg: &MonitorConfig,
) -> Result<Vec<MonitoringReport>> {
    if old_holdouts.is_empty() {
        return Err(Error::config("no holdout periods given"));
    }
    let k = old_holdouts.len();
    old_holdouts
        .iter()
        .enumerate()
        .map(|(i, (label, holdout))| {
            let mut period_cfg = *cfg;
            period_cfg.bootstrap.seed = period_seed(cfg.bootstrap.seed, i);
            let mut report = monitor(holdout, new_data, &period_cfg)?;
            report.period = Some(label.clone());
            if k > 1 {
                report.warnings.push(format!(
                    "raw p-value: no multiple-testing correction across {k} periods"
                ));
            }
            Ok(report)
        })
        .collect()
}
