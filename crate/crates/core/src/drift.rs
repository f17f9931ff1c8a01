//! Synthetic portfolios and controlled real concept drift.
//!
//! Drift is injected by moving claims from one group of policies to another:
//! covariates, exposures and predictions stay as they are, so the model's
//! predicted frequencies do not move while the observed ones do. This
//! changes `F(Y | X)` and leaves `F(X)` alone (real, not virtual, drift).
//!
//! Schedules cover sudden, gradual and incremental drift. Recurrent drift is
//! not modelled.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{split_list, KeyValues};
use crate::data::{CovariateSpec, CovariateValue, Dataset, PolicyRecord, Schema};
use crate::error::{Error, Result};
use crate::numeric::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Covariate value (as written in CSV) is one of these.
    Values(Vec<String>),
    /// Numeric covariate in `[low, high)`.
    Interval { low: f64, high: f64 },
}

/// Selects records by one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPredicate {
    pub covariate: String,
    pub selector: Selector,
}

impl GroupPredicate {
    pub fn values<S: Into<String>>(
        covariate: impl Into<String>,
        values: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            covariate: covariate.into(),
            selector: Selector::Values(values.into_iter().map(Into::into).collect()),
        }
    }

    pub fn interval(covariate: impl Into<String>, low: f64, high: f64) -> Self {
        Self {
            covariate: covariate.into(),
            selector: Selector::Interval { low, high },
        }
    }

    /// Indices of the records of `d` selected by the predicate.
    pub fn select(&self, d: &Dataset) -> Result<Vec<usize>> {
        let col = d
            .schema()
            .covariate_index(&self.covariate)
            .ok_or_else(|| Error::config(format!("unknown covariate `{}`", self.covariate)))?;
        let picked: Vec<usize> = d
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| self.matches(&r.covariates[col]))
            .map(|(i, _)| i)
            .collect();
        if picked.is_empty() {
            return Err(Error::EmptyGroup(self.covariate.clone()));
        }
        Ok(picked)
    }

    fn matches(&self, v: &CovariateValue) -> bool {
        match &self.selector {
            Selector::Values(set) => set.contains(&v.to_string()),
            Selector::Interval { low, high } => {
                let x = match v {
                    CovariateValue::Numeric(x) => Some(*x),
                    CovariateValue::Level(s) => s.parse::<f64>().ok(),
                };
                x.is_some_and(|x| x >= *low && x < *high)
            }
        }
    }

    /// Reads `<prefix>_covariate` plus either `<prefix>_values=a,b,...` or
    /// `<prefix>_interval=low,high`.
    fn from_key_values(kv: &KeyValues, prefix: &str) -> Result<Self> {
        let covariate = kv.require(&format!("{prefix}_covariate"))?.to_string();
        let values = kv.get(&format!("{prefix}_values"));
        let interval = kv.get(&format!("{prefix}_interval"));
        match (values, interval) {
            (Some(v), None) => Ok(GroupPredicate::values(covariate, split_list(v))),
            (None, Some(iv)) => {
                let parts = split_list(iv);
                let nums: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).collect();
                if parts.len() != 2 || nums.len() != 2 || !(nums[0] < nums[1]) {
                    return Err(Error::config(format!(
                        "{prefix}_interval must be `low,high` with low < high"
                    )));
                }
                Ok(GroupPredicate::interval(covariate, nums[0], nums[1]))
            }
            _ => Err(Error::config(format!(
                "exactly one of {prefix}_values and {prefix}_interval is required"
            ))),
        }
    }
}

/// Move `transfer_count` claims from the source group to the target group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftScenario {
    pub source: GroupPredicate,
    pub target: GroupPredicate,
    pub transfer_count: usize,
    pub seed: u64,
}

impl DriftScenario {
    /// Keys: `source_*`, `target_*` (see [`GroupPredicate`]), `transfer_count`, `seed`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        Ok(Self {
            source: GroupPredicate::from_key_values(kv, "source")?,
            target: GroupPredicate::from_key_values(kv, "target")?,
            transfer_count: kv
                .parse_value("transfer_count")?
                .ok_or_else(|| Error::config("missing key `transfer_count`"))?,
            seed: kv.parse_value("seed")?.unwrap_or(0),
        })
    }
}

/// Record indices losing a claim and gaining a claim, pairwise.
struct TransferPlan {
    decrement: Vec<usize>,
    increment: Vec<usize>,
}

fn plan_transfer(
    d: &Dataset,
    source: &GroupPredicate,
    target: &GroupPredicate,
    count: usize,
    seed: u64,
) -> Result<TransferPlan> {
    let src = source.select(d)?;
    let tgt = target.select(d)?;
    let src_set: HashSet<usize> = src.iter().copied().collect();
    let overlap = tgt.iter().filter(|i| src_set.contains(i)).count();
    if overlap > 0 {
        return Err(Error::DisjointnessViolation(overlap));
    }
    let eligible: Vec<usize> = src
        .into_iter()
        .filter(|&i| d.records()[i].response >= 1)
        .collect();
    if eligible.len() < count {
        return Err(Error::InsufficientClaimsInSource {
            available: eligible.len(),
            requested: count,
        });
    }
    if tgt.len() < count {
        return Err(Error::InsufficientTargetRecords {
            available: tgt.len(),
            requested: count,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decrement = sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|j| eligible[j])
        .collect();
    let increment = sample(&mut rng, tgt.len(), count)
        .into_iter()
        .map(|j| tgt[j])
        .collect();
    Ok(TransferPlan {
        decrement,
        increment,
    })
}

fn apply_pairs(d: &Dataset, pairs: impl Iterator<Item = (usize, usize)>) -> Result<Dataset> {
    let mut records = d.records().to_vec();
    for (dec, inc) in pairs {
        records[dec].response -= 1;
        records[inc].response += 1;
    }
    Dataset::new(d.schema().clone(), records, d.provenance().to_string())
}

/// Redistributes claims between two disjoint groups.
///
/// `transfer_count` distinct source records holding at least one claim lose
/// one claim each; `transfer_count` distinct target records, whatever their
/// claim count, gain one each. Both draws are uniform without replacement
/// from a ChaCha8 stream seeded with `s.seed`.
pub fn inject_drift(d: &Dataset, s: &DriftScenario) -> Result<Dataset> {
    let plan = plan_transfer(d, &s.source, &s.target, s.transfer_count, s.seed)?;
    apply_pairs(d, plan.decrement.into_iter().zip(plan.increment))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub label: String,
    /// Relative share of the records.
    pub share: f64,
    /// True claim frequency per year of exposure.
    pub frequency: f64,
}

/// An extra categorical rating factor with multiplicative frequency effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    /// `(level, share, relativity)`.
    pub levels: Vec<(String, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
    /// Name of the covariate carrying the group label.
    pub group_covariate: String,
    pub groups: Vec<GroupSpec>,
    pub factors: Vec<FactorSpec>,
    /// Exposures are uniform on `(low, high]`.
    pub exposure_low: f64,
    pub exposure_high: f64,
}

impl SyntheticSpec {
    /// Portfolio with one group covariate and the default exposure range (0.05, 1].
    pub fn two_groups(n: usize, seed: u64, low: f64, high: f64) -> Self {
        Self {
            n,
            seed,
            group_covariate: "group".into(),
            groups: vec![
                GroupSpec {
                    label: "low".into(),
                    share: 0.5,
                    frequency: low,
                },
                GroupSpec {
                    label: "high".into(),
                    share: 0.5,
                    frequency: high,
                },
            ],
            factors: Vec::new(),
            exposure_low: 0.05,
            exposure_high: 1.0,
        }
    }

    /// Parses the text form:
    ///
    /// ```text
    /// n=20000
    /// seed=1
    /// exposure=0.05,1.0            # optional
    /// group_covariate=group        # optional
    /// group=low,0.5,0.05           # label,share,frequency (repeatable)
    /// factor=region:north,0.5,1.0;south,0.5,1.2   # optional, repeatable
    /// ```
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let n = kv
            .parse_value("n")?
            .ok_or_else(|| Error::config("missing key `n`"))?;
        let seed = kv.parse_value("seed")?.unwrap_or(0);
        let (exposure_low, exposure_high) = match kv.get("exposure") {
            Some(v) => {
                let p = parse_reals(v, 2, "exposure")?;
                (p[0], p[1])
            }
            None => (0.05, 1.0),
        };
        let groups = kv
            .get_all("group")
            .map(|g| {
                let parts = split_list(g);
                if parts.len() != 3 {
                    return Err(Error::config(format!(
                        "group `{g}`: expected label,share,frequency"
                    )));
                }
                let nums = parse_reals(&parts[1..].join(","), 2, "group")?;
                Ok(GroupSpec {
                    label: parts[0].clone(),
                    share: nums[0],
                    frequency: nums[1],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let factors = kv
            .get_all("factor")
            .map(|f| {
                let (name, rest) = f
                    .split_once(':')
                    .ok_or_else(|| Error::config(format!("factor `{f}`: expected name:levels")))?;
                let levels = rest
                    .split(';')
                    .map(|l| {
                        let parts = split_list(l);
                        if parts.len() != 3 {
                            return Err(Error::config(format!(
                                "factor level `{l}`: expected level,share,relativity"
                            )));
                        }
                        let nums = parse_reals(&parts[1..].join(","), 2, "factor")?;
                        Ok((parts[0].clone(), nums[0], nums[1]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(FactorSpec {
                    name: name.trim().to_string(),
                    levels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            n,
            seed,
            group_covariate: kv.get("group_covariate").unwrap_or("group").to_string(),
            groups,
            factors,
            exposure_low,
            exposure_high,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if self.groups.is_empty() {
            return Err(Error::config("at least one group is required"));
        }
        for g in &self.groups {
            if !(g.frequency > 0.0 && g.frequency.is_finite()) {
                return Err(Error::config(format!(
                    "group `{}`: frequency must be positive",
                    g.label
                )));
            }
            if !(g.share > 0.0 && g.share.is_finite()) {
                return Err(Error::config(format!(
                    "group `{}`: share must be positive",
                    g.label
                )));
            }
        }
        for f in &self.factors {
            if f.levels.is_empty() || f.name == self.group_covariate {
                return Err(Error::config(format!("factor `{}` is invalid", f.name)));
            }
            for (level, share, rel) in &f.levels {
                if !(*share > 0.0 && *rel > 0.0 && share.is_finite() && rel.is_finite()) {
                    return Err(Error::config(format!(
                        "factor `{}` level `{level}`: share and relativity must be positive",
                        f.name
                    )));
                }
            }
        }
        if !(self.exposure_low >= 0.0
            && self.exposure_low < self.exposure_high
            && self.exposure_high <= 1.0)
        {
            return Err(Error::config(
                "exposure range must satisfy 0 <= low < high <= 1",
            ));
        }
        Ok(())
    }
}

fn parse_reals(s: &str, count: usize, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = split_list(s)
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config(format!("{what}: cannot parse `{s}`")))?;
    if v.len() != count {
        return Err(Error::config(format!(
            "{what}: expected {count} numbers in `{s}`"
        )));
    }
    Ok(v)
}

/// Largest-remainder allocation of `n` records to the given shares.
fn allocate(n: usize, shares: &[f64]) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..shares.len()).collect();
    rest.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let missing = n - counts.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Draws a portfolio whose predictions are the true frequencies.
///
/// Groups get deterministic record counts by share, in spec order. Factor
/// levels are drawn by share per record; exposures are uniform on
/// `(exposure_low, exposure_high]`; claim counts are Poisson with mean
/// frequency times exposure. All draws come from one ChaCha8 stream.
pub fn generate_portfolio(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let counts = allocate(
        spec.n,
        &spec.groups.iter().map(|g| g.share).collect::<Vec<_>>(),
    );
    let factor_cdfs: Vec<Vec<f64>> = spec
        .factors
        .iter()
        .map(|f| {
            let total: f64 = f.levels.iter().map(|l| l.1).sum();
            let mut acc = 0.0;
            f.levels
                .iter()
                .map(|l| {
                    acc += l.1 / total;
                    acc
                })
                .collect()
        })
        .collect();

    let mut records = Vec::with_capacity(spec.n);
    for (g, &count) in spec.groups.iter().zip(&counts) {
        for _ in 0..count {
            let mut covariates = vec![CovariateValue::Level(g.label.clone())];
            let mut frequency = g.frequency;
            for (f, cdf) in spec.factors.iter().zip(&factor_cdfs) {
                let u: f64 = rng.random();
                let j = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
                covariates.push(CovariateValue::Level(f.levels[j].0.clone()));
                frequency *= f.levels[j].2;
            }
            let u: f64 = rng.random();
            let exposure = spec.exposure_high - u * (spec.exposure_high - spec.exposure_low);
            let lambda = frequency * exposure;
            let poisson = Poisson::new(lambda)
                .map_err(|e| Error::config(format!("poisson mean {lambda}: {e}")))?;
            let claims = poisson.sample(&mut rng) as u64;
            records
                .push(PolicyRecord::new(covariates, exposure, claims).with_prediction(frequency));
        }
    }
    let mut covs = vec![CovariateSpec::categorical(spec.group_covariate.clone())];
    covs.extend(
        spec.factors
            .iter()
            .map(|f| CovariateSpec::categorical(f.name.clone())),
    );
    Dataset::new(
        Schema::new(covs),
        records,
        format!("synthetic-{}", spec.seed),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// Everything in the final period.
    Sudden,
    /// Record-level mixture of the original and fully drifted portfolio,
    /// drifted share ramping linearly to 1.
    Gradual,
    /// Equal per-period transfers applied cumulatively.
    Incremental,
}

impl fmt::Display for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriftKind::Sudden => "sudden",
            DriftKind::Gradual => "gradual",
            DriftKind::Incremental => "incremental",
        })
    }
}

impl FromStr for DriftKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sudden" => Ok(DriftKind::Sudden),
            "gradual" => Ok(DriftKind::Gradual),
            "incremental" => Ok(DriftKind::Incremental),
            _ => Err(Error::config(format!(
                "unknown drift kind `{s}` (sudden|gradual|incremental)"
            ))),
        }
    }
}

fn schedule_seed(seed: u64, period: usize) -> u64 {
    if period == 1 {
        seed
    } else {
        derive_seed(seed, period as u64)
    }
}

/// One dataset per period, labelled `period-1` .. `period-P`.
///
/// Period `k` of `P` carries a cumulative transfer of `total * k / P` claims
/// (rounded down, reaching `total` in the last period) for incremental drift;
/// sudden drift transfers nothing before the last period. Gradual drift fixes
/// one full transfer plan (seeded with `seed`) and applies each of its
/// (decrement, increment) pairs independently with probability `k / P`,
/// so claim totals are conserved in every period.
pub fn drift_schedule(
    d0: &Dataset,
    kind: DriftKind,
    periods: usize,
    total_transfer: usize,
    groups: (&GroupPredicate, &GroupPredicate),
    seed: u64,
) -> Result<Vec<(String, Dataset)>> {
    if periods == 0 {
        return Err(Error::config("at least one period is required"));
    }
    let (source, target) = groups;
    let label = |k: usize| format!("period-{k}");
    let relabel = |d: Dataset, k: usize| {
        let p = format!("{}/{}", d0.provenance(), label(k));
        d.with_provenance(p)
    };
    let scenario = |count: usize, seed: u64| DriftScenario {
        source: source.clone(),
        target: target.clone(),
        transfer_count: count,
        seed,
    };

    let mut out = Vec::with_capacity(periods);
    match kind {
        DriftKind::Sudden => {
            for k in 1..=periods {
                let d = if k == periods {
                    inject_drift(d0, &scenario(total_transfer, seed))?
                } else {
                    d0.clone()
                };
                out.push((label(k), relabel(d, k)));
            }
        }
        DriftKind::Incremental => {
            let mut current = d0.clone();
            let mut done = 0;
            for k in 1..=periods {
                let cumulative = total_transfer * k / periods;
                current = inject_drift(
                    &current,
                    &scenario(cumulative - done, schedule_seed(seed, k)),
                )?;
                done = cumulative;
                out.push((label(k), relabel(current.clone(), k)));
            }
        }
        DriftKind::Gradual => {
            let plan = plan_transfer(d0, source, target, total_transfer, seed)?;
            for k in 1..=periods {
                let p = k as f64 / periods as f64;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, (periods + k) as u64));
                let pairs: Vec<(usize, usize)> = plan
                    .decrement
                    .iter()
                    .copied()
                    .zip(plan.increment.iter().copied())
                    .filter(|_| k == periods || rng.random::<f64>() < p)
                    .collect();
                out.push((label(k), relabel(apply_pairs(d0, pairs.into_iter())?, k)));
            }
        }
    }
    Ok(out)
}
