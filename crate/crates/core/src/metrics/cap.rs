use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

use super::{validate_observations, ScoredObservation, TiePolicy, WeightingMode};

/// Ranking key of a CAP curve. `Response` gives the best possible curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderBy {
    Score,
    Response,
}

/// Tie rule for a single ordering pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TieOrder {
    Best,
    Worst,
    Random(u64),
}

impl TieOrder {
    pub(crate) fn from_policy(policy: TiePolicy) -> Result<Self> {
        match policy {
            TiePolicy::BestWithinTies => Ok(TieOrder::Best),
            TiePolicy::WorstWithinTies => Ok(TieOrder::Worst),
            TiePolicy::RandomWithinTies { seed } => Ok(TieOrder::Random(seed)),
            TiePolicy::AverageOfExtremes => Err(Error::config(
                "a single CAP curve needs best, worst or random tie ordering",
            )),
        }
    }
}

#[inline]
fn key(o: &ScoredObservation, by: OrderBy) -> f64 {
    match by {
        OrderBy::Score => o.score,
        OrderBy::Response => o.response,
    }
}

/// Indices of `obs` sorted by descending key.
///
/// Keys tie only when bitwise equal. Within a tie block the best rule puts
/// larger responses first (then smaller weights), the worst rule the reverse,
/// and the random rule shuffles the block with a ChaCha8 stream seeded once
/// per call, consuming blocks in descending key order. Remaining full ties
/// keep input order.
pub(crate) fn ordering(
    obs: &[ScoredObservation],
    by: OrderBy,
    tie: TieOrder,
    mode: WeightingMode,
) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..obs.len()).collect();
    let primary = |a: usize, b: usize| key(&obs[b], by).total_cmp(&key(&obs[a], by));
    match tie {
        TieOrder::Best => idx.sort_by(|&a, &b| {
            primary(a, b)
                .then_with(|| obs[b].response.total_cmp(&obs[a].response))
                .then_with(|| obs[a].weight(mode).total_cmp(&obs[b].weight(mode)))
                .then(a.cmp(&b))
        }),
        TieOrder::Worst => idx.sort_by(|&a, &b| {
            primary(a, b)
                .then_with(|| obs[a].response.total_cmp(&obs[b].response))
                .then_with(|| obs[b].weight(mode).total_cmp(&obs[a].weight(mode)))
                .then(a.cmp(&b))
        }),
        TieOrder::Random(seed) => {
            idx.sort_by(|&a, &b| primary(a, b).then(a.cmp(&b)));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut start = 0;
            while start < idx.len() {
                let bits = key(&obs[idx[start]], by).to_bits();
                let mut end = start + 1;
                while end < idx.len() && key(&obs[idx[end]], by).to_bits() == bits {
                    end += 1;
                }
                if end - start > 1 {
                    idx[start..end].shuffle(&mut rng);
                }
                start = end;
            }
        }
    }
    idx
}

/// Area under the piecewise-linear CAP traced by `order`.
///
/// `multiplicity[i]` repeats observation `i` that many times in place (used by
/// the bootstrap); `None` means every observation once. Observations with
/// multiplicity zero are skipped.
pub(crate) fn cap_area(
    obs: &[ScoredObservation],
    order: &[usize],
    mode: WeightingMode,
    multiplicity: Option<&[u32]>,
) -> f64 {
    let mut cum_response = 0.0;
    let mut total_weight = 0.0;
    let mut area = CompensatedSum::new();
    for &i in order {
        let m = multiplicity.map_or(1, |m| m[i]);
        if m == 0 {
            continue;
        }
        let m = m as f64;
        let w = obs[i].weight(mode);
        let y = obs[i].response;
        // m stacked copies of the segment (w, y) starting at height cum_response.
        area.add(w * m * (cum_response + 0.5 * y * m));
        cum_response += m * y;
        total_weight += m * w;
    }
    area.value() / (total_weight * cum_response)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapPoint {
    pub alpha: f64,
    pub cap: f64,
}

/// Empirical cumulative accuracy profile, linearly interpolated between points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapCurve {
    pub points: Vec<CapPoint>,
    pub weighting: WeightingMode,
}

impl CapCurve {
    fn from_order(obs: &[ScoredObservation], order: &[usize], weighting: WeightingMode) -> Self {
        let mut points = Vec::with_capacity(order.len() + 1);
        points.push(CapPoint {
            alpha: 0.0,
            cap: 0.0,
        });
        let mut w = 0.0;
        let mut y = 0.0;
        let mut raw = Vec::with_capacity(order.len());
        for &i in order {
            w += obs[i].weight(weighting);
            y += obs[i].response;
            raw.push((w, y));
        }
        // Normalising by the final running values pins the last point to (1, 1).
        points.extend(raw.into_iter().map(|(cw, cy)| CapPoint {
            alpha: cw / w,
            cap: cy / y,
        }));
        CapCurve { points, weighting }
    }

    /// Curve value at `alpha` in `[0, 1]`.
    pub fn evaluate(&self, alpha: f64) -> f64 {
        let alpha = alpha.clamp(0.0, 1.0);
        let p = &self.points;
        let j = p.partition_point(|pt| pt.alpha < alpha);
        if j == 0 {
            return p[0].cap;
        }
        if j >= p.len() {
            return p[p.len() - 1].cap;
        }
        let (a, b) = (p[j - 1], p[j]);
        a.cap + (b.cap - a.cap) * (alpha - a.alpha) / (b.alpha - a.alpha)
    }

    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        let mut s = CompensatedSum::new();
        for w in self.points.windows(2) {
            s.add((w[1].alpha - w[0].alpha) * (w[0].cap + w[1].cap) * 0.5);
        }
        s.value()
    }

    /// Starts at (0, 0), ends at (1, 1), alpha strictly increasing, cap nondecreasing.
    pub fn is_valid(&self) -> bool {
        let p = &self.points;
        p.len() >= 2
            && p[0]
                == CapPoint {
                    alpha: 0.0,
                    cap: 0.0,
                }
            && p[p.len() - 1]
                == CapPoint {
                    alpha: 1.0,
                    cap: 1.0,
                }
            && p.windows(2)
                .all(|w| w[1].alpha > w[0].alpha && w[1].cap >= w[0].cap)
    }

    /// Two-column CSV (`alpha,cap`).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["alpha", "cap"])?;
        for p in &self.points {
            w.write_record([p.alpha.to_string(), p.cap.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn empirical_cap(
    obs: &[ScoredObservation],
    order_by: OrderBy,
    tie_policy: TiePolicy,
    weighting: WeightingMode,
) -> Result<CapCurve> {
    validate_observations(obs)?;
    if obs.iter().all(|o| o.response == 0.0) {
        return Err(Error::ZeroTotalResponse);
    }
    let tie = TieOrder::from_policy(tie_policy)?;
    let order = ordering(obs, order_by, tie, weighting);
    Ok(CapCurve::from_order(obs, &order, weighting))
}
