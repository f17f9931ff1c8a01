//! Brute-force reference computations shared by the integration tests.
//!
//! Nothing here calls into the ordering or area code of the crate: CAP curves
//! are built by enumerating permutations and integrated with the plain
//! trapezoid rule.

#![allow(dead_code)]

use ginimon::data::{CovariateSpec, CovariateValue, Dataset, PolicyRecord, Schema};
use ginimon::drift::{generate_portfolio, SyntheticSpec};
use ginimon::metrics::{ScoredObservation, WeightingMode};

/// Calls `f` with every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&p);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            f(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn weight(o: &ScoredObservation, mode: WeightingMode) -> f64 {
    match mode {
        WeightingMode::CountWeighting => 1.0,
        WeightingMode::ExposureWeighting => o.exposure,
    }
}

/// Trapezoid area under the CAP built from `obs` taken in `order`.
pub fn trapezoid_area(obs: &[ScoredObservation], order: &[usize], mode: WeightingMode) -> f64 {
    let total_w: f64 = obs.iter().map(|o| weight(o, mode)).sum();
    let total_y: f64 = obs.iter().map(|o| o.response).sum();
    let (mut x0, mut y0, mut cw, mut cy, mut area) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in order {
        cw += weight(&obs[i], mode);
        cy += obs[i].response;
        let (x1, y1) = (cw / total_w, cy / total_y);
        area += (x1 - x0) * (y0 + y1) / 2.0;
        x0 = x1;
        y0 = y1;
    }
    area
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Extreme {
    Best,
    Worst,
}

/// True when `order` sorts by `key` descending, then by response descending
/// (best) or ascending (worst) within key ties, then by weight ascending
/// (best) or descending (worst).
fn respects(
    obs: &[ScoredObservation],
    order: &[usize],
    key: impl Fn(&ScoredObservation) -> f64,
    ext: Extreme,
    mode: WeightingMode,
) -> bool {
    order.windows(2).all(|w| {
        let (a, b) = (&obs[w[0]], &obs[w[1]]);
        let (ka, kb) = (key(a), key(b));
        if ka != kb {
            return ka > kb;
        }
        let (ya, yb) = match ext {
            Extreme::Best => (a.response, b.response),
            Extreme::Worst => (b.response, a.response),
        };
        if ya != yb {
            return ya > yb;
        }
        let (wa, wb) = match ext {
            Extreme::Best => (weight(a, mode), weight(b, mode)),
            Extreme::Worst => (weight(b, mode), weight(a, mode)),
        };
        wa <= wb
    })
}

/// Area under the CAP over every permutation consistent with the tie rule.
/// Panics if consistent permutations disagree by more than rounding.
fn enumerated_area(
    obs: &[ScoredObservation],
    key: impl Fn(&ScoredObservation) -> f64 + Copy,
    ext: Extreme,
    mode: WeightingMode,
) -> f64 {
    let mut found: Option<(f64, f64)> = None;
    for_each_permutation(obs.len(), |p| {
        if respects(obs, p, key, ext, mode) {
            let a = trapezoid_area(obs, p, mode);
            found = Some(match found {
                None => (a, a),
                Some((lo, hi)) => (lo.min(a), hi.max(a)),
            });
        }
    });
    let (lo, hi) = found.expect("at least one consistent permutation");
    assert!(
        hi - lo < 1e-13,
        "tie-consistent permutations disagree: {lo} vs {hi}"
    );
    lo
}

/// Gini index from enumerated orderings.
pub fn oracle_gini(obs: &[ScoredObservation], ext: Extreme, mode: WeightingMode) -> f64 {
    let model = enumerated_area(obs, |o| o.score, ext, mode);
    let best = enumerated_area(obs, |o| o.response, Extreme::Best, mode);
    (model - 0.5) / (best - 0.5)
}

pub fn oracle_average(obs: &[ScoredObservation], mode: WeightingMode) -> f64 {
    (oracle_gini(obs, Extreme::Best, mode) + oracle_gini(obs, Extreme::Worst, mode)) / 2.0
}

pub fn obs_from(y: &[f64], s: &[f64], e: &[f64]) -> Vec<ScoredObservation> {
    y.iter()
        .zip(s)
        .zip(e)
        .map(|((&y, &s), &e)| ScoredObservation::new(y, e, s))
        .collect()
}

/// Two-group portfolio with true-frequency predictions.
pub fn two_group_portfolio(n: usize, seed: u64, low: f64, high: f64) -> Dataset {
    generate_portfolio(&SyntheticSpec::two_groups(n, seed, low, high)).unwrap()
}

/// Dataset without covariates from `(exposure, response, prediction)` rows.
pub fn plain_dataset(rows: &[(f64, u64, f64)]) -> Dataset {
    Dataset::new(
        Schema::new(vec![]),
        rows.iter()
            .map(|&(e, y, p)| PolicyRecord::new(vec![], e, y).with_prediction(p))
            .collect(),
        "test",
    )
    .unwrap()
}

/// Dataset with one categorical covariate `g`.
pub fn grouped_dataset(rows: &[(&str, f64, u64)]) -> Dataset {
    Dataset::new(
        Schema::new(vec![CovariateSpec::categorical("g")]),
        rows.iter()
            .map(|&(g, e, y)| PolicyRecord::new(vec![CovariateValue::Level(g.into())], e, y))
            .collect(),
        "test",
    )
    .unwrap()
}

pub fn skewness_kurtosis(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}
