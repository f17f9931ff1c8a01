use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::cap::{cap_area, ordering, OrderBy, TieOrder};
use super::{validate_observations, ScoredObservation, TiePolicy, WeightingMode};

/// Empirical Gini index together with the policies that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GiniResult {
    pub value: f64,
    pub tie_policy: TiePolicy,
    pub weighting: WeightingMode,
    pub n: usize,
    /// Area between the model CAP and the diagonal.
    pub numerator_area: f64,
    /// Area between the best CAP and the diagonal.
    pub denominator_area: f64,
}

/// Orderings of one observation set, computed once and reused for any
/// reweighting of it by multiplicities (bootstrap replicates).
pub(crate) struct PreparedGini<'a> {
    obs: &'a [ScoredObservation],
    weighting: WeightingMode,
    numerator_orders: Vec<Vec<usize>>,
    denominator_order: Vec<usize>,
}

impl<'a> PreparedGini<'a> {
    /// `tie` must not be random: a shuffle of a resample is not a shuffle of
    /// the base sample with repeated entries.
    pub(crate) fn new(
        obs: &'a [ScoredObservation],
        tie: TiePolicy,
        weighting: WeightingMode,
    ) -> Result<Self> {
        let ties: Vec<TieOrder> = match tie {
            TiePolicy::AverageOfExtremes => vec![TieOrder::Best, TieOrder::Worst],
            TiePolicy::BestWithinTies => vec![TieOrder::Best],
            TiePolicy::WorstWithinTies => vec![TieOrder::Worst],
            TiePolicy::RandomWithinTies { .. } => {
                return Err(Error::config("random tie ordering cannot be prepared"))
            }
        };
        Ok(Self {
            obs,
            weighting,
            numerator_orders: ties
                .into_iter()
                .map(|t| ordering(obs, OrderBy::Score, t, weighting))
                .collect(),
            denominator_order: ordering(obs, OrderBy::Response, TieOrder::Best, weighting),
        })
    }

    /// `(numerator_area, denominator_area)` for the sample in which observation
    /// `i` appears `multiplicity[i]` times.
    pub(crate) fn areas(&self, multiplicity: Option<&[u32]>) -> Result<(f64, f64)> {
        if !has_distinct_responses(self.obs, multiplicity) {
            return Err(Error::DegenerateDenominator);
        }
        areas_from_orders(
            self.obs,
            &self.numerator_orders,
            &self.denominator_order,
            self.weighting,
            multiplicity,
        )
    }
}

fn areas_from_orders(
    obs: &[ScoredObservation],
    numerator_orders: &[Vec<usize>],
    denominator_order: &[usize],
    weighting: WeightingMode,
    multiplicity: Option<&[u32]>,
) -> Result<(f64, f64)> {
    let den = cap_area(obs, denominator_order, weighting, multiplicity) - 0.5;
    if !(den > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    let num = numerator_orders
        .iter()
        .map(|o| cap_area(obs, o, weighting, multiplicity) - 0.5)
        .sum::<f64>()
        / numerator_orders.len() as f64;
    Ok((num, den))
}

fn has_distinct_responses(obs: &[ScoredObservation], multiplicity: Option<&[u32]>) -> bool {
    let mut present = obs
        .iter()
        .enumerate()
        .filter(|(i, _)| multiplicity.is_none_or(|m| m[*i] > 0))
        .map(|(_, o)| o.response);
    match present.next() {
        Some(first) => present.any(|y| y != first),
        None => false,
    }
}

/// Empirical Gini index: the area between the model CAP and the diagonal
/// divided by the area between the best CAP and the diagonal.
///
/// Curves are integrated exactly as piecewise-linear functions. The best CAP
/// ranks by response, ties broken towards smaller weights. For
/// [`TiePolicy::AverageOfExtremes`] the numerator is the mean of the best-case
/// and worst-case numerators, which is the mean of the two Gini values since
/// they share the denominator.
pub fn gini(
    obs: &[ScoredObservation],
    tie_policy: TiePolicy,
    weighting: WeightingMode,
) -> Result<GiniResult> {
    validate_observations(obs)?;
    if obs.iter().all(|o| o.response == 0.0) {
        return Err(Error::ZeroTotalResponse);
    }
    if !has_distinct_responses(obs, None) {
        return Err(Error::DegenerateDenominator);
    }
    let ties = match tie_policy {
        TiePolicy::AverageOfExtremes => vec![TieOrder::Best, TieOrder::Worst],
        other => vec![TieOrder::from_policy(other)?],
    };
    let numerator_orders: Vec<Vec<usize>> = if ties.len() == 2 && obs.len() > 50_000 {
        let (a, b) = rayon::join(
            || ordering(obs, OrderBy::Score, ties[0], weighting),
            || ordering(obs, OrderBy::Score, ties[1], weighting),
        );
        vec![a, b]
    } else {
        ties.iter()
            .map(|&t| ordering(obs, OrderBy::Score, t, weighting))
            .collect()
    };
    let denominator_order = ordering(obs, OrderBy::Response, TieOrder::Best, weighting);
    let (num, den) =
        areas_from_orders(obs, &numerator_orders, &denominator_order, weighting, None)?;
    Ok(GiniResult {
        value: num / den,
        tie_policy,
        weighting,
        n: obs.len(),
        numerator_area: num,
        denominator_area: den,
    })
}
