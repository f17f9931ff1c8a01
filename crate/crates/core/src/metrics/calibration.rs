use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Cohort definition for balance correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// One cohort per distinct predicted frequency.
    ByUniquePrediction,
    /// Cohorts of roughly equal exposure along the prediction ranking.
    Quantiles(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub bin: usize,
    pub records: usize,
    pub exposure: f64,
    pub response: u64,
    pub observed_frequency: f64,
    pub predicted_frequency: f64,
}

fn predictions(d: &Dataset) -> Result<Vec<f64>> {
    d.records()
        .iter()
        .enumerate()
        .map(|(i, r)| r.prediction.ok_or(Error::MissingPrediction { row: i + 1 }))
        .collect()
}

/// Cohort index of every record. Records with equal predictions always
/// share a cohort; cohort indices increase with the prediction.
fn cohorts(d: &Dataset, preds: &[f64], binning: Binning) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]).then(a.cmp(&b)));
    let mut group = vec![0usize; preds.len()];
    match binning {
        Binning::ByUniquePrediction => {
            let mut g = 0;
            for w in 0..order.len() {
                if w > 0 && preds[order[w]].to_bits() != preds[order[w - 1]].to_bits() {
                    g += 1;
                }
                group[order[w]] = g;
            }
        }
        Binning::Quantiles(k) => {
            if k == 0 {
                return Err(Error::config("number of bins must be positive"));
            }
            let k = k.min(preds.len());
            let records = d.records();
            let total: f64 = crate::numeric::sum(records.iter().map(|r| r.exposure));
            let mut cum = 0.0;
            for w in 0..order.len() {
                let i = order[w];
                let e = records[i].exposure;
                if w > 0 && preds[i].to_bits() == preds[order[w - 1]].to_bits() {
                    group[i] = group[order[w - 1]];
                } else {
                    let mid = (cum + 0.5 * e) / total;
                    group[i] = ((mid * k as f64).floor() as usize).min(k - 1);
                }
                cum += e;
            }
        }
    }
    Ok(group)
}

struct Cell {
    records: usize,
    exposure: CompensatedSum,
    response: u64,
    weighted_prediction: CompensatedSum,
}

fn cells(d: &Dataset, preds: &[f64], groups: &[usize]) -> Vec<Option<Cell>> {
    let n_groups = groups.iter().max().map_or(0, |m| m + 1);
    let mut cells: Vec<Option<Cell>> = (0..n_groups).map(|_| None).collect();
    for ((r, &g), &p) in d.records().iter().zip(groups).zip(preds) {
        let c = cells[g].get_or_insert_with(|| Cell {
            records: 0,
            exposure: CompensatedSum::new(),
            response: 0,
            weighted_prediction: CompensatedSum::new(),
        });
        c.records += 1;
        c.exposure.add(r.exposure);
        c.response += r.response;
        c.weighted_prediction.add(p * r.exposure);
    }
    cells
}

/// Replaces each prediction by the observed frequency of its cohort,
/// `Σ claims / Σ exposure`. Afterwards predicted and observed claim totals
/// agree globally and within every cohort.
pub fn balance_correct(d: &Dataset, binning: Binning) -> Result<Dataset> {
    let preds = predictions(d)?;
    let groups = cohorts(d, &preds, binning)?;
    let corrected: Vec<f64> = cells(d, &preds, &groups)
        .into_iter()
        .map(|c| c.map_or(f64::NAN, |c| c.response as f64 / c.exposure.value()))
        .collect();
    let new_preds: Vec<f64> = groups.iter().map(|&g| corrected[g]).collect();
    d.with_predictions(&new_preds)
}

/// Observed versus exposure-weighted predicted frequency in exposure-quantile
/// bins of the prediction ranking. `bins` is clamped to the record count;
/// empty bins are omitted.
pub fn calibration_table(d: &Dataset, bins: usize) -> Result<Vec<CalibrationRow>> {
    let preds = predictions(d)?;
    let groups = cohorts(d, &preds, Binning::Quantiles(bins))?;
    Ok(cells(d, &preds, &groups)
        .into_iter()
        .enumerate()
        .filter_map(|(bin, c)| {
            c.map(|c| {
                let exposure = c.exposure.value();
                CalibrationRow {
                    bin,
                    records: c.records,
                    exposure,
                    response: c.response,
                    observed_frequency: c.response as f64 / exposure,
                    predicted_frequency: c.weighted_prediction.value() / exposure,
                }
            })
        })
        .collect())
}

pub fn write_calibration_csv<W: Write>(rows: &[CalibrationRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
