//! Exposure-weighted policy datasets.
//!
//! A [`Dataset`] is immutable once built: every operation here returns a new
//! dataset and leaves its input untouched.

mod io;

pub use io::{csv_header, load_csv, read_csv, write_csv, write_csv_to, ColumnMapping, LoadOptions};

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};

/// Default day fraction used by [`time_split_extreme`]: one day of a 365-day year.
pub const DEFAULT_DAY_FRACTION: f64 = 1.0 / 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
}

impl CovariateSpec {
    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Categorical,
        }
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Numeric,
        }
    }
}

/// A covariate value: a categorical level or a real number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Level(String),
    Numeric(f64),
}

impl CovariateValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            CovariateValue::Numeric(v) => Some(*v),
            CovariateValue::Level(_) => None,
        }
    }
}

impl fmt::Display for CovariateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovariateValue::Level(s) => f.write_str(s),
            CovariateValue::Numeric(v) => write!(f, "{v}"),
        }
    }
}

/// Column layout shared by every record of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub covariates: Vec<CovariateSpec>,
    pub exposure_col: String,
    pub response_col: String,
    pub prediction_col: String,
}

impl Schema {
    pub fn new(covariates: Vec<CovariateSpec>) -> Self {
        Self {
            covariates,
            exposure_col: "exposure".into(),
            response_col: "response".into(),
            prediction_col: "prediction".into(),
        }
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.iter().map(|c| c.name.as_str())
    }
}

/// One exposure period of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    /// Values aligned with [`Schema::covariates`].
    pub covariates: Vec<CovariateValue>,
    /// Time at risk in years, strictly positive.
    pub exposure: f64,
    /// Claim count.
    pub response: u64,
    /// Expected frequency per unit exposure.
    pub prediction: Option<f64>,
}

impl PolicyRecord {
    pub fn new(covariates: Vec<CovariateValue>, exposure: f64, response: u64) -> Self {
        Self {
            covariates,
            exposure,
            response,
            prediction: None,
        }
    }

    pub fn with_prediction(mut self, prediction: f64) -> Self {
        self.prediction = Some(prediction);
        self
    }

    /// Predicted claim count, frequency times exposure.
    pub fn predicted_count(&self) -> Option<f64> {
        self.prediction.map(|p| p * self.exposure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    records: Vec<PolicyRecord>,
    provenance: String,
}

impl Dataset {
    /// Builds a dataset, checking every record against the schema and the
    /// record invariants. Row numbers in errors are 1-based.
    pub fn new(
        schema: Schema,
        records: Vec<PolicyRecord>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for c in &schema.covariates {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::config(format!("duplicate covariate `{}`", c.name)));
            }
        }
        for (i, r) in records.iter().enumerate() {
            validate_record(&schema, r, i + 1)?;
        }
        Ok(Self {
            schema,
            records,
            provenance: provenance.into(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[PolicyRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<PolicyRecord> {
        self.records
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn total_exposure(&self) -> f64 {
        numeric::sum(self.records.iter().map(|r| r.exposure))
    }

    pub fn total_response(&self) -> u64 {
        self.records.iter().map(|r| r.response).sum()
    }

    /// `Some(true)` if every record has a prediction, `Some(false)` if none
    /// does, `None` when mixed.
    pub fn prediction_presence(&self) -> Option<bool> {
        let with = self
            .records
            .iter()
            .filter(|r| r.prediction.is_some())
            .count();
        match with {
            0 => Some(false),
            n if n == self.records.len() => Some(true),
            _ => None,
        }
    }

    /// Replaces every record's prediction. `predictions` must align with the records.
    pub fn with_predictions(&self, predictions: &[f64]) -> Result<Self> {
        if predictions.len() != self.records.len() {
            return Err(Error::config(format!(
                "{} predictions for {} records",
                predictions.len(),
                self.records.len()
            )));
        }
        let records = self
            .records
            .iter()
            .zip(predictions)
            .map(|(r, &p)| r.clone().with_prediction(p))
            .collect();
        Dataset::new(self.schema.clone(), records, self.provenance.clone())
    }

    /// Value of covariate `name` for every record.
    pub fn column(&self, name: &str) -> Option<Vec<&CovariateValue>> {
        let idx = self.schema.covariate_index(name)?;
        Some(self.records.iter().map(|r| &r.covariates[idx]).collect())
    }
}

fn validate_record(schema: &Schema, r: &PolicyRecord, row: usize) -> Result<()> {
    if r.covariates.len() != schema.covariates.len() {
        return Err(Error::InvalidValue {
            row,
            column: "<covariates>".into(),
            reason: format!(
                "{} covariate values for {} schema columns",
                r.covariates.len(),
                schema.covariates.len()
            ),
        });
    }
    for (spec, value) in schema.covariates.iter().zip(&r.covariates) {
        match (spec.kind, value) {
            (CovariateKind::Categorical, CovariateValue::Level(_)) => {}
            (CovariateKind::Numeric, CovariateValue::Numeric(v)) if v.is_finite() => {}
            _ => {
                return Err(Error::InvalidValue {
                    row,
                    column: spec.name.clone(),
                    reason: format!(
                        "value `{value}` does not match declared {:?} kind",
                        spec.kind
                    ),
                })
            }
        }
    }
    if r.exposure == 0.0 {
        return Err(Error::ZeroExposure { row });
    }
    if !(r.exposure.is_finite() && r.exposure > 0.0) {
        return Err(Error::InvalidValue {
            row,
            column: schema.exposure_col.clone(),
            reason: format!("exposure must be positive and finite, got {}", r.exposure),
        });
    }
    if let Some(p) = r.prediction {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidValue {
                row,
                column: schema.prediction_col.clone(),
                reason: format!("prediction must be finite and nonnegative, got {p}"),
            });
        }
    }
    Ok(())
}

/// Covariate columns that define aggregation cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationKey {
    columns: Vec<String>,
}

impl AggregationKey {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Result<Self> {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        if columns.is_empty() {
            return Err(Error::InvalidKey("no key columns".into()));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidKey(format!("duplicate column `{c}`")));
            }
        }
        Ok(Self { columns })
    }

    /// Every covariate of the schema, in schema order.
    pub fn all(schema: &Schema) -> Result<Self> {
        Self::new(schema.covariate_names().map(String::from))
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }
}

/// Collapses records sharing the same key tuple into one record.
///
/// Exposure and claims are summed, the prediction becomes the exposure-weighted
/// mean prediction of the cell. Output records carry only the key covariates
/// and are ordered lexicographically by their stringified key tuple.
pub fn preaggregate(d: &Dataset, key: &AggregationKey) -> Result<Dataset> {
    let indices = key
        .columns
        .iter()
        .map(|c| {
            d.schema
                .covariate_index(c)
                .ok_or_else(|| Error::InvalidKey(format!("`{c}` is not a covariate")))
        })
        .collect::<Result<Vec<_>>>()?;
    let has_predictions = d
        .prediction_presence()
        .ok_or(Error::MixedPredictionPresence)?;

    let mut cells: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (i, r) in d.records.iter().enumerate() {
        let k = indices
            .iter()
            .map(|&j| r.covariates[j].to_string())
            .collect();
        cells.entry(k).or_default().push(i);
    }

    let records = cells
        .into_values()
        .map(|members| {
            let first = &d.records[members[0]];
            let covariates = indices
                .iter()
                .map(|&j| first.covariates[j].clone())
                .collect();
            if members.len() == 1 {
                return PolicyRecord {
                    covariates,
                    ..first.clone()
                };
            }
            let mut exposure = CompensatedSum::new();
            let mut weighted = CompensatedSum::new();
            let mut response = 0u64;
            for &m in &members {
                let r = &d.records[m];
                exposure.add(r.exposure);
                response += r.response;
                if let Some(p) = r.prediction {
                    weighted.add(p * r.exposure);
                }
            }
            let exposure = exposure.value();
            PolicyRecord {
                covariates,
                exposure,
                response,
                prediction: has_predictions.then(|| weighted.value() / exposure),
            }
        })
        .collect();

    let schema = Schema {
        covariates: indices
            .iter()
            .map(|&j| d.schema.covariates[j].clone())
            .collect(),
        ..d.schema.clone()
    };
    Dataset::new(schema, records, d.provenance.clone())
}

/// Splits every record with `k >= 1` claims into `k` single-claim rows of
/// exposure `day_fraction` plus one claim-free row carrying the remaining
/// exposure. Claim-free records pass through unchanged.
pub fn time_split_extreme(d: &Dataset, day_fraction: f64) -> Result<Dataset> {
    if !(day_fraction.is_finite() && day_fraction > 0.0) {
        return Err(Error::config(format!(
            "day fraction must be positive, got {day_fraction}"
        )));
    }
    let mut records = Vec::with_capacity(d.len() + d.total_response() as usize);
    for (i, r) in d.records.iter().enumerate() {
        if r.response == 0 {
            records.push(r.clone());
            continue;
        }
        let claimed = r.response as f64 * day_fraction;
        let remainder = r.exposure - claimed;
        // Rounding in k * day_fraction may overshoot an exactly matching exposure.
        if remainder < -1e-12 * r.exposure {
            return Err(Error::InsufficientExposure { row: i + 1 });
        }
        for _ in 0..r.response {
            records.push(PolicyRecord {
                exposure: day_fraction,
                response: 1,
                ..r.clone()
            });
        }
        if remainder > 0.0 {
            records.push(PolicyRecord {
                exposure: remainder,
                response: 0,
                ..r.clone()
            });
        }
    }
    Dataset::new(d.schema.clone(), records, d.provenance.clone())
}
