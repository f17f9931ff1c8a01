//! CSV input and output (comma separated, header row, RFC 4180 quoting).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::config::{split_list, KeyValues};
use crate::error::{Error, Result};

use super::{CovariateKind, CovariateSpec, CovariateValue, Dataset, PolicyRecord, Schema};

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMapping {
    pub exposure: String,
    pub response: String,
    /// Prediction column. When `None` and `covariates` is also `None`, a
    /// column named `prediction` is picked up if present.
    pub prediction: Option<String>,
    /// Covariate columns; `None` takes every column without another role.
    pub covariates: Option<Vec<String>>,
    /// Covariates parsed as numbers; everything else is categorical.
    pub numeric: Vec<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            exposure: "exposure".into(),
            response: "response".into(),
            prediction: None,
            covariates: None,
            numeric: Vec::new(),
        }
    }
}

impl ColumnMapping {
    /// Reads `exposure_col`, `response_col`, `prediction_col`,
    /// `covariate_cols` and `numeric_cols` keys; absent keys keep defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        const KNOWN: [&str; 5] = [
            "exposure_col",
            "response_col",
            "prediction_col",
            "covariate_cols",
            "numeric_cols",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::config(format!("unknown column mapping key `{k}`")));
        }
        let mut m = ColumnMapping::default();
        if let Some(v) = kv.get("exposure_col") {
            m.exposure = v.to_string();
        }
        if let Some(v) = kv.get("response_col") {
            m.response = v.to_string();
        }
        m.prediction = kv.get("prediction_col").map(String::from);
        m.covariates = kv.get("covariate_cols").map(split_list);
        if let Some(v) = kv.get("numeric_cols") {
            m.numeric = split_list(v);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop zero-exposure rows with a warning instead of failing.
    pub drop_zero_exposure: bool,
}

/// Header row of a CSV file.
pub fn csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.headers()?.iter().map(String::from).collect())
}

/// Loads a dataset from a CSV file. The provenance label is the file stem.
pub fn load_csv(
    path: impl AsRef<Path>,
    mapping: &ColumnMapping,
    options: LoadOptions,
) -> Result<Dataset> {
    let path = path.as_ref();
    let provenance = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(File::open(path)?, mapping, options, provenance)
}

pub fn read_csv<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
    options: LoadOptions,
    provenance: impl Into<String>,
) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let exposure_idx = find(&mapping.exposure)?;
    let response_idx = find(&mapping.response)?;
    let prediction_name = match (&mapping.prediction, &mapping.covariates) {
        (Some(p), _) => Some(p.clone()),
        (None, None) if header.iter().any(|h| h == "prediction") => Some("prediction".to_string()),
        _ => None,
    };
    let prediction_idx = prediction_name.as_deref().map(find).transpose()?;

    let covariate_names: Vec<String> = match &mapping.covariates {
        Some(c) => c.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != exposure_idx && *i != response_idx && Some(*i) != prediction_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    for n in &mapping.numeric {
        if !covariate_names.contains(n) {
            return Err(Error::config(format!(
                "numeric column `{n}` is not a covariate"
            )));
        }
    }
    let covariate_idx = covariate_names
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let covariates: Vec<CovariateSpec> = covariate_names
        .iter()
        .map(|c| CovariateSpec {
            name: c.clone(),
            kind: if mapping.numeric.contains(c) {
                CovariateKind::Numeric
            } else {
                CovariateKind::Categorical
            },
        })
        .collect();

    let schema = Schema {
        covariates,
        exposure_col: mapping.exposure.clone(),
        response_col: mapping.response.clone(),
        prediction_col: prediction_name.unwrap_or_else(|| "prediction".into()),
    };

    let mut records = Vec::new();
    let mut dropped = 0usize;
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let rowno = i + 1;
        let field = |idx: usize| row.get(idx).unwrap_or("").trim();

        let exposure = parse_f64(field(exposure_idx), rowno, &mapping.exposure)?;
        if exposure == 0.0 {
            if options.drop_zero_exposure {
                log::warn!("row {rowno}: dropping record with zero exposure");
                dropped += 1;
                continue;
            }
            return Err(Error::ZeroExposure { row: rowno });
        }
        let response = parse_count(field(response_idx), rowno, &mapping.response)?;
        let prediction = match prediction_idx {
            Some(idx) if !field(idx).is_empty() => {
                Some(parse_f64(field(idx), rowno, &schema.prediction_col)?)
            }
            _ => None,
        };
        let values = schema
            .covariates
            .iter()
            .zip(&covariate_idx)
            .map(|(spec, &idx)| match spec.kind {
                CovariateKind::Categorical => Ok(CovariateValue::Level(field(idx).to_string())),
                CovariateKind::Numeric => {
                    parse_f64(field(idx), rowno, &spec.name).map(CovariateValue::Numeric)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(PolicyRecord {
            covariates: values,
            exposure,
            response,
            prediction,
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} zero-exposure records");
    }
    Dataset::new(schema, records, provenance)
}

fn parse_f64(s: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        reason: format!("`{s}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            reason: format!("`{s}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_count(s: &str, row: usize, column: &str) -> Result<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v = parse_f64(s, row, column)?;
    if v < 0.0 || v.fract() != 0.0 || v > 9_007_199_254_740_992.0 {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            reason: format!("`{s}` is not a nonnegative integer count"),
        });
    }
    Ok(v as u64)
}

pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv_to(d, File::create(path)?)
}

/// Writes covariates, exposure, response and (if any record has one) the prediction.
///
/// Reals are printed in shortest round-trip form, so reading the file back
/// reproduces every value bit for bit.
pub fn write_csv_to<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let schema = d.schema();
    let with_prediction = d.records().iter().any(|r| r.prediction.is_some());
    let mut header: Vec<&str> = schema.covariate_names().collect();
    header.push(&schema.exposure_col);
    header.push(&schema.response_col);
    if with_prediction {
        header.push(&schema.prediction_col);
    }
    w.write_record(&header)?;
    for r in d.records() {
        let mut row: Vec<String> = r.covariates.iter().map(|c| c.to_string()).collect();
        row.push(r.exposure.to_string());
        row.push(r.response.to_string());
        if with_prediction {
            row.push(r.prediction.map(|p| p.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str =
        "Area,DrivAge,Exposure,ClaimNb\nA,30,1.0,0\nB,45,0.5,1\n\"C,D\",52,0.25,0\n";

    fn fre_mapping() -> ColumnMapping {
        ColumnMapping {
            exposure: "Exposure".into(),
            response: "ClaimNb".into(),
            numeric: vec!["DrivAge".into()],
            ..ColumnMapping::default()
        }
    }

    #[test]
    fn loads_three_rows() {
        let d = read_csv(
            SMALL.as_bytes(),
            &fre_mapping(),
            LoadOptions::default(),
            "t",
        )
        .unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.total_exposure(), 1.75);
        assert_eq!(d.total_response(), 1);
        assert_eq!(
            d.records()[2].covariates[0],
            CovariateValue::Level("C,D".into())
        );
        assert_eq!(d.records()[1].covariates[1], CovariateValue::Numeric(45.0));
        assert_eq!(d.prediction_presence(), Some(false));
    }

    #[test]
    fn zero_exposure_strict_and_lenient() {
        let text = "g,exposure,response\na,1.0,0\nb,0.0,1\n";
        let m = ColumnMapping::default();
        let err = read_csv(text.as_bytes(), &m, LoadOptions::default(), "t").unwrap_err();
        assert!(matches!(err, Error::ZeroExposure { row: 2 }));
        let d = read_csv(
            text.as_bytes(),
            &m,
            LoadOptions {
                drop_zero_exposure: true,
            },
            "t",
        )
        .unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn missing_and_unparseable_columns() {
        let m = ColumnMapping::default();
        let err = read_csv(
            "g,exposure\na,1\n".as_bytes(),
            &m,
            LoadOptions::default(),
            "t",
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "response"));
        let err = read_csv(
            "g,exposure,response\na,x,1\n".as_bytes(),
            &m,
            LoadOptions::default(),
            "t",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, ref column, .. } if column == "exposure"));
        let err = read_csv(
            "g,exposure,response\na,1,1.5\n".as_bytes(),
            &m,
            LoadOptions::default(),
            "t",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, ref column, .. } if column == "response"));
    }

    #[test]
    fn picks_up_default_prediction_column() {
        let text = "g,exposure,response,prediction\na,1,0,0.1\n";
        let d = read_csv(
            text.as_bytes(),
            &ColumnMapping::default(),
            LoadOptions::default(),
            "t",
        )
        .unwrap();
        assert_eq!(d.schema().covariates.len(), 1);
        assert_eq!(d.records()[0].prediction, Some(0.1));
    }

    #[test]
    fn mapping_from_key_values() {
        let kv = KeyValues::parse(
            "exposure_col=Exposure\nresponse_col=ClaimNb\ncovariate_cols=Area,DrivAge\nnumeric_cols=DrivAge\n",
        )
        .unwrap();
        let m = ColumnMapping::from_key_values(&kv).unwrap();
        assert_eq!(
            m.covariates.as_deref(),
            Some(&["Area".to_string(), "DrivAge".to_string()][..])
        );
        assert!(ColumnMapping::from_key_values(&KeyValues::parse("bogus=1").unwrap()).is_err());
    }

    #[test]
    fn write_then_read_is_bit_exact() {
        let text = "g,x,exposure,response,prediction\na,0.1,0.3333333333333333,2,0.07\nb,1e-7,0.9,0,0.123456789012345\n";
        let m = ColumnMapping {
            numeric: vec!["x".into()],
            ..ColumnMapping::default()
        };
        let d = read_csv(text.as_bytes(), &m, LoadOptions::default(), "t").unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &m, LoadOptions::default(), "t").unwrap();
        assert_eq!(d, back);
    }
}
