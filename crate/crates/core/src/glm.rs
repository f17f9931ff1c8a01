//! Poisson GLM with log link and `log(exposure)` offset.
//!
//! Covariates are one-hot encoded against a reference level; numeric
//! covariates are first cut into labelled buckets. The fit is unpenalized and
//! uses damped Newton iterations.
//!
//! The likelihood depends on the data only through the total exposure and
//! total claim count of each distinct design row, so fitting works on those
//! sums. Splitting or merging records with identical covariates therefore
//! leaves the coefficients unchanged up to rounding.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::config::{split_list, KeyValues};
use crate::data::{CovariateValue, Dataset, Schema};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

pub const INTERCEPT: &str = "(Intercept)";

/// Largest number of step halvings tried per Newton iteration.
pub const MAX_STEP_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoding {
    /// One column per level except the reference.
    Categorical {
        levels: Vec<String>,
        reference: String,
    },
    /// Buckets `[edges[j], edges[j+1])`, the last one closed on the right.
    Binned {
        edges: Vec<f64>,
        labels: Vec<String>,
        reference: String,
    },
}

impl Encoding {
    fn labels(&self) -> &[String] {
        match self {
            Encoding::Categorical { levels, .. } => levels,
            Encoding::Binned { labels, .. } => labels,
        }
    }

    fn reference(&self) -> &str {
        match self {
            Encoding::Categorical { reference, .. } | Encoding::Binned { reference, .. } => {
                reference
            }
        }
    }

    /// Index into `labels()` of a value, if it is covered.
    fn locate(&self, v: &CovariateValue) -> Option<usize> {
        match self {
            Encoding::Categorical { levels, .. } => {
                let s = v.to_string();
                levels.iter().position(|l| *l == s)
            }
            Encoding::Binned { edges, .. } => {
                let x = match v {
                    CovariateValue::Numeric(x) => *x,
                    CovariateValue::Level(s) => s.parse().ok()?,
                };
                let (lo, hi) = (edges[0], edges[edges.len() - 1]);
                if !(x >= lo && x <= hi) {
                    return None;
                }
                let j = edges[1..].partition_point(|&e| e <= x);
                Some(j.min(edges.len() - 2))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEncoding {
    pub covariate: String,
    #[serde(flatten)]
    pub encoding: Encoding,
}

impl CovariateEncoding {
    /// Non-reference labels, in column order.
    fn columns(&self) -> impl Iterator<Item = &String> {
        let r = self.encoding.reference();
        self.encoding.labels().iter().filter(move |l| *l != r)
    }
}

/// Encoding of every covariate entering the model. The intercept is always
/// the first column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub encodings: Vec<CovariateEncoding>,
}

fn exposure_by_label(
    d: &Dataset,
    covariate: &str,
    locate: impl Fn(&CovariateValue) -> Option<usize>,
    k: usize,
) -> Result<Vec<f64>> {
    let col = d
        .schema()
        .covariate_index(covariate)
        .ok_or_else(|| Error::MissingColumn(covariate.to_string()))?;
    let mut sums = vec![CompensatedSum::new(); k];
    for r in d.records() {
        let v = &r.covariates[col];
        let j = locate(v).ok_or_else(|| Error::UnseenLevel {
            covariate: covariate.to_string(),
            value: v.to_string(),
        })?;
        sums[j].add(r.exposure);
    }
    Ok(sums.iter().map(CompensatedSum::value).collect())
}

fn pick_reference(
    labels: &[String],
    exposure: &[f64],
    declared: Option<&str>,
    covariate: &str,
) -> Result<String> {
    match declared {
        Some(r) if labels.iter().any(|l| l == r) => Ok(r.to_string()),
        Some(r) => Err(Error::config(format!(
            "reference level `{r}` not found for `{covariate}`"
        ))),
        None => {
            // Largest exposure, first label on ties.
            let mut best = 0;
            for j in 1..labels.len() {
                if exposure[j] > exposure[best] {
                    best = j;
                }
            }
            Ok(labels[best].clone())
        }
    }
}

fn format_edge(x: f64) -> String {
    format!("{x}")
}

impl DesignSpec {
    pub fn intercept_only() -> Self {
        Self::default()
    }

    /// Adds `covariate` one-hot encoded over the levels present in `d`
    /// (sorted). Without a declared reference the level with the largest
    /// exposure is used.
    pub fn with_categorical(
        mut self,
        d: &Dataset,
        covariate: &str,
        reference: Option<&str>,
    ) -> Result<Self> {
        self.check_new(covariate)?;
        let col = d
            .schema()
            .covariate_index(covariate)
            .ok_or_else(|| Error::MissingColumn(covariate.to_string()))?;
        let levels: Vec<String> = d
            .records()
            .iter()
            .map(|r| r.covariates[col].to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let enc = Encoding::Categorical {
            levels: levels.clone(),
            reference: String::new(),
        };
        let exposure = exposure_by_label(d, covariate, |v| enc.locate(v), levels.len())?;
        let reference = pick_reference(&levels, &exposure, reference, covariate)?;
        self.encodings.push(CovariateEncoding {
            covariate: covariate.to_string(),
            encoding: Encoding::Categorical { levels, reference },
        });
        Ok(self)
    }

    /// Adds `covariate` cut at `edges` (strictly increasing, at least two).
    /// Labels default to `[a,b)` (`[a,b]` for the last bucket). Every value
    /// in `d` must fall inside the edges.
    pub fn with_binned(
        mut self,
        d: &Dataset,
        covariate: &str,
        edges: Vec<f64>,
        labels: Option<Vec<String>>,
        reference: Option<&str>,
    ) -> Result<Self> {
        self.check_new(covariate)?;
        if edges.len() < 2
            || edges.iter().any(|e| !e.is_finite())
            || edges.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::config(format!(
                "bin edges for `{covariate}` must be at least two finite, strictly increasing values"
            )));
        }
        let k = edges.len() - 1;
        let labels = match labels {
            Some(l) if l.len() == k && l.iter().collect::<BTreeSet<_>>().len() == k => l,
            Some(_) => {
                return Err(Error::config(format!(
                    "`{covariate}` needs {k} distinct bin labels"
                )))
            }
            None => (0..k)
                .map(|j| {
                    let close = if j + 1 == k { ']' } else { ')' };
                    format!(
                        "[{},{}{close}",
                        format_edge(edges[j]),
                        format_edge(edges[j + 1])
                    )
                })
                .collect(),
        };
        let enc = Encoding::Binned {
            edges: edges.clone(),
            labels: labels.clone(),
            reference: String::new(),
        };
        let exposure = exposure_by_label(d, covariate, |v| enc.locate(v), k)?;
        let reference = pick_reference(&labels, &exposure, reference, covariate)?;
        self.encodings.push(CovariateEncoding {
            covariate: covariate.to_string(),
            encoding: Encoding::Binned {
                edges,
                labels,
                reference,
            },
        });
        Ok(self)
    }

    fn check_new(&self, covariate: &str) -> Result<()> {
        if self.encodings.iter().any(|e| e.covariate == covariate) {
            return Err(Error::config(format!(
                "covariate `{covariate}` encoded twice"
            )));
        }
        Ok(())
    }

    /// Builds a spec from the text form, resolving levels on `d`:
    ///
    /// ```text
    /// categorical=Area
    /// binned=DrivAge:18,26,36,46,101
    /// reference=Area:C
    /// ```
    pub fn from_key_values(d: &Dataset, kv: &KeyValues) -> Result<Self> {
        for key in kv.keys() {
            if !matches!(key, "categorical" | "binned" | "reference") {
                return Err(Error::config(format!("unknown design key `{key}`")));
            }
        }
        let mut references = HashMap::new();
        for r in kv.get_all("reference") {
            let (cov, level) = r.split_once(':').ok_or_else(|| {
                Error::config(format!("reference `{r}`: expected covariate:level"))
            })?;
            references.insert(cov.trim().to_string(), level.trim().to_string());
        }
        let mut spec = DesignSpec::intercept_only();
        let mut used = BTreeSet::new();
        for c in kv.get_all("categorical") {
            let c = c.trim();
            used.insert(c.to_string());
            spec = spec.with_categorical(d, c, references.get(c).map(String::as_str))?;
        }
        for b in kv.get_all("binned") {
            let (cov, edges) = b.split_once(':').ok_or_else(|| {
                Error::config(format!("binned `{b}`: expected covariate:edge,edge,..."))
            })?;
            let cov = cov.trim();
            let edges = split_list(edges)
                .iter()
                .map(|e| e.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::config(format!("binned `{b}`: edges must be numbers")))?;
            used.insert(cov.to_string());
            spec =
                spec.with_binned(d, cov, edges, None, references.get(cov).map(String::as_str))?;
        }
        if let Some(cov) = references.keys().find(|c| !used.contains(*c)) {
            return Err(Error::config(format!(
                "reference given for unused covariate `{cov}`"
            )));
        }
        Ok(spec)
    }

    pub fn column_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string())
            .chain(
                self.encodings
                    .iter()
                    .flat_map(|e| e.columns().map(move |l| format!("{}={l}", e.covariate))),
            )
            .collect()
    }

    pub fn n_columns(&self) -> usize {
        1 + self
            .encodings
            .iter()
            .map(|e| e.columns().count())
            .sum::<usize>()
    }

    /// Active columns of every record: the intercept plus at most one column
    /// per covariate (none for the reference level).
    fn encode(&self, d: &Dataset) -> Result<Vec<Vec<u32>>> {
        let plan = self.column_plan(d.schema())?;
        d.records()
            .iter()
            .map(|r| {
                let mut active = vec![0u32];
                for (enc, (col, offsets)) in self.encodings.iter().zip(&plan) {
                    let v = &r.covariates[*col];
                    let j = enc.encoding.locate(v).ok_or_else(|| Error::UnseenLevel {
                        covariate: enc.covariate.clone(),
                        value: v.to_string(),
                    })?;
                    if let Some(c) = offsets[j] {
                        active.push(c as u32);
                    }
                }
                Ok(active)
            })
            .collect()
    }

    /// For each encoding: schema column and the design column of each label.
    fn column_plan(&self, schema: &Schema) -> Result<Vec<(usize, Vec<Option<usize>>)>> {
        let mut next = 1;
        self.encodings
            .iter()
            .map(|e| {
                let col = schema
                    .covariate_index(&e.covariate)
                    .ok_or_else(|| Error::MissingColumn(e.covariate.clone()))?;
                let reference = e.encoding.reference();
                let offsets = e
                    .encoding
                    .labels()
                    .iter()
                    .map(|l| {
                        (l != reference).then(|| {
                            next += 1;
                            next - 1
                        })
                    })
                    .collect();
                Ok((col, offsets))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on the gradient max-norm, relative to
    /// `max(1, total claims)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    /// Max-norm of the log-likelihood gradient at the returned coefficients.
    pub gradient_norm: f64,
    pub converged: bool,
    /// Total Poisson deviance at the start and after every iteration.
    pub deviance_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub spec: DesignSpec,
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub convergence: Convergence,
}

/// Exposure and claim totals of one distinct design row.
struct Cell {
    active: Vec<u32>,
    exposure: f64,
    response: f64,
}

fn cells(rows: Vec<Vec<u32>>, d: &Dataset) -> Vec<Cell> {
    let mut map: BTreeMap<Vec<u32>, (CompensatedSum, u64)> = BTreeMap::new();
    for (active, r) in rows.into_iter().zip(d.records()) {
        let e = map
            .entry(active)
            .or_insert_with(|| (CompensatedSum::new(), 0));
        e.0.add(r.exposure);
        e.1 += r.response;
    }
    map.into_iter()
        .map(|(active, (e, y))| Cell {
            active,
            exposure: e.value(),
            response: y as f64,
        })
        .collect()
}

fn linear_predictor(active: &[u32], beta: &[f64]) -> f64 {
    active.iter().map(|&c| beta[c as usize]).sum()
}

/// `Σ (y η - e exp(η))` over cells, the log-likelihood up to a constant.
fn log_likelihood(cells: &[Cell], beta: &[f64]) -> f64 {
    let mut s = CompensatedSum::new();
    for c in cells {
        let eta = linear_predictor(&c.active, beta);
        s.add(c.response * eta);
        s.add(-c.exposure * eta.exp());
    }
    s.value()
}

fn gradient_hessian(cells: &[Cell], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = beta.len();
    let mut g: Vec<CompensatedSum> = vec![CompensatedSum::new(); p];
    let mut h = vec![0.0; p * p];
    for c in cells {
        let mu = c.exposure * linear_predictor(&c.active, beta).exp();
        let resid = c.response - mu;
        for &a in &c.active {
            g[a as usize].add(resid);
            for &b in &c.active {
                h[a as usize * p + b as usize] += mu;
            }
        }
    }
    (g.iter().map(CompensatedSum::value).collect(), h)
}

/// Cholesky factor (row-major lower triangle) of a symmetric matrix. Columns
/// whose pivot is negligible relative to their diagonal are reported as
/// dependent on earlier columns and skipped.
fn cholesky(a: &[f64], p: usize) -> (Vec<f64>, Vec<usize>) {
    let mut l = vec![0.0; p * p];
    let mut dependent = Vec::new();
    for j in 0..p {
        let diag = a[j * p + j];
        let pivot = diag - (0..j).map(|k| l[j * p + k] * l[j * p + k]).sum::<f64>();
        if !(diag > 0.0) || pivot <= 1e-10 * diag {
            dependent.push(j);
            continue;
        }
        let ljj = pivot.sqrt();
        l[j * p + j] = ljj;
        for i in j + 1..p {
            let s = a[i * p + j] - (0..j).map(|k| l[i * p + k] * l[j * p + k]).sum::<f64>();
            l[i * p + j] = s / ljj;
        }
    }
    (l, dependent)
}

fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let s = b[i] - (0..i).map(|k| l[i * p + k] * y[k]).sum::<f64>();
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s = y[i] - (i + 1..p).map(|k| l[k * p + i] * x[k]).sum::<f64>();
        x[i] = s / l[i * p + i];
    }
    x
}

fn check_rank(cells: &[Cell], spec: &DesignSpec) -> Result<()> {
    let p = spec.n_columns();
    let mut gram = vec![0.0; p * p];
    for c in cells {
        for &a in &c.active {
            for &b in &c.active {
                gram[a as usize * p + b as usize] += 1.0;
            }
        }
    }
    let (_, dependent) = cholesky(&gram, p);
    if dependent.is_empty() {
        Ok(())
    } else {
        let names = spec.column_names();
        Err(Error::RankDeficientDesign(
            dependent.into_iter().map(|j| names[j].clone()).collect(),
        ))
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximum-likelihood Poisson fit with log link and `log(exposure)` offset.
///
/// Starts from the intercept-only solution and takes Newton steps, halving a
/// step (at most [`MAX_STEP_HALVINGS`] times) until the deviance does not
/// increase. Converged when the gradient max-norm is below
/// `tol * max(1, total claims)`. Reaching `max_iter` first returns the model
/// with `converged = false` and a warning.
pub fn fit_poisson(d: &Dataset, spec: &DesignSpec, opts: FitOptions) -> Result<GlmModel> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::config("tol and max_iter must be positive"));
    }
    let total_response = d.total_response();
    if total_response == 0 {
        return Err(Error::ZeroTotalResponse);
    }
    let cells = cells(spec.encode(d)?, d);
    check_rank(&cells, spec)?;
    let p = spec.n_columns();

    // Total deviance = constant - 2 * log_likelihood.
    let mut constant = CompensatedSum::new();
    for r in d.records().iter().filter(|r| r.response > 0) {
        let y = r.response as f64;
        constant.add(2.0 * (y * (y / r.exposure).ln() - y));
    }
    let constant = constant.value();
    let deviance = |ll: f64| (constant - 2.0 * ll).max(0.0);

    let threshold = opts.tol * (total_response as f64).max(1.0);
    let mut beta = vec![0.0; p];
    beta[0] = (total_response as f64 / d.total_exposure()).ln();
    let mut ll = log_likelihood(&cells, &beta);
    let mut trace = vec![deviance(ll)];
    let mut iterations = 0;
    let mut stalled = false;

    let gradient_norm = loop {
        let (g, h) = gradient_hessian(&cells, &beta);
        let gnorm = max_norm(&g);
        if !gnorm.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
        if gnorm < threshold || iterations == opts.max_iter || stalled {
            break gnorm;
        }
        let (l, dependent) = cholesky(&h, p);
        if !dependent.is_empty() {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
        let step = cholesky_solve(&l, p, &g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_STEP_HALVINGS {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_ll = log_likelihood(&cells, &candidate);
            if cand_ll.is_finite() && cand_ll >= ll {
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        trace.push(deviance(ll));
        stalled = !accepted;
    };

    let converged = gradient_norm < threshold;
    let warning = (!converged).then(|| {
        let w = format!(
            "ConvergenceWarning: gradient max-norm {gradient_norm:e} above {threshold:e} after {iterations} iterations"
        );
        log::warn!("{w}");
        w
    });
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonConvergence {
            iterations,
            gradient_norm,
        });
    }
    Ok(GlmModel {
        columns: spec.column_names(),
        spec: spec.clone(),
        coefficients: beta,
        convergence: Convergence {
            iterations,
            gradient_norm,
            converged,
            deviance_trace: trace,
            warning,
        },
    })
}

impl GlmModel {
    /// Predicted frequency `exp(xᵀβ)` per record.
    pub fn predict_frequencies(&self, d: &Dataset) -> Result<Vec<f64>> {
        Ok(self
            .spec
            .encode(d)?
            .iter()
            .map(|active| linear_predictor(active, &self.coefficients).exp())
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: GlmModel = serde_json::from_str(text)?;
        if m.columns != m.spec.column_names() || m.coefficients.len() != m.columns.len() {
            return Err(Error::config("model columns do not match its design spec"));
        }
        Ok(m)
    }
}

/// Copy of `d` carrying the model's frequency predictions.
pub fn predict(m: &GlmModel, d: &Dataset) -> Result<Dataset> {
    d.with_predictions(&m.predict_frequencies(d)?)
}
