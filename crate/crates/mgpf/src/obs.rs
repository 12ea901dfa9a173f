//! Per-network observation models.
//!
//! A network's reading is modeled as an affine, covariate-dependent function
//! of the true concentration plus heteroscedastic noise:
//!
//! `y = b0 + b1*x + z·b2 + x*(z·b3) + eps`, `eps ~ N(0, tau2(x))`
//!
//! Coefficients are ordered (intercept, x, covariates..., x-by-covariate
//! interactions over the interacting covariates). The error variance follows
//! one of three forms, always clamped below by a configurable floor:
//!
//! * log-linear: `log(tau2) = alpha0 + alpha1 * log(x + 1)`
//! * linear-clamped: `tau2 = max(0, alpha0 + alpha1 * x)`
//! * homoscedastic: `tau2 = alpha0`

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Functional form of the error-variance model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceForm {
    LogLinear,
    LinearClamped,
    Homoscedastic,
}

/// A fitted error-variance model with its floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceModel {
    pub form: VarianceForm,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Minimum returned variance (concentration² units).
    pub floor: f64,
}

impl VarianceModel {
    pub fn homoscedastic(tau2: f64) -> Self {
        Self { form: VarianceForm::Homoscedastic, alpha0: tau2, alpha1: 0.0, floor: 0.0 }
    }

    /// Error variance at true concentration `x >= 0`, floored.
    pub fn tau2(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0, "tau2 expects x >= 0, got {x}");
        let raw = match self.form {
            VarianceForm::LogLinear => (self.alpha0 + self.alpha1 * (x + 1.0).ln()).exp(),
            VarianceForm::LinearClamped => (self.alpha0 + self.alpha1 * x).max(0.0),
            VarianceForm::Homoscedastic => self.alpha0,
        };
        raw.max(self.floor)
    }
}

/// A covariate slot in the observation model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    /// Whether the model carries an x-by-covariate interaction term.
    pub interacts: bool,
}

impl Covariate {
    pub fn plain(name: &str) -> Self {
        Self { name: name.to_string(), interacts: false }
    }

    pub fn interacting(name: &str) -> Self {
        Self { name: name.to_string(), interacts: true }
    }
}

/// Result of inverting the observation model at one reading. Negative
/// estimates are returned unclamped; the flag lets callers report or clamp
/// at output time without biasing anything upstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    pub is_negative: bool,
}

/// A fitted per-network observation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsModelParams {
    /// (intercept, x, covariates..., x-by-covariate interactions...).
    pub beta: Vec<f64>,
    pub covariates: Vec<Covariate>,
    pub variance: VarianceModel,
}

/// Effective slopes below this magnitude are treated as non-invertible.
pub const MIN_INVERTIBLE_SLOPE: f64 = 1e-6;

impl ObsModelParams {
    pub fn new(beta: Vec<f64>, covariates: Vec<Covariate>, variance: VarianceModel) -> Result<Self> {
        let m = Self { beta, covariates, variance };
        m.validate()?;
        Ok(m)
    }

    /// `y = x` with homoscedastic noise; handy for tests and simulations.
    pub fn identity(tau2: f64) -> Self {
        Self {
            beta: vec![0.0, 1.0],
            covariates: vec![],
            variance: VarianceModel::homoscedastic(tau2),
        }
    }

    /// `y = a + b x` with homoscedastic noise and no covariates.
    pub fn affine(a: f64, b: f64, tau2: f64) -> Self {
        Self {
            beta: vec![a, b],
            covariates: vec![],
            variance: VarianceModel::homoscedastic(tau2),
        }
    }

    pub fn n_interacting(&self) -> usize {
        self.covariates.iter().filter(|c| c.interacts).count()
    }

    pub fn expected_beta_len(&self) -> usize {
        2 + self.covariates.len() + self.n_interacting()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.expected_beta_len() {
            return Err(Error::InvalidInput(format!(
                "beta has {} coefficients, expected {} for {} covariates ({} interacting)",
                self.beta.len(),
                self.expected_beta_len(),
                self.covariates.len(),
                self.n_interacting()
            )));
        }
        if self.beta[1] == 0.0 {
            return Err(Error::InvalidInput(
                "slope coefficient beta[1] must be nonzero".into(),
            ));
        }
        if !(self.variance.floor >= 0.0) {
            return Err(Error::InvalidInput("variance floor must be >= 0".into()));
        }
        Ok(())
    }

    /// Offset `a = b0 + z·b2` and gain `b = b1 + z·b3` at one covariate row.
    pub fn affine_at(&self, z: &[f64]) -> Result<(f64, f64)> {
        if z.len() != self.covariates.len() {
            return Err(Error::InvalidInput(format!(
                "covariate row has {} entries, model expects {}",
                z.len(),
                self.covariates.len()
            )));
        }
        let mut a = self.beta[0];
        let mut b = self.beta[1];
        let mut k = 2 + self.covariates.len();
        for (i, c) in self.covariates.iter().enumerate() {
            a += z[i] * self.beta[2 + i];
            if c.interacts {
                b += z[i] * self.beta[k];
                k += 1;
            }
        }
        Ok((a, b))
    }

    /// Expected reading and floored error variance at truth `x >= 0`.
    pub fn eval(&self, x: f64, z: &[f64]) -> Result<(f64, f64)> {
        let (a, b) = self.affine_at(z)?;
        Ok((a + b * x, self.variance.tau2(x)))
    }

    /// Naive (RegCal-style) calibration: solve the mean model for x.
    pub fn invert(&self, y: f64, z: &[f64]) -> Result<Inversion> {
        let (a, b) = self.affine_at(z)?;
        if b.abs() < MIN_INVERTIBLE_SLOPE {
            return Err(Error::NonInvertible {
                slope: b,
                context: format!("covariates {z:?}"),
            });
        }
        let value = (y - a) / b;
        Ok(Inversion { value, is_negative: value < 0.0 })
    }
}

/// A collocated reference/low-cost time series used for training.
///
/// Rows with missing values must be dropped (and counted) at ingestion; this
/// type assumes complete rows.
#[derive(Debug, Clone)]
pub struct CollocatedSeries {
    /// Reference concentrations (truth), all >= 0.
    pub x: Vec<f64>,
    /// Low-cost readings.
    pub y: Vec<f64>,
    /// One covariate row per observation, ordered like the model spec.
    pub z: Vec<Vec<f64>>,
}

impl CollocatedSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Vec<Vec<f64>>) -> Result<Self> {
        if x.len() != y.len() || x.len() != z.len() {
            return Err(Error::InvalidInput(format!(
                "collocated series length mismatch: x {}, y {}, z {}",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "reference concentrations must be finite and >= 0, found {bad}"
            )));
        }
        Ok(Self { x, y, z })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn column_names(covariates: &[Covariate]) -> Vec<String> {
    let mut names = vec!["intercept".to_string(), "x".to_string()];
    names.extend(covariates.iter().map(|c| c.name.clone()));
    names.extend(
        covariates
            .iter()
            .filter(|c| c.interacts)
            .map(|c| format!("x:{}", c.name)),
    );
    names
}

fn design_matrix(data: &CollocatedSeries, covariates: &[Covariate]) -> Result<DMatrix<f64>> {
    let n = data.len();
    let p = 2 + covariates.len() + covariates.iter().filter(|c| c.interacts).count();
    let mut m = DMatrix::zeros(n, p);
    for (i, zrow) in data.z.iter().enumerate() {
        if zrow.len() != covariates.len() {
            return Err(Error::InvalidInput(format!(
                "covariate row {i} has {} entries, expected {}",
                zrow.len(),
                covariates.len()
            )));
        }
        m[(i, 0)] = 1.0;
        m[(i, 1)] = data.x[i];
        for (j, &zv) in zrow.iter().enumerate() {
            m[(i, 2 + j)] = zv;
        }
        let mut k = 2 + covariates.len();
        for (j, c) in covariates.iter().enumerate() {
            if c.interacts {
                m[(i, k)] = data.x[i] * zrow[j];
                k += 1;
            }
        }
    }
    Ok(m)
}

/// Name the design columns that are (numerically) linear combinations of the
/// preceding ones, via modified Gram-Schmidt.
fn collinear_columns(design: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..design.ncols() {
        let mut col = design.column(j).into_owned();
        let norm0 = col.norm();
        for q in &basis {
            let proj = q.dot(&col);
            col -= q * proj;
        }
        // second pass improves orthogonality for near-dependent columns
        for q in &basis {
            let proj = q.dot(&col);
            col -= q * proj;
        }
        if col.norm() <= 1e-10 * norm0.max(1e-300) || norm0 == 0.0 {
            bad.push(names[j].clone());
        } else {
            basis.push(col.normalize());
        }
    }
    bad
}

fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<Vec<f64>> {
    let n = design.nrows();
    let p = design.ncols();
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "need more rows ({n}) than coefficients ({p})"
        )));
    }
    let bad = collinear_columns(design, names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    let qr = design.clone().qr();
    let qtb = qr.q().transpose() * y;
    let beta = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient { columns: names.to_vec() })?;
    Ok(beta.iter().copied().collect())
}

/// Ordinary least squares fit of the observation-model regression.
///
/// The returned coefficients follow the (intercept, x, covariates...,
/// interactions...) ordering.
pub fn fit_regression(data: &CollocatedSeries, covariates: &[Covariate]) -> Result<Vec<f64>> {
    let design = design_matrix(data, covariates)?;
    let y = DVector::from_column_slice(&data.y);
    least_squares(&design, &y, &column_names(covariates))
}

/// Fit the error-variance model to regression residuals.
///
/// For the log-linear form the response is `log(residual^2)` regressed on
/// `log(x + 1)`; zero residuals cannot enter the log and are dropped. The
/// homoscedastic form returns `(mean(residual^2), 0)`.
pub fn fit_variance_model(residuals: &[f64], x: &[f64], form: VarianceForm) -> Result<(f64, f64)> {
    if residuals.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "residuals ({}) and x ({}) differ in length",
            residuals.len(),
            x.len()
        )));
    }
    if residuals.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 observations to fit a variance model, have {}",
            residuals.len()
        )));
    }
    if residuals.iter().all(|r| *r == 0.0) {
        return Err(Error::Degenerate("all residuals are zero".into()));
    }
    match form {
        VarianceForm::Homoscedastic => {
            let ms = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
            Ok((ms, 0.0))
        }
        VarianceForm::LogLinear => {
            let mut u = Vec::new();
            let mut v = Vec::new();
            for (&r, &xi) in residuals.iter().zip(x) {
                if xi + 1.0 <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "log variance model needs x > -1, found {xi}"
                    )));
                }
                if r != 0.0 {
                    u.push((xi + 1.0).ln());
                    v.push((r * r).ln());
                }
            }
            simple_ols(&u, &v)
        }
        VarianceForm::LinearClamped => {
            let v: Vec<f64> = residuals.iter().map(|r| r * r).collect();
            simple_ols(x, &v)
        }
    }
}

fn simple_ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 {
        return Err(Error::Degenerate(
            "fewer than 2 usable observations for the variance model".into(),
        ));
    }
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("variance-model predictor is constant".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Generalized least squares refit under a fitted variance model: weighted
/// least squares with weights `1/tau2(x_i)` (floored).
pub fn gls_refit(
    data: &CollocatedSeries,
    variance: &VarianceModel,
    covariates: &[Covariate],
) -> Result<Vec<f64>> {
    let mut design = design_matrix(data, covariates)?;
    let mut y = DVector::from_column_slice(&data.y);
    for i in 0..data.len() {
        let t2 = variance.tau2(data.x[i]);
        if !(t2 > 0.0) {
            return Err(Error::Degenerate(format!(
                "nonpositive error variance {t2} at x = {}; raise the variance floor",
                data.x[i]
            )));
        }
        let w = t2.sqrt().recip();
        for j in 0..design.ncols() {
            design[(i, j)] *= w;
        }
        y[i] *= w;
    }
    least_squares(&design, &y, &column_names(covariates))
}

/// Built-in published observation models.
pub mod presets {
    use super::*;

    pub const PURPLEAIR_BARKJOHN: &str = "purpleair-barkjohn";
    pub const SEARCH_BALTIMORE: &str = "search-baltimore";

    pub fn names() -> [&'static str; 2] {
        [PURPLEAIR_BARKJOHN, SEARCH_BALTIMORE]
    }

    /// Look up a preset by name. Floors default to 0; filtering configs may
    /// impose their own.
    pub fn get(name: &str) -> Option<ObsModelParams> {
        match name {
            PURPLEAIR_BARKJOHN => Some(ObsModelParams {
                beta: vec![-10.9733, 1.9084, 0.1645],
                covariates: vec![Covariate::plain("rh")],
                variance: VarianceModel {
                    form: VarianceForm::LogLinear,
                    alpha0: 0.4973,
                    alpha1: 0.8802,
                    floor: 0.0,
                },
            }),
            SEARCH_BALTIMORE => Some(ObsModelParams {
                beta: vec![
                    -0.9756, 1.0789, 0.0422, -0.0357, 0.4086, -0.0030, 0.0058, -0.0736,
                ],
                covariates: vec![
                    Covariate::interacting("rh"),
                    Covariate::interacting("temp"),
                    Covariate::interacting("weekend"),
                ],
                variance: VarianceModel {
                    form: VarianceForm::LogLinear,
                    alpha0: -1.2136,
                    alpha1: 1.1774,
                    floor: 0.0,
                },
            }),
            _ => None,
        }
    }
}
