//! Exponential-covariance Gaussian process machinery.
//!
//! The kernel is `C(d) = sigma2 * exp(-phi * d) + nugget * 1{d == 0}`. Two
//! conventions govern the nugget, chosen so that collocated sensors are
//! distinct micro-scale variables while a prediction target placed exactly at
//! an observed site reproduces that site's value:
//!
//! * within one site list ([`build_cov`]) the nugget appears on the diagonal
//!   only — duplicate locations at different indices get the off-diagonal
//!   `sigma2` entry without nugget;
//! * across two lists ([`cross_cov`]) an exact coordinate match shares the
//!   nugget, i.e. it is treated as the same point of the field.
//!
//! Zero distance is tested bitwise after the distance computation; collocated
//! inputs must carry identical coordinates to receive shared-location
//! treatment.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Location;

/// Parameters of the exponential covariance function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovParams {
    /// Spatial variance (concentration² units).
    pub sigma2: f64,
    /// Spatial decay (1/distance).
    pub phi: f64,
    /// Micro-scale variance at zero distance (concentration² units).
    pub nugget: f64,
}

impl CovParams {
    pub fn new(sigma2: f64, phi: f64, nugget: f64) -> Result<Self> {
        let p = Self { sigma2, phi, nugget };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma2 = {} must be >= 0", self.sigma2)));
        }
        if !(self.nugget >= 0.0) {
            return Err(Error::InvalidInput(format!("nugget = {} must be >= 0", self.nugget)));
        }
        if !(self.phi > 0.0) {
            return Err(Error::InvalidInput(format!("phi = {} must be > 0", self.phi)));
        }
        Ok(())
    }
}

/// Exponential covariance at distance `d >= 0`; the nugget applies only at
/// exactly zero distance.
pub fn exp_cov(d: f64, p: &CovParams) -> f64 {
    debug_assert!(d >= 0.0);
    let c = p.sigma2 * (-p.phi * d).exp();
    if d == 0.0 {
        c + p.nugget
    } else {
        c
    }
}

/// Covariance matrix over one list of sites. The nugget sits on the diagonal
/// only; duplicate locations at different indices yield off-diagonal entries
/// without it.
pub fn build_cov(sites: &[Location], p: &CovParams) -> DMatrix<f64> {
    let n = sites.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = p.sigma2 + p.nugget;
        for j in (i + 1)..n {
            let v = p.sigma2 * (-p.phi * sites[i].dist(&sites[j])).exp();
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Cross-covariance between two site lists. An exact coordinate match is the
/// same point of the field and shares the nugget.
pub fn cross_cov(rows: &[Location], cols: &[Location], p: &CovParams) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(rows.len(), cols.len());
    for (i, r) in rows.iter().enumerate() {
        for (j, q) in cols.iter().enumerate() {
            c[(i, j)] = exp_cov(r.dist(q), p);
        }
    }
    c
}

/// Relative jitter ladder: start at 1e-10 times the mean diagonal, escalate
/// by 10x up to 1e-4 times the mean diagonal, then give up. Bounded so the
/// jitter cannot masquerade as a nugget.
const JITTER_START_REL: f64 = 1e-10;
const JITTER_MAX_REL: f64 = 1e-4;

/// A Cholesky factorization together with the jitter that was required.
pub struct CholFactor {
    chol: Cholesky<f64, Dyn>,
    /// Absolute jitter added to the diagonal (0.0 if none was needed).
    pub jitter: f64,
    n: usize,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        (0..self.n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `x' M^{-1} x` via one triangular solve.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let mut w = x.clone();
        self.chol
            .l_dirty()
            .solve_lower_triangular_mut(&mut w);
        w.dot(&w)
    }

}

/// Lower-triangular factor of a positive *semi*definite matrix with
/// zero-clamped pivots: directions with (numerically) zero variance get a
/// zero column instead of jitter, so deterministic coordinates are sampled
/// without artificial noise. Genuinely indefinite input is an error.
pub fn psd_lower(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let scale = cov
        .diagonal()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let clamp_tol = 1e-12 * scale;
    let indef_tol = 1e-8 * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= clamp_tol {
            if d < -indef_tol {
                return Err(Error::IllConditioned(format!(
                    "matrix is not positive semidefinite: pivot {d:e} at {j}"
                )));
            }
            continue; // deterministic direction: leave the column zero
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut v = cov[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / root;
        }
    }
    Ok(l)
}

/// Draw `mean + L z` from `N(mean, cov)` with the zero-clamped PSD factor.
pub fn sample_gaussian(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    let n = mean.len();
    let l = psd_lower(cov)?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut out = mean.clone();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += l[(i, j)] * z[j];
        }
        out[i] += acc;
    }
    Ok(out)
}

/// Factorize a symmetric matrix, escalating diagonal jitter per the ladder.
pub fn chol_with_jitter(mat: &DMatrix<f64>) -> Result<CholFactor> {
    let n = mat.nrows();
    if n == 0 {
        return Ok(CholFactor {
            chol: Cholesky::new(DMatrix::zeros(0, 0)).expect("empty cholesky"),
            jitter: 0.0,
            n: 0,
        });
    }
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok(CholFactor { chol, jitter: 0.0, n });
    }
    let mean_diag = mat.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START_REL;
    while rel <= JITTER_MAX_REL {
        let jitter = rel * mean_diag;
        let mut m = mat.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(CholFactor { chol, jitter, n });
        }
        rel *= 10.0;
    }
    Err(Error::IllConditioned(format!(
        "{n}x{n} covariance not factorizable after jitter up to {:.1e} x mean diagonal",
        JITTER_MAX_REL
    )))
}

/// A finite-dimensional Gaussian over an ordered list of sites.
#[derive(Debug, Clone)]
pub struct GaussianSurface {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub sites: Vec<Location>,
}

impl GaussianSurface {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, sites: Vec<Location>) -> Self {
        debug_assert_eq!(mean.len(), sites.len());
        debug_assert_eq!(cov.nrows(), sites.len());
        debug_assert_eq!(cov.ncols(), sites.len());
        Self { mean, cov, sites }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// One joint draw from the surface.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<DVector<f64>> {
        sample_gaussian(&self.mean, &self.cov, rng)
    }
}

/// Kriging: the conditional distribution of the field at `target_sites`
/// given observed values at `cond_sites`, under a constant prior mean.
///
/// With empty `cond_sites` this is the prior. The conditioning covariance is
/// factorized under the jitter ladder; an exhausted ladder is an error.
pub fn conditional_gp(
    prior_mean: f64,
    p: &CovParams,
    cond_sites: &[Location],
    cond_values: &[f64],
    target_sites: &[Location],
) -> Result<GaussianSurface> {
    p.validate()?;
    if cond_sites.len() != cond_values.len() {
        return Err(Error::InvalidInput(format!(
            "conditioning sites ({}) and values ({}) differ in length",
            cond_sites.len(),
            cond_values.len()
        )));
    }
    let t_cov = build_cov(target_sites, p);
    let t_mean = DVector::from_element(target_sites.len(), prior_mean);
    if cond_sites.is_empty() {
        return Ok(GaussianSurface::new(t_mean, t_cov, target_sites.to_vec()));
    }

    let c_cc = build_cov(cond_sites, p);
    let c_tc = cross_cov(target_sites, cond_sites, p);
    let factor = chol_with_jitter(&c_cc)?;

    let resid = DVector::from_iterator(
        cond_values.len(),
        cond_values.iter().map(|v| v - prior_mean),
    );
    let mean = &t_mean + &c_tc * factor.solve_vec(&resid);

    // cov = C_tt - C_tc C_cc^{-1} C_ct, symmetrized against rounding drift
    let w = factor.solve_mat(&c_tc.transpose());
    let mut cov = &t_cov - &c_tc * w;
    let sym = (&cov + cov.transpose()) * 0.5;
    cov = sym;

    Ok(GaussianSurface::new(mean, cov, target_sites.to_vec()))
}
