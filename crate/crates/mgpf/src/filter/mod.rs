//! The multi-network Gaussian process filter.
//!
//! One timepoint at a time, the filter combines K low-cost networks (each
//! with its own observation model) and any reference measurements into the
//! posterior of the latent true concentrations. Estimation is marginalized:
//! MCMC runs over the four GP hyperparameters with the latent field
//! integrated out of the likelihood, and each retained hyperparameter draw is
//! completed with one exact Gaussian draw of the field (a Kalman update
//! against the GP prior conditioned on the reference data), plus a kriging
//! draw at any prediction locations.
//!
//! Timepoints are independent; a [`FilterInput`] is immutable during a run
//! and distinct timepoints can be filtered from parallel workers.

mod mcmc;

pub use mcmc::{mcmc_filter, ChainConfig, FixedHyper};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{max_pairwise_dist, Location};
use crate::gp::{chol_with_jitter, CholFactor, CovParams, GaussianSurface};
use crate::obs::ObsModelParams;
use crate::stats;

/// One network's active data at a timepoint.
#[derive(Debug, Clone)]
pub struct NetworkData {
    pub id: String,
    pub sites: Vec<Location>,
    pub readings: Vec<f64>,
    /// One covariate row per site, ordered like the model's covariates.
    pub covariates: Vec<Vec<f64>>,
    pub model: ObsModelParams,
}

/// Everything the filter consumes for one timepoint.
///
/// Stacking order is the contract for all downstream vectors: networks in
/// input order, sites in each network's input order.
#[derive(Debug, Clone)]
pub struct FilterInput {
    pub reference_sites: Vec<Location>,
    pub reference_values: Vec<f64>,
    pub networks: Vec<NetworkData>,
    pub grid: Vec<Location>,
}

impl FilterInput {
    /// Validates and drops networks with no active sites.
    pub fn new(
        reference_sites: Vec<Location>,
        reference_values: Vec<f64>,
        networks: Vec<NetworkData>,
        grid: Vec<Location>,
    ) -> Result<Self> {
        if reference_sites.len() != reference_values.len() {
            return Err(Error::InvalidInput(format!(
                "reference sites ({}) and values ({}) differ in length",
                reference_sites.len(),
                reference_values.len()
            )));
        }
        for v in &reference_values {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "reference values must be finite and >= 0, found {v}"
                )));
            }
        }
        let networks: Vec<NetworkData> =
            networks.into_iter().filter(|n| !n.sites.is_empty()).collect();
        for n in &networks {
            if n.sites.len() != n.readings.len() || n.sites.len() != n.covariates.len() {
                return Err(Error::InvalidInput(format!(
                    "network {}: sites ({}), readings ({}) and covariate rows ({}) differ",
                    n.id,
                    n.sites.len(),
                    n.readings.len(),
                    n.covariates.len()
                )));
            }
            n.model.validate()?;
            if let Some(bad) = n.readings.iter().find(|r| !r.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "network {}: non-finite reading {bad}",
                    n.id
                )));
            }
        }
        Ok(Self { reference_sites, reference_values, networks, grid })
    }

    /// Number of stacked low-cost sites across networks.
    pub fn n_lowcost(&self) -> usize {
        self.networks.iter().map(|n| n.sites.len()).sum()
    }

    /// Low-cost site locations in stacking order.
    pub fn lowcost_sites(&self) -> Vec<Location> {
        self.networks.iter().flat_map(|n| n.sites.iter().copied()).collect()
    }

    /// Stacked readings in stacking order.
    pub fn stacked_readings(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_lowcost(),
            self.networks.iter().flat_map(|n| n.readings.iter().copied()),
        )
    }
}

/// The stacked affine observation structure: `y ~ N(a + B x, D)` with
/// diagonal gain `B` and diagonal noise `D`.
#[derive(Debug, Clone)]
pub struct AffineObs {
    pub offset: DVector<f64>,
    pub gain: DVector<f64>,
    pub noise: DVector<f64>,
}

impl AffineObs {
    pub fn len(&self) -> usize {
        self.offset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset.len() == 0
    }
}

/// Unclamped naive inversions `(y - a)/b` for every low-cost site, in
/// stacking order. These are the RegCal-style point estimates used for
/// variance plug-ins and prior scaling.
pub fn naive_inversions(input: &FilterInput) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(input.n_lowcost());
    for n in &input.networks {
        for (i, (&y, z)) in n.readings.iter().zip(&n.covariates).enumerate() {
            let inv = n.model.invert(y, z).map_err(|e| match e {
                Error::NonInvertible { slope, .. } => Error::NonInvertible {
                    slope,
                    context: format!("network {} site {i}", n.id),
                },
                other => other,
            })?;
            out.push(inv.value);
        }
    }
    Ok(out)
}

/// Build the stacked affine observation structure.
///
/// The per-site noise variance is the observation model's heteroscedastic
/// variance evaluated at a plug-in truth — the naive inversion clamped at
/// zero (the variance forms are defined for nonnegative concentrations) —
/// and floored by the model's variance floor.
pub fn assemble_affine(input: &FilterInput) -> Result<AffineObs> {
    let m = input.n_lowcost();
    let mut offset = DVector::zeros(m);
    let mut gain = DVector::zeros(m);
    let mut noise = DVector::zeros(m);
    let mut k = 0;
    for n in &input.networks {
        for (i, (&y, z)) in n.readings.iter().zip(&n.covariates).enumerate() {
            let (a, b) = n.model.affine_at(z)?;
            if b.abs() < crate::obs::MIN_INVERTIBLE_SLOPE {
                return Err(Error::NonInvertible {
                    slope: b,
                    context: format!("network {} site {i}", n.id),
                });
            }
            let plug_x = ((y - a) / b).max(0.0);
            let tau2 = n.model.variance.tau2(plug_x);
            if !(tau2 > 0.0) {
                return Err(Error::Degenerate(format!(
                    "network {} site {i}: observation variance {tau2} is not positive; \
                     set a positive variance floor",
                    n.id
                )));
            }
            offset[k] = a;
            gain[k] = b;
            noise[k] = tau2;
            k += 1;
        }
    }
    Ok(AffineObs { offset, gain, noise })
}

/// Exact Gaussian posterior of the latent field given readings `y` with the
/// affine observation structure and a Gaussian prior.
///
/// Implemented in covariance form, `post_cov = C - C B' (B C B' + D)^-1 B C`,
/// which is algebraically the information-form posterior
/// `N(M^-1 m, M^-1)` with `M = B' D^-1 B + C^-1` but avoids inverting the
/// prior covariance.
pub fn kalman_update(
    obs: &AffineObs,
    y: &DVector<f64>,
    prior: &GaussianSurface,
) -> Result<GaussianSurface> {
    let n = prior.len();
    if obs.len() != n || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "kalman update dimension mismatch: prior {n}, obs {}, y {}",
            obs.len(),
            y.len()
        )));
    }
    if let Some(bad) = obs.noise.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "observation noise variances must be positive, found {bad}"
        )));
    }
    // S = B C B' + D with diagonal B and D
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = prior.cov[(i, j)] * obs.gain[i] * obs.gain[j];
        }
        s[(i, i)] += obs.noise[i];
    }
    let factor = chol_with_jitter(&s)?;

    // B C (rows of C scaled by gain)
    let mut bc = prior.cov.clone();
    for i in 0..n {
        for j in 0..n {
            bc[(i, j)] *= obs.gain[i];
        }
    }
    // K' = S^{-1} (B C)
    let kt = factor.solve_mat(&bc);

    let innov = y - &obs.offset - obs.gain.component_mul(&prior.mean);
    let mean = &prior.mean + kt.transpose() * &innov;
    let mut cov = &prior.cov - kt.transpose() * &bc;
    let sym = (&cov + cov.transpose()) * 0.5;
    cov = sym;

    Ok(GaussianSurface::new(mean, cov, prior.sites.clone()))
}

/// Precomputed structure for evaluating the marginal likelihood of the
/// observed data `(y, x0)` with the latent field integrated out.
///
/// The joint covariance for hyperparameters `theta` is
///
/// ```text
/// [ B C(S*,S*) B' + D    B C(S*,S0) ]
/// [ C(S0,S*) B'          C(S0,S0)   ]
/// ```
///
/// Distances are precomputed once; each `theta` needs one kernel evaluation
/// pass and one factorization. Mean-only (`mu`) changes reuse the factor.
pub struct MarginalModel {
    y: DVector<f64>,
    x0: DVector<f64>,
    offset: DVector<f64>,
    gain: DVector<f64>,
    noise: DVector<f64>,
    dist: DMatrix<f64>,
    n_y: usize,
    n_all: usize,
}

impl MarginalModel {
    pub fn new(input: &FilterInput) -> Result<Self> {
        let obs = assemble_affine(input)?;
        let y = input.stacked_readings();
        let x0 = DVector::from_column_slice(&input.reference_values);
        let mut sites = input.lowcost_sites();
        sites.extend_from_slice(&input.reference_sites);
        let n_all = sites.len();
        let mut dist = DMatrix::zeros(n_all, n_all);
        for i in 0..n_all {
            for j in 0..n_all {
                dist[(i, j)] = sites[i].dist(&sites[j]);
            }
        }
        let n_y = y.len();
        Ok(Self { y, x0, offset: obs.offset, gain: obs.gain, noise: obs.noise, dist, n_y, n_all })
    }

    pub fn n_obs(&self) -> usize {
        self.n_all
    }

    /// Factorize the joint covariance at `theta`.
    ///
    /// The latent-field covariance uses the diagonal-only nugget within each
    /// block and the shared-location nugget across the low-cost/reference
    /// split, matching [`build_cov`] and [`crate::gp::cross_cov`].
    pub fn factor(&self, theta: &CovParams) -> Result<CholFactor> {
        let n = self.n_all;
        let ny = self.n_y;
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let d = self.dist[(i, j)];
                let mut v = theta.sigma2 * (-theta.phi * d).exp();
                let cross = (i < ny) != (j < ny);
                if d == 0.0 && (i == j || cross) {
                    v += theta.nugget;
                }
                // scale by the observation gains on the low-cost block
                if i < ny {
                    v *= self.gain[i];
                }
                if j < ny {
                    v *= self.gain[j];
                }
                if i == j && i < ny {
                    v += self.noise[i];
                }
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        chol_with_jitter(&c)
    }

    /// Log density of the observed data at mean level `mu`, reusing a factor.
    pub fn loglik_with(&self, factor: &CholFactor, mu: f64) -> f64 {
        let n = self.n_all;
        let mut r = DVector::zeros(n);
        for i in 0..self.n_y {
            r[i] = self.y[i] - self.offset[i] - self.gain[i] * mu;
        }
        for j in 0..self.x0.len() {
            r[self.n_y + j] = self.x0[j] - mu;
        }
        -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + factor.log_det() + factor.quad_form(&r))
    }

    pub fn loglik(&self, mu: f64, theta: &CovParams) -> Result<f64> {
        let f = self.factor(theta)?;
        Ok(self.loglik_with(&f, mu))
    }
}

/// Marginal log likelihood of the observed data under `(mu, theta)` — the
/// latent true concentrations integrated out. With zero networks this
/// reduces to the GP marginal of the reference data alone.
pub fn joint_marginal_loglik(mu: f64, theta: &CovParams, input: &FilterInput) -> Result<f64> {
    if !mu.is_finite() || !theta.sigma2.is_finite() || !theta.phi.is_finite() || !theta.nugget.is_finite()
    {
        return Err(Error::InvalidInput("non-finite hyperparameters".into()));
    }
    theta.validate()?;
    MarginalModel::new(input)?.loglik(mu, theta)
}

/// Priors for the per-timepoint hyperparameters: half-normal mean scale and
/// uniform bounds on the covariance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Scale (standard deviation) of the half-normal prior on the mean.
    pub mu_scale: f64,
    pub sigma2_max: f64,
    pub nugget_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu_scale > 0.0
            && self.sigma2_max > 0.0
            && self.nugget_max > 0.0
            && self.phi_min > 0.0
            && self.phi_min < self.phi_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid prior bounds: {self:?}")))
        }
    }

    /// Decay bounds such that the correlation between the farthest pair of
    /// sites spans 2% to 98%.
    pub fn phi_bounds(network_sites: &[Location]) -> Result<(f64, f64)> {
        let d_max = max_pairwise_dist(network_sites);
        if d_max <= 0.0 {
            return Err(Error::InvalidInput(
                "phi bounds need at least two distinct site locations".into(),
            ));
        }
        Ok((-(0.98f64.ln()) / d_max, -(0.02f64.ln()) / d_max))
    }

    /// Per-timepoint bounds from the data:
    /// nugget bound = variance of the primary network's readings, spatial
    /// variance bound = twice the variance of the pooled naive inversions,
    /// half-normal scale = ten times their standard deviation, and decay
    /// bounds from the network geometry.
    pub fn from_input(input: &FilterInput, primary_network: Option<&str>) -> Result<Self> {
        let naive = naive_inversions(input)?;
        if naive.len() < 2 {
            return Err(Error::InvalidInput(
                "prior bounds need at least two low-cost sites".into(),
            ));
        }
        let naive_var = stats::variance(&naive);
        let primary = match primary_network {
            Some(id) => input
                .networks
                .iter()
                .find(|n| n.id == id)
                .ok_or_else(|| Error::InvalidInput(format!("primary network {id} not active")))?,
            None => &input.networks[0],
        };
        let nugget_max = if primary.readings.len() >= 2 {
            stats::variance(&primary.readings)
        } else {
            naive_var
        };
        let mut sites = input.lowcost_sites();
        sites.extend_from_slice(&input.reference_sites);
        let (phi_min, phi_max) = Self::phi_bounds(&sites)?;
        let sd = naive_var.sqrt();
        let spec = Self {
            mu_scale: if sd > 0.0 {
                10.0 * sd
            } else {
                10.0 * stats::mean(&naive).abs().max(1.0)
            },
            sigma2_max: (2.0 * naive_var).max(1e-8),
            nugget_max: nugget_max.max(1e-8),
            phi_min,
            phi_max,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One retained draw of the GP hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperDraw {
    pub mu: f64,
    pub sigma2: f64,
    pub phi: f64,
    pub nugget: f64,
}

/// Role of a site in the posterior field output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteRole {
    Reference,
    Network { id: String },
    Grid,
}

#[derive(Debug, Clone)]
pub struct FieldSite {
    pub role: SiteRole,
    pub location: Location,
    /// Index within the role group (reference index, site index within the
    /// network, or grid index).
    pub index: usize,
}

/// Posterior mean and central credible interval for one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Sampler diagnostics attached to a filter run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterMeta {
    pub seed: u64,
    pub retained: usize,
    /// Post-burn-in acceptance rate per component (mu, sigma2, phi, nugget);
    /// absent when hyperparameters were pinned.
    pub acceptance: Option<[f64; 4]>,
    pub warnings: Vec<String>,
}

/// Posterior samples and summaries for one timepoint.
///
/// Sites are ordered reference first (carrying their observed values with
/// zero-width intervals), then networks in stacking order, then grid.
#[derive(Debug, Clone)]
pub struct PosteriorField {
    pub sites: Vec<FieldSite>,
    pub hyper_samples: Vec<HyperDraw>,
    /// draws x sites
    pub x_samples: DMatrix<f64>,
    /// 95% summaries, one per site.
    pub summaries: Vec<IntervalSummary>,
    pub meta: FilterMeta,
}

impl PosteriorField {
    pub fn n_draws(&self) -> usize {
        self.x_samples.nrows()
    }

    /// Column of draws for one site.
    pub fn site_draws(&self, site: usize) -> Vec<f64> {
        self.x_samples.column(site).iter().copied().collect()
    }
}

/// Posterior mean and equal-tailed central interval at `level` from the
/// pooled draws. Requires at least 100 retained draws.
pub fn predict_summaries(field: &PosteriorField, level: f64) -> Result<Vec<IntervalSummary>> {
    summaries_from_samples(&field.x_samples, level)
}

pub(crate) fn summaries_from_samples(
    samples: &DMatrix<f64>,
    level: f64,
) -> Result<Vec<IntervalSummary>> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidInput(format!("level {level} must be in (0,1)")));
    }
    let n = samples.nrows();
    if n < 100 {
        return Err(Error::TooFewDraws { have: n, need: 100 });
    }
    let alpha = 1.0 - level;
    let mut out = Vec::with_capacity(samples.ncols());
    for j in 0..samples.ncols() {
        let mut col: Vec<f64> = samples.column(j).iter().copied().collect();
        col.sort_by(|a, b| a.partial_cmp(b).expect("non-finite posterior draw"));
        out.push(IntervalSummary {
            mean: stats::mean(&col),
            lower: stats::quantile_sorted(&col, alpha / 2.0),
            upper: stats::quantile_sorted(&col, 1.0 - alpha / 2.0),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::build_cov;
    use crate::obs::presets;
    use approx::assert_relative_eq;

    fn loc(x: f64, y: f64) -> Location {
        Location::new(x, y)
    }

    fn one_site_identity_input() -> FilterInput {
        FilterInput::new(
            vec![],
            vec![],
            vec![NetworkData {
                id: "n1".into(),
                sites: vec![loc(0.0, 0.0)],
                readings: vec![2.0],
                covariates: vec![vec![]],
                model: ObsModelParams::identity(1.0),
            }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn assemble_identity_network() {
        let input = one_site_identity_input();
        let obs = assemble_affine(&input).unwrap();
        assert_eq!(obs.offset[0], 0.0);
        assert_eq!(obs.gain[0], 1.0);
        assert_eq!(obs.noise[0], 1.0);
    }

    #[test]
    fn assemble_purpleair_site() {
        let input = FilterInput::new(
            vec![],
            vec![],
            vec![NetworkData {
                id: "pa".into(),
                sites: vec![loc(0.0, 0.0)],
                readings: vec![16.3357],
                covariates: vec![vec![50.0]],
                model: presets::get(presets::PURPLEAIR_BARKJOHN).unwrap(),
            }],
            vec![],
        )
        .unwrap();
        let obs = assemble_affine(&input).unwrap();
        assert_relative_eq!(obs.offset[0], -2.7483, epsilon = 1e-10);
        assert_relative_eq!(obs.gain[0], 1.9084, epsilon = 1e-12);
    }

    #[test]
    fn stacking_order_is_declared_order() {
        let net = |id: &str, k: usize, start: f64| NetworkData {
            id: id.into(),
            sites: (0..k).map(|i| loc(start + i as f64, 0.0)).collect(),
            readings: vec![1.0; k],
            covariates: vec![vec![]; k],
            model: ObsModelParams::identity(1.0),
        };
        let input =
            FilterInput::new(vec![], vec![], vec![net("a", 2, 0.0), net("b", 3, 10.0)], vec![])
                .unwrap();
        let obs = assemble_affine(&input).unwrap();
        assert_eq!(obs.len(), 5);
        assert_eq!(input.lowcost_sites().len(), 5);
        assert_eq!(input.lowcost_sites()[2].x, 10.0);
    }

    #[test]
    fn kalman_scalar_conjugate_update() {
        let prior = GaussianSurface::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![loc(0.0, 0.0)],
        );
        let obs = AffineObs {
            offset: DVector::from_element(1, 0.0),
            gain: DVector::from_element(1, 1.0),
            noise: DVector::from_element(1, 1.0),
        };
        let post = kalman_update(&obs, &DVector::from_element(1, 2.0), &prior).unwrap();
        assert_relative_eq!(post.mean[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn kalman_limits() {
        let p = CovParams::new(1.0, 1.0, 0.1).unwrap();
        let sites = vec![loc(0.0, 0.0), loc(0.4, 0.2)];
        let prior = GaussianSurface::new(
            DVector::from_element(2, 1.0),
            build_cov(&sites, &p),
            sites.clone(),
        );
        let y = DVector::from_column_slice(&[3.0, 2.0]);

        // uninformative data: posterior is the prior
        let weak = AffineObs {
            offset: DVector::zeros(2),
            gain: DVector::from_element(2, 1.0),
            noise: DVector::from_element(2, 1e12),
        };
        let post = kalman_update(&weak, &y, &prior).unwrap();
        assert_relative_eq!(post.mean[0], prior.mean[0], epsilon = 1e-4);
        assert_relative_eq!(post.cov[(0, 0)], prior.cov[(0, 0)], max_relative = 1e-4);

        // exact data: posterior mean is the reading
        let strong = AffineObs {
            offset: DVector::zeros(2),
            gain: DVector::from_element(2, 1.0),
            noise: DVector::from_element(2, 1e-12),
        };
        let post = kalman_update(&strong, &y, &prior).unwrap();
        assert_relative_eq!(post.mean[0], 3.0, epsilon = 1e-4);
        assert_relative_eq!(post.mean[1], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn kalman_matches_information_form() {
        // covariance-form posterior equals N(M^-1 m, M^-1) with
        // M = B'D^-1B + C^-1, m = B'D^-1(y-a) + C^-1 mu
        let p = CovParams::new(2.0, 1.3, 0.2).unwrap();
        let sites = vec![loc(0.0, 0.0), loc(0.5, 0.1), loc(0.2, 0.9)];
        let c = build_cov(&sites, &p);
        let mean = DVector::from_column_slice(&[1.0, 2.0, 0.5]);
        let prior = GaussianSurface::new(mean.clone(), c.clone(), sites);
        let obs = AffineObs {
            offset: DVector::from_column_slice(&[0.5, -0.2, 0.0]),
            gain: DVector::from_column_slice(&[1.5, 0.8, 2.0]),
            noise: DVector::from_column_slice(&[0.5, 1.2, 0.3]),
        };
        let y = DVector::from_column_slice(&[3.0, 1.0, 2.0]);
        let post = kalman_update(&obs, &y, &prior).unwrap();

        let c_inv = c.clone().try_inverse().unwrap();
        let bdb = DMatrix::from_diagonal(&DVector::from_iterator(
            3,
            (0..3).map(|i| obs.gain[i] * obs.gain[i] / obs.noise[i]),
        ));
        let m_mat = &bdb + &c_inv;
        let m_inv = m_mat.try_inverse().unwrap();
        let rhs = DVector::from_iterator(
            3,
            (0..3).map(|i| obs.gain[i] / obs.noise[i] * (y[i] - obs.offset[i])),
        ) + &c_inv * &mean;
        let info_mean = &m_inv * rhs;
        for i in 0..3 {
            assert_relative_eq!(post.mean[i], info_mean[i], epsilon = 1e-9);
            for j in 0..3 {
                assert_relative_eq!(post.cov[(i, j)], m_inv[(i, j)], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn marginal_loglik_transparent_sensors_is_gp_density() {
        // B = I, a = 0, D ~ 0, no reference: marginal equals the GP density
        // of y directly (up to the negligible noise term)
        let theta = CovParams::new(1.5, 2.0, 0.3).unwrap();
        let sites = vec![loc(0.0, 0.0), loc(0.3, 0.4), loc(0.8, 0.1)];
        let y = vec![1.0, 2.0, 0.5];
        let input = FilterInput::new(
            vec![],
            vec![],
            vec![NetworkData {
                id: "n".into(),
                sites: sites.clone(),
                readings: y.clone(),
                covariates: vec![vec![]; 3],
                model: ObsModelParams::identity(1e-12),
            }],
            vec![],
        )
        .unwrap();
        let mu = 0.7;
        let ll = joint_marginal_loglik(mu, &theta, &input).unwrap();

        let c = build_cov(&sites, &theta);
        let f = chol_with_jitter(&c).unwrap();
        let r = DVector::from_iterator(3, y.iter().map(|v| v - mu));
        let direct = -0.5
            * (3.0 * (2.0 * std::f64::consts::PI).ln() + f.log_det() + f.quad_form(&r));
        assert_relative_eq!(ll, direct, epsilon = 1e-6);
    }

    #[test]
    fn marginal_loglik_scaling_identity() {
        // scaling sigma2, nugget, D by c and the centered data by sqrt(c)
        // shifts the log likelihood by -n/2 log c
        let sites = vec![loc(0.0, 0.0), loc(0.4, 0.3)];
        let ref_sites = vec![loc(0.9, 0.9)];
        let mu = 1.0;
        let c_scale = 3.7;

        let build = |scale: f64| {
            let s = scale.sqrt();
            // y = a + B*mu + sqrt(scale)*(orig residual)
            let resid = [0.8, -0.5];
            let readings: Vec<f64> =
                resid.iter().map(|r| 0.0 + 1.0 * mu + s * r).collect();
            let x0 = vec![mu + s * 0.3];
            FilterInput::new(
                ref_sites.clone(),
                x0,
                vec![NetworkData {
                    id: "n".into(),
                    sites: sites.clone(),
                    readings,
                    covariates: vec![vec![]; 2],
                    model: ObsModelParams::identity(scale * 0.5),
                }],
                vec![],
            )
            .unwrap()
        };
        let theta1 = CovParams::new(1.2, 1.5, 0.2).unwrap();
        let theta_c =
            CovParams::new(1.2 * c_scale, 1.5, 0.2 * c_scale).unwrap();
        let ll1 = joint_marginal_loglik(mu, &theta1, &build(1.0)).unwrap();
        let llc = joint_marginal_loglik(mu, &theta_c, &build(c_scale)).unwrap();
        let n = 3.0;
        assert_relative_eq!(llc - ll1, -n / 2.0 * c_scale.ln(), epsilon = 1e-9);
    }

    #[test]
    fn marginal_loglik_rejects_non_finite() {
        let input = one_site_identity_input();
        let theta = CovParams { sigma2: 1.0, phi: 1.0, nugget: 0.0 };
        assert!(joint_marginal_loglik(f64::NAN, &theta, &input).is_err());
    }

    #[test]
    fn summaries_need_enough_draws() {
        let samples = DMatrix::zeros(50, 2);
        assert!(matches!(
            summaries_from_samples(&samples, 0.95),
            Err(Error::TooFewDraws { have: 50, need: 100 })
        ));
    }

    #[test]
    fn summaries_of_constant_draws() {
        let samples = DMatrix::from_element(200, 1, 4.2);
        let s = summaries_from_samples(&samples, 0.95).unwrap();
        assert_relative_eq!(s[0].mean, 4.2, epsilon = 1e-12);
        assert_eq!((s[0].lower, s[0].upper), (4.2, 4.2));
    }

    #[test]
    fn prior_spec_phi_bounds_follow_geometry() {
        let sites = vec![loc(0.0, 0.0), loc(1.0, 0.0)];
        let (lo, hi) = PriorSpec::phi_bounds(&sites).unwrap();
        assert_relative_eq!(lo, -(0.98f64.ln()), epsilon = 1e-12);
        assert_relative_eq!(hi, -(0.02f64.ln()), epsilon = 1e-12);
        assert!(PriorSpec::phi_bounds(&[loc(0.0, 0.0)]).is_err());
    }
}
