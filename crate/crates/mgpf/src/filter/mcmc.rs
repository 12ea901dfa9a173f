//! Marginalized MCMC over the GP hyperparameters.
//!
//! Adaptive random-walk Metropolis, one component at a time, on transformed
//! coordinates: the mean on its natural scale with reflection at zero (the
//! half-normal prior lives on the nonnegative half-line), log spatial
//! variance, log nugget, and a logit-scaled decay pinned inside its bounds.
//! Proposal scales adapt toward a target acceptance rate during burn-in and
//! are frozen afterwards.
//!
//! Mean-only proposals reuse the current covariance factorization; only
//! covariance-parameter proposals pay for a new Cholesky.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp::{conditional_gp, sample_gaussian, CholFactor, CovParams};
use crate::stats;

use super::{
    assemble_affine, kalman_update, naive_inversions, summaries_from_samples, AffineObs,
    FieldSite, FilterInput, FilterMeta, HyperDraw, MarginalModel, PosteriorField, PriorSpec,
    SiteRole,
};

/// Pinned hyperparameters: the sampler skips the hyperparameter moves and
/// produces exact conditional draws of the latent field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedHyper {
    pub mu: f64,
    pub theta: CovParams,
}

/// Chain configuration. Every run takes an explicit seed; identical seeds
/// give identical output bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub seed: u64,
    pub fixed_hyper: Option<FixedHyper>,
}

impl ChainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            iterations: 5000,
            burn_in: 2000,
            thin: 3,
            target_accept: 0.30,
            seed,
            fixed_hyper: None,
        }
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidInput(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be >= 1".into()));
        }
        if !(0.0 < self.target_accept && self.target_accept < 1.0) {
            return Err(Error::InvalidInput("target acceptance must be in (0,1)".into()));
        }
        if self.retained() < 100 {
            return Err(Error::InvalidInput(format!(
                "chain retains {} draws; need at least 100 for summaries",
                self.retained()
            )));
        }
        Ok(())
    }
}

fn sigmoid(w: f64) -> f64 {
    1.0 / (1.0 + (-w).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Transformed chain state `[mu, ln sigma2, logit-scaled phi, ln nugget]`.
#[derive(Clone, Copy)]
struct StateVec([f64; 4]);

impl StateVec {
    fn theta(&self, prior: &PriorSpec) -> CovParams {
        let p = sigmoid(self.0[2]);
        CovParams {
            sigma2: self.0[1].exp(),
            phi: prior.phi_min + (prior.phi_max - prior.phi_min) * p,
            nugget: self.0[3].exp(),
        }
    }

    fn mu(&self) -> f64 {
        self.0[0]
    }
}

/// Log prior in the transformed coordinates, Jacobians included. Out-of-bound
/// variance proposals get negative infinity.
fn log_prior(v: &StateVec, prior: &PriorSpec) -> f64 {
    let mu = v.0[0];
    let s2 = v.0[1].exp();
    let nug = v.0[3].exp();
    if s2 >= prior.sigma2_max || nug >= prior.nugget_max {
        return f64::NEG_INFINITY;
    }
    let p = sigmoid(v.0[2]);
    let half_normal = -mu * mu / (2.0 * prior.mu_scale * prior.mu_scale);
    half_normal + v.0[1] + v.0[3] + p.ln() + (1.0 - p).ln()
}

struct LatentSampler<'a> {
    input: &'a FilterInput,
    obs: AffineObs,
    y: DVector<f64>,
    lowcost: Vec<crate::geom::Location>,
}

impl<'a> LatentSampler<'a> {
    fn new(input: &'a FilterInput) -> Result<Self> {
        Ok(Self {
            input,
            obs: assemble_affine(input)?,
            y: input.stacked_readings(),
            lowcost: input.lowcost_sites(),
        })
    }

    /// One exact draw of the latent field at the low-cost sites (Kalman
    /// update against the reference-conditioned GP prior) and at the grid
    /// (kriging given the reference values and the sampled field).
    fn draw(
        &self,
        mu: f64,
        theta: &CovParams,
        rng: &mut impl Rng,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let cond_prior = conditional_gp(
            mu,
            theta,
            &self.input.reference_sites,
            &self.input.reference_values,
            &self.lowcost,
        )?;
        let post = kalman_update(&self.obs, &self.y, &cond_prior)?;
        let x_star = sample_gaussian(&post.mean, &post.cov, rng)?;

        if self.input.grid.is_empty() {
            return Ok((x_star, DVector::zeros(0)));
        }
        let mut cond_sites = self.input.reference_sites.clone();
        cond_sites.extend_from_slice(&self.lowcost);
        let mut cond_values = self.input.reference_values.clone();
        cond_values.extend(x_star.iter().copied());
        let g = conditional_gp(mu, theta, &cond_sites, &cond_values, &self.input.grid)?;
        let x_grid = sample_gaussian(&g.mean, &g.cov, rng)?;
        Ok((x_star, x_grid))
    }
}

fn output_sites(input: &FilterInput) -> Vec<FieldSite> {
    let mut sites = Vec::new();
    for (i, loc) in input.reference_sites.iter().enumerate() {
        sites.push(FieldSite { role: SiteRole::Reference, location: *loc, index: i });
    }
    for n in &input.networks {
        for (i, loc) in n.sites.iter().enumerate() {
            sites.push(FieldSite {
                role: SiteRole::Network { id: n.id.clone() },
                location: *loc,
                index: i,
            });
        }
    }
    for (i, loc) in input.grid.iter().enumerate() {
        sites.push(FieldSite { role: SiteRole::Grid, location: *loc, index: i });
    }
    sites
}

/// Run the marginalized filter at one timepoint.
///
/// MCMC targets the posterior of `(mu, sigma2, phi, nugget)` under the
/// marginal likelihood of the observed data; each retained draw is completed
/// with one exact conditional draw of the latent concentrations. Reference
/// sites pass through with their observed values and zero-width intervals.
pub fn mcmc_filter(
    input: &FilterInput,
    prior: &PriorSpec,
    cfg: &ChainConfig,
) -> Result<PosteriorField> {
    cfg.validate()?;
    prior.validate()?;
    if input.n_lowcost() == 0 {
        return Err(Error::InvalidInput(
            "filter needs at least one active low-cost site".into(),
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let latent = LatentSampler::new(input)?;
    let model = MarginalModel::new(input)?;

    let n_ref = input.reference_sites.len();
    let n_low = input.n_lowcost();
    let n_grid = input.grid.len();
    let retained = cfg.retained();
    let mut x_samples = DMatrix::zeros(retained, n_ref + n_low + n_grid);
    let mut hyper_samples = Vec::with_capacity(retained);

    let record = |row: usize,
                      draw: &HyperDraw,
                      x_star: &DVector<f64>,
                      x_grid: &DVector<f64>,
                      x_samples: &mut DMatrix<f64>,
                      hyper_samples: &mut Vec<HyperDraw>| {
        for (j, v) in input.reference_values.iter().enumerate() {
            x_samples[(row, j)] = *v;
        }
        for (j, v) in x_star.iter().enumerate() {
            x_samples[(row, n_ref + j)] = *v;
        }
        for (j, v) in x_grid.iter().enumerate() {
            x_samples[(row, n_ref + n_low + j)] = *v;
        }
        hyper_samples.push(*draw);
    };

    let meta;
    if let Some(fixed) = cfg.fixed_hyper {
        fixed.theta.validate()?;
        let draw = HyperDraw {
            mu: fixed.mu,
            sigma2: fixed.theta.sigma2,
            phi: fixed.theta.phi,
            nugget: fixed.theta.nugget,
        };
        for row in 0..retained {
            let (x_star, x_grid) = latent.draw(fixed.mu, &fixed.theta, &mut rng)?;
            record(row, &draw, &x_star, &x_grid, &mut x_samples, &mut hyper_samples);
        }
        meta = FilterMeta {
            seed: cfg.seed,
            retained,
            acceptance: None,
            warnings: Vec::new(),
        };
    } else {
        // initial state: pooled point estimates for the mean, quarter-range
        // variances, geometric-mean decay
        let mut pooled = naive_inversions(input)?;
        pooled.extend_from_slice(&input.reference_values);
        let mu0 = stats::mean(&pooled).max(0.0);
        let mut state = StateVec([
            if mu0.is_finite() { mu0 } else { 0.0 },
            (prior.sigma2_max / 4.0).ln(),
            logit(0.5),
            (prior.nugget_max / 4.0).ln(),
        ]);
        let mut factor: CholFactor = model.factor(&state.theta(prior))?;
        let mut log_post = model.loglik_with(&factor, state.mu()) + log_prior(&state, prior);

        let mut log_sd = [
            (0.05 * prior.mu_scale).max(1e-3).ln(),
            0.5f64.ln(),
            0.5f64.ln(),
            0.5f64.ln(),
        ];
        let mut accepted = [0usize; 4];
        let mut proposed = [0usize; 4];

        for it in 0..cfg.iterations {
            for comp in 0..4 {
                let mut prop = state;
                let step: f64 = rng.sample(StandardNormal);
                prop.0[comp] += log_sd[comp].exp() * step;
                if comp == 0 {
                    prop.0[0] = prop.0[0].abs(); // reflect at zero
                }
                let lp_prior = log_prior(&prop, prior);
                let mut alpha = 0.0;
                let mut prop_factor: Option<CholFactor> = None;
                if lp_prior > f64::NEG_INFINITY {
                    let lp = if comp == 0 {
                        Some(model.loglik_with(&factor, prop.mu()) + lp_prior)
                    } else {
                        match model.factor(&prop.theta(prior)) {
                            Ok(f) => {
                                let v = model.loglik_with(&f, prop.mu()) + lp_prior;
                                prop_factor = Some(f);
                                Some(v)
                            }
                            // an unfactorizable proposal is simply rejected
                            Err(Error::IllConditioned(_)) => None,
                            Err(e) => return Err(e),
                        }
                    };
                    if let Some(lp) = lp {
                        alpha = (lp - log_post).exp().min(1.0);
                        if rng.random::<f64>() < alpha {
                            state = prop;
                            log_post = lp;
                            if let Some(f) = prop_factor {
                                factor = f;
                            }
                            if it >= cfg.burn_in {
                                accepted[comp] += 1;
                            }
                        }
                    }
                }
                if it >= cfg.burn_in {
                    proposed[comp] += 1;
                } else {
                    // diminishing adaptation toward the target rate
                    let gamma = (it as f64 + 1.0).powf(-0.6);
                    log_sd[comp] = (log_sd[comp] + gamma * (alpha - cfg.target_accept))
                        .clamp(-20.0, 20.0);
                }
            }

            if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
                let theta = state.theta(prior);
                let draw = HyperDraw {
                    mu: state.mu(),
                    sigma2: theta.sigma2,
                    phi: theta.phi,
                    nugget: theta.nugget,
                };
                let row = (it - cfg.burn_in) / cfg.thin;
                let (x_star, x_grid) = latent.draw(state.mu(), &theta, &mut rng)?;
                record(row, &draw, &x_star, &x_grid, &mut x_samples, &mut hyper_samples);
            }
        }

        if accepted.iter().sum::<usize>() == 0 {
            return Err(Error::AllRejected);
        }
        let rates = [
            accepted[0] as f64 / proposed[0].max(1) as f64,
            accepted[1] as f64 / proposed[1].max(1) as f64,
            accepted[2] as f64 / proposed[2].max(1) as f64,
            accepted[3] as f64 / proposed[3].max(1) as f64,
        ];
        let names = ["mu", "sigma2", "phi", "nugget"];
        let mut warnings = Vec::new();
        for (name, r) in names.iter().zip(rates) {
            if !(0.05..=0.8).contains(&r) {
                warnings.push(format!(
                    "component {name} acceptance rate {r:.3} outside [0.05, 0.80]"
                ));
            }
        }
        meta = FilterMeta {
            seed: cfg.seed,
            retained,
            acceptance: Some(rates),
            warnings,
        };
    }

    let mut summaries = summaries_from_samples(&x_samples, 0.95)?;
    // reference sites pass through exactly, immune to summary rounding
    for (j, v) in input.reference_values.iter().enumerate() {
        summaries[j] = super::IntervalSummary { mean: *v, lower: *v, upper: *v };
    }
    Ok(PosteriorField {
        sites: output_sites(input),
        hyper_samples,
        x_samples,
        summaries,
        meta,
    })
}
