//! GP-plus-point-source concentration fields with preferential sampling.
//!
//! Each dataset places one reference site inside a central square, two
//! low-cost networks of sites (network B optionally preferential, restricted
//! mostly to the top-left quadrant away from the sources), and an evaluation
//! grid. Per timepoint the truth is an ambient GP draw (floored at the
//! ambient minimum) plus two point-source terms decaying exponentially in
//! squared distance; readings follow fixed affine observation models with
//! standard deviation linear in the truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{max_pairwise_dist, Location};
use crate::gp::{build_cov, sample_gaussian, CovParams};
use crate::obs::CollocatedSeries;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSourceConfig {
    /// Low-cost sites per network.
    pub n_sites: usize,
    pub n_timepoints: usize,
    /// Whether network B is preferentially sampled.
    pub preferential: bool,
    /// Number of network-B sites left unrestricted under preferential
    /// sampling; the rest are pushed into the top-left quadrant.
    pub free_sites: usize,
    /// Point-source locations.
    pub sources: [Location; 2],
    /// Side of the central square the reference site is drawn from.
    pub reference_square: f64,
    /// Ambient mean: `mu_range.0 + (mu_range.1 - mu_range.0) * Beta(mu_beta)`.
    pub mu_range: (f64, f64),
    pub mu_beta: (f64, f64),
    /// Source emissions, same shifted-Beta construction.
    pub emission_range: (f64, f64),
    pub emission_beta: (f64, f64),
    /// Spatial variance as a fraction of the ambient mean.
    pub sigma2_frac: (f64, f64),
    pub sigma2_beta: (f64, f64),
    /// Nugget as a fraction of the spatial variance.
    pub nugget_frac: (f64, f64),
    /// Correlation at the farthest site pair, drawn uniformly in this range
    /// (kept high: the ambient surface is smooth).
    pub far_corr: (f64, f64),
    /// Distance at which a source's influence halves.
    pub psi_half_distance: f64,
    /// Multiplicative jitter on the implied decay.
    pub psi_jitter: (f64, f64),
    pub rh_range: (f64, f64),
    /// Network A observation model (intercept, gain, RH coefficient).
    pub obs_a: (f64, f64, f64),
    /// Network B observation model, 1.5x network A as published.
    pub obs_b: (f64, f64, f64),
    /// Noise variance `tau2 = .0 + .1 * x` per network; network B's variance
    /// is 2.25x network A's (its standard deviation is 1.5x).
    pub var_a: (f64, f64),
    pub var_b: (f64, f64),
    /// Evaluation lattice is `eval_grid_n` x `eval_grid_n` cell centers.
    pub eval_grid_n: usize,
}

impl Default for PointSourceConfig {
    fn default() -> Self {
        Self {
            n_sites: 30,
            n_timepoints: 100,
            preferential: true,
            free_sites: 6,
            sources: [Location::new(0.2, 0.1), Location::new(0.9, 0.2)],
            reference_square: 1.0 / 3.0,
            mu_range: (2.0, 37.0),
            mu_beta: (2.0, 5.0),
            emission_range: (20.0, 220.0),
            emission_beta: (2.0, 5.0),
            sigma2_frac: (0.3, 1.2),
            sigma2_beta: (2.0, 5.0),
            nugget_frac: (0.03, 0.10),
            far_corr: (0.7, 0.95),
            psi_half_distance: 0.30,
            psi_jitter: (0.8, 1.2),
            rh_range: (30.0, 90.0),
            obs_a: (-10.97, 1.91, 0.16),
            obs_b: (-16.46, 2.86, 0.25),
            var_a: (10.0, 0.5),
            var_b: (22.5, 1.13),
            eval_grid_n: 10,
        }
    }
}

/// Ground truth hyperparameters behind one timepoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S6HyperTruth {
    pub mu: f64,
    pub sigma2: f64,
    pub phi: f64,
    pub nugget: f64,
    pub emissions: [f64; 2],
    pub psi: [f64; 2],
}

/// One timepoint of an S6-style dataset.
#[derive(Debug, Clone)]
pub struct S6Timepoint {
    pub hyper: S6HyperTruth,
    pub truth_reference: f64,
    pub truth_a: Vec<f64>,
    pub truth_b: Vec<f64>,
    pub truth_grid: Vec<f64>,
    pub rh_a: Vec<f64>,
    pub rh_b: Vec<f64>,
    pub readings_a: Vec<f64>,
    pub readings_b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct S6Dataset {
    pub config: PointSourceConfig,
    pub reference_site: Location,
    pub sites_a: Vec<Location>,
    pub sites_b: Vec<Location>,
    pub grid: Vec<Location>,
    pub timepoints: Vec<S6Timepoint>,
}

fn scaled_beta(range: (f64, f64), shape: (f64, f64), rng: &mut impl Rng) -> f64 {
    let b = Beta::new(shape.0, shape.1).unwrap();
    range.0 + (range.1 - range.0) * b.sample(rng)
}

fn uniform_in(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}

/// Restrict all but the first `free` locations to the top-left quadrant,
/// resampling only the offending coordinate(s).
fn make_preferential(sites: &mut [Location], free: usize, rng: &mut impl Rng) {
    for s in sites.iter_mut().skip(free) {
        if s.x >= 0.5 {
            s.x = 0.5 * rng.random::<f64>();
        }
        if s.y < 0.5 {
            s.y = 0.5 + 0.5 * rng.random::<f64>();
        }
    }
}

/// Generate one dataset (site layout plus all timepoints).
pub fn generate_s6_dataset(cfg: &PointSourceConfig, seed: u64) -> Result<S6Dataset> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let half = cfg.reference_square / 2.0;
    let reference_site = Location::new(
        0.5 - half + cfg.reference_square * rng.random::<f64>(),
        0.5 - half + cfg.reference_square * rng.random::<f64>(),
    );
    let sites_a: Vec<Location> = (0..cfg.n_sites)
        .map(|_| Location::new(rng.random(), rng.random()))
        .collect();
    let mut sites_b: Vec<Location> = (0..cfg.n_sites)
        .map(|_| Location::new(rng.random(), rng.random()))
        .collect();
    if cfg.preferential {
        make_preferential(&mut sites_b, cfg.free_sites, &mut rng);
    }
    let g = cfg.eval_grid_n;
    let grid: Vec<Location> = (0..g * g)
        .map(|i| {
            Location::new(
                (i % g) as f64 / g as f64 + 0.5 / g as f64,
                (i / g) as f64 / g as f64 + 0.5 / g as f64,
            )
        })
        .collect();

    // all truth locations in one stacked GP draw per timepoint
    let mut all_sites = vec![reference_site];
    all_sites.extend(&sites_a);
    all_sites.extend(&sites_b);
    all_sites.extend(&grid);
    let mut network_sites = vec![reference_site];
    network_sites.extend(&sites_a);
    network_sites.extend(&sites_b);
    let d_max = max_pairwise_dist(&network_sites);

    let normal = Normal::new(0.0, 1.0).unwrap();
    let psi_base = std::f64::consts::LN_2 / (cfg.psi_half_distance * cfg.psi_half_distance);
    let n_a = cfg.n_sites;
    let n_grid = grid.len();
    let mut timepoints = Vec::with_capacity(cfg.n_timepoints);
    for _ in 0..cfg.n_timepoints {
        let mu = scaled_beta(cfg.mu_range, cfg.mu_beta, &mut rng);
        let sigma2 = mu * scaled_beta(cfg.sigma2_frac, cfg.sigma2_beta, &mut rng);
        let nugget = sigma2 * uniform_in(cfg.nugget_frac, &mut rng);
        let phi = -uniform_in(cfg.far_corr, &mut rng).ln() / d_max;
        let emissions = [
            scaled_beta(cfg.emission_range, cfg.emission_beta, &mut rng),
            scaled_beta(cfg.emission_range, cfg.emission_beta, &mut rng),
        ];
        let psi = [
            psi_base * uniform_in(cfg.psi_jitter, &mut rng),
            psi_base * uniform_in(cfg.psi_jitter, &mut rng),
        ];
        let theta = CovParams { sigma2, phi, nugget };
        let cov = build_cov(&all_sites, &theta);
        let mean = DVector::from_element(all_sites.len(), mu);
        let ambient = sample_gaussian(&mean, &cov, &mut rng)?;

        // truth = floored ambient + the two local source terms
        let truth: Vec<f64> = all_sites
            .iter()
            .zip(ambient.iter())
            .map(|(s, &amb)| {
                let local: f64 = (0..2)
                    .map(|i| emissions[i] * (-s.dist2(&cfg.sources[i]) * psi[i]).exp())
                    .sum();
                amb.max(cfg.mu_range.0) + local
            })
            .collect();

        let truth_reference = truth[0];
        let truth_a = truth[1..1 + n_a].to_vec();
        let truth_b = truth[1 + n_a..1 + 2 * n_a].to_vec();
        let truth_grid = truth[1 + 2 * n_a..1 + 2 * n_a + n_grid].to_vec();

        let rh_a: Vec<f64> = (0..n_a).map(|_| uniform_in(cfg.rh_range, &mut rng)).collect();
        let rh_b: Vec<f64> = (0..n_a).map(|_| uniform_in(cfg.rh_range, &mut rng)).collect();
        let readings_a: Vec<f64> = truth_a
            .iter()
            .zip(&rh_a)
            .map(|(&x, &rh)| {
                let sd = (cfg.var_a.0 + cfg.var_a.1 * x).sqrt();
                cfg.obs_a.0 + cfg.obs_a.1 * x + cfg.obs_a.2 * rh + sd * normal.sample(&mut rng)
            })
            .collect();
        let readings_b: Vec<f64> = truth_b
            .iter()
            .zip(&rh_b)
            .map(|(&x, &rh)| {
                let sd = (cfg.var_b.0 + cfg.var_b.1 * x).sqrt();
                cfg.obs_b.0 + cfg.obs_b.1 * x + cfg.obs_b.2 * rh + sd * normal.sample(&mut rng)
            })
            .collect();

        timepoints.push(S6Timepoint {
            hyper: S6HyperTruth { mu, sigma2, phi, nugget, emissions, psi },
            truth_reference,
            truth_a,
            truth_b,
            truth_grid,
            rh_a,
            rh_b,
            readings_a,
            readings_b,
        });
    }

    Ok(S6Dataset {
        config: cfg.clone(),
        reference_site,
        sites_a,
        sites_b,
        grid,
        timepoints,
    })
}

/// Residual pairs (truth, residual) pooled over all sites and timepoints of
/// one network, for training its variance model.
pub fn residual_pairs(ds: &S6Dataset, network_b: bool) -> (Vec<f64>, Vec<f64>) {
    let cfg = &ds.config;
    let obs = if network_b { cfg.obs_b } else { cfg.obs_a };
    let mut xs = Vec::new();
    let mut rs = Vec::new();
    for tp in &ds.timepoints {
        let (truth, rh, readings) = if network_b {
            (&tp.truth_b, &tp.rh_b, &tp.readings_b)
        } else {
            (&tp.truth_a, &tp.rh_a, &tp.readings_a)
        };
        for i in 0..truth.len() {
            xs.push(truth[i]);
            rs.push(readings[i] - (obs.0 + obs.1 * truth[i] + obs.2 * rh[i]));
        }
    }
    (xs, rs)
}

/// Configuration of the observation-model training-range experiment: the
/// regression is well specified but the variance model must extrapolate when
/// the training range is a fraction of the test range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeExperimentConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Upper end of the test concentration range.
    pub x_max: f64,
    /// Training range fraction for the restricted window.
    pub short_fraction: f64,
    /// True error variance `tau2 = var_intercept + var_slope * x`.
    pub var_intercept: f64,
    pub var_slope: f64,
    /// Concentrations are right-skewed: `x = x_max * Beta(x_beta)`.
    pub x_beta: (f64, f64),
    pub rh_range: (f64, f64),
    pub obs: (f64, f64, f64),
}

impl Default for RangeExperimentConfig {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 100,
            x_max: 24.0,
            short_fraction: 1.0 / 3.0,
            var_intercept: 0.02,
            var_slope: 1.0,
            x_beta: (1.2, 4.0),
            rh_range: (30.0, 90.0),
            obs: (-10.97, 1.91, 0.16),
        }
    }
}

impl RangeExperimentConfig {
    pub fn true_tau2(&self, x: f64) -> f64 {
        self.var_intercept + self.var_slope * x
    }
}

#[derive(Debug, Clone)]
pub struct RangeExperimentData {
    pub train_full: CollocatedSeries,
    pub train_short: CollocatedSeries,
    pub test: CollocatedSeries,
}

fn draw_series(
    n: usize,
    x_hi: f64,
    cfg: &RangeExperimentConfig,
    rng: &mut impl Rng,
) -> CollocatedSeries {
    let beta = Beta::new(cfg.x_beta.0, cfg.x_beta.1).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = x_hi * beta.sample(rng);
        let rh = uniform_in(cfg.rh_range, rng);
        let sd = cfg.true_tau2(xi).sqrt();
        y.push(cfg.obs.0 + cfg.obs.1 * xi + cfg.obs.2 * rh + sd * normal.sample(rng));
        x.push(xi);
        z.push(vec![rh]);
    }
    CollocatedSeries::new(x, y, z).expect("generated series is valid")
}

/// Generate the three collocated series of the range experiment: full-range
/// training, short-range training and full-range test.
pub fn generate_range_experiment(cfg: &RangeExperimentConfig, seed: u64) -> RangeExperimentData {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    RangeExperimentData {
        train_full: draw_series(cfg.n_train, cfg.x_max, cfg, &mut rng),
        train_short: draw_series(cfg.n_train, cfg.x_max * cfg.short_fraction, cfg, &mut rng),
        test: draw_series(cfg.n_test, cfg.x_max, cfg, &mut rng),
    }
}

/// A matrix view of grid truths: `truth[timepoint][grid index]`.
pub fn grid_truth_matrix(ds: &S6Dataset) -> DMatrix<f64> {
    let rows = ds.timepoints.len();
    let cols = ds.grid.len();
    DMatrix::from_fn(rows, cols, |t, j| ds.timepoints[t].truth_grid[j])
}
