//! Stochastic advection–diffusion source model on a square lattice.
//!
//! The field evolves by explicit Euler steps combining upwind advection under
//! a time-varying wind, source-masked diffusion, uniform decay and a stream
//! of elliptical Gaussian plume sources with heavy-tailed strengths and
//! linear fade. Boundaries are reflective (edge copy, zero gradient). Each
//! step the field restricted to the unit square is linearly rescaled to a
//! fixed concentration range for output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{centroid, Location};
use crate::stats;

/// Geometry and dynamics of the plume simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlumeConfig {
    /// Lattice points per axis over `[lo, hi]`.
    pub lattice: usize,
    pub lo: f64,
    pub hi: f64,
    pub dt: f64,
    pub steps: usize,
    /// Uniform removal rate.
    pub decay: f64,
    pub initial_sources: usize,
    /// One new source every this many steps after the first.
    pub spawn_period: usize,
    /// Cluster window for preferential source placement.
    pub cluster_window: (f64, f64),
    pub cluster_prob: f64,
    /// Margin of the crop window used to classify interior vs external
    /// sources.
    pub crop_margin: f64,
    pub interior_scale: (f64, f64),
    pub exterior_scale: (f64, f64),
    /// Orientation angle drawn uniformly in `[-angle_max, angle_max]`.
    pub angle_max: f64,
    pub diffusion: (f64, f64),
    /// Irregularity `J = 1 + amp sin(kx) sin(ky) + noise_scale * xi`.
    pub irregularity_amp: f64,
    pub irregularity_freq: f64,
    pub irregularity_noise: f64,
    pub rescale_range: (f64, f64),
}

impl Default for PlumeConfig {
    fn default() -> Self {
        Self {
            lattice: 141,
            lo: -0.2,
            hi: 1.2,
            dt: 0.01,
            steps: 500,
            decay: 10.0,
            initial_sources: 5,
            spawn_period: 10,
            cluster_window: (0.1, 0.3),
            cluster_prob: 0.2,
            crop_margin: 0.02,
            interior_scale: (0.06, 0.1),
            exterior_scale: (1.2, 2.4),
            angle_max: std::f64::consts::FRAC_PI_4,
            diffusion: (0.005, 0.01),
            irregularity_amp: 0.3,
            irregularity_freq: 3.0,
            irregularity_noise: 0.1,
            rescale_range: (3.0, 253.0),
        }
    }
}

impl PlumeConfig {
    /// Reduced-scale variant (coarser lattice, shorter run).
    pub fn reduced(lattice: usize, steps: usize) -> Self {
        Self { lattice, steps, ..Self::default() }
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.lattice - 1) as f64
    }

    /// Lattice indices whose coordinate falls inside the unit square.
    fn crop_indices(&self) -> Vec<usize> {
        let dx = self.dx();
        (0..self.lattice)
            .filter(|&i| {
                let x = self.lo + i as f64 * dx;
                x >= -1e-9 && x <= 1.0 + 1e-9
            })
            .collect()
    }
}

/// Rectangular lattice of concentrations, x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub n: usize,
    pub lo: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn zeros(cfg: &PlumeConfig) -> Self {
        Self {
            n: cfg.lattice,
            lo: cfg.lo,
            dx: cfg.dx(),
            values: vec![0.0; cfg.lattice * cfg.lattice],
        }
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.n + ix]
    }

    #[inline]
    fn set(&mut self, ix: usize, iy: usize, v: f64) {
        self.values[iy * self.n + ix] = v;
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx
    }
}

/// One plume source with its precomputed lattice footprint.
#[derive(Debug, Clone)]
pub struct PlumeSource {
    pub center: Location,
    pub scale_x: f64,
    pub scale_y: f64,
    pub angle: f64,
    pub amplitude: f64,
    pub start: usize,
    pub lifetime: usize,
    pub diffusion: f64,
    /// Footprint `B_s` over the lattice (x fastest), and its maximum for the
    /// normalized diffusion mask.
    footprint: Vec<f64>,
    footprint_max: f64,
}

impl PlumeSource {
    /// Linear fade factor at step `t`; zero outside `[start, start+lifetime]`.
    pub fn fade(&self, t: usize) -> f64 {
        if t < self.start || t > self.start + self.lifetime {
            return 0.0;
        }
        1.0 - (t - self.start) as f64 / self.lifetime as f64
    }

    pub fn expired(&self, t: usize) -> bool {
        t > self.start + self.lifetime
    }
}

/// Time-varying wind: a dominant eastward component with a weaker
/// north-south oscillation.
pub fn wind(t: usize) -> (f64, f64) {
    let t = t as f64;
    (
        0.2 + 0.4 * (2.0 * std::f64::consts::PI * t / 40.0).sin(),
        0.09 + 0.2 * (2.0 * std::f64::consts::PI * t / 60.0).cos(),
    )
}

/// White noise smoothed by three passes of the five-point averaging stencil,
/// scaled to unit standard deviation.
fn smoothed_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut field: Vec<f64> = (0..n * n).map(|_| normal.sample(rng)).collect();
    let idx = |ix: usize, iy: usize| iy * n + ix;
    for _ in 0..3 {
        let prev = field.clone();
        for iy in 0..n {
            for ix in 0..n {
                let left = prev[idx(ix.saturating_sub(1), iy)];
                let right = prev[idx((ix + 1).min(n - 1), iy)];
                let down = prev[idx(ix, iy.saturating_sub(1))];
                let up = prev[idx(ix, (iy + 1).min(n - 1))];
                field[idx(ix, iy)] = (prev[idx(ix, iy)] + left + right + down + up) / 5.0;
            }
        }
    }
    let sd = stats::std_dev(&field).max(1e-12);
    for v in &mut field {
        *v /= sd;
    }
    field
}

fn sample_amplitude(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    if u < 0.95 {
        let beta = Beta::new(2.0, 5.0).unwrap();
        1.0 + 9.0 * beta.sample(rng)
    } else if u < 0.995 {
        let v: f64 = rng.random();
        (10.0 * v.powf(-0.5)).min(100.0)
    } else {
        100.0 + 200.0 * rng.random::<f64>()
    }
}

fn make_source(t: usize, cfg: &PlumeConfig, rng: &mut impl Rng) -> PlumeSource {
    let (clo, chi) = cfg.cluster_window;
    let center = if rng.random::<f64>() < cfg.cluster_prob {
        Location::new(
            clo + (chi - clo) * rng.random::<f64>(),
            clo + (chi - clo) * rng.random::<f64>(),
        )
    } else {
        Location::new(
            cfg.lo + (cfg.hi - cfg.lo) * rng.random::<f64>(),
            cfg.lo + (cfg.hi - cfg.lo) * rng.random::<f64>(),
        )
    };
    let inner_lo = cfg.lo + cfg.crop_margin;
    let inner_hi = cfg.hi - cfg.crop_margin;
    let interior = center.x >= inner_lo && center.x <= inner_hi && center.y >= inner_lo && center.y <= inner_hi;
    let (slo, shi) = if interior { cfg.interior_scale } else { cfg.exterior_scale };
    let scale_x = slo + (shi - slo) * rng.random::<f64>();
    let scale_y = slo + (shi - slo) * rng.random::<f64>();
    let angle = -cfg.angle_max + 2.0 * cfg.angle_max * rng.random::<f64>();
    let amplitude = sample_amplitude(rng);
    let lifetime = ((1.0 + (scale_x * scale_x + scale_y * scale_y).sqrt()).round() as usize).max(1);
    let (dlo, dhi) = cfg.diffusion;
    let diffusion = dlo + (dhi - dlo) * rng.random::<f64>();

    let n = cfg.lattice;
    let dx = cfg.dx();
    let xi = smoothed_noise(n, rng);
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut footprint = vec![0.0; n * n];
    let mut footprint_max = 0.0f64;
    for iy in 0..n {
        let y = cfg.lo + iy as f64 * dx;
        for ix in 0..n {
            let x = cfg.lo + ix as f64 * dx;
            let rx = x - center.x;
            let ry = y - center.y;
            let xt = ca * rx + sa * ry;
            let yt = -sa * rx + ca * ry;
            let bump = (-(xt * xt) / (2.0 * scale_x * scale_x)
                - (yt * yt) / (2.0 * scale_y * scale_y))
                .exp();
            let j = 1.0
                + cfg.irregularity_amp
                    * (cfg.irregularity_freq * x).sin()
                    * (cfg.irregularity_freq * y).sin()
                + cfg.irregularity_noise * xi[iy * n + ix];
            let v = bump * j;
            footprint[iy * n + ix] = v;
            footprint_max = footprint_max.max(v);
        }
    }
    PlumeSource {
        center,
        scale_x,
        scale_y,
        angle,
        amplitude,
        start: t,
        lifetime,
        diffusion,
        footprint,
        footprint_max: footprint_max.max(f64::MIN_POSITIVE),
    }
}

/// Sources introduced at step `t`: a burst at the first step, then one per
/// spawn period.
pub fn spawn_sources(t: usize, cfg: &PlumeConfig, rng: &mut impl Rng) -> Vec<PlumeSource> {
    let count = if t == 1 {
        cfg.initial_sources
    } else if t > 1 && (t - 1) % cfg.spawn_period == 0 {
        1
    } else {
        0
    };
    (0..count).map(|_| make_source(t, cfg, rng)).collect()
}

/// One explicit Euler step at time `t` under the given wind.
///
/// Spatial differences copy edge values at the boundary (zero gradient), so
/// a uniform field has zero advection and diffusion everywhere. The decay is
/// applied as `X * (1 - decay*dt)` so the source-free, wind-free update
/// equals the closed-form geometric decay exactly.
pub fn euler_step(
    field: &FieldGrid,
    sources: &[PlumeSource],
    wind: (f64, f64),
    t: usize,
    cfg: &PlumeConfig,
) -> Result<FieldGrid> {
    let n = field.n;
    let dx = field.dx;
    let (vx, vy) = wind;
    let mut out = field.clone();
    let active: Vec<(&PlumeSource, f64)> =
        sources.iter().filter(|s| !s.expired(t)).map(|s| (s, s.fade(t))).collect();
    let keep = 1.0 - cfg.decay * cfg.dt;
    for iy in 0..n {
        for ix in 0..n {
            let c = field.at(ix, iy);
            let xm = field.at(ix.saturating_sub(1), iy);
            let xp = field.at((ix + 1).min(n - 1), iy);
            let ym = field.at(ix, iy.saturating_sub(1));
            let yp = field.at(ix, (iy + 1).min(n - 1));

            let ddx = if vx >= 0.0 { (c - xm) / dx } else { (xp - c) / dx };
            let ddy = if vy >= 0.0 { (c - ym) / dx } else { (yp - c) / dx };
            let lap = (xp + xm + yp + ym - 4.0 * c) / (dx * dx);

            let mut diff = 0.0;
            let mut src = 0.0;
            for (s, fade) in &active {
                let mask = s.footprint[iy * n + ix] / s.footprint_max;
                diff += s.diffusion * mask * lap;
                src += fade * s.amplitude * s.footprint[iy * n + ix];
            }

            let v = c * keep + cfg.dt * (-vx * ddx - vy * ddy + diff + src);
            if !v.is_finite() {
                return Err(Error::Unstable(format!(
                    "non-finite field value at ({ix},{iy}), step {t}"
                )));
            }
            out.set(ix, iy, v);
        }
    }
    Ok(out)
}

/// The field restricted to the unit square, linearly rescaled to the output
/// range (min and max of the rescale range are attained exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct CroppedFrame {
    /// Lattice points per axis over `[0, 1]`.
    pub n: usize,
    pub values: Vec<f64>,
}

impl CroppedFrame {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.n + ix]
    }

    /// Bilinear interpolation at a point of the unit square (clamped).
    pub fn bilinear(&self, loc: Location) -> f64 {
        let h = self.spacing();
        let fx = loc.x.clamp(0.0, 1.0) / h;
        let fy = loc.y.clamp(0.0, 1.0) / h;
        let ix = (fx.floor() as usize).min(self.n - 2);
        let iy = (fy.floor() as usize).min(self.n - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = self.at(ix, iy);
        let v10 = self.at(ix + 1, iy);
        let v01 = self.at(ix, iy + 1);
        let v11 = self.at(ix + 1, iy + 1);
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty
            + v11 * tx * ty
    }
}

/// Crop to the unit square and rescale linearly into the output range. A
/// constant cropped field cannot be rescaled and is an error.
pub fn crop_rescale(field: &FieldGrid, cfg: &PlumeConfig) -> Result<CroppedFrame> {
    let idx = cfg.crop_indices();
    let nc = idx.len();
    let mut values = Vec::with_capacity(nc * nc);
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for &iy in &idx {
        for &ix in &idx {
            let v = field.at(ix, iy);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
            values.push(v);
        }
    }
    if !(vmax > vmin) {
        return Err(Error::Degenerate(format!(
            "cropped field is constant at {vmin}; cannot rescale"
        )));
    }
    let (rlo, rhi) = cfg.rescale_range;
    let span = rhi - rlo;
    for v in &mut values {
        *v = rlo + (*v - vmin) / (vmax - vmin) * span;
    }
    Ok(CroppedFrame { n: nc, values })
}

/// Stateful simulation driver: step the field and read cropped frames.
pub struct PlumeSimulation {
    cfg: PlumeConfig,
    rng: ChaCha12Rng,
    field: FieldGrid,
    sources: Vec<PlumeSource>,
    t: usize,
}

impl PlumeSimulation {
    pub fn new(cfg: PlumeConfig, seed: u64) -> Self {
        let field = FieldGrid::zeros(&cfg);
        Self { cfg, rng: ChaCha12Rng::seed_from_u64(seed), field, sources: Vec::new(), t: 0 }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn config(&self) -> &PlumeConfig {
        &self.cfg
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.t + 1;
        self.sources.extend(spawn_sources(t, &self.cfg, &mut self.rng));
        self.sources.retain(|s| !s.expired(t));
        self.field = euler_step(&self.field, &self.sources, wind(t), t, &self.cfg)?;
        self.t = t;
        Ok(())
    }

    pub fn frame(&self) -> Result<CroppedFrame> {
        crop_rescale(&self.field, &self.cfg)
    }

    pub fn raw_field(&self) -> &FieldGrid {
        &self.field
    }
}

/// Run the full simulation, returning one cropped rescaled frame per step.
pub fn run_plume(cfg: &PlumeConfig, seed: u64) -> Result<Vec<CroppedFrame>> {
    let mut sim = PlumeSimulation::new(cfg.clone(), seed);
    let mut frames = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        sim.step()?;
        frames.push(sim.frame()?);
    }
    Ok(frames)
}

/// Calibration and noise of one synthetic network: `y = offset + gain*x + e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkCalibration {
    pub offset: f64,
    pub gain: f64,
    pub noise_sd: f64,
}

/// The two synthetic networks' calibrations.
pub const S5_CALIBRATIONS: [NetworkCalibration; 2] = [
    NetworkCalibration { offset: 1.0, gain: 1.2, noise_sd: 2.0 },
    NetworkCalibration { offset: 2.0, gain: 1.5, noise_sd: 1.0 },
];

/// Site layout of the two synthetic networks with their colocated sites.
#[derive(Debug, Clone)]
pub struct S5Networks {
    pub sites: [Vec<Location>; 2],
    /// Index of the sensor closest to each network's centroid; these sites
    /// act as collocated reference sites.
    pub colocated: [usize; 2],
}

fn nearest_to_centroid(sites: &[Location]) -> usize {
    let c = centroid(sites);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in sites.iter().enumerate() {
        let d = s.dist2(&c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Network 1 uniform over the unit square; network 2 uniform over the
/// complement of the lower-left quadrant.
pub fn generate_networks(n1: usize, n2: usize, rng: &mut impl Rng) -> S5Networks {
    let net1: Vec<Location> = (0..n1)
        .map(|_| Location::new(rng.random(), rng.random()))
        .collect();
    let mut net2 = Vec::with_capacity(n2);
    while net2.len() < n2 {
        let s = Location::new(rng.random(), rng.random());
        if !(s.x < 0.5 && s.y < 0.5) {
            net2.push(s);
        }
    }
    let colocated = [nearest_to_centroid(&net1), nearest_to_centroid(&net2)];
    S5Networks { sites: [net1, net2], colocated }
}

/// Biased noisy readings of the truth at each site.
pub fn synth_obs(truth: &[f64], cal: &NetworkCalibration, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    truth
        .iter()
        .map(|&x| cal.offset + cal.gain * x + cal.noise_sd * normal.sample(rng))
        .collect()
}

/// A complete synthetic two-network dataset: the truth stack, network
/// layouts, truths interpolated to the sensors, and noisy readings.
#[derive(Debug, Clone)]
pub struct S5Dataset {
    pub frames: Vec<CroppedFrame>,
    pub networks: S5Networks,
    pub calibrations: [NetworkCalibration; 2],
    /// `truth[net][t][site]`
    pub truth: [Vec<Vec<f64>>; 2],
    /// `readings[net][t][site]`
    pub readings: [Vec<Vec<f64>>; 2],
}

/// Generate the field, place the networks and observe them at every step.
pub fn generate_s5_dataset(
    cfg: &PlumeConfig,
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<S5Dataset> {
    let frames = run_plume(cfg, seed)?;
    // independent stream for the observation layer so field and networks can
    // be regenerated separately
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x53355335);
    let networks = generate_networks(n1, n2, &mut rng);
    let mut truth: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut readings: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for frame in &frames {
        for k in 0..2 {
            let tv: Vec<f64> = networks.sites[k].iter().map(|s| frame.bilinear(*s)).collect();
            let yv = synth_obs(&tv, &S5_CALIBRATIONS[k], &mut rng);
            truth[k].push(tv);
            readings[k].push(yv);
        }
    }
    Ok(S5Dataset { frames, networks, calibrations: S5_CALIBRATIONS, truth, readings })
}
