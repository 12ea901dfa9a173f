//! Baseline interpolation and probabilistic evaluation.
//!
//! Point metrics (RMSE, MAE, bias), interval metrics at a chosen level
//! (coverage, mean width, interval score), sample-based CRPS, the percent
//! difference in credible-interval length between two models, pseudo-RMSE
//! against a nearby reference series, and inverse-distance-weighted
//! interpolation as the spatially-uninformed comparison method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Location;

/// Inverse-distance-weighted interpolation with weights `dist^(-power)`.
///
/// A target that coincides exactly with a known site takes that site's value
/// (the limit convention). Outputs are convex combinations of the known
/// values.
pub fn idw_interpolate(
    known_sites: &[Location],
    known_values: &[f64],
    targets: &[Location],
    power: f64,
) -> Result<Vec<f64>> {
    if known_sites.is_empty() || known_sites.len() != known_values.len() {
        return Err(Error::InvalidInput(format!(
            "idw needs matching non-empty sites ({}) and values ({})",
            known_sites.len(),
            known_values.len()
        )));
    }
    if !(power > 0.0) {
        return Err(Error::InvalidInput(format!("idw power {power} must be > 0")));
    }
    let mut out = Vec::with_capacity(targets.len());
    'targets: for t in targets {
        let mut num = 0.0;
        let mut den = 0.0;
        for (s, &v) in known_sites.iter().zip(known_values) {
            let d = t.dist(s);
            if d == 0.0 {
                out.push(v);
                continue 'targets;
            }
            let w = d.powf(-power);
            num += w * v;
            den += w;
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Root mean squared error, mean absolute error and bias (pred - truth).
pub fn point_metrics(pred: &[f64], truth: &[f64]) -> Result<(f64, f64, f64)> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "point metrics need equal non-empty inputs, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut bias = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        let d = p - t;
        se += d * d;
        ae += d.abs();
        bias += d;
    }
    Ok(((se / n).sqrt(), ae / n, bias / n))
}

/// Interval metrics for one batch of targets at level `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    /// Fraction of truths inside their interval (endpoints inclusive).
    pub coverage: f64,
    /// Mean interval width.
    pub width: f64,
    /// Mean interval score: width plus `2/alpha` times the exceedance
    /// outside either endpoint.
    pub interval_score: f64,
    /// Mean sample-based CRPS; NaN when no samples were supplied.
    pub crps: f64,
}

/// Coverage, width and interval score from per-target intervals, plus CRPS
/// when per-target posterior samples are available.
pub fn interval_metrics(
    lower: &[f64],
    upper: &[f64],
    truth: &[f64],
    level: f64,
    samples: Option<&[Vec<f64>]>,
) -> Result<IntervalMetrics> {
    let n = truth.len();
    if n == 0 || lower.len() != n || upper.len() != n {
        return Err(Error::InvalidInput(format!(
            "interval metrics need equal non-empty inputs ({} lower, {} upper, {n} truth)",
            lower.len(),
            upper.len()
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidInput(format!("level {level} must be in (0,1)")));
    }
    let alpha = 1.0 - level;
    let mut covered = 0usize;
    let mut width = 0.0;
    let mut score = 0.0;
    for i in 0..n {
        let (l, u, t) = (lower[i], upper[i], truth[i]);
        if !(l <= u) {
            return Err(Error::InvalidInput(format!(
                "malformed interval [{l}, {u}] at index {i}"
            )));
        }
        if (l..=u).contains(&t) {
            covered += 1;
        }
        width += u - l;
        score += (u - l) + 2.0 / alpha * ((l - t).max(0.0) + (t - u).max(0.0));
    }
    let crps = match samples {
        Some(draws) => {
            if draws.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{} sample vectors for {n} targets",
                    draws.len()
                )));
            }
            let mut acc = 0.0;
            for (d, &t) in draws.iter().zip(truth) {
                acc += crps_from_samples(d, t)?;
            }
            acc / n as f64
        }
        None => f64::NAN,
    };
    Ok(IntervalMetrics {
        coverage: covered as f64 / n as f64,
        width: width / n as f64,
        interval_score: score / n as f64,
        crps,
    })
}

/// Sample-based CRPS: `E|X - truth| - 0.5 E|X - X'|` with the pair term
/// averaged over distinct pairs (computed via the sorted-sample identity, so
/// cross-language reimplementations can match exactly).
pub fn crps_from_samples(samples: &[f64], truth: f64) -> Result<f64> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InvalidInput("CRPS needs at least one sample".into()));
    }
    let e_abs = samples.iter().map(|x| (x - truth).abs()).sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(e_abs);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample in CRPS"));
    // sum over i<j of (x_j - x_i) = sum_k (2k - n + 1) x_(k)
    let mut pair_sum = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        pair_sum += (2.0 * k as f64 - (n as f64 - 1.0)) * x;
    }
    let e_pair = 2.0 * pair_sum / (n as f64 * (n as f64 - 1.0));
    Ok(e_abs - 0.5 * e_pair)
}

/// Percent difference in credible-interval length: `(l2 - l1)/l1 * 100`.
pub fn ci_percent_diff(l2: f64, l1: f64) -> Result<f64> {
    if !(l1 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "baseline interval length must be positive, got {l1}"
        )));
    }
    Ok((l2 - l1) / l1 * 100.0)
}

/// Pseudo-RMSE: predictions at sites within `radius` of the reference
/// location, scored against the reference value as proxy truth. Pools over
/// all (site, timepoint) pairs: `pred` is indexed `[timepoint][site]` and
/// `reference_series[timepoint]` is the proxy truth.
pub fn pseudo_rmse(
    sites: &[Location],
    pred: &[Vec<f64>],
    reference_site: Location,
    reference_series: &[f64],
    radius: f64,
) -> Result<f64> {
    let in_radius: Vec<usize> = sites
        .iter()
        .enumerate()
        .filter(|(_, s)| s.dist(&reference_site) <= radius)
        .map(|(i, _)| i)
        .collect();
    if in_radius.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no sites within radius {radius} of the reference site"
        )));
    }
    if pred.len() != reference_series.len() {
        return Err(Error::InvalidInput(format!(
            "{} prediction timepoints vs {} reference values",
            pred.len(),
            reference_series.len()
        )));
    }
    let mut se = 0.0;
    let mut n = 0usize;
    for (row, &x0) in pred.iter().zip(reference_series) {
        for &i in &in_radius {
            let d = row[i] - x0;
            se += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("no prediction rows".into()));
    }
    Ok((se / n as f64).sqrt())
}

/// One row of the evaluation report: metrics for one method at one
/// timepoint, or aggregated over all of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    /// Timepoint key, or "all" for the aggregate block.
    pub timepoint: String,
    pub rmse: f64,
    pub mae: f64,
    pub bias: f64,
    pub coverage: f64,
    pub width: f64,
    pub interval_score: f64,
    pub crps: f64,
}
