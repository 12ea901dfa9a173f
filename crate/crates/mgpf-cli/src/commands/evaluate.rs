//! `evaluate`: score prediction files against simulation truth or a nearby
//! reference proxy, and compare credible-interval lengths between methods.

use std::collections::BTreeMap;
use std::path::Path;

use mgpf::metrics::{ci_percent_diff, interval_metrics, point_metrics, MetricRow};
use mgpf::stats;

use crate::config::{resolve, EvaluateConfig};
use crate::error::{validation, CliResult};
use crate::io::{self, PredictionRecord};

struct MethodData {
    name: String,
    predictions: Vec<PredictionRecord>,
    samples: Option<BTreeMap<(String, String), Vec<f64>>>,
}

fn load_methods(config_path: &Path, cfg: &EvaluateConfig) -> CliResult<Vec<MethodData>> {
    if cfg.methods.is_empty() {
        return Err(validation("no methods to evaluate"));
    }
    cfg.methods
        .iter()
        .map(|m| {
            let predictions = io::read_predictions(&resolve(config_path, &m.predictions))?;
            let samples = match &m.samples {
                Some(p) => Some(io::read_samples(&resolve(config_path, p))?),
                None => None,
            };
            Ok(MethodData { name: m.name.clone(), predictions, samples })
        })
        .collect()
}

/// Scoreable rows: everything but the pass-through reference sites.
fn scoreable(rows: &[PredictionRecord]) -> impl Iterator<Item = &PredictionRecord> {
    rows.iter().filter(|r| r.role != "reference")
}

fn simulation_metrics(
    method: &MethodData,
    truth: &BTreeMap<(String, String), f64>,
    level: f64,
) -> CliResult<Vec<MetricRow>> {
    let mut by_time: BTreeMap<String, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in scoreable(&method.predictions) {
        by_time.entry(r.timestamp.clone()).or_default().push(r);
    }
    if by_time.is_empty() {
        return Err(validation(format!("method {}: no scoreable predictions", method.name)));
    }

    let mut rows = Vec::new();
    let mut pool_pred = Vec::new();
    let mut pool_truth = Vec::new();
    let mut pool_lower = Vec::new();
    let mut pool_upper = Vec::new();
    let mut pool_samples: Option<Vec<Vec<f64>>> = method.samples.is_some().then(Vec::new);

    for (ts, recs) in &by_time {
        let mut pred = Vec::new();
        let mut tr = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut samples: Option<Vec<Vec<f64>>> = method.samples.is_some().then(Vec::new);
        for r in recs {
            let key = (r.site_id.clone(), r.timestamp.clone());
            let t = truth.get(&key).ok_or_else(|| {
                validation(format!(
                    "missing truth for site '{}' at {} (simulation mode requires full truth)",
                    r.site_id, r.timestamp
                ))
            })?;
            pred.push(r.mean);
            tr.push(*t);
            lower.push(r.lower);
            upper.push(r.upper);
            if let (Some(s), Some(all)) = (method.samples.as_ref(), samples.as_mut()) {
                let draws = s.get(&key).ok_or_else(|| {
                    validation(format!(
                        "samples file for method {} lacks site '{}' at {}",
                        method.name, r.site_id, r.timestamp
                    ))
                })?;
                all.push(draws.clone());
            }
        }
        let (rmse, mae, bias) = point_metrics(&pred, &tr)?;
        let im = interval_metrics(&lower, &upper, &tr, level, samples.as_deref())?;
        rows.push(MetricRow {
            method: method.name.clone(),
            timepoint: ts.clone(),
            rmse,
            mae,
            bias,
            coverage: im.coverage,
            width: im.width,
            interval_score: im.interval_score,
            crps: im.crps,
        });
        pool_pred.extend(pred);
        pool_truth.extend(tr);
        pool_lower.extend(lower);
        pool_upper.extend(upper);
        if let (Some(all), Some(s)) = (pool_samples.as_mut(), samples) {
            all.extend(s);
        }
    }

    let (rmse, mae, bias) = point_metrics(&pool_pred, &pool_truth)?;
    let im = interval_metrics(&pool_lower, &pool_upper, &pool_truth, level, pool_samples.as_deref())?;
    rows.push(MetricRow {
        method: method.name.clone(),
        timepoint: "all".into(),
        rmse,
        mae,
        bias,
        coverage: im.coverage,
        width: im.width,
        interval_score: im.interval_score,
        crps: im.crps,
    });
    Ok(rows)
}

fn write_metrics(path: &Path, rows: &[MetricRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| validation(e.to_string()))?;
    w.write_record([
        "method", "timepoint", "rmse", "mae", "bias", "coverage", "width", "interval_score",
        "crps",
    ])
    .map_err(|e| validation(e.to_string()))?;
    let fmt = |v: f64| if v.is_nan() { String::new() } else { format!("{v}") };
    for r in rows {
        w.write_record([
            r.method.as_str(),
            r.timepoint.as_str(),
            &fmt(r.rmse),
            &fmt(r.mae),
            &fmt(r.bias),
            &fmt(r.coverage),
            &fmt(r.width),
            &fmt(r.interval_score),
            &fmt(r.crps),
        ])
        .map_err(|e| validation(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn ci_comparisons(
    methods: &[MethodData],
    pairs: &[[String; 2]],
    out_dir: &Path,
) -> CliResult<()> {
    if pairs.is_empty() {
        return Ok(());
    }
    let lookup: BTreeMap<&str, &MethodData> =
        methods.iter().map(|m| (m.name.as_str(), m)).collect();
    let mut w = csv::Writer::from_path(out_dir.join("ci_diff.csv"))
        .map_err(|e| validation(e.to_string()))?;
    w.write_record(["pair", "timestamp", "site_id", "pct_diff"])
        .map_err(|e| validation(e.to_string()))?;
    let mut summary = Vec::new();
    for [m2, m1] in pairs {
        let a = lookup
            .get(m2.as_str())
            .ok_or_else(|| validation(format!("ci pair references unknown method '{m2}'")))?;
        let b = lookup
            .get(m1.as_str())
            .ok_or_else(|| validation(format!("ci pair references unknown method '{m1}'")))?;
        let widths1: BTreeMap<(String, String), f64> = scoreable(&b.predictions)
            .map(|r| ((r.site_id.clone(), r.timestamp.clone()), r.upper - r.lower))
            .collect();
        let pair_name = format!("{m2}_vs_{m1}");
        let mut diffs = Vec::new();
        for r in scoreable(&a.predictions) {
            let key = (r.site_id.clone(), r.timestamp.clone());
            if let Some(&l1) = widths1.get(&key) {
                if l1 > 0.0 {
                    let pct = ci_percent_diff(r.upper - r.lower, l1)
                        .map_err(crate::error::CliError::from)?;
                    w.write_record([
                        pair_name.as_str(),
                        r.timestamp.as_str(),
                        r.site_id.as_str(),
                        &format!("{pct}"),
                    ])
                    .map_err(|e| validation(e.to_string()))?;
                    diffs.push(pct);
                }
            }
        }
        if diffs.is_empty() {
            return Err(validation(format!(
                "ci pair {pair_name}: no overlapping prediction rows"
            )));
        }
        let negative = diffs.iter().filter(|d| **d < 0.0).count() as f64 / diffs.len() as f64;
        summary.push((pair_name, stats::mean(&diffs), stats::quantile(&diffs, 0.5), negative, diffs.len()));
    }
    w.flush()?;

    let mut ws = csv::Writer::from_path(out_dir.join("ci_diff_summary.csv"))
        .map_err(|e| validation(e.to_string()))?;
    ws.write_record(["pair", "mean_pct", "median_pct", "prop_negative", "n"])
        .map_err(|e| validation(e.to_string()))?;
    for (pair, mean, median, negative, n) in summary {
        ws.write_record([
            pair.as_str(),
            &format!("{mean}"),
            &format!("{median}"),
            &format!("{negative}"),
            &n.to_string(),
        ])
        .map_err(|e| validation(e.to_string()))?;
    }
    ws.flush()?;
    Ok(())
}

fn pseudo_mode(
    config_path: &Path,
    cfg: &EvaluateConfig,
    methods: &[MethodData],
    out_dir: &Path,
) -> CliResult<()> {
    let section = cfg
        .pseudo
        .as_ref()
        .ok_or_else(|| validation("pseudo mode requires the [pseudo] section"))?;
    let reference = io::read_reference(&resolve(config_path, &section.reference))?;
    let sites = io::read_sites(&resolve(config_path, &section.sites))?;
    let mut ref_ids: Vec<&str> = reference.iter().map(|r| r.site_id.as_str()).collect();
    ref_ids.sort();
    ref_ids.dedup();
    if ref_ids.len() != 1 {
        return Err(validation(format!(
            "pseudo mode needs exactly one reference site, found {:?}",
            ref_ids
        )));
    }
    let ref_loc = sites
        .iter()
        .find(|s| s.site_id == ref_ids[0])
        .ok_or_else(|| validation(format!("reference site '{}' not in sites file", ref_ids[0])))?
        .location;
    let ref_by_time: BTreeMap<&str, f64> =
        reference.iter().map(|r| (r.timestamp.as_str(), r.value)).collect();

    let mut w = csv::Writer::from_path(out_dir.join("pseudo_rmse.csv"))
        .map_err(|e| validation(e.to_string()))?;
    w.write_record(["method", "pseudo_rmse", "n"]).map_err(|e| validation(e.to_string()))?;
    for m in methods {
        let mut se = 0.0;
        let mut n = 0usize;
        for r in scoreable(&m.predictions) {
            if r.location.dist(&ref_loc) <= section.radius {
                if let Some(&x0) = ref_by_time.get(r.timestamp.as_str()) {
                    let d = r.mean - x0;
                    se += d * d;
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(validation(format!(
                "method {}: no predictions within radius {} of the reference site",
                m.name, section.radius
            )));
        }
        let rmse = (se / n as f64).sqrt();
        w.write_record([m.name.as_str(), &format!("{rmse}"), &n.to_string()])
            .map_err(|e| validation(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(config_path: &Path, cfg: &EvaluateConfig, out_dir: &Path) -> CliResult<()> {
    let methods = load_methods(config_path, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    match cfg.mode.as_str() {
        "simulation" => {
            let truth_path = cfg
                .truth
                .as_ref()
                .ok_or_else(|| validation("simulation mode requires a truth file"))?;
            let truth = io::read_long_values(&resolve(config_path, truth_path))?;
            let mut rows = Vec::new();
            for m in &methods {
                rows.extend(simulation_metrics(m, &truth, cfg.level)?);
            }
            write_metrics(&out_dir.join("metrics.csv"), &rows)?;
        }
        "pseudo" => pseudo_mode(config_path, cfg, &methods, out_dir)?,
        other => {
            return Err(validation(format!(
                "unknown evaluate mode '{other}' (simulation|pseudo)"
            )))
        }
    }
    ci_comparisons(&methods, &cfg.compare.ci_pairs, out_dir)?;
    println!("evaluation -> {}", out_dir.display());
    Ok(())
}
