//! `train-obs`: fit an observation model from collocated data, or copy a
//! published preset, and write the serialized model file.

use std::path::Path;

use mgpf::obs::{
    fit_regression, fit_variance_model, gls_refit, presets, CollocatedSeries, Covariate,
    ObsModelParams, VarianceForm, VarianceModel,
};
use mgpf::stats;

use crate::config::{FloorPolicy, TrainObsConfig};
use crate::error::{validation, CliResult};
use crate::io::{self, CollocatedRow, ModelFile};

fn parse_variance_form(s: &str) -> CliResult<VarianceForm> {
    match s {
        "log_linear" => Ok(VarianceForm::LogLinear),
        "linear_clamped" => Ok(VarianceForm::LinearClamped),
        "homoscedastic" => Ok(VarianceForm::Homoscedastic),
        other => Err(validation(format!(
            "unknown variance_form '{other}' (log_linear|linear_clamped|homoscedastic)"
        ))),
    }
}

fn build_covariates(cfg: &TrainObsConfig) -> CliResult<Vec<Covariate>> {
    let allowed = ["rh", "temp", "weekend"];
    for c in cfg.model.covariates.iter().chain(&cfg.model.interactions) {
        if !allowed.contains(&c.as_str()) {
            return Err(validation(format!(
                "unknown covariate '{c}' (rh|temp|weekend)"
            )));
        }
    }
    for c in &cfg.model.interactions {
        if !cfg.model.covariates.contains(c) {
            return Err(validation(format!(
                "interaction '{c}' is not among the covariates"
            )));
        }
    }
    Ok(cfg
        .model
        .covariates
        .iter()
        .map(|name| Covariate {
            name: name.clone(),
            interacts: cfg.model.interactions.contains(name),
        })
        .collect())
}

/// Convert rows into a training series, dropping rows with any missing
/// required covariate. Returns the series and the dropped count.
fn to_series(
    rows: &[CollocatedRow],
    covariates: &[Covariate],
) -> CliResult<(CollocatedSeries, usize)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut dropped = 0usize;
    'rows: for row in rows {
        let mut zrow = Vec::with_capacity(covariates.len());
        for c in covariates {
            match row.covariate(&c.name) {
                Some(v) => zrow.push(v),
                None => {
                    dropped += 1;
                    continue 'rows;
                }
            }
        }
        if row.x < 0.0 {
            dropped += 1;
            continue;
        }
        x.push(row.x);
        y.push(row.reading);
        z.push(zrow);
    }
    let series = CollocatedSeries::new(x, y, z)?;
    Ok((series, dropped))
}

fn residuals(series: &CollocatedSeries, model: &ObsModelParams) -> CliResult<Vec<f64>> {
    let mut out = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let (mean, _) = model.eval(series.x[i], &series.z[i])?;
        out.push(series.y[i] - mean);
    }
    Ok(out)
}

fn r_squared(series: &CollocatedSeries, resid: &[f64]) -> f64 {
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let my = stats::mean(&series.y);
    let ss_tot: f64 = series.y.iter().map(|v| (v - my) * (v - my)).sum();
    if ss_tot == 0.0 {
        return f64::NAN;
    }
    1.0 - ss_res / ss_tot
}

pub fn run(config_path: &Path, cfg: &TrainObsConfig, out_dir: &Path) -> CliResult<ModelFile> {
    if let Some(name) = &cfg.input.preset {
        let mut model = presets::get(name).ok_or_else(|| {
            validation(format!(
                "unknown preset '{name}' (available: {})",
                presets::names().join(", ")
            ))
        })?;
        if let FloorPolicy::Value(v) = cfg.model.floor {
            model.variance.floor = v;
        }
        let file = ModelFile {
            network_id: cfg.model.network_id.clone().or_else(|| Some(name.clone())),
            model,
        };
        let path = out_dir.join(&cfg.output.model);
        io::write_model(&path, &file)?;
        println!("preset {name} -> {}", path.display());
        return Ok(file);
    }

    let coll_path = cfg
        .input
        .collocated
        .as_ref()
        .ok_or_else(|| validation("either input.collocated or input.preset is required"))?;
    let rows = io::read_collocated(&crate::config::resolve(config_path, coll_path))?;
    let covariates = build_covariates(cfg)?;
    let (series, dropped) = to_series(&rows, &covariates)?;
    if series.is_empty() {
        return Err(validation("no complete training rows"));
    }

    let beta = fit_regression(&series, &covariates)?;
    let mut model = ObsModelParams::new(
        beta,
        covariates.clone(),
        VarianceModel::homoscedastic(1.0),
    )?;

    // OLS residual variance: the default variance floor
    let ols_resid = residuals(&series, &model)?;
    let naive_tau2 = ols_resid.iter().map(|r| r * r).sum::<f64>() / ols_resid.len() as f64;
    let floor = match &cfg.model.floor {
        FloorPolicy::Named(n) if n == "ols" => naive_tau2,
        FloorPolicy::Named(other) => {
            return Err(validation(format!("unknown floor policy '{other}' (ols|number)")))
        }
        FloorPolicy::Value(v) => *v,
    };

    // variance model, possibly on its own window
    let form = parse_variance_form(&cfg.model.variance_form)?;
    let (var_series, var_dropped) = match &cfg.input.variance_collocated {
        Some(p) => {
            let vrows = io::read_collocated(&crate::config::resolve(config_path, p))?;
            to_series(&vrows, &covariates)?
        }
        None => (series.clone(), 0),
    };
    let var_resid = residuals(&var_series, &model)?;
    let (alpha0, alpha1) = fit_variance_model(&var_resid, &var_series.x, form)?;
    model.variance = VarianceModel { form, alpha0, alpha1, floor };

    if cfg.model.gls_refit {
        model.beta = gls_refit(&series, &model.variance, &covariates)?;
    }
    model.validate()?;

    let final_resid = residuals(&series, &model)?;
    println!(
        "rows {} (dropped {dropped}+{var_dropped}), R2 {:.4}, residual sd {:.4}",
        series.len(),
        r_squared(&series, &final_resid),
        stats::std_dev(&final_resid),
    );
    println!(
        "beta {:?}, variance {:?} alpha=({:.4}, {:.4}), floor {:.4}",
        model.beta, model.variance.form, model.variance.alpha0, model.variance.alpha1, floor
    );

    let file = ModelFile { network_id: cfg.model.network_id.clone(), model };
    let path = out_dir.join(&cfg.output.model);
    io::write_model(&path, &file)?;
    println!("model -> {}", path.display());
    Ok(file)
}
