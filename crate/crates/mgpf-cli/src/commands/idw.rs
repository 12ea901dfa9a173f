//! `idw-baseline`: RegCal-style naive inversion per network site, then
//! inverse-distance-weighted interpolation per network, averaged across
//! networks. The spatially-uninformed comparison to the filter.

use std::collections::BTreeMap;
use std::path::Path;

use mgpf::geom::Location;
use mgpf::metrics::idw_interpolate;
use mgpf::obs::ObsModelParams;

use crate::config::{resolve, IdwConfig};
use crate::error::{validation, CliResult};
use crate::io::{self, ModelFile, RunMetadata};

pub fn run(
    config_path: &Path,
    cfg: &IdwConfig,
    config_bytes: &[u8],
    out_dir: &Path,
) -> CliResult<()> {
    let sites = io::read_sites(&resolve(config_path, &cfg.paths.sites))?;
    let site_by_id: BTreeMap<&str, Location> =
        sites.iter().map(|s| (s.site_id.as_str(), s.location)).collect();
    let targets = io::read_grid(&resolve(config_path, &cfg.paths.targets))?;
    let measurements = io::read_measurements(&resolve(config_path, &cfg.paths.measurements))?;

    let mut models: BTreeMap<String, ObsModelParams> = BTreeMap::new();
    for (net, path) in &cfg.models {
        let ModelFile { model, .. } = io::read_model(&resolve(config_path, path))?;
        models.insert(net.clone(), model);
    }

    let mut by_time: BTreeMap<String, Vec<&io::MeasurementRecord>> = BTreeMap::new();
    for m in &measurements {
        if !site_by_id.contains_key(m.site_id.as_str()) {
            return Err(validation(format!("unknown site '{}' in measurements", m.site_id)));
        }
        if !models.contains_key(&m.network_id) {
            return Err(validation(format!(
                "network '{}' has no observation model configured",
                m.network_id
            )));
        }
        by_time.entry(m.timestamp.clone()).or_default().push(m);
    }
    if by_time.is_empty() {
        return Err(validation("no measurements"));
    }

    let target_locs: Vec<Location> = targets.iter().map(|g| g.location).collect();
    let mut negative_inversions = 0usize;
    let mut rows: Vec<(String, usize, f64)> = Vec::new(); // (timestamp, target, value)
    for (ts, recs) in &by_time {
        let mut per_network: Vec<Vec<f64>> = Vec::new();
        for (net, model) in &models {
            let mut locs = Vec::new();
            let mut values = Vec::new();
            for m in recs.iter().filter(|m| &m.network_id == net) {
                let z: Option<Vec<f64>> = model
                    .covariates
                    .iter()
                    .map(|c| m.covariate(&c.name))
                    .collect();
                let Some(z) = z else { continue };
                let inv = model.invert(m.reading, &z).map_err(crate::error::CliError::from)?;
                if inv.is_negative {
                    negative_inversions += 1;
                }
                locs.push(site_by_id[m.site_id.as_str()]);
                values.push(inv.value);
            }
            if !locs.is_empty() {
                per_network.push(
                    idw_interpolate(&locs, &values, &target_locs, cfg.options.power)
                        .map_err(crate::error::CliError::from)?,
                );
            }
        }
        if per_network.is_empty() {
            continue;
        }
        for (j, _) in target_locs.iter().enumerate() {
            let v = per_network.iter().map(|s| s[j]).sum::<f64>() / per_network.len() as f64;
            rows.push((ts.clone(), j, v));
        }
    }

    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("predictions.csv"))
        .map_err(|e| validation(e.to_string()))?;
    w.write_record([
        "timestamp", "role", "network_id", "site_id", "x", "y", "mean", "lower", "upper",
    ])
    .map_err(|e| validation(e.to_string()))?;
    for (ts, j, v) in &rows {
        let g = &targets[*j];
        // IDW carries no uncertainty; the interval degenerates to the value
        w.write_record([
            ts.as_str(),
            "grid",
            "",
            g.site_id.as_str(),
            &format!("{}", g.location.x),
            &format!("{}", g.location.y),
            &format!("{v}"),
            &format!("{v}"),
            &format!("{v}"),
        ])
        .map_err(|e| validation(e.to_string()))?;
    }
    w.flush()?;

    let meta = RunMetadata {
        command: "idw-baseline".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: 0,
        config_sha256: io::sha256_hex(config_bytes),
        workers: 1,
        warnings: if negative_inversions > 0 {
            vec![format!(
                "{negative_inversions} negative naive inversions kept unclamped"
            )]
        } else {
            Vec::new()
        },
        timepoints: Vec::new(),
    };
    io::write_metadata(&out_dir.join("metadata.json"), &meta)?;
    println!(
        "idw baseline: {} timepoints x {} targets -> {}",
        by_time.len(),
        targets.len(),
        out_dir.join("predictions.csv").display()
    );
    Ok(())
}
