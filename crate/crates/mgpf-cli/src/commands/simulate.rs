//! `simulate`: emit synthetic datasets in the standard CSV schemas so the
//! rest of the pipeline (train-obs, filter, evaluate, idw-baseline) can run
//! end to end on them.

use std::path::Path;

use mgpf::obs::{fit_variance_model, Covariate, ObsModelParams, VarianceForm, VarianceModel};
use mgpf::sim::{
    generate_s5_dataset, generate_s6_dataset, pointsource::residual_pairs, PlumeConfig,
    PointSourceConfig,
};

use crate::config::SimulateConfig;
use crate::error::{validation, CliResult};
use crate::io::{
    self, GridRecord, MeasurementRecord, ModelFile, ReferenceRecord, RunMetadata, SiteRecord,
};

fn ts(t: usize) -> String {
    format!("t{t:05}")
}

fn write_s5(cfg: &SimulateConfig, seed: u64, out_dir: &Path) -> CliResult<()> {
    let s5 = &cfg.s5;
    if s5.train_steps >= s5.steps {
        return Err(validation(format!(
            "train_steps {} must be below steps {}",
            s5.train_steps, s5.steps
        )));
    }
    let plume = PlumeConfig::reduced(s5.lattice, s5.steps);
    let ds = generate_s5_dataset(&plume, s5.n1, s5.n2, seed).map_err(crate::error::CliError::from)?;

    std::fs::create_dir_all(out_dir)?;
    io::write_field_stack(&out_dir.join("truth_stack.csv"), &ds.frames)?;

    let net_name = |k: usize| format!("net{}", k + 1);
    let site_name = |k: usize, i: usize| format!("net{}_{i:04}", k + 1);

    let mut sites = Vec::new();
    for k in 0..2 {
        for (i, loc) in ds.networks.sites[k].iter().enumerate() {
            sites.push(SiteRecord {
                site_id: site_name(k, i),
                network_id: net_name(k),
                location: *loc,
            });
        }
    }
    for k in 0..2 {
        let c = ds.networks.colocated[k];
        sites.push(SiteRecord {
            site_id: format!("ref{}", k + 1),
            network_id: io::REFERENCE_NETWORK_ID.into(),
            location: ds.networks.sites[k][c],
        });
    }
    io::write_sites(&out_dir.join("sites.csv"), &sites)?;

    let mut colocated = Vec::new();
    for k in 0..2 {
        let c = ds.networks.colocated[k];
        colocated.push(SiteRecord {
            site_id: site_name(k, c),
            network_id: net_name(k),
            location: ds.networks.sites[k][c],
        });
    }
    io::write_sites(&out_dir.join("colocated.csv"), &colocated)?;

    let mut measurements = Vec::new();
    let mut reference = Vec::new();
    let mut truth = Vec::new();
    for t in 0..s5.steps {
        let stamp = ts(t + 1);
        for k in 0..2 {
            for i in 0..ds.networks.sites[k].len() {
                measurements.push(MeasurementRecord {
                    site_id: site_name(k, i),
                    network_id: net_name(k),
                    timestamp: stamp.clone(),
                    reading: ds.readings[k][t][i],
                    rh: None,
                    temp: None,
                    weekend: None,
                });
                truth.push((site_name(k, i), stamp.clone(), ds.truth[k][t][i]));
            }
            let c = ds.networks.colocated[k];
            reference.push(ReferenceRecord {
                site_id: format!("ref{}", k + 1),
                timestamp: stamp.clone(),
                value: ds.truth[k][t][c],
            });
        }
    }
    io::write_measurements(&out_dir.join("measurements.csv"), &measurements)?;
    io::write_reference(&out_dir.join("reference.csv"), &reference)?;
    io::write_long_values(&out_dir.join("truth.csv"), &truth)?;

    // collocated training series over the training window, one per network
    for k in 0..2 {
        let c = ds.networks.colocated[k];
        let mut w = csv::Writer::from_path(out_dir.join(format!("collocated_net{}.csv", k + 1)))
            .map_err(|e| validation(e.to_string()))?;
        w.write_record(["timestamp", "x", "reading", "rh", "temp", "weekend"])
            .map_err(|e| validation(e.to_string()))?;
        for t in 0..s5.train_steps {
            w.write_record([
                ts(t + 1).as_str(),
                &format!("{}", ds.truth[k][t][c]),
                &format!("{}", ds.readings[k][t][c]),
                "",
                "",
                "",
            ])
            .map_err(|e| validation(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn write_s6(cfg: &SimulateConfig, seed: u64, out_dir: &Path) -> CliResult<()> {
    let s6 = &cfg.s6;
    let ps = PointSourceConfig {
        n_sites: s6.sites_per_network,
        n_timepoints: s6.timepoints,
        preferential: s6.preferential,
        eval_grid_n: s6.eval_grid,
        ..Default::default()
    };
    std::fs::create_dir_all(out_dir)?;
    for d in 0..s6.datasets {
        let ds = generate_s6_dataset(&ps, seed.wrapping_add(d as u64))
            .map_err(crate::error::CliError::from)?;
        let dir = out_dir.join(format!("dataset_{:02}", d + 1));
        std::fs::create_dir_all(&dir)?;

        let mut sites = Vec::new();
        for (i, loc) in ds.sites_a.iter().enumerate() {
            sites.push(SiteRecord {
                site_id: format!("a_{i:03}"),
                network_id: "net_a".into(),
                location: *loc,
            });
        }
        for (i, loc) in ds.sites_b.iter().enumerate() {
            sites.push(SiteRecord {
                site_id: format!("b_{i:03}"),
                network_id: "net_b".into(),
                location: *loc,
            });
        }
        sites.push(SiteRecord {
            site_id: "ref".into(),
            network_id: io::REFERENCE_NETWORK_ID.into(),
            location: ds.reference_site,
        });
        io::write_sites(&dir.join("sites.csv"), &sites)?;

        let grid: Vec<GridRecord> = ds
            .grid
            .iter()
            .enumerate()
            .map(|(i, loc)| GridRecord { site_id: format!("g_{i:04}"), location: *loc })
            .collect();
        io::write_grid(&dir.join("grid.csv"), &grid)?;

        let mut measurements = Vec::new();
        let mut reference = Vec::new();
        let mut truth = Vec::new();
        for (t, tp) in ds.timepoints.iter().enumerate() {
            let stamp = ts(t + 1);
            for i in 0..ds.sites_a.len() {
                measurements.push(MeasurementRecord {
                    site_id: format!("a_{i:03}"),
                    network_id: "net_a".into(),
                    timestamp: stamp.clone(),
                    reading: tp.readings_a[i],
                    rh: Some(tp.rh_a[i]),
                    temp: None,
                    weekend: None,
                });
                truth.push((format!("a_{i:03}"), stamp.clone(), tp.truth_a[i]));
            }
            for i in 0..ds.sites_b.len() {
                measurements.push(MeasurementRecord {
                    site_id: format!("b_{i:03}"),
                    network_id: "net_b".into(),
                    timestamp: stamp.clone(),
                    reading: tp.readings_b[i],
                    rh: Some(tp.rh_b[i]),
                    temp: None,
                    weekend: None,
                });
                truth.push((format!("b_{i:03}"), stamp.clone(), tp.truth_b[i]));
            }
            for (i, v) in tp.truth_grid.iter().enumerate() {
                truth.push((format!("g_{i:04}"), stamp.clone(), *v));
            }
            reference.push(ReferenceRecord {
                site_id: "ref".into(),
                timestamp: stamp,
                value: tp.truth_reference,
            });
        }
        io::write_measurements(&dir.join("measurements.csv"), &measurements)?;
        io::write_reference(&dir.join("reference.csv"), &reference)?;
        io::write_long_values(&dir.join("truth.csv"), &truth)?;

        // observation models: generating coefficients, variance fitted on
        // this dataset's residuals (log form), configured floor
        for (net, is_b) in [("a", false), ("b", true)] {
            let (xs, rs) = residual_pairs(&ds, is_b);
            let (a0, a1) = fit_variance_model(&rs, &xs, VarianceForm::LogLinear)
                .map_err(crate::error::CliError::from)?;
            let obs = if is_b { ps.obs_b } else { ps.obs_a };
            let model = ObsModelParams::new(
                vec![obs.0, obs.1, obs.2],
                vec![Covariate::plain("rh")],
                VarianceModel {
                    form: VarianceForm::LogLinear,
                    alpha0: a0,
                    alpha1: a1,
                    floor: s6.var_floor,
                },
            )
            .map_err(crate::error::CliError::from)?;
            io::write_model(
                &dir.join(format!("model_{net}.toml")),
                &ModelFile { network_id: Some(format!("net_{net}")), model },
            )?;
        }
    }
    Ok(())
}

pub fn run(
    cfg: &SimulateConfig,
    config_bytes: &[u8],
    seed_flag: Option<u64>,
    out_dir: &Path,
) -> CliResult<()> {
    let seed = super::resolve_seed(seed_flag.or(cfg.run.seed));
    match cfg.mode.as_str() {
        "s5" => write_s5(cfg, seed, out_dir)?,
        "s6" => write_s6(cfg, seed, out_dir)?,
        other => return Err(validation(format!("unknown simulate mode '{other}' (s5|s6)"))),
    }
    let meta = RunMetadata {
        command: format!("simulate-{}", cfg.mode),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config_sha256: io::sha256_hex(config_bytes),
        workers: 1,
        warnings: Vec::new(),
        timepoints: Vec::new(),
    };
    io::write_metadata(&out_dir.join("metadata.json"), &meta)?;
    println!("simulated {} -> {}", cfg.mode, out_dir.display());
    Ok(())
}
