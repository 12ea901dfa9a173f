//! `filter`: run the multi-network filter at every timepoint of the input
//! measurement table, in parallel workers, and emit prediction CSVs plus the
//! reproducibility sidecar.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use mgpf::filter::{mcmc_filter, ChainConfig, FilterInput, NetworkData, PriorSpec};
use mgpf::geom::Location;
use mgpf::obs::ObsModelParams;

use crate::config::{resolve, FilterConfig};
use crate::error::{validation, CliError, CliResult};
use crate::io::{
    self, GridRecord, MeasurementRecord, ModelFile, PredictionRow, ReferenceRecord, RunMetadata,
    SiteRecord, TimepointMetadata, TimepointOutput,
};

struct Inputs {
    site_by_id: BTreeMap<String, SiteRecord>,
    by_time: BTreeMap<String, Vec<MeasurementRecord>>,
    reference_by_time: BTreeMap<String, Vec<ReferenceRecord>>,
    grid: Vec<GridRecord>,
    models: BTreeMap<String, ObsModelParams>,
}

fn load_inputs(config_path: &Path, cfg: &FilterConfig) -> CliResult<Inputs> {
    let sites = io::read_sites(&resolve(config_path, &cfg.paths.sites))?;
    let mut site_by_id = BTreeMap::new();
    for s in sites {
        if site_by_id.insert(s.site_id.clone(), s.clone()).is_some() {
            return Err(validation(format!("duplicate site_id '{}'", s.site_id)));
        }
    }

    let mut models = BTreeMap::new();
    for (net, path) in &cfg.models {
        let ModelFile { model, .. } = io::read_model(&resolve(config_path, path))?;
        models.insert(net.clone(), model);
    }
    if models.is_empty() {
        return Err(validation("no observation models configured"));
    }

    let measurements = io::read_measurements(&resolve(config_path, &cfg.paths.measurements))?;
    let mut by_time: BTreeMap<String, Vec<MeasurementRecord>> = BTreeMap::new();
    for m in measurements {
        if !site_by_id.contains_key(&m.site_id) {
            return Err(validation(format!(
                "measurement references unknown site '{}'",
                m.site_id
            )));
        }
        if !models.contains_key(&m.network_id) {
            return Err(validation(format!(
                "network '{}' has no observation model configured",
                m.network_id
            )));
        }
        by_time.entry(m.timestamp.clone()).or_default().push(m);
    }

    let mut reference_by_time: BTreeMap<String, Vec<ReferenceRecord>> = BTreeMap::new();
    if let Some(rp) = &cfg.paths.reference {
        for r in io::read_reference(&resolve(config_path, rp))? {
            if !site_by_id.contains_key(&r.site_id) {
                return Err(validation(format!(
                    "reference references unknown site '{}'",
                    r.site_id
                )));
            }
            if !r.value.is_finite() || r.value < 0.0 {
                return Err(validation(format!(
                    "reference value {} at site '{}' must be finite and >= 0",
                    r.value, r.site_id
                )));
            }
            reference_by_time.entry(r.timestamp.clone()).or_default().push(r);
        }
    }

    let grid = match &cfg.paths.grid {
        Some(gp) => io::read_grid(&resolve(config_path, gp))?,
        None => Vec::new(),
    };

    Ok(Inputs { site_by_id, by_time, reference_by_time, grid, models })
}

struct TimepointTask {
    timestamp: String,
    seed: u64,
}

enum TimepointResult {
    Done(Box<TimepointOutput>),
    Skipped { timestamp: String, reason: String },
}

fn prior_for(
    cfg: &FilterConfig,
    input: &FilterInput,
) -> Result<PriorSpec, mgpf::Error> {
    let o = &cfg.priors;
    let explicit = [o.mu_scale, o.sigma2_max, o.nugget_max, o.phi_min, o.phi_max];
    if explicit.iter().all(|v| v.is_some()) {
        let spec = PriorSpec {
            mu_scale: o.mu_scale.unwrap(),
            sigma2_max: o.sigma2_max.unwrap(),
            nugget_max: o.nugget_max.unwrap(),
            phi_min: o.phi_min.unwrap(),
            phi_max: o.phi_max.unwrap(),
        };
        spec.validate()?;
        return Ok(spec);
    }
    let mut spec = PriorSpec::from_input(input, o.primary_network.as_deref())?;
    if let Some(v) = o.mu_scale {
        spec.mu_scale = v;
    }
    if let Some(v) = o.sigma2_max {
        spec.sigma2_max = v;
    }
    if let Some(v) = o.nugget_max {
        spec.nugget_max = v;
    }
    if let Some(v) = o.phi_min {
        spec.phi_min = v;
    }
    if let Some(v) = o.phi_max {
        spec.phi_max = v;
    }
    spec.validate()?;
    Ok(spec)
}

fn run_timepoint(
    task: &TimepointTask,
    inputs: &Inputs,
    cfg: &FilterConfig,
) -> Result<TimepointResult, CliError> {
    let ts = &task.timestamp;
    let rows = inputs.by_time.get(ts).map(Vec::as_slice).unwrap_or(&[]);
    let refs = inputs.reference_by_time.get(ts).map(Vec::as_slice).unwrap_or(&[]);

    let mut dropped = 0usize;
    let mut networks = Vec::new();
    let mut site_ids = Vec::new();
    for (net_id, model) in &inputs.models {
        let mut sites = Vec::new();
        let mut readings = Vec::new();
        let mut covariates = Vec::new();
        let mut ids = Vec::new();
        'rows: for m in rows.iter().filter(|m| &m.network_id == net_id) {
            let mut z = Vec::with_capacity(model.covariates.len());
            for c in &model.covariates {
                match m.covariate(&c.name) {
                    Some(v) => z.push(v),
                    None => {
                        dropped += 1;
                        continue 'rows;
                    }
                }
            }
            sites.push(inputs.site_by_id[&m.site_id].location);
            readings.push(m.reading);
            covariates.push(z);
            ids.push(m.site_id.clone());
        }
        if !sites.is_empty() {
            networks.push(NetworkData {
                id: net_id.clone(),
                sites,
                readings,
                covariates,
                model: model.clone(),
            });
            site_ids.push(ids);
        }
    }

    let reference_sites: Vec<Location> =
        refs.iter().map(|r| inputs.site_by_id[&r.site_id].location).collect();
    let reference_values: Vec<f64> = refs.iter().map(|r| r.value).collect();
    let reference_ids: Vec<String> = refs.iter().map(|r| r.site_id.clone()).collect();

    let input = FilterInput::new(
        reference_sites,
        reference_values,
        networks,
        inputs.grid.iter().map(|g| g.location).collect(),
    )?;
    if input.n_lowcost() == 0 {
        return Ok(TimepointResult::Skipped {
            timestamp: ts.clone(),
            reason: "no active low-cost sites".into(),
        });
    }

    let prior = match prior_for(cfg, &input) {
        Ok(p) => p,
        Err(mgpf::Error::InvalidInput(msg)) => {
            return Ok(TimepointResult::Skipped {
                timestamp: ts.clone(),
                reason: format!("prior bounds unavailable: {msg}"),
            })
        }
        Err(e) => return Err(e.into()),
    };

    let chain = ChainConfig {
        iterations: cfg.chain.iterations,
        burn_in: cfg.chain.burn_in,
        thin: cfg.chain.thin,
        target_accept: cfg.chain.target_accept,
        seed: task.seed,
        fixed_hyper: None,
    };
    let field = mcmc_filter(&input, &prior, &chain)?;

    // stitch site ids in output order: reference, stacked networks, grid
    let mut ids = reference_ids;
    ids.extend(site_ids.into_iter().flatten());
    ids.extend(inputs.grid.iter().map(|g| g.site_id.clone()));

    let rows: Vec<PredictionRow> = io::prediction_rows(&field, &ids);
    let samples = cfg.run.write_samples.then(|| {
        ids.iter()
            .enumerate()
            .map(|(j, id)| (id.clone(), field.site_draws(j)))
            .collect()
    });

    Ok(TimepointResult::Done(Box::new(TimepointOutput {
        timestamp: ts.clone(),
        rows,
        hyper: io::hyper_summaries(&field),
        meta: field.meta.clone(),
        samples,
        dropped_rows: dropped,
    })))
}

pub fn run(
    config_path: &Path,
    cfg: &FilterConfig,
    config_bytes: &[u8],
    seed_flag: Option<u64>,
    workers_flag: Option<usize>,
    out_dir: &Path,
) -> CliResult<()> {
    let inputs = load_inputs(config_path, cfg)?;
    let seed = super::resolve_seed(seed_flag.or(cfg.run.seed));
    let workers = workers_flag.or(cfg.run.workers).unwrap_or(0);

    // all timestamps with any data, lexicographically ordered
    let mut stamps: Vec<String> = inputs.by_time.keys().cloned().collect();
    for ts in inputs.reference_by_time.keys() {
        if !inputs.by_time.contains_key(ts) {
            stamps.push(ts.clone());
        }
    }
    stamps.sort();
    if stamps.is_empty() {
        return Err(validation("no timepoints in the measurement or reference data"));
    }

    // per-timepoint sub-seeds drawn up front so worker scheduling cannot
    // affect the results
    let mut seeder = ChaCha12Rng::seed_from_u64(seed);
    let tasks: Vec<TimepointTask> = stamps
        .iter()
        .map(|ts| TimepointTask { timestamp: ts.clone(), seed: seeder.random() })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| validation(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<TimepointResult, CliError>> =
        pool.install(|| tasks.par_iter().map(|t| run_timepoint(t, &inputs, cfg)).collect());

    let mut outputs = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            TimepointResult::Done(out) => outputs.push(*out),
            TimepointResult::Skipped { timestamp, reason } => {
                eprintln!("skipping {timestamp}: {reason}");
                skipped.push(format!("skipped {timestamp}: {reason}"));
            }
        }
    }
    outputs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp));
    if outputs.is_empty() {
        return Err(validation("every timepoint was skipped; nothing to write"));
    }

    std::fs::create_dir_all(out_dir)?;
    io::write_predictions(&out_dir.join("predictions.csv"), &outputs)?;
    io::write_hyperparams(&out_dir.join("hyperparams.csv"), &outputs)?;
    if cfg.run.write_samples {
        io::write_samples(&out_dir.join("samples.csv"), &outputs)?;
    }
    let meta = RunMetadata {
        command: "filter".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config_sha256: io::sha256_hex(config_bytes),
        workers,
        warnings: skipped,
        timepoints: outputs
            .iter()
            .map(|o| TimepointMetadata {
                timestamp: o.timestamp.clone(),
                retained: o.meta.retained,
                acceptance: o.meta.acceptance,
                warnings: o.meta.warnings.clone(),
                dropped_rows: o.dropped_rows,
            })
            .collect(),
    };
    io::write_metadata(&out_dir.join("metadata.json"), &meta)?;
    println!(
        "filtered {} timepoints -> {}",
        outputs.len(),
        out_dir.join("predictions.csv").display()
    );
    Ok(())
}
