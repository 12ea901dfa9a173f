//! File formats: CSV schemas with line-numbered validation errors, the
//! observation-model TOML file, and the run metadata sidecar.
//!
//! Measurement CSV (long format): `site_id,network_id,timestamp,reading,rh,
//! temp,weekend`; reference CSV: `site_id,timestamp,value`; sites CSV:
//! `site_id,network_id,x,y`; grid CSV: `site_id,x,y`. Coordinates are planar
//! (geographic data must be pre-projected). Timepoints are keyed by
//! timestamp string equality and processed in lexicographic order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use mgpf::filter::{FilterMeta, HyperDraw, IntervalSummary, PosteriorField, SiteRole};
use mgpf::geom::Location;
use mgpf::obs::ObsModelParams;

use crate::error::{validation, CliResult};

pub const REFERENCE_NETWORK_ID: &str = "reference";

#[derive(Debug, Clone)]
pub struct SiteRecord {
    pub site_id: String,
    pub network_id: String,
    pub location: Location,
}

#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    pub site_id: String,
    pub network_id: String,
    pub timestamp: String,
    pub reading: f64,
    pub rh: Option<f64>,
    pub temp: Option<f64>,
    pub weekend: Option<f64>,
}

impl MeasurementRecord {
    /// Covariate value by name; `None` marks a missing value.
    pub fn covariate(&self, name: &str) -> Option<f64> {
        match name {
            "rh" => self.rh,
            "temp" => self.temp,
            "weekend" => self.weekend,
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceRecord {
    pub site_id: String,
    pub timestamp: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct GridRecord {
    pub site_id: String,
    pub location: Location,
}

fn open_reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    let f = fs::File::open(path)
        .map_err(|e| validation(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

/// Column indices for `required` names; extra columns are ignored.
fn header_indices(
    rdr: &mut csv::Reader<fs::File>,
    path: &Path,
    required: &[&str],
) -> CliResult<Vec<usize>> {
    let headers = rdr
        .headers()
        .map_err(|e| validation(format!("{}: cannot read header: {e}", path.display())))?
        .clone();
    let mut idx = Vec::with_capacity(required.len());
    for name in required {
        match headers.iter().position(|h| h.trim() == *name) {
            Some(i) => idx.push(i),
            None => {
                return Err(validation(format!(
                    "{}: missing required column '{name}' (found: {})",
                    path.display(),
                    headers.iter().collect::<Vec<_>>().join(",")
                )))
            }
        }
    }
    Ok(idx)
}

fn parse_f64(field: &str, col: &str, path: &Path, line: u64) -> CliResult<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        validation(format!(
            "{}:{line}: column '{col}' has non-numeric value '{field}'",
            path.display()
        ))
    })
}

fn parse_opt_f64(field: &str, col: &str, path: &Path, line: u64) -> CliResult<Option<f64>> {
    let t = field.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    parse_f64(t, col, path, line).map(Some)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

pub fn read_sites(path: &Path) -> CliResult<Vec<SiteRecord>> {
    let mut rdr = open_reader(path)?;
    let idx = header_indices(&mut rdr, path, &["site_id", "network_id", "x", "y"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&rec);
        out.push(SiteRecord {
            site_id: rec[idx[0]].trim().to_string(),
            network_id: rec[idx[1]].trim().to_string(),
            location: Location::new(
                parse_f64(&rec[idx[2]], "x", path, line)?,
                parse_f64(&rec[idx[3]], "y", path, line)?,
            ),
        });
    }
    if out.is_empty() {
        return Err(validation(format!("{}: no site rows", path.display())));
    }
    Ok(out)
}

pub fn read_measurements(path: &Path) -> CliResult<Vec<MeasurementRecord>> {
    let mut rdr = open_reader(path)?;
    let idx = header_indices(
        &mut rdr,
        path,
        &["site_id", "network_id", "timestamp", "reading", "rh", "temp", "weekend"],
    )?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&rec);
        let reading = match parse_opt_f64(&rec[idx[3]], "reading", path, line)? {
            Some(v) => v,
            None => continue, // missing reading: not an observation
        };
        out.push(MeasurementRecord {
            site_id: rec[idx[0]].trim().to_string(),
            network_id: rec[idx[1]].trim().to_string(),
            timestamp: rec[idx[2]].trim().to_string(),
            reading,
            rh: parse_opt_f64(&rec[idx[4]], "rh", path, line)?,
            temp: parse_opt_f64(&rec[idx[5]], "temp", path, line)?,
            weekend: parse_opt_f64(&rec[idx[6]], "weekend", path, line)?,
        });
    }
    Ok(out)
}

pub fn read_reference(path: &Path) -> CliResult<Vec<ReferenceRecord>> {
    let mut rdr = open_reader(path)?;
    let idx = header_indices(&mut rdr, path, &["site_id", "timestamp", "value"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&rec);
        let value = match parse_opt_f64(&rec[idx[2]], "value", path, line)? {
            Some(v) => v,
            None => continue,
        };
        out.push(ReferenceRecord {
            site_id: rec[idx[0]].trim().to_string(),
            timestamp: rec[idx[1]].trim().to_string(),
            value,
        });
    }
    Ok(out)
}

pub fn read_grid(path: &Path) -> CliResult<Vec<GridRecord>> {
    let mut rdr = open_reader(path)?;
    let idx = header_indices(&mut rdr, path, &["site_id", "x", "y"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&rec);
        out.push(GridRecord {
            site_id: rec[idx[0]].trim().to_string(),
            location: Location::new(
                parse_f64(&rec[idx[1]], "x", path, line)?,
                parse_f64(&rec[idx[2]], "y", path, line)?,
            ),
        });
    }
    if out.is_empty() {
        return Err(validation(format!("{}: no grid rows", path.display())));
    }
    Ok(out)
}

/// Collocated training CSV: `timestamp,x,reading,rh,temp,weekend`.
/// The timestamp column is required but not used after ingestion.
pub struct CollocatedRow {
    pub x: f64,
    pub reading: f64,
    pub rh: Option<f64>,
    pub temp: Option<f64>,
    pub weekend: Option<f64>,
}

impl CollocatedRow {
    pub fn covariate(&self, name: &str) -> Option<f64> {
        match name {
            "rh" => self.rh,
            "temp" => self.temp,
            "weekend" => self.weekend,
            _ => None,
        }
    }
}

pub fn read_collocated(path: &Path) -> CliResult<Vec<CollocatedRow>> {
    let mut rdr = open_reader(path)?;
    let idx = header_indices(
        &mut rdr,
        path,
        &["timestamp", "x", "reading", "rh", "temp", "weekend"],
    )?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&rec);
        let x = match parse_opt_f64(&rec[idx[1]], "x", path, line)? {
            Some(v) => v,
            None => continue,
        };
        let reading = match parse_opt_f64(&rec[idx[2]], "reading", path, line)? {
            Some(v) => v,
            None => continue,
        };
        out.push(CollocatedRow {
            x,
            reading,
            rh: parse_opt_f64(&rec[idx[3]], "rh", path, line)?,
            temp: parse_opt_f64(&rec[idx[4]], "temp", path, line)?,
            weekend: parse_opt_f64(&rec[idx[5]], "weekend", path, line)?,
        });
    }
    Ok(out)
}

/// The serialized observation model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub network_id: Option<String>,
    pub model: ObsModelParams,
}

pub fn write_model(path: &Path, file: &ModelFile) -> CliResult<()> {
    let text = toml::to_string_pretty(file)
        .map_err(|e| validation(format!("cannot serialize model: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_model(path: &Path) -> CliResult<ModelFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot open {}: {e}", path.display())))?;
    let file: ModelFile = toml::from_str(&text)
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    file.model.validate().map_err(|e| validation(format!("{}: {e}", path.display())))?;
    Ok(file)
}

/// Everything written about one filtered timepoint.
pub struct TimepointOutput {
    pub timestamp: String,
    pub rows: Vec<PredictionRow>,
    pub hyper: Vec<HyperSummaryRow>,
    pub meta: FilterMeta,
    /// (site_id, draws) when sample output is enabled.
    pub samples: Option<Vec<(String, Vec<f64>)>>,
    pub dropped_rows: usize,
}

pub struct PredictionRow {
    pub role: String,
    pub network_id: String,
    pub site_id: String,
    pub location: Location,
    pub summary: IntervalSummary,
}

pub struct HyperSummaryRow {
    pub param: &'static str,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn hyper_summaries(field: &PosteriorField) -> Vec<HyperSummaryRow> {
    let pull = |f: fn(&HyperDraw) -> f64| -> Vec<f64> {
        field.hyper_samples.iter().map(f).collect()
    };
    let mut out = Vec::new();
    for (param, vals) in [
        ("mu", pull(|h| h.mu)),
        ("sigma2", pull(|h| h.sigma2)),
        ("phi", pull(|h| h.phi)),
        ("nugget", pull(|h| h.nugget)),
    ] {
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(HyperSummaryRow {
            param,
            mean: mgpf::stats::mean(&vals),
            lower: mgpf::stats::quantile_sorted(&sorted, 0.025),
            upper: mgpf::stats::quantile_sorted(&sorted, 0.975),
        });
    }
    out
}

pub fn prediction_rows(
    field: &PosteriorField,
    site_ids: &[String],
) -> Vec<PredictionRow> {
    field
        .sites
        .iter()
        .zip(&field.summaries)
        .zip(site_ids)
        .map(|((site, summary), id)| {
            let (role, network_id) = match &site.role {
                SiteRole::Reference => ("reference".to_string(), String::new()),
                SiteRole::Network { id } => ("network".to_string(), id.clone()),
                SiteRole::Grid => ("grid".to_string(), String::new()),
            };
            PredictionRow {
                role,
                network_id,
                site_id: id.clone(),
                location: site.location,
                summary: *summary,
            }
        })
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_predictions(path: &Path, outputs: &[TimepointOutput]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record([
        "timestamp", "role", "network_id", "site_id", "x", "y", "mean", "lower", "upper",
    ])
    .map_err(|e| validation(e.to_string()))?;
    for out in outputs {
        for r in &out.rows {
            w.write_record([
                out.timestamp.as_str(),
                r.role.as_str(),
                r.network_id.as_str(),
                r.site_id.as_str(),
                &fmt(r.location.x),
                &fmt(r.location.y),
                &fmt(r.summary.mean),
                &fmt(r.summary.lower),
                &fmt(r.summary.upper),
            ])
            .map_err(|e| validation(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_hyperparams(path: &Path, outputs: &[TimepointOutput]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["timestamp", "param", "mean", "lower", "upper"])
        .map_err(|e| validation(e.to_string()))?;
    for out in outputs {
        for h in &out.hyper {
            w.write_record([
                out.timestamp.as_str(),
                h.param,
                &fmt(h.mean),
                &fmt(h.lower),
                &fmt(h.upper),
            ])
            .map_err(|e| validation(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples(path: &Path, outputs: &[TimepointOutput]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["timestamp", "site_id", "draw", "value"])
        .map_err(|e| validation(e.to_string()))?;
    for out in outputs {
        if let Some(samples) = &out.samples {
            for (site_id, draws) in samples {
                for (k, v) in draws.iter().enumerate() {
                    w.write_record([
                        out.timestamp.as_str(),
                        site_id.as_str(),
                        &k.to_string(),
                        &fmt(*v),
                    ])
                    .map_err(|e| validation(e.to_string()))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format truth/value table with `site_id,timestamp,value`.
pub fn write_long_values(path: &Path, rows: &[(String, String, f64)]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["site_id", "timestamp", "value"])
        .map_err(|e| validation(e.to_string()))?;
    for (site, ts, v) in rows {
        w.write_record([site.as_str(), ts.as_str(), &fmt(*v)])
            .map_err(|e| validation(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sites(path: &Path, rows: &[SiteRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["site_id", "network_id", "x", "y"])
        .map_err(|e| validation(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.site_id.as_str(),
            r.network_id.as_str(),
            &fmt(r.location.x),
            &fmt(r.location.y),
        ])
        .map_err(|e| validation(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid(path: &Path, rows: &[GridRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["site_id", "x", "y"]).map_err(|e| validation(e.to_string()))?;
    for r in rows {
        w.write_record([r.site_id.as_str(), &fmt(r.location.x), &fmt(r.location.y)])
            .map_err(|e| validation(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_measurements(path: &Path, rows: &[MeasurementRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["site_id", "network_id", "timestamp", "reading", "rh", "temp", "weekend"])
        .map_err(|e| validation(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.site_id.as_str(),
            r.network_id.as_str(),
            r.timestamp.as_str(),
            &fmt(r.reading),
            &opt(r.rh),
            &opt(r.temp),
            &opt(r.weekend),
        ])
        .map_err(|e| validation(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reference(path: &Path, rows: &[ReferenceRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["site_id", "timestamp", "value"])
        .map_err(|e| validation(e.to_string()))?;
    for r in rows {
        w.write_record([r.site_id.as_str(), r.timestamp.as_str(), &fmt(r.value)])
            .map_err(|e| validation(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Field stack in long format: `x,y,value,t`.
pub fn write_field_stack(
    path: &Path,
    frames: &[mgpf::sim::CroppedFrame],
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(["x", "y", "value", "t"]).map_err(|e| validation(e.to_string()))?;
    for (t, frame) in frames.iter().enumerate() {
        let h = frame.spacing();
        for iy in 0..frame.n {
            for ix in 0..frame.n {
                w.write_record([
                    &fmt(ix as f64 * h),
                    &fmt(iy as f64 * h),
                    &fmt(frame.at(ix, iy)),
                    &(t + 1).to_string(),
                ])
                .map_err(|e| validation(e.to_string()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reproducibility sidecar written next to every command's outputs. Contains
/// no wall-clock fields so identical runs produce identical bytes.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub workers: usize,
    pub warnings: Vec<String>,
    pub timepoints: Vec<TimepointMetadata>,
}

#[derive(Debug, Serialize)]
pub struct TimepointMetadata {
    pub timestamp: String,
    pub retained: usize,
    pub acceptance: Option<[f64; 4]>,
    pub warnings: Vec<String>,
    pub dropped_rows: usize,
}

pub fn write_metadata(path: &Path, meta: &RunMetadata) -> CliResult<()> {
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| validation(format!("cannot serialize metadata: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

/// Predictions read back for evaluation.
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub timestamp: String,
    pub role: String,
    pub site_id: String,
    pub location: Location,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn read_predictions(path: &Path) -> CliResult<Vec<PredictionRecord>> {
    let mut rdr = open_reader(path)?;
    let idx = header_indices(
        &mut rdr,
        path,
        &["timestamp", "role", "network_id", "site_id", "x", "y", "mean", "lower", "upper"],
    )?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&rec);
        out.push(PredictionRecord {
            timestamp: rec[idx[0]].trim().to_string(),
            role: rec[idx[1]].trim().to_string(),
            site_id: rec[idx[3]].trim().to_string(),
            location: Location::new(
                parse_f64(&rec[idx[4]], "x", path, line)?,
                parse_f64(&rec[idx[5]], "y", path, line)?,
            ),
            mean: parse_f64(&rec[idx[6]], "mean", path, line)?,
            lower: parse_f64(&rec[idx[7]], "lower", path, line)?,
            upper: parse_f64(&rec[idx[8]], "upper", path, line)?,
        });
    }
    Ok(out)
}

pub fn read_long_values(path: &Path) -> CliResult<BTreeMap<(String, String), f64>> {
    let mut rdr = open_reader(path)?;
    let idx = header_indices(&mut rdr, path, &["site_id", "timestamp", "value"])?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&rec);
        out.insert(
            (rec[idx[0]].trim().to_string(), rec[idx[1]].trim().to_string()),
            parse_f64(&rec[idx[2]], "value", path, line)?,
        );
    }
    Ok(out)
}

/// `samples.csv` read back: (site_id, timestamp) -> draws.
pub fn read_samples(path: &Path) -> CliResult<BTreeMap<(String, String), Vec<f64>>> {
    let mut rdr = open_reader(path)?;
    let idx = header_indices(&mut rdr, path, &["timestamp", "site_id", "draw", "value"])?;
    let mut out: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record_line(&rec);
        out.entry((rec[idx[1]].trim().to_string(), rec[idx[0]].trim().to_string()))
            .or_default()
            .push(parse_f64(&rec[idx[3]], "value", path, line)?);
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
