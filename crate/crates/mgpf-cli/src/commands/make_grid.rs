//! `make-grid`: helper producing a regular prediction grid file.

use std::path::Path;

use mgpf::geom::Location;

use crate::error::{validation, CliResult};
use crate::io::{self, GridRecord};

pub fn run(
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    spacing: f64,
    out_file: &Path,
) -> CliResult<()> {
    if !(spacing > 0.0) || x_max <= x_min || y_max <= y_min {
        return Err(validation(
            "make-grid needs positive spacing and a non-empty bounding box",
        ));
    }
    let nx = ((x_max - x_min) / spacing).floor() as usize + 1;
    let ny = ((y_max - y_min) / spacing).floor() as usize + 1;
    let mut rows = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            rows.push(GridRecord {
                site_id: format!("g_{:05}", iy * nx + ix),
                location: Location::new(x_min + ix as f64 * spacing, y_min + iy as f64 * spacing),
            });
        }
    }
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_grid(out_file, &rows)?;
    println!("{} grid points -> {}", rows.len(), out_file.display());
    Ok(())
}
