pub mod evaluate;
pub mod filter_cmd;
pub mod idw;
pub mod make_grid;
pub mod simulate;
pub mod train_obs;

/// Seeds must be explicit or auto-generated and recorded; an auto seed comes
/// from the wall clock and lands in the metadata sidecar.
pub fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        use std::time::{SystemTime, UNIX_EPOCH};
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        eprintln!("no seed given; generated {nanos} (recorded in metadata.json)");
        nanos
    })
}
