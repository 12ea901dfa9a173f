use serde::{Deserialize, Serialize};

/// A planar location. Coordinates are whatever planar system the caller uses
/// (unit square for the simulators, pre-projected km for geographic data);
/// distances are Euclidean in that system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Location) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(&self, other: &Location) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Largest pairwise distance among `sites`; 0.0 for fewer than two sites.
pub fn max_pairwise_dist(sites: &[Location]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            d = d.max(sites[i].dist(&sites[j]));
        }
    }
    d
}

/// Centroid of `sites`. Panics on an empty slice.
pub fn centroid(sites: &[Location]) -> Location {
    assert!(!sites.is_empty());
    let n = sites.len() as f64;
    Location::new(
        sites.iter().map(|s| s.x).sum::<f64>() / n,
        sites.iter().map(|s| s.y).sum::<f64>() / n,
    )
}
