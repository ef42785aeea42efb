//! Multi-scale square region sampling shared by OSPP and R-MAC.

use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RectRegion {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl RectRegion {
    pub fn contains(&self, h: usize, w: usize) -> bool {
        h >= self.top && h < self.top + self.height && w >= self.left && w < self.left + self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsppConfig {
    /// Number of pyramid levels `L`.
    pub scales: usize,
    /// Minimum fraction of overlap between consecutive regions on one axis.
    pub overlap: f64,
}

impl Default for OsppConfig {
    fn default() -> Self {
        OsppConfig {
            scales: 3,
            overlap: 0.4,
        }
    }
}

impl OsppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 {
            return Err(Error::Config("at least one scale is required".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap {} not in [0, 1)", self.overlap)));
        }
        Ok(())
    }
}

/// Side length of level `l` (1-based) regions: `floor(2 min(H, W) / (l + 1))`,
/// clamped to `[1, min(H, W)]`.
pub fn level_width(height: usize, width: usize, level: usize) -> usize {
    let m = height.min(width);
    (2 * m / (level + 1)).clamp(1, m)
}

/// Offsets of `size`-long windows along an axis of length `len`: one window
/// if it spans the axis, else the fewest windows (at least 2) whose stride
/// `(len - size) / (n - 1)` leaves `overlap * size` shared cells.
pub fn axis_offsets(len: usize, size: usize, overlap: f64) -> Vec<usize> {
    if size >= len {
        return vec![0];
    }
    let span = (len - size) as f64;
    let max_stride = (1.0 - overlap) * size as f64;
    let mut n = 2usize;
    while span / (n - 1) as f64 > max_stride {
        n += 1;
    }
    let stride = span / (n - 1) as f64;
    let mut out: Vec<usize> = (0..n).map(|j| (j as f64 * stride).round() as usize).collect();
    out.dedup();
    out
}

/// Regions of each level in row-major order, before cross-level deduplication.
pub fn sample_levels(height: usize, width: usize, cfg: &OsppConfig) -> Vec<Vec<RectRegion>> {
    (1..=cfg.scales)
        .map(|level| {
            let size = level_width(height, width, level);
            let tops = axis_offsets(height, size, cfg.overlap);
            let lefts = axis_offsets(width, size, cfg.overlap);
            tops.iter()
                .flat_map(|&top| {
                    lefts.iter().map(move |&left| RectRegion {
                        top,
                        left,
                        height: size,
                        width: size,
                    })
                })
                .collect()
        })
        .collect()
}

/// All sampled regions for an `height x width` grid, duplicates removed.
pub fn sample_grid(height: usize, width: usize, cfg: &OsppConfig) -> Vec<RectRegion> {
    let mut seen = HashSet::new();
    sample_levels(height, width, cfg)
        .into_iter()
        .flatten()
        .filter(|r| seen.insert(*r))
        .collect()
}
