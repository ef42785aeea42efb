//! Base regions: the per-image region descriptor sets matched by QAM.

pub mod fmp;
pub mod grid;
pub mod kmeans;
pub mod ospp;

pub use fmp::{fmp, fmp_raw, FmpConfig, FmpRegions, RawRegion, RegionMask};
pub use grid::{sample_grid, sample_levels, OsppConfig, RectRegion};
pub use ospp::{ospp, ospp_over};

use crate::error::{Error, Result};
use crate::vecmath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Fmp,
    Ospp,
}

/// `K x dim` matrix of unit-norm region descriptors, one row per base region.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRegionSet {
    dim: usize,
    rows: Vec<f32>,
    provenance: Provenance,
}

impl BaseRegionSet {
    pub fn new(dim: usize, rows: Vec<f32>, provenance: Provenance) -> Result<Self> {
        if dim == 0 || rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(Error::Validation(format!(
                "region matrix of {} values cannot have row length {dim}",
                rows.len()
            )));
        }
        for (k, row) in rows.chunks_exact(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("region {k} has non-finite values")));
            }
            let n = vecmath::dot_f32(row, row).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!("region {k} has norm {n}")));
            }
        }
        Ok(BaseRegionSet {
            dim,
            rows,
            provenance,
        })
    }

    /// Normalizes each row; zero rows are rejected.
    pub fn from_rows(rows: &[Vec<f64>], provenance: Provenance) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let mut r = r.clone();
            if r.len() != dim || !vecmath::normalize(&mut r) {
                return Err(Error::Validation("zero or ragged region row".into()));
            }
            flat.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(dim, flat, provenance)
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.rows[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.rows.chunks_exact(self.dim)
    }

    pub fn raw(&self) -> &[f32] {
        &self.rows
    }
}
