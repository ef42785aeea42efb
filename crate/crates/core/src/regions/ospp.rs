//! Overlapped spatial pyramid pooling: base regions are the sampled squares,
//! described in the whitened regional max-pooling space.

use super::grid::{sample_grid, OsppConfig, RectRegion};
use super::{BaseRegionSet, Provenance};
use crate::aggregate::{region_vector, WhiteningModel};
use crate::error::{check_dim, Error, Result};
use crate::tensor::CfmTensor;

pub fn ospp(t: &CfmTensor, cfg: &OsppConfig, wm: &WhiteningModel) -> Result<BaseRegionSet> {
    cfg.validate()?;
    ospp_over(t, &sample_grid(t.height(), t.width(), cfg), wm)
}

/// OSPP descriptors over an explicit region list (duplicates kept).
/// Degenerate regions are dropped; `EmptyRegions` if none survive.
pub fn ospp_over(t: &CfmTensor, regions: &[RectRegion], wm: &WhiteningModel) -> Result<BaseRegionSet> {
    check_dim(wm.input_dim(), t.channels())?;
    let mut rows = Vec::with_capacity(regions.len());
    for r in regions {
        if let Some(v) = region_vector(t, r, wm)? {
            rows.push(v);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyRegions);
    }
    BaseRegionSet::from_rows(&rows, Provenance::Ospp)
}
