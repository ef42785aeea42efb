//! Global image descriptors computed from feature-map tensors.

mod whitening;

pub use whitening::{apply_whitening, fit_whitening, WhiteningModel, EIGEN_FLOOR, WHITENING_MAGIC};

use crate::descriptor::GlobalDescriptor;
use crate::error::{check_dim, Error, Result};
use crate::regions::grid::{sample_grid, OsppConfig, RectRegion};
use crate::tensor::CfmTensor;
use crate::vecmath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMethod {
    /// Sum-pooling over all locations.
    Spoc,
    /// Sum of whitened, normalized per-region max-pooled vectors.
    Rmac,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationConfig {
    pub method: AggregationMethod,
    /// Number of region scales for R-MAC.
    pub scales: usize,
    pub whitening: Option<WhiteningModel>,
}

impl AggregationConfig {
    pub fn spoc(whitening: Option<WhiteningModel>) -> Self {
        AggregationConfig {
            method: AggregationMethod::Spoc,
            scales: 3,
            whitening,
        }
    }

    pub fn rmac(scales: usize, whitening: WhiteningModel) -> Self {
        AggregationConfig {
            method: AggregationMethod::Rmac,
            scales,
            whitening: Some(whitening),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 {
            return Err(Error::Config("R-MAC needs at least one scale".into()));
        }
        if self.method == AggregationMethod::Rmac && self.whitening.is_none() {
            return Err(Error::Config("R-MAC requires a whitening model".into()));
        }
        Ok(())
    }

    /// Region grid used by R-MAC (same sampler as OSPP).
    pub fn grid(&self) -> OsppConfig {
        OsppConfig {
            scales: self.scales,
            ..OsppConfig::default()
        }
    }
}

/// Unnormalized sum of all local descriptors.
pub fn sum_pool(t: &CfmTensor) -> Vec<f64> {
    let mut acc = vec![0.0f64; t.channels()];
    for x in t.locals() {
        for (a, &v) in acc.iter_mut().zip(x) {
            *a += v as f64;
        }
    }
    acc
}

/// Sum-pooled, ℓ2-normalized descriptor (SPoC without center prior).
pub fn spoc(t: &CfmTensor) -> GlobalDescriptor {
    GlobalDescriptor::normalized(&sum_pool(t))
}

/// Channel-wise maximum over a rectangular region.
pub fn region_max_pool(t: &CfmTensor, r: &RectRegion) -> Vec<f64> {
    let mut acc = vec![0.0f64; t.channels()];
    for h in r.top..r.top + r.height {
        for w in r.left..r.left + r.width {
            for (a, &v) in acc.iter_mut().zip(t.local_at(h, w)) {
                *a = a.max(v as f64);
            }
        }
    }
    acc
}

/// max-pool → ℓ2 → whiten → ℓ2 for one region. `None` for a degenerate region.
pub fn region_vector(t: &CfmTensor, r: &RectRegion, wm: &WhiteningModel) -> Result<Option<Vec<f64>>> {
    let mut v = region_max_pool(t, r);
    if !vecmath::normalize(&mut v) {
        return Ok(None);
    }
    let g = apply_whitening(wm, &v)?;
    Ok((!g.is_zero()).then(|| g.to_f64()))
}

/// Regional maximum activation of convolutions over the multi-scale grid.
pub fn rmac(t: &CfmTensor, cfg: &AggregationConfig) -> Result<GlobalDescriptor> {
    cfg.validate()?;
    let wm = cfg
        .whitening
        .as_ref()
        .ok_or_else(|| Error::Config("R-MAC requires a whitening model".into()))?;
    check_dim(wm.input_dim(), t.channels())?;
    rmac_over(t, &sample_grid(t.height(), t.width(), &cfg.grid()), wm)
}

pub(crate) fn rmac_over(
    t: &CfmTensor,
    regions: &[RectRegion],
    wm: &WhiteningModel,
) -> Result<GlobalDescriptor> {
    let mut acc = vec![0.0f64; wm.output_dim()];
    for r in regions {
        if let Some(v) = region_vector(t, r, wm)? {
            acc.iter_mut().zip(&v).for_each(|(a, x)| *a += x);
        }
    }
    Ok(GlobalDescriptor::normalized(&acc))
}

/// Global descriptor per `cfg`: whitened SPoC, or R-MAC.
pub fn global_descriptor(t: &CfmTensor, cfg: &AggregationConfig) -> Result<GlobalDescriptor> {
    match cfg.method {
        AggregationMethod::Spoc => {
            let sum = sum_pool(t);
            match &cfg.whitening {
                Some(wm) => {
                    let mut v = sum;
                    if !vecmath::normalize(&mut v) {
                        return Ok(GlobalDescriptor::zero(wm.output_dim()));
                    }
                    apply_whitening(wm, &v)
                }
                None => Ok(GlobalDescriptor::normalized(&sum)),
            }
        }
        AggregationMethod::Rmac => rmac(t, cfg),
    }
}

/// Raw (unwhitened) vectors used to fit whitening for `method`: the normalized
/// sum-pooled vector for SPoC, or every normalized region max-pool for R-MAC.
pub fn whitening_samples(t: &CfmTensor, method: AggregationMethod, scales: usize) -> Vec<Vec<f32>> {
    match method {
        AggregationMethod::Spoc => {
            let mut v = sum_pool(t);
            if vecmath::normalize(&mut v) {
                vec![vecmath::to_f32(&v)]
            } else {
                vec![]
            }
        }
        AggregationMethod::Rmac => {
            let grid = OsppConfig {
                scales,
                ..OsppConfig::default()
            };
            sample_grid(t.height(), t.width(), &grid)
                .iter()
                .filter_map(|r| {
                    let mut v = region_max_pool(t, r);
                    vecmath::normalize(&mut v).then(|| vecmath::to_f32(&v))
                })
                .collect()
        }
    }
}

/// Per-location ℓ1 norm of the local descriptors, divided by the maximum norm.
pub fn l1_norm_map(t: &CfmTensor) -> Vec<f64> {
    let norms: Vec<f64> = t
        .locals()
        .map(|x| x.iter().map(|&v| (v as f64).abs()).sum())
        .collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        norms.iter().map(|n| n / max).collect()
    } else {
        norms
    }
}
