//! Feature map pooling: each channel's positive-activation mask is a base
//! region; similar regions are merged by clustering their pooled descriptors.

use std::collections::BTreeSet;

use super::kmeans::kmeans;
use super::{BaseRegionSet, Provenance};
use crate::error::{Error, Result};
use crate::tensor::CfmTensor;
use crate::vecmath;

/// Sorted grid locations `i = h * W + w` belonging to a region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask(pub Vec<usize>);

impl RegionMask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn locations(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRegion {
    pub channel: usize,
    pub mask: RegionMask,
    /// ℓ2-normalized sum of the local descriptors under `mask`.
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FmpConfig {
    /// Upper bound on merged regions `K`.
    pub clusters: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for FmpConfig {
    fn default() -> Self {
        FmpConfig {
            clusters: 25,
            max_iterations: 100,
            seed: 0,
        }
    }
}

impl FmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.max_iterations == 0 {
            return Err(Error::Config("FMP needs K >= 1 and max-iterations >= 1".into()));
        }
        Ok(())
    }
}

/// Merged FMP regions for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FmpRegions {
    pub regions: BaseRegionSet,
    /// Union mask per merged region (row order of `regions`).
    pub masks: Vec<RegionMask>,
    /// Merged region index for every channel; `None` for all-zero channels.
    pub channel_cluster: Vec<Option<usize>>,
}

fn pool_mask(t: &CfmTensor, locations: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0f64; t.channels()];
    for &i in locations {
        for (a, &v) in acc.iter_mut().zip(t.local(i)) {
            *a += v as f64;
        }
    }
    acc
}

/// One region per channel with any positive activation, in channel order.
pub fn fmp_raw(t: &CfmTensor) -> Result<Vec<RawRegion>> {
    let d = t.channels();
    let mut masks: Vec<Vec<usize>> = vec![Vec::new(); d];
    let mut sums = vec![vec![0.0f64; d]; d];
    for (i, x) in t.locals().enumerate() {
        for (c, &v) in x.iter().enumerate() {
            if v > 0.0 {
                masks[c].push(i);
                sums[c].iter_mut().zip(x).for_each(|(s, &y)| *s += y as f64);
            }
        }
    }
    let out: Vec<RawRegion> = masks
        .into_iter()
        .zip(sums)
        .enumerate()
        .filter(|(_, (m, _))| !m.is_empty())
        .map(|(channel, (mask, mut descriptor))| {
            vecmath::normalize(&mut descriptor);
            RawRegion {
                channel,
                mask: RegionMask(mask),
                descriptor,
            }
        })
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyRegions);
    }
    Ok(out)
}

/// Clusters the raw channel regions into at most `cfg.clusters` merged regions.
/// A merged descriptor is re-pooled over the union of member masks, so cells
/// shared by several members count once.
pub fn fmp(t: &CfmTensor, cfg: &FmpConfig) -> Result<FmpRegions> {
    cfg.validate()?;
    let raw = fmp_raw(t)?;
    let assignment: Vec<usize> = if cfg.clusters >= raw.len() {
        (0..raw.len()).collect()
    } else {
        let points: Vec<Vec<f64>> = raw.iter().map(|r| r.descriptor.clone()).collect();
        kmeans(&points, cfg.clusters, cfg.max_iterations, cfg.seed).assignment
    };

    let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let mut unions: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_clusters];
    for (r, &a) in raw.iter().zip(&assignment) {
        unions[a].extend(r.mask.locations());
    }
    // Drop clusters that received no member, renumbering the rest in order.
    let mut remap = vec![None; n_clusters];
    let mut masks = Vec::new();
    let mut rows = Vec::new();
    for (c, u) in unions.into_iter().enumerate() {
        if u.is_empty() {
            continue;
        }
        remap[c] = Some(masks.len());
        let locs: Vec<usize> = u.into_iter().collect();
        rows.push(pool_mask(t, &locs));
        masks.push(RegionMask(locs));
    }
    let mut channel_cluster = vec![None; t.channels()];
    for (r, &a) in raw.iter().zip(&assignment) {
        channel_cluster[r.channel] = remap[a];
    }
    Ok(FmpRegions {
        regions: BaseRegionSet::from_rows(&rows, Provenance::Fmp)?,
        masks,
        channel_cluster,
    })
}
