use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::CfmTensor;

/// Weighted merge of feature maps: `M(h, w) = sum_d z[cluster(d)] X(h, w, d)`,
/// min-max normalized to `[0, 1]`. Returned row-major, `H * W` values.
///
/// A constant map normalizes to all ones when positive, and stays zero otherwise.
pub fn merged_heatmap(
    t: &CfmTensor,
    channel_cluster: &[Option<usize>],
    weights: &[f64],
) -> Result<Vec<f64>> {
    if channel_cluster.len() != t.channels() {
        return Err(Error::Validation(format!(
            "cluster map covers {} channels, tensor has {}",
            channel_cluster.len(),
            t.channels()
        )));
    }
    let clusters = channel_cluster.iter().flatten().max().map_or(0, |m| m + 1);
    if clusters != weights.len() {
        return Err(Error::Validation(format!(
            "{} weights for {clusters} clusters",
            weights.len()
        )));
    }
    let map: Vec<f64> = t
        .locals()
        .map(|x| {
            x.iter()
                .zip(channel_cluster)
                .filter_map(|(&v, c)| c.map(|c| weights[c] * v as f64))
                .sum()
        })
        .collect();
    Ok(min_max_normalize(map))
}

fn min_max_normalize(map: Vec<f64>) -> Vec<f64> {
    let min = map.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        map.into_iter().map(|v| (v - min) / (max - min)).collect()
    } else if max > 0.0 {
        vec![1.0; map.len()]
    } else {
        vec![0.0; map.len()]
    }
}

/// Binary PGM (P5) bytes for a `[0, 1]` map; each pixel is `round(255 v)`.
pub fn pgm_bytes(width: usize, height: usize, map: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(map.iter().map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, map: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if map.len() != width * height {
        return Err(Error::Validation(format!(
            "map of {} pixels is not {width}x{height}",
            map.len()
        )));
    }
    fs::write(path, pgm_bytes(width, height, map)).map_err(|e| Error::io(path, e))
}
