//! Oxford buildings ground truth (`<q>_query.txt`, `<q>_good.txt`,
//! `<q>_ok.txt`, `<q>_junk.txt`) to manifest conversion.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::{CorpusManifest, ManifestEntry, ManifestQuery, Relevance};
use crate::tensor::GridBox;

fn read_ids(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.split_whitespace().map(str::to_string).collect())
}

fn tensor_dims(path: &Path) -> Result<(usize, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != crate::tensor::CFM_MAGIC {
        return Err(Error::Format(format!("{} is not a CFM1 file", path.display())));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    Ok((h, w))
}

/// Builds a manifest from every `*.cfm` in `tensor_dir` and the ground-truth
/// files in `gt_dir`. Good and ok images are relevant; junk stays junk.
///
/// With `grid_scale` (feature-map cells per pixel), each query's pixel box
/// `x1 y1 x2 y2` becomes a grid crop covering it; otherwise queries are uncropped.
pub fn convert_oxford_gt(
    gt_dir: impl AsRef<Path>,
    tensor_dir: impl AsRef<Path>,
    grid_scale: Option<f64>,
) -> Result<CorpusManifest> {
    let gt_dir = gt_dir.as_ref();
    let tensor_dir = tensor_dir.as_ref();
    let tensor_dir = tensor_dir.canonicalize().map_err(|e| Error::io(tensor_dir, e))?;

    let mut entries = Vec::new();
    let mut listing: Vec<_> = fs::read_dir(&tensor_dir)
        .map_err(|e| Error::io(&tensor_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfm"))
        .collect();
    listing.sort();
    for p in &listing {
        let id = p.file_stem().unwrap().to_string_lossy().into_owned();
        entries.push(ManifestEntry {
            id,
            tensor: p.to_string_lossy().into_owned(),
            label: None,
        });
    }

    let mut query_files: Vec<_> = fs::read_dir(gt_dir)
        .map_err(|e| Error::io(gt_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_query.txt"))
        .collect();
    query_files.sort();

    let mut queries = Vec::new();
    let mut relevance = BTreeMap::new();
    for qf in query_files {
        let name = qf.file_name().unwrap().to_string_lossy();
        let qid = name.trim_end_matches("_query.txt").to_string();
        let text = fs::read_to_string(&qf).map_err(|e| Error::io(&qf, e))?;
        let mut parts = text.split_whitespace();
        let image = parts
            .next()
            .ok_or_else(|| Error::Format(format!("{}: empty query file", qf.display())))?;
        let image = image.strip_prefix("oxc1_").unwrap_or(image).to_string();
        let coords: Vec<f64> = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{}: {e}", qf.display())))?;
        let tensor = tensor_dir.join(format!("{image}.cfm"));
        let crop = match (grid_scale, coords.as_slice()) {
            (Some(scale), [x1, y1, x2, y2]) => {
                let (h, w) = tensor_dims(&tensor)?;
                let top = ((y1 * scale).floor().max(0.0) as usize).min(h - 1);
                let left = ((x1 * scale).floor().max(0.0) as usize).min(w - 1);
                let bottom = ((y2 * scale).ceil() as usize).clamp(top + 1, h);
                let right = ((x2 * scale).ceil() as usize).clamp(left + 1, w);
                Some(GridBox {
                    top,
                    left,
                    height: bottom - top,
                    width: right - left,
                })
            }
            (Some(_), _) => {
                return Err(Error::Format(format!("{}: expected 4 box coordinates", qf.display())))
            }
            (None, _) => None,
        };
        queries.push(ManifestQuery {
            id: qid.clone(),
            tensor: tensor.to_string_lossy().into_owned(),
            crop,
        });
        let mut relevant = read_ids(&gt_dir.join(format!("{qid}_good.txt")))?;
        relevant.extend(read_ids(&gt_dir.join(format!("{qid}_ok.txt")))?);
        let junk = read_ids(&gt_dir.join(format!("{qid}_junk.txt")))?;
        relevance.insert(qid, Relevance { relevant, junk });
    }

    let manifest = CorpusManifest {
        entries,
        queries,
        relevance,
        base_dir: tensor_dir.clone(),
    };
    manifest.validate()?;
    Ok(manifest)
}
