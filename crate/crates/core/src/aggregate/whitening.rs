//! PCA-whitening learned on hold-out descriptors.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::binio::{Reader, Writer};
use crate::descriptor::GlobalDescriptor;
use crate::error::{check_dim, Error, Result};

pub const WHITENING_MAGIC: &[u8; 4] = b"WHT1";

/// Eigenvalues below this fraction of the largest one get a zero scale.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Mean vector plus a `D' x D` projection whose rows are covariance
/// eigenvectors (eigenvalues descending) scaled by `1/sqrt(eigenvalue)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningModel {
    input_dim: usize,
    output_dim: usize,
    mean: Vec<f32>,
    /// Row-major `output_dim x input_dim`.
    projection: Vec<f32>,
    eigenvalues: Vec<f32>,
}

impl WhiteningModel {
    pub fn identity(dim: usize) -> Self {
        let mut projection = vec![0.0; dim * dim];
        for i in 0..dim {
            projection[i * dim + i] = 1.0;
        }
        WhiteningModel {
            input_dim: dim,
            output_dim: dim,
            mean: vec![0.0; dim],
            projection,
            eigenvalues: vec![1.0; dim],
        }
    }

    pub fn from_parts(
        mean: Vec<f32>,
        projection: Vec<f32>,
        eigenvalues: Vec<f32>,
    ) -> Result<Self> {
        let input_dim = mean.len();
        let output_dim = eigenvalues.len();
        if input_dim == 0 || output_dim == 0 || output_dim > input_dim {
            return Err(Error::Validation(format!(
                "whitening shape {output_dim}x{input_dim} is invalid"
            )));
        }
        check_dim(input_dim * output_dim, projection.len())?;
        let all = mean.iter().chain(&projection).chain(&eigenvalues);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite whitening parameter".into()));
        }
        Ok(WhiteningModel {
            input_dim,
            output_dim,
            mean,
            projection,
            eigenvalues,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn projection_row(&self, r: usize) -> &[f32] {
        &self.projection[r * self.input_dim..(r + 1) * self.input_dim]
    }

    pub fn eigenvalues(&self) -> &[f32] {
        &self.eigenvalues
    }

    /// Number of retained dimensions whose scale was clamped to zero.
    pub fn clamped_dims(&self) -> usize {
        (0..self.output_dim)
            .filter(|&r| self.projection_row(r).iter().all(|&v| v == 0.0))
            .count()
    }

    /// `projection * (v - mean)` without the final normalization.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, v.len())?;
        let centered: Vec<f64> = v
            .iter()
            .zip(&self.mean)
            .map(|(&x, &m)| x - m as f64)
            .collect();
        Ok((0..self.output_dim)
            .map(|r| {
                self.projection_row(r)
                    .iter()
                    .zip(&centered)
                    .map(|(&p, &c)| p as f64 * c)
                    .sum()
            })
            .collect())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.input_dim as u32);
        w.u32(self.output_dim as u32);
        w.f32s(&self.mean);
        w.f32s(&self.projection);
        w.f32s(&self.eigenvalues);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let input_dim = r.u32()? as usize;
        let output_dim = r.u32()? as usize;
        let mean = r.f32s(input_dim)?;
        let projection = r.f32s(input_dim.saturating_mul(output_dim))?;
        let eigenvalues = r.f32s(output_dim)?;
        Self::from_parts(mean, projection, eigenvalues)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = Writer::default();
        w.bytes(WHITENING_MAGIC);
        self.encode(&mut w);
        fs::write(path, w.buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader::new(&bytes);
        r.magic(WHITENING_MAGIC)?;
        r.section("whitening");
        let m = Self::decode(&mut r)?;
        r.finish()?;
        Ok(m)
    }
}

/// Fits a whitening model on `samples` keeping `out_dim` leading components.
pub fn fit_whitening<S: AsRef<[f32]>>(samples: &[S], out_dim: usize) -> Result<WhiteningModel> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "whitening needs at least 2 samples, got {n}"
        )));
    }
    let dim = samples[0].as_ref().len();
    if dim == 0 {
        return Err(Error::Validation("zero-dimensional samples".into()));
    }
    if out_dim == 0 || out_dim > dim || out_dim > n {
        return Err(Error::Config(format!(
            "output dimension {out_dim} must be in 1..={}",
            dim.min(n)
        )));
    }
    let mut mean = vec![0.0f64; dim];
    for s in samples {
        let s = s.as_ref();
        check_dim(dim, s.len())?;
        for (m, &x) in mean.iter_mut().zip(s) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for s in samples {
        for ((c, &x), m) in centered.iter_mut().zip(s.as_ref()).zip(&mean) {
            *c = x as f64 - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let largest = eig.eigenvalues[order[0]].max(0.0);

    let mut projection = Vec::with_capacity(out_dim * dim);
    let mut eigenvalues = Vec::with_capacity(out_dim);
    for &k in order.iter().take(out_dim) {
        let lambda = eig.eigenvalues[k].max(0.0);
        let col = eig.eigenvectors.column(k);
        // Sign convention: largest-magnitude component positive.
        let pivot = col.iter().fold(0.0f64, |acc, &v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let scale = if largest > 0.0 && lambda > EIGEN_FLOOR * largest {
            sign / lambda.sqrt()
        } else {
            0.0
        };
        projection.extend(col.iter().map(|&v| (v * scale) as f32));
        eigenvalues.push(lambda as f32);
    }
    WhiteningModel::from_parts(
        mean.iter().map(|&m| m as f32).collect(),
        projection,
        eigenvalues,
    )
}

/// Projects, then ℓ2-normalizes; `v == mean` yields the flagged zero descriptor.
pub fn apply_whitening(m: &WhiteningModel, v: &[f64]) -> Result<GlobalDescriptor> {
    Ok(GlobalDescriptor::normalized(&m.project(v)?))
}
