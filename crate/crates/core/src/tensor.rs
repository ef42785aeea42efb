//! Convolutional feature-map tensors and the `CFM1` file format.
//!
//! Layout on disk: `b"CFM1"`, then `H`, `W`, `D` as little-endian `u32`, then
//! `H*W*D` little-endian `f32` values in row-major order (channel fastest).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const CFM_MAGIC: &[u8; 4] = b"CFM1";
const HEADER_LEN: usize = 16;

/// An `H x W x D` tensor of nonnegative, finite activations.
///
/// Each of the `H*W` grid locations holds a `D`-dimensional local descriptor.
/// Locations are numbered `i = h * W + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfmTensor {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f32>,
}

/// Rectangle on the feature-map grid, `[top, top + height) x [left, left + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CfmTensor {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        let t = CfmTensor {
            height,
            width,
            channels,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    /// Builds a tensor from a function of `(h, w, d)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width * channels);
        for h in 0..height {
            for w in 0..width {
                for d in 0..channels {
                    values.push(f(h, w, d));
                }
            }
        }
        Self::new(height, width, channels, values)
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Validation(format!(
                "empty tensor shape {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        let expected = self.height * self.width * self.channels;
        if self.values.len() != expected {
            return Err(Error::Validation(format!(
                "tensor holds {} values, shape requires {expected}",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "value {} at index {i} is negative or non-finite",
                self.values[i]
            )));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, h: usize, w: usize, d: usize) -> f32 {
        self.values[(h * self.width + w) * self.channels + d]
    }

    /// Local descriptor at grid location `i = h * W + w`.
    pub fn local(&self, i: usize) -> &[f32] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn local_at(&self, h: usize, w: usize) -> &[f32] {
        self.local(h * self.width + w)
    }

    pub fn locals(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.channels)
    }

    pub fn crop(&self, b: GridBox) -> Result<CfmTensor> {
        if b.height == 0 || b.width == 0 {
            return Err(Error::Range(format!("empty crop box {b:?}")));
        }
        if b.top + b.height > self.height || b.left + b.width > self.width {
            return Err(Error::Range(format!(
                "crop box {b:?} outside {}x{} grid",
                self.height, self.width
            )));
        }
        let mut values = Vec::with_capacity(b.height * b.width * self.channels);
        for h in b.top..b.top + b.height {
            let start = (h * self.width + b.left) * self.channels;
            values.extend_from_slice(&self.values[start..start + b.width * self.channels]);
        }
        Ok(CfmTensor {
            height: b.height,
            width: b.width,
            channels: self.channels,
            values,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.reserve(HEADER_LEN + self.values.len() * 4);
        w.bytes(CFM_MAGIC);
        w.u32(self.height as u32);
        w.u32(self.width as u32);
        w.u32(self.channels as u32);
        w.f32s(&self.values);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CFM_MAGIC)?;
        let height = r.u32()? as usize;
        let width = r.u32()? as usize;
        let channels = r.u32()? as usize;
        r.section("payload");
        let n = height
            .checked_mul(width)
            .and_then(|x| x.checked_mul(channels))
            .ok_or_else(|| Error::Format("tensor shape overflows".into()))?;
        let values = r.f32s(n)?;
        r.finish()?;
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "value {} at index {i} (byte offset {}) is negative or non-finite",
                values[i],
                HEADER_LEN + 4 * i
            )));
        }
        CfmTensor::new(height, width, channels, values)
    }
}

pub fn write_tensor(t: &CfmTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    t.validate()?;
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<CfmTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CfmTensor::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
}

pub fn crop_tensor(t: &CfmTensor, b: GridBox) -> Result<CfmTensor> {
    t.crop(b)
}
