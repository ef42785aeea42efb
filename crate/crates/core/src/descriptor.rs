use crate::error::{Error, Result};
use crate::vecmath;

/// Unit-norm image descriptor, or the explicitly flagged all-zero descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor {
    values: Vec<f32>,
    zero: bool,
}

impl GlobalDescriptor {
    /// ℓ2-normalizes `v`. A zero (or non-finite norm) vector becomes the flagged
    /// zero descriptor.
    pub fn normalized(v: &[f64]) -> Self {
        let mut v = v.to_vec();
        let ok = vecmath::normalize(&mut v);
        GlobalDescriptor {
            values: vecmath::to_f32(&v),
            zero: !ok,
        }
    }

    pub fn zero(dim: usize) -> Self {
        GlobalDescriptor {
            values: vec![0.0; dim],
            zero: true,
        }
    }

    /// Wraps stored values, checking the unit-norm invariant.
    pub fn from_unit(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite descriptor value".into()));
        }
        let n = vecmath::dot_f32(&values, &values).sqrt();
        if n == 0.0 {
            return Ok(GlobalDescriptor { values, zero: true });
        }
        if (n - 1.0).abs() > 1e-5 {
            return Err(Error::Validation(format!("descriptor norm {n} is not 1")));
        }
        Ok(GlobalDescriptor { values, zero: false })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        vecmath::to_f64(&self.values)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn dot(&self, other: &[f32]) -> f64 {
        vecmath::dot_f32(&self.values, other)
    }
}
