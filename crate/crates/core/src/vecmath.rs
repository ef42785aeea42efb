//! Small dense-vector helpers. Accumulation is always in f64.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Normalizes in place; returns `false` (and leaves zeros) for a zero vector.
pub(crate) fn normalize(a: &mut [f64]) -> bool {
    let n = norm(a);
    if n > 0.0 && n.is_finite() {
        a.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        a.iter_mut().for_each(|x| *x = 0.0);
        false
    }
}

pub(crate) fn to_f64(a: &[f32]) -> Vec<f64> {
    a.iter().map(|&x| x as f64).collect()
}

pub(crate) fn to_f32(a: &[f64]) -> Vec<f32> {
    a.iter().map(|&x| x as f32).collect()
}
