//! Brute-force reference implementations used as test oracles. Each one is a
//! plain loop written from the operation's definition, sharing no code with
//! the library.
#![allow(dead_code)]

use qamret::aggregate::WhiteningModel;
use qamret::CfmTensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `None` when `v` is all zero.
pub fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm(&v) > 1e-3 {
            return unit(&v).unwrap();
        }
    }
}

/// Tensor whose entries are zero with probability `sparsity`, else `U(0, 2)`.
pub fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize, sparsity: f64) -> CfmTensor {
    let values = (0..h * w * d)
        .map(|_| if rng.gen_bool(sparsity) { 0.0 } else { rng.gen_range(0.0f32..2.0) })
        .collect();
    CfmTensor::new(h, w, d, values).unwrap()
}

/// Random whitening model with a full-rank-ish projection.
pub fn random_whitening(rng: &mut ChaCha8Rng, d: usize, out: usize) -> WhiteningModel {
    let mean = (0..d).map(|_| rng.gen_range(-0.2f32..0.2)).collect();
    let projection = (0..out * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let eigenvalues = (0..out).map(|i| 1.0 / (i + 1) as f32).collect();
    WhiteningModel::from_parts(mean, projection, eigenvalues).unwrap()
}

pub fn value(t: &CfmTensor, h: usize, w: usize, d: usize) -> f64 {
    t.values()[(h * t.width() + w) * t.channels() + d] as f64
}

pub fn oracle_spoc(t: &CfmTensor) -> Option<Vec<f64>> {
    let mut s = vec![0.0; t.channels()];
    for h in 0..t.height() {
        for w in 0..t.width() {
            for (d, sd) in s.iter_mut().enumerate() {
                *sd += value(t, h, w, d);
            }
        }
    }
    unit(&s)
}

/// `projection * (v - mean)`, then ℓ2.
pub fn oracle_whiten(m: &WhiteningModel, v: &[f64]) -> Option<Vec<f64>> {
    let mut out = vec![0.0; m.output_dim()];
    for (r, o) in out.iter_mut().enumerate() {
        let row = m.projection_row(r);
        for c in 0..m.input_dim() {
            *o += row[c] as f64 * (v[c] - m.mean()[c] as f64);
        }
    }
    unit(&out)
}

/// Square `(top, left, size)` regions from the multi-scale stride rule,
/// deduplicated across levels, in level / row / column order.
pub fn oracle_grid(h: usize, w: usize, levels: usize, overlap: f64) -> Vec<(usize, usize, usize)> {
    fn offsets(len: usize, size: usize, overlap: f64) -> Vec<usize> {
        if size >= len {
            return vec![0];
        }
        let mut n = 2;
        loop {
            let s = (len - size) as f64 / (n - 1) as f64;
            if s <= (1.0 - overlap) * size as f64 {
                let mut o: Vec<usize> = (0..n).map(|j| (j as f64 * s).round() as usize).collect();
                o.dedup();
                return o;
            }
            n += 1;
        }
    }
    let m = h.min(w);
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for l in 1..=levels {
        let size = ((2 * m) / (l + 1)).max(1).min(m);
        for &top in &offsets(h, size, overlap) {
            for &left in &offsets(w, size, overlap) {
                if !out.contains(&(top, left, size)) {
                    out.push((top, left, size));
                }
            }
        }
    }
    out
}

pub fn oracle_region_max(t: &CfmTensor, top: usize, left: usize, size: usize) -> Vec<f64> {
    let mut m = vec![0.0f64; t.channels()];
    for h in top..top + size {
        for w in left..left + size {
            for (d, md) in m.iter_mut().enumerate() {
                *md = md.max(value(t, h, w, d));
            }
        }
    }
    m
}

/// Per-region rows: max-pool → ℓ2 → whiten → ℓ2; degenerate regions skipped.
pub fn oracle_ospp(t: &CfmTensor, levels: usize, wm: &WhiteningModel) -> Vec<Vec<f64>> {
    oracle_grid(t.height(), t.width(), levels, 0.4)
        .into_iter()
        .filter_map(|(top, left, size)| {
            let v = unit(&oracle_region_max(t, top, left, size))?;
            oracle_whiten(wm, &v)
        })
        .collect()
}

pub fn oracle_rmac(t: &CfmTensor, levels: usize, wm: &WhiteningModel) -> Option<Vec<f64>> {
    let mut s = vec![0.0; wm.output_dim()];
    for row in oracle_ospp(t, levels, wm) {
        for (a, b) in s.iter_mut().zip(&row) {
            *a += b;
        }
    }
    unit(&s)
}

pub fn oracle_mask_sum(t: &CfmTensor, mask: &[usize]) -> Vec<f64> {
    let mut s = vec![0.0; t.channels()];
    for &i in mask {
        let (h, w) = (i / t.width(), i % t.width());
        for (d, sd) in s.iter_mut().enumerate() {
            *sd += value(t, h, w, d);
        }
    }
    s
}

/// `(channel, mask, normalized masked sum)` for every channel with a positive value.
pub fn oracle_fmp_raw(t: &CfmTensor) -> Vec<(usize, Vec<usize>, Vec<f64>)> {
    let mut out = Vec::new();
    for d in 0..t.channels() {
        let mut mask = Vec::new();
        for h in 0..t.height() {
            for w in 0..t.width() {
                if value(t, h, w, d) > 0.0 {
                    mask.push(h * t.width() + w);
                }
            }
        }
        if !mask.is_empty() {
            let sum = unit(&oracle_mask_sum(t, &mask)).unwrap();
            out.push((d, mask, sum));
        }
    }
    out
}

/// Largest cosine between `q` and `F^T z` over the simplex grid with `steps`
/// divisions per unit; 0 when no grid point has a positive inner product.
pub fn oracle_simplex_max(q: &[f64], rows: &[Vec<f64>], steps: usize) -> f64 {
    fn walk(q: &[f64], rows: &[Vec<f64>], k: usize, left: usize, z: &mut Vec<usize>, best: &mut f64) {
        if k + 1 == rows.len() {
            z.push(left);
            let mut v = vec![0.0; q.len()];
            for (zk, row) in z.iter().zip(rows) {
                for (a, b) in v.iter_mut().zip(row) {
                    *a += *zk as f64 * b;
                }
            }
            let n = norm(&v);
            if n > 0.0 {
                let c = q.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / n;
                if c > *best {
                    *best = c;
                }
            }
            z.pop();
            return;
        }
        for take in 0..=left {
            z.push(take);
            walk(q, rows, k + 1, left - take, z, best);
            z.pop();
        }
    }
    let mut best = 0.0;
    walk(q, rows, 0, steps, &mut Vec::new(), &mut best);
    best
}

/// Random QAM instance: unit query, `k` unit rows in `dim` dimensions. Rows
/// are biased towards the query so most instances are feasible.
pub fn random_instance(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let q = random_unit(rng, dim);
    let rows = (0..k)
        .map(|_| {
            let r = random_unit(rng, dim);
            let bias = rng.gen_range(0.0..0.8);
            let v: Vec<f64> = r.iter().zip(&q).map(|(a, b)| a + bias * b).collect();
            unit(&v).unwrap_or(r)
        })
        .collect();
    (q, rows)
}

/// Random QAM instance with query and rows in the nonnegative orthant, the
/// regime of sum-pooled activations.
pub fn random_nonnegative_instance(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut draw = || loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        if let Some(u) = unit(&v) {
            return u;
        }
    };
    let q = draw();
    let rows = (0..k).map(|_| draw()).collect();
    (q, rows)
}
