use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::descriptor::GlobalDescriptor;
use crate::error::{check_dim, Error, Result};
use crate::regions::BaseRegionSet;
use crate::vecmath::{dot, norm};

/// Ridge added to a singular working-set system, relative to its largest diagonal.
const RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub objective_tolerance: f64,
    pub constraint_tolerance: f64,
    /// `None` means `10 K + 100`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            objective_tolerance: 1e-10,
            constraint_tolerance: 1e-9,
            max_iterations: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.objective_tolerance > 0.0 && self.constraint_tolerance > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::Config("max-iterations must be positive".into()));
        }
        Ok(())
    }

    fn iteration_cap(&self, k: usize) -> usize {
        self.max_iterations.unwrap_or(10 * k + 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QamStatus {
    Optimal,
    /// No region correlates positively with the query.
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QamSolution {
    /// Nonnegative region weights `z`.
    pub weights: Vec<f64>,
    pub similarity: f64,
    pub status: QamStatus,
    /// Multiplier of the equality constraint, `2 z^T G z`.
    pub multiplier: f64,
    pub iterations: usize,
}

/// A unit query and the `K` region rows to merge, in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct QamProblem {
    query: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl QamProblem {
    /// The query is renormalized; it must already be unit-norm within 1e-4.
    pub fn new(query: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("QAM needs at least one region".into()));
        }
        for r in &rows {
            check_dim(query.len(), r.len())?;
        }
        if query.iter().chain(rows.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite QAM input".into()));
        }
        let n = norm(&query);
        if (n - 1.0).abs() > 1e-4 {
            return Err(Error::Validation(format!("query norm {n} is not 1")));
        }
        let query = query.into_iter().map(|v| v / n).collect();
        Ok(QamProblem { query, rows })
    }

    pub fn from_descriptors(q: &GlobalDescriptor, regions: &BaseRegionSet) -> Result<Self> {
        check_dim(regions.dim(), q.dim())?;
        let rows = regions
            .rows()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        Self::new(q.to_f64(), rows)
    }

    pub fn query(&self) -> &[f64] {
        &self.query
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `sum_k z_k f_k`.
    pub fn merged(&self, z: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.query.len()];
        for (r, &zk) in self.rows.iter().zip(z) {
            if zk != 0.0 {
                v.iter_mut().zip(r).for_each(|(a, x)| *a += zk * x);
            }
        }
        v
    }

    /// Cosine between the query and the merged descriptor; 0 when degenerate.
    pub fn cosine(&self, z: &[f64]) -> f64 {
        let v = self.merged(z);
        let n = norm(&v);
        if n > 0.0 {
            dot(&self.query, &v) / n
        } else {
            0.0
        }
    }
}

/// Solves the working-set system `G_PP x = c_P`, regularizing if singular.
fn solve_working_set(g: &DMatrix<f64>, c: &[f64], set: &[usize]) -> Option<Vec<f64>> {
    let m = set.len();
    let a = DMatrix::from_fn(m, m, |i, j| g[(set[i], set[j])]);
    let b = DVector::from_iterator(m, set.iter().map(|&k| c[k]));
    let max_diag = (0..m).map(|i| a[(i, i)]).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);

    let well_conditioned = |l: &DMatrix<f64>| (0..m).all(|i| l[(i, i)] * l[(i, i)] > 1e-9 * max_diag);
    if let Some(ch) = a.clone().cholesky() {
        if well_conditioned(&ch.l()) {
            return Some(ch.solve(&b).iter().copied().collect());
        }
    }
    let ridged = &a + DMatrix::identity(m, m) * (RIDGE * max_diag);
    if let Some(ch) = ridged.cholesky() {
        let x = ch.solve(&b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x.iter().copied().collect());
        }
    }
    // Pseudo-inverse fallback.
    let eig = SymmetricEigen::new(a);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut x = DVector::zeros(m);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > RIDGE * top {
            let u = eig.eigenvectors.column(i);
            x += u * (u.dot(&b) / lambda);
        }
    }
    x.iter().all(|v| v.is_finite()).then(|| x.iter().copied().collect())
}

/// Primal active-set method on the KKT system of the matching QP.
pub fn solve(p: &QamProblem, cfg: &SolverConfig) -> QamSolution {
    let k = p.rows.len();
    let c: Vec<f64> = p.rows.iter().map(|r| dot(&p.query, r)).collect();
    let g = DMatrix::from_fn(k, k, |i, j| dot(&p.rows[i], &p.rows[j]));

    let (start, &cmax) = c
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .unwrap();
    if cmax <= 0.0 {
        return QamSolution {
            weights: vec![0.0; k],
            similarity: 0.0,
            status: QamStatus::Infeasible,
            multiplier: 0.0,
            iterations: 0,
        };
    }

    let mut z = vec![0.0; k];
    z[start] = 1.0 / cmax;
    let mut free = vec![start];
    let cap = cfg.iteration_cap(k);
    let mut status = QamStatus::MaxIterations;
    let mut iterations = 0;
    let gz = |z: &[f64]| -> Vec<f64> { (0..k).map(|i| (0..k).map(|j| g[(i, j)] * z[j]).sum()).collect() };

    while iterations < cap {
        iterations += 1;
        let Some(x) = solve_working_set(&g, &c, &free) else {
            break;
        };
        let cx: f64 = free.iter().zip(&x).map(|(&i, xi)| c[i] * xi).sum();
        if cx.is_nan() || cx <= 0.0 {
            break;
        }
        let w: Vec<f64> = x.iter().map(|xi| xi / cx).collect();
        let wmax = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let eps = 1e-13 * wmax;

        if w.iter().all(|&v| v >= -eps) {
            z.iter_mut().for_each(|v| *v = 0.0);
            for (&i, &v) in free.iter().zip(&w) {
                z[i] = v.max(0.0);
            }
            // Any index with zero weight leaves the working set.
            free.retain(|&i| z[i] > 0.0);

            let gzv = gz(&z);
            let lambda = 2.0 * dot(&z, &gzv);
            let scale = lambda.max(1.0) * c.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let tol = cfg.objective_tolerance * scale;
            let entering = (0..k)
                .filter(|i| !free.contains(i))
                .map(|i| (i, 2.0 * gzv[i] - lambda * c[i]))
                .filter(|&(_, gi)| gi < -tol)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            match entering {
                Some((i, _)) => free.push(i),
                None => {
                    status = QamStatus::Optimal;
                    break;
                }
            }
        } else {
            // Step towards w until the first weight hits zero.
            let mut alpha = 1.0f64;
            for (&i, &wi) in free.iter().zip(&w) {
                if wi < -eps {
                    alpha = alpha.min(z[i] / (z[i] - wi));
                }
            }
            let mut next = vec![0.0; k];
            for (&i, &wi) in free.iter().zip(&w) {
                next[i] = z[i] + alpha * (wi - z[i]);
            }
            for (&i, &wi) in free.iter().zip(&w) {
                if wi < -eps && z[i] / (z[i] - wi) <= alpha {
                    next[i] = 0.0;
                }
            }
            z = next;
            free.retain(|&i| z[i] > 0.0);
            if free.is_empty() {
                break;
            }
        }
    }

    // Restore the equality constraint exactly against rounding drift.
    let cz = dot(&c, &z);
    if cz > 0.0 && (cz - 1.0).abs() > cfg.constraint_tolerance {
        z.iter_mut().for_each(|v| *v /= cz);
    }
    let multiplier = 2.0 * dot(&z, &gz(&z));
    QamSolution {
        similarity: p.cosine(&z),
        weights: z,
        status,
        multiplier,
        iterations,
    }
}

/// QAM similarity between a global query descriptor and an image's regions.
/// Infeasible problems score 0.
pub fn qam_similarity(q: &GlobalDescriptor, regions: &BaseRegionSet, cfg: &SolverConfig) -> Result<f64> {
    check_dim(regions.dim(), q.dim())?;
    if q.is_zero() {
        return Ok(0.0);
    }
    let p = QamProblem::from_descriptors(q, regions)?;
    let s = solve(&p, cfg);
    Ok(match s.status {
        QamStatus::Infeasible => 0.0,
        _ => s.similarity,
    })
}
