//! Query-adaptive matching: the best cosine between a query and any
//! nonnegative combination of an image's base regions.
//!
//! For region rows `f_k` and weights `z >= 0` the merged descriptor is
//! `sum_k z_k f_k` (renormalized). Maximizing its cosine with `q` is
//! scale-invariant in `z`, so fixing `q . (sum z_k f_k) = 1` turns it into
//!
//! ```text
//!     min ||F^T z||^2   s.t.  c^T z = 1,  z >= 0,     c_k = q . f_k
//! ```
//!
//! whose optimum `z*` gives similarity `1 / ||F^T z*||`.

mod heatmap;
mod solver;

pub use heatmap::{merged_heatmap, write_pgm, pgm_bytes};
pub use solver::{qam_similarity, solve, QamProblem, QamSolution, QamStatus, SolverConfig};
