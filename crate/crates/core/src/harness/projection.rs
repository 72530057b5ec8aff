//! Random feature projection for dimensionality reduction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::Dataset;
use crate::numerics;

/// Replaces the features by `R x` where `R` is `out_dim × d` with i.i.d.
/// `N(0, 1/out_dim)` entries drawn from the given seed. Labels are
/// unchanged; the same seed reproduces the same projection.
pub fn random_projection(data: &Dataset, out_dim: usize, seed: u64) -> Result<Dataset> {
    if out_dim == 0 {
        return Err(Error::InvalidInput("projection dimension must be >= 1".into()));
    }
    let d = data.dim();
    let sd = (1.0 / out_dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..out_dim)
        .map(|_| (0..d).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect())
        .collect();
    apply_matrix(data, &rows)
}

/// Applies an explicit projection matrix (rows of length `data.dim()`).
pub(crate) fn apply_matrix(data: &Dataset, rows: &[Vec<f64>]) -> Result<Dataset> {
    let features = (0..data.count())
        .map(|i| {
            let x = data.feature(i);
            rows.iter().map(|r| numerics::dot(r, x)).collect()
        })
        .collect();
    Dataset::with_dim(rows.len(), features, data.labels().to_vec())
}
