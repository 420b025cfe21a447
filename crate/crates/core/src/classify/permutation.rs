use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{cross_validate, CvConfig, FeatureMatrix, ModelKind};

/// Accuracies this close count as equal; fold means can differ in the last bit.
const ACC_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub n_perm: usize,
    pub true_accuracy: f64,
    /// Permutations whose mean CV accuracy reached the true accuracy.
    pub count_ge: usize,
    pub p_value: f64,
}

/// `(1 + count) / (1 + n_perm)`.
pub fn permutation_p_value(count_ge: usize, n_perm: usize) -> f64 {
    (1 + count_ge) as f64 / (1 + n_perm) as f64
}

/// Nearest-centroid label-permutation test. Permutation `i` shuffles labels
/// with stream `i + 1` of a generator seeded by `seed` and re-stratifies folds.
pub fn permutation_test(
    m: &FeatureMatrix,
    n_perm: usize,
    cfg: &CvConfig,
    seed: u64,
) -> Result<PermutationResult> {
    if n_perm == 0 {
        return Err(Error::InvalidArgument("n_perm must be >= 1".into()));
    }
    let kind = ModelKind::NearestCentroid;
    let true_accuracy = cross_validate(&kind, m, cfg)?.accuracy_mean;
    let accs: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mut y = m.y.clone();
            y.shuffle(&mut rng);
            cross_validate(&kind, &m.with_labels(y), cfg).map(|r| r.accuracy_mean)
        })
        .collect::<Result<_>>()?;
    let count_ge = accs.iter().filter(|&&a| a >= true_accuracy - ACC_EPS).count();
    Ok(PermutationResult {
        n_perm,
        true_accuracy,
        count_ge,
        p_value: permutation_p_value(count_ge, n_perm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form() {
        assert_eq!(permutation_p_value(0, 999), 0.001);
        assert_eq!(permutation_p_value(999, 999), 1.0);
        assert_eq!(permutation_p_value(4, 99), 0.05);
    }
}
