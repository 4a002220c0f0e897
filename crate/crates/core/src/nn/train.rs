use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
}

/// Mean loss and mean parameter gradient over a minibatch.
///
/// Samples are evaluated in parallel; the reduction runs in sample order so
/// the result does not depend on the thread count.
pub fn batch_gradient<S, F>(n_params: usize, batch: &[S], f: F) -> Result<(f64, Vec<f64>)>
where
    S: Sync,
    F: Fn(&S) -> Result<(f64, Vec<f64>)> + Sync,
{
    let parts: Vec<(f64, Vec<f64>)> = batch.par_iter().map(&f).collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in parts {
        if !l.is_finite() {
            return Err(Error::DivergenceDetected(format!("loss {l}")));
        }
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let n = batch.len().max(1) as f64;
    grad.iter_mut().for_each(|v| *v /= n);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::DivergenceDetected("non-finite gradient".into()));
    }
    Ok((loss / n, grad))
}

/// Shuffled minibatches of `0..n`.
pub fn minibatches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn mean_over_batch() {
        let (l, g) = batch_gradient(2, &[1.0, 3.0], |&x: &f64| Ok((x, vec![x, 2.0 * x]))).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let r = batch_gradient(1, &[f64::NAN], |&x: &f64| Ok((x, vec![0.0])));
        assert!(matches!(r, Err(Error::DivergenceDetected(_))));
    }

    #[test]
    fn batches_cover_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = minibatches(10, 4, &mut rng);
        assert_eq!(b.len(), 3);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
