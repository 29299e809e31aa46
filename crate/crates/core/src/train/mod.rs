//! Seeded training of the two encoders against the ECG-text and
//! ECG-teacher objectives.

mod config;
mod fit;
mod step;

pub use config::{LossVariant, RunConfig, TrainConfig};
pub use fit::{fit, write_metrics_csv, FitOutput, StepRecord, BEST_CHECKPOINT, FINAL_CHECKPOINT, METRICS_CSV};
pub use step::{batch_losses, prepare_samples, train_step, Batch, LossValues, PreparedSample, TARGET_FS};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Shuffles `indices` with a stream derived from `(seed, epoch)` and cuts it
/// into batches; the last batch may be short.
pub fn make_batches(indices: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if indices.is_empty() {
        return Err(Error::invalid("cannot batch an empty cohort"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let mut order = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch as u64);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_sizes() {
        let idx: Vec<usize> = (0..10).collect();
        let b = make_batches(&idx, 4, 1, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
    }

    #[test]
    fn epoch_determinism() {
        let idx: Vec<usize> = (0..32).collect();
        assert_eq!(make_batches(&idx, 8, 3, 2).unwrap(), make_batches(&idx, 8, 3, 2).unwrap());
        let orders: Vec<Vec<usize>> = (0..5).map(|e| make_batches(&idx, 32, 3, e).unwrap().concat()).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(orders[i], orders[j]);
            }
        }
    }

    #[test]
    fn empty_is_error() {
        assert!(make_batches(&[], 4, 0, 0).is_err());
    }
}
