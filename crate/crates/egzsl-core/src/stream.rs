//! Seeded stream plans: a fixed random order over the test set, cut into
//! fixed-size stages (the last stage may be short).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamPlan {
    pub seed: u64,
    pub stage_size: usize,
    /// Permutation of test-sample positions; every position appears once.
    pub order: Vec<usize>,
}

impl StreamPlan {
    pub fn num_stages(&self) -> usize {
        self.order.len().div_ceil(self.stage_size)
    }

    pub fn stages(&self) -> impl Iterator<Item = &[usize]> {
        self.order.chunks(self.stage_size)
    }
}

/// Deterministic stream plan over `test_count` samples. No class-ratio
/// constraint is imposed: stages are whatever the permutation yields.
pub fn make_stream(test_count: usize, stage_size: usize, seed: u64) -> Result<StreamPlan> {
    if test_count == 0 {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if stage_size == 0 {
        return Err(Error::InvalidArgument("stage size must be >= 1".into()));
    }
    let mut rng = rng::stream(seed);
    Ok(StreamPlan {
        seed,
        stage_size,
        order: rng::permutation(&mut rng, test_count),
    })
}
