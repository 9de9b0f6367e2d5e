//! Per-class GZSL accuracy metrics and multi-seed aggregation.
//!
//! The headline number is the harmonic mean H of the mean per-class top-1
//! accuracies over seen (A^s) and unseen (A^u) classes. Classes with zero
//! test samples are excluded from the per-class average.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTallies {
    pub hits: Vec<u64>,
    pub totals: Vec<u64>,
}

impl ClassTallies {
    pub fn new(num_classes: usize) -> Self {
        ClassTallies {
            hits: vec![0; num_classes],
            totals: vec![0; num_classes],
        }
    }

    pub fn record(&mut self, true_label: usize, predicted: usize) {
        self.totals[true_label] += 1;
        if predicted == true_label {
            self.hits[true_label] += 1;
        }
    }

    pub fn sample_count(&self) -> u64 {
        self.totals.iter().sum()
    }

    /// Mean per-class accuracy over the given classes; classes with zero
    /// samples are excluded. Returns 0 when no class has samples.
    pub fn mean_per_class_accuracy(&self, classes: &[usize]) -> f64 {
        let mut sum = 0.0;
        let mut counted = 0usize;
        for &y in classes {
            if self.totals[y] > 0 {
                sum += self.hits[y] as f64 / self.totals[y] as f64;
                counted += 1;
            }
        }
        if counted == 0 {
            0.0
        } else {
            sum / counted as f64
        }
    }
}

/// `2ab / (a + b)`, or 0 when both accuracies are 0.
pub fn harmonic_mean(acc_seen: f64, acc_unseen: f64) -> f64 {
    let denom = acc_seen + acc_unseen;
    if denom > 0.0 {
        2.0 * acc_seen * acc_unseen / denom
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GzslMetrics {
    pub acc_unseen: f64,
    pub acc_seen: f64,
    pub harmonic: f64,
}

pub fn gzsl_metrics(tallies: &ClassTallies, seen: &[usize], unseen: &[usize]) -> GzslMetrics {
    let acc_seen = tallies.mean_per_class_accuracy(seen);
    let acc_unseen = tallies.mean_per_class_accuracy(unseen);
    GzslMetrics {
        acc_unseen,
        acc_seen,
        harmonic: harmonic_mean(acc_seen, acc_unseen),
    }
}

/// Mean and sample standard deviation (n-1 denominator; 0 for fewer than two
/// values, and exactly 0 when every value is bitwise identical).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
}

pub fn metric_stats(values: &[f64]) -> MetricStats {
    assert!(!values.is_empty(), "metric_stats over no values");
    if values.iter().all(|&v| v == values[0]) {
        return MetricStats {
            mean: values[0],
            std: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    MetricStats {
        mean,
        std: (ss / (n - 1.0)).sqrt(),
    }
}
