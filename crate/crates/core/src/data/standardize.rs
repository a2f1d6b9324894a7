use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, N_FEATURES};
use super::window::WindowedDataset;

/// Standard deviations below this are treated as a constant feature.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature z-scoring with population statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: FeatureVector,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: FeatureVector,
}

impl Standardizer {
    /// Fits over every timestep of every window, so rows shared by
    /// overlapping windows count once per window.
    pub fn fit(train: &WindowedDataset) -> Self {
        let coverage = train.coverage();
        let series = train.series();
        let total: f64 = coverage.iter().map(|&c| c as f64).sum();
        let mut mean = [0.0; N_FEATURES];
        let mut std = [STD_FLOOR; N_FEATURES];
        if total == 0.0 {
            return Self { mean, std };
        }
        for (row, &c) in series.iter().zip(&coverage) {
            for j in 0..N_FEATURES {
                mean[j] += c as f64 * row[j];
            }
        }
        for m in &mut mean {
            *m /= total;
        }
        let mut var = [0.0; N_FEATURES];
        for (row, &c) in series.iter().zip(&coverage) {
            for j in 0..N_FEATURES {
                let d = row[j] - mean[j];
                var[j] += c as f64 * d * d;
            }
        }
        for j in 0..N_FEATURES {
            std[j] = (var[j] / total).sqrt().max(STD_FLOOR);
        }
        Self { mean, std }
    }

    fn is_constant(&self, j: usize) -> bool {
        self.std[j] <= STD_FLOOR
    }

    pub fn transform_row(&self, row: &FeatureVector) -> FeatureVector {
        std::array::from_fn(|j| {
            if self.is_constant(j) {
                0.0
            } else {
                (row[j] - self.mean[j]) / self.std[j]
            }
        })
    }

    pub fn inverse_row(&self, row: &FeatureVector) -> FeatureVector {
        std::array::from_fn(|j| row[j] * self.std[j] + self.mean[j])
    }

    /// Standardizes the features; labels stay in Wh.
    pub fn apply(&self, ds: &WindowedDataset) -> WindowedDataset {
        ds.map_series(|r| self.transform_row(r))
    }
}
