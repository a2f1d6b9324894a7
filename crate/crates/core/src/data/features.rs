use super::TripRecord;
use crate::{Error, Result};

pub const N_FEATURES: usize = 5;

/// `[a, v, sqrt(v), v^3, sqrt(delta d)]` in SI units.
pub type FeatureVector = [f64; N_FEATURES];

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "accel",
    "speed",
    "sqrt_speed",
    "speed_cubed",
    "sqrt_step_distance",
];

/// Per-second engineered features. The first second's distance step is 0.
pub fn engineer_features(rec: &TripRecord) -> Result<Vec<FeatureVector>> {
    (0..rec.len())
        .map(|t| {
            let v = rec.speed[t];
            let dd = if t == 0 {
                0.0
            } else {
                rec.distance[t] - rec.distance[t - 1]
            };
            if !(v >= 0.0) {
                return Err(Error::Feature {
                    index: t,
                    reason: format!("negative speed {v}"),
                });
            }
            if !(dd >= 0.0) {
                return Err(Error::Feature {
                    index: t,
                    reason: format!("negative distance step {dd}"),
                });
            }
            Ok([rec.acceleration[t], v, v.sqrt(), v * v * v, dd.sqrt()])
        })
        .collect()
}
