//! From per-second trip records to standardized, windowed supervised datasets.

mod features;
mod lag;
mod standardize;
mod trip;
mod window;

pub use features::{engineer_features, FeatureVector, FEATURE_NAMES, N_FEATURES};
pub use lag::{peak_correlation_lag, rolling_mean, rolling_sum, speed_energy_lag};
pub use standardize::{Standardizer, STD_FLOOR};
pub use trip::{load_trip_csv, write_trip_csv, ColumnMap, TripRecord};
pub use window::{chronological_split, make_windows, SplitSpec, WindowedDataset};
