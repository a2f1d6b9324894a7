use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use crate::{Error, Result};

/// Sliding windows over a per-second feature series.
///
/// Windows are stored as origins into `series`, so overlapping windows share
/// storage. Each window's label is the summed energy of its seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    window_len: usize,
    series: Vec<FeatureVector>,
    origins: Vec<usize>,
    labels: Vec<f64>,
    /// Index of `series[0]` in the source trip.
    offset: usize,
}

impl WindowedDataset {
    /// Builds a dataset from explicit parts.
    pub fn from_parts(
        window_len: usize,
        series: Vec<FeatureVector>,
        origins: Vec<usize>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        if window_len == 0 {
            return Err(Error::param("window_len", "must be >= 1"));
        }
        if origins.len() != labels.len() {
            return Err(Error::Shape("origins and labels differ in length".into()));
        }
        if origins.iter().any(|&o| o + window_len > series.len()) {
            return Err(Error::Shape("window extends past the series".into()));
        }
        Ok(Self {
            window_len,
            series,
            origins,
            labels,
            offset: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// The `m` feature rows of window `k`.
    pub fn window(&self, k: usize) -> &[FeatureVector] {
        let o = self.origins[k];
        &self.series[o..o + self.window_len]
    }

    /// Window `k` flattened time-major into `m * 5` values.
    pub fn window_flat(&self, k: usize) -> &[f64] {
        self.window(k).as_flattened()
    }

    pub fn label(&self, k: usize) -> f64 {
        self.labels[k]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Origin of window `k` as an index into the source trip.
    pub fn origin(&self, k: usize) -> usize {
        self.offset + self.origins[k]
    }

    pub fn series(&self) -> &[FeatureVector] {
        &self.series
    }

    /// Number of windows covering each series row.
    pub fn coverage(&self) -> Vec<usize> {
        let mut diff = vec![0isize; self.series.len() + 1];
        for &o in &self.origins {
            diff[o] += 1;
            diff[o + self.window_len] -= 1;
        }
        let mut acc = 0isize;
        diff[..self.series.len()]
            .iter()
            .map(|d| {
                acc += d;
                acc as usize
            })
            .collect()
    }

    /// Applies `f` to every series row; labels are untouched.
    pub fn map_series(&self, mut f: impl FnMut(&FeatureVector) -> FeatureVector) -> Self {
        Self {
            series: self.series.iter().map(&mut f).collect(),
            ..self.clone()
        }
    }

    /// Contiguous sub-range of windows, with the series trimmed to what they
    /// cover.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        if range.is_empty() {
            return Self {
                window_len: self.window_len,
                series: Vec::new(),
                origins: Vec::new(),
                labels: Vec::new(),
                offset: self.offset,
            };
        }
        let first = self.origins[range.start];
        let last = self.origins[range.end - 1];
        Self {
            window_len: self.window_len,
            series: self.series[first..last + self.window_len].to_vec(),
            origins: self.origins[range.clone()]
                .iter()
                .map(|o| o - first)
                .collect(),
            labels: self.labels[range].to_vec(),
            offset: self.offset + first,
        }
    }
}

/// Sliding windows of length `m` with the given stride.
pub fn make_windows(
    features: &[FeatureVector],
    energies: &[f64],
    m: usize,
    stride: usize,
) -> Result<WindowedDataset> {
    if features.len() != energies.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} energies",
            features.len(),
            energies.len()
        )));
    }
    if m == 0 || stride == 0 {
        return Err(Error::param("window", "length and stride must be >= 1"));
    }
    let n = features.len();
    if n < m {
        return Err(Error::EmptyDataset { len: n, window: m });
    }
    let origins: Vec<usize> = (0..=n - m).step_by(stride).collect();
    let labels = origins
        .iter()
        .map(|&o| energies[o..o + m].iter().sum())
        .collect();
    WindowedDataset::from_parts(m, features.to_vec(), origins, labels)
}

/// Train:validation:test proportional weights, e.g. `8:1:1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl SplitSpec {
    pub const fn new(train: u32, val: u32, test: u32) -> Self {
        Self { train, val, test }
    }

    /// Sizes `floor(n * train)`, `floor(n * val)` and the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let total = u64::from(self.train + self.val + self.test);
        let n64 = n as u64;
        let tr = (n64 * u64::from(self.train) / total) as usize;
        let va = (n64 * u64::from(self.val) / total) as usize;
        (tr, va, n - tr - va)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::new(8, 1, 1)
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.train, self.val, self.test)
    }
}

impl FromStr for SplitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let bad = || {
            Error::param(
                "split",
                format!("expected three positive integers a:b:c, got `{s}`"),
            )
        };
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut v = [0u32; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| bad())?;
            if *slot == 0 {
                return Err(bad());
            }
        }
        Ok(Self::new(v[0], v[1], v[2]))
    }
}

/// Ordered, contiguous train/validation/test split (no shuffling, so
/// overlapping windows cannot leak labels backwards in time).
pub fn chronological_split(
    ds: &WindowedDataset,
    spec: SplitSpec,
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
    let n = ds.len();
    let (tr, va, te) = spec.sizes(n);
    for (size, part) in [(tr, "train"), (va, "validation"), (te, "test")] {
        if size == 0 {
            return Err(Error::EmptySplit {
                spec: spec.to_string(),
                n,
                part,
            });
        }
    }
    Ok((ds.slice(0..tr), ds.slice(tr..tr + va), ds.slice(tr + va..n)))
}
