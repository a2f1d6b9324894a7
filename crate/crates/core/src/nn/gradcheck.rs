use super::params::ParamVector;
use crate::{Error, Result};

/// Central-difference estimate of `d loss / d params[k]` for each `k` in
/// `coords`, returned in the same order.
pub fn finite_diff_gradient<F>(
    mut loss: F,
    params: &ParamVector,
    coords: &[usize],
    h: f64,
) -> Result<Vec<f64>>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::param("h", "step must be positive"));
    }
    let mut probe = params.clone();
    coords
        .iter()
        .map(|&k| {
            if k >= params.len() {
                return Err(Error::param("coords", format!("index {k} out of range")));
            }
            let w = params.values()[k];
            probe.values_mut()[k] = w + h;
            let up = loss(&probe)?;
            probe.values_mut()[k] = w - h;
            let down = loss(&probe)?;
            probe.values_mut()[k] = w;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
