use super::TripRecord;
use crate::{Error, Result};

/// Trailing rolling sums over `w` samples; output has `len - w + 1` entries.
pub fn rolling_sum(x: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || x.len() < w {
        return Vec::new();
    }
    x.windows(w).map(|s| s.iter().sum()).collect()
}

pub fn rolling_mean(x: &[f64], w: usize) -> Vec<f64> {
    rolling_sum(x, w)
        .into_iter()
        .map(|s| s / w as f64)
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Lag `L` in `[0, max_lag]` maximizing `corr(lead[t], follow[t + L])`.
/// Ties go to the smaller lag.
pub fn peak_correlation_lag(lead: &[f64], follow: &[f64], max_lag: usize) -> Result<usize> {
    let n = lead.len().min(follow.len());
    if n <= 2 * max_lag {
        return Err(Error::param(
            "max_lag",
            format!("series of length {n} too short for lag {max_lag}"),
        ));
    }
    let mut best: Option<(usize, f64)> = None;
    for lag in 0..=max_lag {
        let r = pearson(&lead[..n - lag], &follow[lag..n])
            .ok_or_else(|| Error::UndefinedCorrelation(format!("constant series at lag {lag}")))?;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((lag, r));
        }
    }
    Ok(best.expect("max_lag >= 0").0)
}

/// Delay of the 60-s rolling energy behind the 60-s rolling mean speed.
pub fn speed_energy_lag(rec: &TripRecord, max_lag: usize) -> Result<usize> {
    const W: usize = 60;
    if rec.len() <= 2 * max_lag {
        return Err(Error::param(
            "max_lag",
            format!("record of length {} too short", rec.len()),
        ));
    }
    let speed = rolling_mean(&rec.speed, W);
    let energy = rolling_sum(&rec.energy_wh, W);
    peak_correlation_lag(&speed, &energy, max_lag)
}
