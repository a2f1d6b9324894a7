use crate::{Error, Result};

/// Mean absolute error between predictions and labels.
pub fn mae_loss(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let sum: f64 = preds.iter().zip(labels).map(|(p, y)| (p - y).abs()).sum();
    Ok(sum / preds.len() as f64)
}
