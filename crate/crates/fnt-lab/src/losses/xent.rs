//! LM cross-entropy and KL divergence over predictor output rows.

use crate::error::{Error, Result};
use crate::nncore::Mat;

/// Mean negative log-probability of the target tokens, one per row of
/// `pred_log_probs` (U × V). Per-token averaging keeps the loss weight
/// comparable across corpus sizes.
pub fn lm_cross_entropy(pred_log_probs: &Mat, target: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (u_len, vocab) = (pred_log_probs.rows, pred_log_probs.cols);
    if target.len() != u_len {
        return Err(Error::ShapeMismatch(format!(
            "target length {} vs {} prediction rows",
            target.len(),
            u_len
        )));
    }
    if let Some(&bad) = target.iter().find(|&&y| y >= vocab) {
        return Err(Error::IdOutOfRange { id: bad, vocab });
    }
    if u_len == 0 {
        return Ok((0.0, Vec::new()));
    }
    let scale = 1.0 / u_len as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; u_len * vocab];
    for (u, &y) in target.iter().enumerate() {
        loss -= pred_log_probs.get(u, y);
        grad[u * vocab + y] = -scale;
    }
    Ok((loss * scale, grad))
}

/// Forward KL between row distributions, (1/U)·Σ_u Σ_k exp(a)·(a − b),
/// with the adapted model first and the baseline treated as a constant:
/// the gradient is with respect to `adapted` only.
pub fn kl_divergence(adapted: &Mat, baseline: &Mat) -> Result<(f64, Vec<f64>)> {
    if adapted.rows != baseline.rows || adapted.cols != baseline.cols {
        return Err(Error::ShapeMismatch(format!(
            "kl operands {}×{} vs {}×{}",
            adapted.rows, adapted.cols, baseline.rows, baseline.cols
        )));
    }
    if adapted.rows == 0 {
        return Ok((0.0, Vec::new()));
    }
    let scale = 1.0 / adapted.rows as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; adapted.data.len()];
    for (i, (&a, &b)) in adapted.data.iter().zip(&baseline.data).enumerate() {
        let diff = a - b; // exactly 0.0 when a == b, so KL(x, x) = 0 exactly
        let pa = a.exp();
        value += pa * diff;
        grad[i] = scale * pa * (diff + 1.0);
    }
    Ok((value * scale, grad))
}
