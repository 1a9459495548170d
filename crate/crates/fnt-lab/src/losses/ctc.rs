//! CTC loss over the blank-augmented expanded target.
//!
//! Frame-level log-probabilities arrive as a T × (V+1) matrix with the CTC
//! blank in the last column. The forward-backward runs over the expanded
//! sequence [b, y1, b, y2, ..., b] of length 2U+1; loss and gradient are
//! exact.

use crate::error::{Error, Result};
use crate::nncore::kernels::{logaddexp, LOG_ZERO};
use crate::nncore::Mat;

/// Frames needed to align `target`: one per label plus one separator
/// between each adjacent repeat.
pub fn ctc_min_frames(target: &[usize]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

pub fn ctc_loss(log_probs: &Mat, target: &[usize]) -> Result<(f64, Vec<f64>)> {
    let t_len = log_probs.rows;
    let width = log_probs.cols;
    if width < 2 {
        return Err(Error::ShapeMismatch("ctc needs at least one label plus blank".into()));
    }
    let vocab = width - 1;
    let blank = vocab;
    if let Some(&bad) = target.iter().find(|&&y| y >= vocab) {
        return Err(Error::IdOutOfRange { id: bad, vocab });
    }
    let needed = ctc_min_frames(target);
    if needed > t_len {
        return Err(Error::CtcInfeasible { needed, frames: t_len });
    }

    // Expanded sequence: blanks interleaved around each label.
    let s_len = 2 * target.len() + 1;
    let sym = |s: usize| if s % 2 == 0 { blank } else { target[s / 2] };
    let lp = |t: usize, s: usize| log_probs.get(t, sym(s));

    let mut alpha = vec![LOG_ZERO; t_len * s_len];
    alpha[0] = lp(0, 0);
    if s_len > 1 {
        alpha[1] = lp(0, 1);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[(t - 1) * s_len + s];
            if s >= 1 {
                acc = logaddexp(acc, alpha[(t - 1) * s_len + s - 1]);
            }
            if s >= 2 && sym(s) != blank && sym(s) != sym(s - 2) {
                acc = logaddexp(acc, alpha[(t - 1) * s_len + s - 2]);
            }
            alpha[t * s_len + s] = if acc <= LOG_ZERO { LOG_ZERO } else { acc + lp(t, s) };
        }
    }
    let mut log_z = alpha[(t_len - 1) * s_len + s_len - 1];
    if s_len > 1 {
        log_z = logaddexp(log_z, alpha[(t_len - 1) * s_len + s_len - 2]);
    }
    if !log_z.is_finite() || log_z <= LOG_ZERO / 2.0 {
        return Err(Error::Diverged("ctc path sum underflowed".into()));
    }

    // beta excludes the emission at frame t, so alpha + beta is the full
    // posterior numerator for occupying (t, s).
    let mut beta = vec![LOG_ZERO; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[(t_len - 1) * s_len + s_len - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in (0..s_len).rev() {
            let mut acc = beta[(t + 1) * s_len + s] + lp(t + 1, s);
            if s + 1 < s_len {
                acc = logaddexp(acc, beta[(t + 1) * s_len + s + 1] + lp(t + 1, s + 1));
            }
            if s + 2 < s_len && sym(s + 2) != blank && sym(s + 2) != sym(s) {
                acc = logaddexp(acc, beta[(t + 1) * s_len + s + 2] + lp(t + 1, s + 2));
            }
            beta[t * s_len + s] = acc;
        }
    }

    let mut grad = vec![0.0; t_len * width];
    for t in 0..t_len {
        for s in 0..s_len {
            let post = alpha[t * s_len + s] + beta[t * s_len + s] - log_z;
            if post > LOG_ZERO / 2.0 {
                grad[t * width + sym(s)] -= post.exp();
            }
        }
    }
    Ok((-log_z, grad))
}
