//! Shared forward kernels.
//!
//! Both the tape ops and the stateful decoding path call into these, so the
//! two paths cannot drift apart numerically.

/// Log-domain minus infinity. Never fed to `exp` without the result
/// underflowing to zero, which is safe.
pub const LOG_ZERO: f64 = -1.0e30;

/// Numerically stable log(exp(a) + exp(b)).
pub fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi <= LOG_ZERO {
        return LOG_ZERO;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// y = W·x + b for a single row, W stored row-major as (out × in).
pub fn affine_row(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    debug_assert_eq!(w.len(), out.len() * n_in);
    debug_assert_eq!(b.len(), out.len());
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * n_in..(i + 1) * n_in];
        let mut acc = b[i];
        for (wj, xj) in row.iter().zip(x) {
            acc += wj * xj;
        }
        *o = acc;
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place log_softmax of one row: subtract max, then the log-sum-exp.
pub fn log_softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter() {
        sum += (v - max).exp();
    }
    let lse = max + sum.ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

/// One step of the single-gate recurrent cell.
///
/// ```text
/// f      = sigmoid(Wf·[h_prev; x] + bf)
/// hcand  = tanh(Wh·[f ⊙ h_prev; x] + bh)
/// h_new  = (1 − f) ⊙ h_prev + f ⊙ hcand
/// ```
///
/// With zero state, zero input, and zero weights the output is zero, and
/// every coordinate of `h_new` stays in (−1, 1) by induction from h = 0.
/// `f_out` and `hcand_out` receive the gate and candidate activations so a
/// caller can cache them for the backward pass.
pub fn mgu_step(
    wf: &[f64],
    bf: &[f64],
    wh: &[f64],
    bh: &[f64],
    h_prev: &[f64],
    x: &[f64],
    f_out: &mut [f64],
    hcand_out: &mut [f64],
    h_new: &mut [f64],
) {
    let hidden = h_prev.len();
    let n_in = hidden + x.len();
    debug_assert_eq!(wf.len(), hidden * n_in);
    debug_assert_eq!(wh.len(), hidden * n_in);

    for i in 0..hidden {
        let row = &wf[i * n_in..(i + 1) * n_in];
        let mut acc = bf[i];
        for (wj, hj) in row[..hidden].iter().zip(h_prev) {
            acc += wj * hj;
        }
        for (wj, xj) in row[hidden..].iter().zip(x) {
            acc += wj * xj;
        }
        f_out[i] = sigmoid(acc);
    }
    for i in 0..hidden {
        let row = &wh[i * n_in..(i + 1) * n_in];
        let mut acc = bh[i];
        for j in 0..hidden {
            acc += row[j] * f_out[j] * h_prev[j];
        }
        for (wj, xj) in row[hidden..].iter().zip(x) {
            acc += wj * xj;
        }
        hcand_out[i] = acc.tanh();
    }
    for i in 0..hidden {
        h_new[i] = (1.0 - f_out[i]) * h_prev[i] + f_out[i] * hcand_out[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logaddexp_matches_direct_sum() {
        let v = logaddexp(0.3_f64.ln(), 0.2_f64.ln());
        assert!((v - 0.5_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logaddexp_handles_log_zero() {
        assert_eq!(logaddexp(LOG_ZERO, LOG_ZERO), LOG_ZERO);
        let v = logaddexp(LOG_ZERO, -1.5);
        assert!((v - -1.5).abs() < 1e-12);
    }

    #[test]
    fn log_softmax_row_normalizes_and_is_shift_invariant() {
        let mut a = vec![0.4, -1.2, 3.0];
        let mut b: Vec<f64> = a.iter().map(|v| v + 17.5).collect();
        log_softmax_row(&mut a);
        log_softmax_row(&mut b);
        let sum: f64 = a.iter().map(|v| v.exp()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_row_survives_large_inputs() {
        let mut a = vec![1000.0, 0.0];
        log_softmax_row(&mut a);
        assert!(a.iter().all(|v| v.is_finite()));
        assert!(a[0].abs() < 1e-12);
    }

    #[test]
    fn mgu_step_zero_everything_is_zero() {
        let h = 3;
        let d = 2;
        let n = h * (h + d);
        let (mut f, mut c, mut out) = (vec![0.0; h], vec![0.0; h], vec![0.0; h]);
        mgu_step(
            &vec![0.0; n],
            &vec![0.0; h],
            &vec![0.0; n],
            &vec![0.0; h],
            &vec![0.0; h],
            &vec![0.0; d],
            &mut f,
            &mut c,
            &mut out,
        );
        assert!(out.iter().all(|v| *v == 0.0));
    }
}
