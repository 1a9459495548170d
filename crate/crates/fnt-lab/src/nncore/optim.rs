//! Bias-corrected Adam over a parameter archive.

use std::collections::BTreeMap;

use super::archive::ParameterArchive;
use super::tape::GradMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates, keyed like the archive. `step` counts
/// completed updates and drives bias correction.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One update over every entry present in `grads`. Entries absent from the
/// gradient map (frozen or unused parameters) are left untouched, moments
/// included. Deterministic: plain loops in sorted name order.
pub fn adam_step(
    params: &mut ParameterArchive,
    grads: &GradMap,
    state: &mut AdamState,
    cfg: &AdamParams,
) -> Result<()> {
    for (name, grad) in grads {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
        if grad.len() != params.get(name).len() {
            return Err(Error::ShapeMismatch(format!("gradient for {name}")));
        }
    }
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (name, grad) in grads {
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; grad.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; grad.len()]);
        let p = &mut params.get_mut(name).data;
        for i in 0..grad.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParameterArchive {
        let mut a = ParameterArchive::new();
        a.insert("p", vec![1], vec![v]);
        a
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut arch = one_param(0.7);
        let mut grads = GradMap::new();
        grads.insert("p".into(), vec![0.0]);
        let mut st = AdamState::new();
        adam_step(&mut arch, &grads, &mut st, &AdamParams::default()).unwrap();
        assert_eq!(arch.scalar("p"), 0.7);
    }

    #[test]
    fn constant_positive_gradient_strictly_decreases_parameter() {
        let mut arch = one_param(1.0);
        let mut st = AdamState::new();
        let mut grads = GradMap::new();
        grads.insert("p".into(), vec![1.0]);
        let mut prev = 1.0;
        for _ in 0..10 {
            adam_step(&mut arch, &grads, &mut st, &AdamParams::default()).unwrap();
            let cur = arch.scalar("p");
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn identical_inputs_produce_bitwise_identical_updates() {
        let run = || {
            let mut arch = one_param(0.3);
            let mut st = AdamState::new();
            let mut grads = GradMap::new();
            grads.insert("p".into(), vec![0.25]);
            for _ in 0..5 {
                adam_step(&mut arch, &grads, &mut st, &AdamParams::default()).unwrap();
            }
            arch.scalar("p").to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut arch = one_param(0.3);
        let mut st = AdamState::new();
        let mut grads = GradMap::new();
        grads.insert("p".into(), vec![f64::NAN]);
        let err = adam_step(&mut arch, &grads, &mut st, &AdamParams::default()).unwrap_err();
        assert_eq!(err.code(), "non-finite-gradient");
        assert_eq!(arch.scalar("p"), 0.3);
    }
}
