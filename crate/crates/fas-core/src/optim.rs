//! AdamW with decoupled weight decay and the warmup-cosine schedule.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::{GradMap, ParameterStore};

/// Per-parameter first/second moment accumulators plus hyperparameters.
/// Shapes mirror the parameter store exactly, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    /// Betas and epsilon are fixed at the conventional 0.9 / 0.999 / 1e-8.
    pub fn new(params: &ParameterStore, weight_decay: f64) -> Self {
        let m = params.iter().map(|(_, p)| Matrix::zeros(p.rows(), p.cols())).collect();
        let v = params.iter().map(|(_, p)| Matrix::zeros(p.rows(), p.cols())).collect();
        OptimizerState { m, v, step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

/// One AdamW update. Weight decay is decoupled: `theta -= lr * wd * theta`
/// applied separately from the moment-based step. Parameters whose names
/// start with a prefix in `frozen` are left untouched.
pub fn adamw_step(
    params: &mut ParameterStore,
    grads: &GradMap,
    state: &mut OptimizerState,
    lr: f64,
    frozen: &[String],
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "optimizer state holds {} accumulators for {} parameters",
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(state.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, t as f64);

    for (idx, name) in params.names().to_vec().iter().enumerate() {
        if frozen.iter().any(|p| name.starts_with(p.as_str())) {
            continue;
        }
        let zero;
        let g = match grads.get(name) {
            Some(g) => g,
            None => {
                zero = Matrix::zeros(state.m[idx].rows(), state.m[idx].cols());
                &zero
            }
        };
        let theta = params.get_mut_by_index(idx);
        if g.shape() != theta.shape() {
            return Err(Error::Contract(format!(
                "gradient shape {}x{} does not match parameter '{name}' {}x{}",
                g.rows(),
                g.cols(),
                theta.rows(),
                theta.cols()
            )));
        }
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        let th = theta.data_mut();
        for i in 0..th.len() {
            let gi = g.data()[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            th[i] -= lr * state.weight_decay * th[i];
            th[i] -= lr * m_hat / (libm::sqrt(v_hat) + state.eps);
        }
    }
    Ok(())
}

/// Learning rate at `step` out of `total_steps`: linear warmup from 0 to
/// `base_lr` over ceil(warmup_ratio * total_steps) steps, then cosine decay
/// to exactly 0 at `total_steps`.
pub fn lr_at(step: u64, total_steps: u64, base_lr: f64, warmup_ratio: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Input("lr_at: total_steps must be positive".into()));
    }
    if !(0.0..1.0).contains(&warmup_ratio) {
        return Err(Error::Input(format!(
            "lr_at: warmup_ratio must be in [0, 1), got {warmup_ratio}"
        )));
    }
    if step > total_steps {
        return Err(Error::Input(format!(
            "lr_at: step {step} exceeds total_steps {total_steps}"
        )));
    }
    let warmup = libm::ceil(warmup_ratio * total_steps as f64) as u64;
    if warmup > 0 && step <= warmup {
        // ratio first, so lr(warmup) == base_lr exactly
        return Ok(base_lr * (step as f64 / warmup as f64));
    }
    if total_steps == warmup {
        return Ok(base_lr);
    }
    let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
    Ok(base_lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParameterStore;
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use alloc::vec;

    fn single_param(value: f64) -> ParameterStore {
        let mut p = ParameterStore::new();
        p.insert("w".to_string(), Matrix::from_vec(1, 1, vec![value]).unwrap());
        p
    }

    #[test]
    fn zero_grad_zero_decay_is_fixed_point() {
        let mut p = single_param(1.5);
        let mut s = OptimizerState::new(&p, 0.0);
        let grads = GradMap::new();
        adamw_step(&mut p, &grads, &mut s, 0.1, &[]).unwrap();
        assert_eq!(p.get("w").unwrap().at(0, 0), 1.5);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn pure_decay_term() {
        // zero gradient, wd=0.01, lr=0.1, theta=1.0 -> 0.999
        let mut p = single_param(1.0);
        let mut s = OptimizerState::new(&p, 0.01);
        adamw_step(&mut p, &GradMap::new(), &mut s, 0.1, &[]).unwrap();
        assert!((p.get("w").unwrap().at(0, 0) - 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_matches_scalar_oracle() {
        // one step from zero state, g=1, lr=1e-3
        let mut p = single_param(0.0);
        let mut s = OptimizerState::new(&p, 0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Matrix::from_vec(1, 1, vec![1.0]).unwrap());
        adamw_step(&mut p, &grads, &mut s, 1e-3, &[]).unwrap();
        // scalar oracle: m_hat = v_hat = 1, delta = -lr / (1 + eps)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap().at(0, 0) - expected).abs() <= 1e-12);
        assert!((p.get("w").unwrap().at(0, 0) + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn frozen_prefix_skips_update() {
        let mut p = single_param(1.0);
        let mut s = OptimizerState::new(&p, 0.5);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Matrix::from_vec(1, 1, vec![1.0]).unwrap());
        adamw_step(&mut p, &grads, &mut s, 0.1, &["w".to_string()]).unwrap();
        assert_eq!(p.get("w").unwrap().at(0, 0), 1.0);
    }

    #[test]
    fn schedule_pins() {
        let total = 1000;
        let base = 2e-4;
        let warmup = libm::ceil(0.05 * total as f64) as u64; // 50
        assert_eq!(lr_at(0, total, base, 0.05).unwrap(), 0.0);
        assert_eq!(lr_at(warmup, total, base, 0.05).unwrap(), base);
        assert_eq!(lr_at(total, total, base, 0.05).unwrap(), 0.0);
        let mid = warmup + (total - warmup) / 2;
        assert!((lr_at(mid, total, base, 0.05).unwrap() - base / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn schedule_is_continuous_and_non_increasing_after_warmup() {
        let total = 217;
        let base = 2e-4;
        let warmup = libm::ceil(0.05 * total as f64) as u64;
        let mut prev = lr_at(warmup, total, base, 0.05).unwrap();
        assert_eq!(prev, base);
        for s in warmup + 1..=total {
            let cur = lr_at(s, total, base, 0.05).unwrap();
            assert!(cur <= prev);
            prev = cur;
        }
    }

    #[test]
    fn zero_total_steps_is_an_input_error() {
        assert!(lr_at(0, 0, 1e-3, 0.05).is_err());
    }
}
