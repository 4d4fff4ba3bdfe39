use std::f64::consts::PI;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::Real;

/// Linear warmup from 0 to `peak_lr`, then cosine decay to
/// `peak_lr * min_lr_ratio` at `total_steps`. Steps past the end stay at
/// the floor.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f64 {
    let peak = cfg.peak_lr;
    if step < cfg.warmup_steps {
        return peak * step as f64 / cfg.warmup_steps as f64;
    }
    let decay_span = cfg.total_steps.saturating_sub(cfg.warmup_steps);
    if decay_span == 0 {
        return peak;
    }
    let progress = ((step - cfg.warmup_steps) as f64 / decay_span as f64).min(1.0);
    let floor = cfg.min_lr_ratio;
    peak * (floor + (1.0 - floor) * 0.5 * (1.0 + (PI * progress).cos()))
}

/// First and second Adam moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments<T> {
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
}

impl<T: Real> AdamMoments<T> {
    pub fn zeros_like(params: &ParamStore<T>) -> Self {
        AdamMoments {
            m: ParamStore::zeros(&params.config),
            v: ParamStore::zeros(&params.config),
        }
    }
}

/// One AdamW update of a flat slice at 1-based step `t` with rate `lr`:
/// `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update<T: Real>(p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], t: u64, lr: f64, cfg: &TrainConfig) {
    debug_assert!(t >= 1);
    let c = |x: f64| T::from_f64_lossy(x);
    let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
    let bc1 = c(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = c(1.0 - cfg.beta2.powi(t as i32));
    let (lr, wd, eps) = (c(lr), c(cfg.weight_decay), c(cfg.adam_eps));
    let one = T::one();
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p[i]);
    }
}

/// Applies [`adamw_update`] to every tensor with the scheduled rate for step
/// `t` (1-based).
pub fn adamw_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &ParamStore<T>,
    moments: &mut AdamMoments<T>,
    t: u64,
    cfg: &TrainConfig,
) -> Result<()> {
    let lr = lr_at(t, cfg);
    let g = grads.tensors();
    let m = moments.m.tensors_mut();
    let v = moments.v.tensors_mut();
    for ((((name, p), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(g).zip(m).zip(v) {
        if p.shape() != g.shape() {
            return Err(Error::ConfigInvalid(format!(
                "gradient for {name} has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        adamw_update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), t, lr, cfg);
        if !p.is_finite() {
            return Err(Error::NumericalDivergence(format!(
                "non-finite update in {name} at step {t}"
            )));
        }
    }
    Ok(())
}

/// Scales `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm().to_f64_lossy();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(T::from_f64_lossy(max_norm / norm));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn sched() -> TrainConfig {
        TrainConfig {
            peak_lr: 1.0,
            warmup_steps: 100,
            total_steps: 1100,
            min_lr_ratio: 0.1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_landmarks() {
        let c = sched();
        assert_eq!(lr_at(0, &c), 0.0);
        assert_eq!(lr_at(50, &c), 0.5);
        assert_eq!(lr_at(100, &c), 1.0);
        assert!((lr_at(600, &c) - 0.55).abs() < 1e-12);
        assert!((lr_at(1100, &c) - 0.1).abs() < 1e-12);
        assert!((lr_at(5000, &c) - 0.1).abs() < 1e-12);
        // continuous across the warmup boundary
        assert!((lr_at(99, &c) - lr_at(100, &c)).abs() < 0.011);
        assert!((lr_at(101, &c) - lr_at(100, &c)).abs() < 1e-4);
        let no_warmup = TrainConfig { warmup_steps: 0, ..c };
        assert_eq!(lr_at(0, &no_warmup), 1.0);
    }

    #[test]
    fn three_step_hand_trace() {
        // constant g = 1 makes both bias-corrected moments exactly 1, so each
        // step is p <- p(1 - lr wd) - lr / (1 + eps)
        let cfg = TrainConfig {
            weight_decay: 0.1,
            ..TrainConfig::default()
        };
        let (mut p, mut m, mut v) = ([1.0f64], [0.0], [0.0]);
        let expected = [0.890_000_000, 0.781_100_000, 0.673_289_000];
        for (t, want) in (1..=3).zip(expected) {
            adamw_update(&mut p, &[1.0], &mut m, &mut v, t, 0.1, &cfg);
            assert!((p[0] - want).abs() < 1e-8, "step {t}: {} vs {want}", p[0]);
        }
    }

    #[test]
    fn zero_gradient_cases() {
        let zero_wd = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let (mut p, mut m, mut v) = ([0.7f32, -2.0], [0.0; 2], [0.0; 2]);
        adamw_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, 0.01, &zero_wd);
        assert_eq!(p, [0.7, -2.0]);

        let wd = TrainConfig::default();
        let (mut p, mut m, mut v) = ([0.5f64, -4.0], [0.0; 2], [0.0; 2]);
        adamw_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, 0.01, &wd);
        assert_eq!(p, [0.5 * (1.0 - 0.01 * 0.1), -4.0 * (1.0 - 0.01 * 0.1)]);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = ModelConfig::toy(10);
        let mut params = ParamStore::<f32>::init(&cfg, 0);
        let mut grads = ParamStore::<f32>::zeros(&cfg);
        grads.final_norm.data_mut()[0] = f32::NAN;
        let mut mom = AdamMoments::zeros_like(&params);
        let tc = TrainConfig::default();
        assert!(matches!(
            adamw_step(&mut params, &grads, &mut mom, 1, &tc),
            Err(Error::NumericalDivergence(_))
        ));
    }

    #[test]
    fn clipping_caps_norm() {
        let cfg = ModelConfig::toy(10);
        let mut g = ParamStore::<f64>::zeros(&cfg);
        g.final_norm.data_mut()[0] = 3.0;
        g.final_norm.data_mut()[1] = 4.0;
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        assert_eq!(clip_grad_norm(&mut g, 0.0), g.global_norm());
    }
}
