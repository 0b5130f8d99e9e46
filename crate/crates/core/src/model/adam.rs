use alloc::vec;
use alloc::vec::Vec;

use super::TrainConfig;

/// First and second moment estimates, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// Bias-corrected Adam update for step `t` (1-based).
pub fn adam_step(weights: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig, t: u64) {
    assert!(t >= 1, "adam step counter starts at 1");
    assert_eq!(weights.len(), grads.len());
    assert_eq!(weights.len(), state.m.len());
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - libm::pow(b1, t as f64);
    let c2 = 1.0 - libm::pow(b2, t as f64);
    for i in 0..weights.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        weights[i] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        let mut w = vec![0.5, -1.0, 2.0, 0.0];
        let g = vec![0.3, -7.0, 1e-2, 150.0];
        let before = w.clone();
        let mut st = AdamState::new(4);
        adam_step(&mut w, &g, &mut st, &cfg, 1);
        for i in 0..4 {
            let delta = w[i] - before[i];
            assert_eq!(delta.signum(), -g[i].signum());
            assert!(delta.abs() <= cfg.lr && delta.abs() >= cfg.lr * (1.0 - 1e-6), "{delta}");
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let cfg = TrainConfig::default();
        let mut w = vec![0.5, -1.0];
        let mut st = AdamState::new(2);
        for t in 1..5 {
            adam_step(&mut w, &[0.0, 0.0], &mut st, &cfg, t);
        }
        assert_eq!(w, vec![0.5, -1.0]);
    }

    #[test]
    fn deterministic() {
        let cfg = TrainConfig::default();
        let run = || {
            let mut w = vec![0.1, 0.2, 0.3];
            let mut st = AdamState::new(3);
            st.m = vec![0.01, -0.02, 0.0];
            st.v = vec![1e-4, 2e-4, 0.0];
            adam_step(&mut w, &[0.3, -0.1, 0.7], &mut st, &cfg, 7);
            (w, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(sa, sb);
    }
}
