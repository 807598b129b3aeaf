//! AdamW with decoupled weight decay.
//!
//! ```text
//! t ← t + 1
//! m ← β₁·m + (1 − β₁)·g
//! v ← β₂·v + (1 − β₂)·g²
//! m̂ = m / (1 − β₁ᵗ),  v̂ = v / (1 − β₂ᵗ)
//! θ ← θ − lr·(m̂ / (√v̂ + ε) + λ·θ)        (λ only on decayed tensors)
//! ```

use crate::error::{Error, Result};

/// A set of named parameter tensors visited in a fixed order.
pub trait Parameters {
    /// Calls `f(name, values, decay)` for every tensor.
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64], bool));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64], bool));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWHyper {
    fn default() -> Self {
        AdamWHyper {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid AdamW hyperparameters {self:?}"
            )))
        }
    }
}

/// Moment buffers, one per tensor in visit order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn collect<P: Parameters + ?Sized>(p: &P) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    p.visit(&mut |name, data, _| out.push((name.to_string(), data.to_vec())));
    out
}

/// One AdamW update. Parameters and state are left untouched on error.
pub fn adamw_step<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamWState,
    hyper: &AdamWHyper,
) -> Result<()> {
    let grads = collect(grads);
    for (name, g) in &grads {
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in {name} at index {i}"
            )));
        }
    }

    let mut shapes = Vec::new();
    params.visit(&mut |name, data, _| shapes.push((name.to_string(), data.len())));
    if shapes.len() != grads.len()
        || shapes
            .iter()
            .zip(&grads)
            .any(|((pn, pl), (gn, g))| pn != gn || *pl != g.len())
    {
        return Err(Error::Shape("gradients do not match parameters".into()));
    }
    if state.m.is_empty() && state.v.is_empty() && state.step == 0 {
        state.m = shapes.iter().map(|(_, l)| vec![0.0; *l]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != shapes.len()
        || state.v.len() != shapes.len()
        || shapes
            .iter()
            .enumerate()
            .any(|(i, (_, l))| state.m[i].len() != *l || state.v[i].len() != *l)
    {
        return Err(Error::Shape(
            "optimizer state does not match parameters".into(),
        ));
    }

    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - hyper.beta1.powf(t);
    let bc2 = 1.0 - hyper.beta2.powf(t);
    let mut k = 0;
    params.visit_mut(&mut |_, theta, decay| {
        let g = &grads[k].1;
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        let wd = if decay { hyper.weight_decay } else { 0.0 };
        for i in 0..theta.len() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= hyper.lr * (m_hat / (v_hat.sqrt() + hyper.eps) + wd * theta[i]);
        }
        k += 1;
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two tensors: a decayed weight and an undecayed bias.
    #[derive(Debug, Clone, PartialEq)]
    struct Toy {
        w: Vec<f64>,
        b: Vec<f64>,
    }

    impl Parameters for Toy {
        fn visit(&self, f: &mut dyn FnMut(&str, &[f64], bool)) {
            f("w", &self.w, true);
            f("b", &self.b, false);
        }

        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64], bool)) {
            f("w", &mut self.w, true);
            f("b", &mut self.b, false);
        }
    }

    fn toy(w: f64, b: f64) -> Toy {
        Toy {
            w: vec![w],
            b: vec![b],
        }
    }

    #[test]
    fn first_step_from_zero() {
        let mut p = toy(0.0, 0.0);
        let mut s = AdamWState::default();
        let hyper = AdamWHyper {
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_step(&mut p, &toy(1.0, 1.0), &mut s, &hyper).unwrap();
        let expected = -2e-5 * (1.0 / (1.0 + 1e-8));
        assert!((p.w[0] - expected).abs() < 1e-20);
        assert!((p.w[0] + 1.99999998e-5).abs() < 1e-13);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = toy(0.3, -0.2);
        let mut s = AdamWState::default();
        let hyper = AdamWHyper {
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_step(&mut p, &toy(0.5, 0.5), &mut s, &hyper).unwrap();
        let after_one = p.clone();
        let (m1, v1) = (s.m[0][0], s.v[0][0]);
        adamw_step(&mut p, &toy(0.0, 0.0), &mut s, &hyper).unwrap();
        assert!(s.m[0][0].abs() < m1.abs());
        assert!(s.v[0][0] < v1);
        assert!(s.v.iter().flatten().all(|&x| x >= 0.0));
        // Momentum still moves θ; with no history at all it must not.
        let mut fresh = toy(0.3, -0.2);
        let mut s2 = AdamWState::default();
        adamw_step(&mut fresh, &toy(0.0, 0.0), &mut s2, &hyper).unwrap();
        assert_eq!(fresh, toy(0.3, -0.2));
        assert_ne!(p, after_one);
    }

    #[test]
    fn decoupled_decay_only_on_weights() {
        let mut p = toy(1.0, 1.0);
        let mut s = AdamWState::default();
        let hyper = AdamWHyper {
            lr: 2e-5,
            weight_decay: 0.01,
            ..Default::default()
        };
        adamw_step(&mut p, &toy(0.0, 0.0), &mut s, &hyper).unwrap();
        assert!(((1.0 - p.w[0]) - 2e-7).abs() < 1e-15);
        assert_eq!(p.b[0], 1.0);
    }

    #[test]
    fn update_sign_follows_negative_momentum() {
        let mut p = Toy {
            w: vec![0.0; 4],
            b: vec![0.0],
        };
        let g = Toy {
            w: vec![1.0, -2.0, 0.5, -0.1],
            b: vec![3.0],
        };
        let mut s = AdamWState::default();
        let hyper = AdamWHyper {
            weight_decay: 0.0,
            lr: 1e-3,
            ..Default::default()
        };
        adamw_step(&mut p, &g, &mut s, &hyper).unwrap();
        for (th, gi) in p.w.iter().zip(&g.w) {
            assert_eq!(th.signum(), -gi.signum());
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut p = toy(1.0, 1.0);
        let mut s = AdamWState::default();
        let err = adamw_step(&mut p, &toy(f64::NAN, 0.0), &mut s, &AdamWHyper::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains('w'), "{err}");
        assert_eq!(p, toy(1.0, 1.0));
        assert_eq!(s, AdamWState::default());
    }

    #[test]
    fn identical_inputs_identical_trajectories() {
        let run = || {
            let mut p = Toy {
                w: vec![0.1, 0.2],
                b: vec![0.3],
            };
            let mut s = AdamWState::default();
            for k in 0..50 {
                let g = Toy {
                    w: vec![(k as f64).sin(), (k as f64).cos()],
                    b: vec![0.1],
                };
                adamw_step(&mut p, &g, &mut s, &AdamWHyper::default()).unwrap();
            }
            (p, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(
            a.w.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.w.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(sa, sb);
    }

    #[test]
    fn hyper_validation() {
        assert!(AdamWHyper::default().validate().is_ok());
        assert!(AdamWHyper {
            beta1: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdamWHyper {
            lr: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdamWHyper {
            weight_decay: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
