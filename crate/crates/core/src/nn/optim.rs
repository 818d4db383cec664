use super::{ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: algorithm, learning rate and per-parameter moments.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, store: &ParamStore) -> Self {
        let zeros = || store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => (zeros(), zeros()),
        };
        Optimizer {
            kind,
            lr,
            first,
            second,
            steps: 0,
        }
    }

    pub fn adam(lr: f64, store: &ParamStore) -> Self {
        Self::new(OptimizerKind::adam(), lr, store)
    }

    pub fn sgd(lr: f64, store: &ParamStore) -> Self {
        Self::new(OptimizerKind::Sgd, lr, store)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.steps += 1;
        let lr = self.lr;
        let (values, grads) = store.values_and_grads_mut();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in values.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in values
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    let iter = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
                    for ((pv, &gv), (mv, vv)) in iter {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        store.zero_grad();
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the factor applied (1 when untouched).
pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = store.grads().norm();
    if norm > max_norm {
        let factor = max_norm / norm;
        for g in store.grads_tensors_mut() {
            g.scale(factor);
        }
        factor
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn store_with(value: &[f64], grad: &[f64]) -> ParamStore {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::from_vec(&[value.len()], value.to_vec()).unwrap());
        store.grads_mut().get_mut(id).data_mut().copy_from_slice(grad);
        store
    }

    #[test]
    fn clipping() {
        let mut s = store_with(&[0.0, 0.0], &[3.0, 4.0]);
        assert_eq!(clip_gradients(&mut s, 10.0), 1.0);
        assert_eq!(s.grads().iter().next().unwrap().data(), &[3.0, 4.0]);

        let f = clip_gradients(&mut s, 1.0);
        assert_abs_diff_eq!(f, 0.2, epsilon = 1e-15);
        let g = s.grads().iter().next().unwrap().data().to_vec();
        assert_abs_diff_eq!(g[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.8, epsilon = 1e-15);

        let mut z = store_with(&[1.0], &[0.0]);
        assert_eq!(clip_gradients(&mut z, 1.0), 1.0);
    }

    #[test]
    fn sgd_step() {
        let mut s = store_with(&[1.0], &[2.0]);
        let mut opt = Optimizer::sgd(0.1, &s);
        opt.step(&mut s);
        assert_abs_diff_eq!(s.get(s.find("p").unwrap()).data()[0], 0.8, epsilon = 1e-15);
        // gradients are zeroed after the step
        assert_eq!(s.grads().norm(), 0.0);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::adam()] {
            let mut s = store_with(&[0.3, -2.0], &[0.0, 0.0]);
            let mut opt = Optimizer::new(kind, 0.01, &s);
            opt.step(&mut s);
            assert_eq!(s.get(s.find("p").unwrap()).data(), &[0.3, -2.0]);
        }
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for &g in &[1e-3, 0.5, 40.0] {
            let mut s = store_with(&[1.0], &[g]);
            let mut opt = Optimizer::adam(1e-3, &s);
            opt.step(&mut s);
            let moved = 1.0 - s.get(s.find("p").unwrap()).data()[0];
            let expected = 1e-3 * g / (g + 1e-8);
            assert_abs_diff_eq!(moved, expected, epsilon = 1e-15);
            assert!((moved - 1e-3).abs() < 1e-7);
        }
    }

    proptest::proptest! {
        #[test]
        fn clipping_never_increases_norm(
            g in proptest::collection::vec(-100.0f64..100.0, 1..20),
            max_norm in 0.01f64..50.0,
        ) {
            let mut s = store_with(&vec![0.0; g.len()], &g);
            let before = s.grads().norm();
            clip_gradients(&mut s, max_norm);
            let after = s.grads().norm();
            proptest::prop_assert!(after <= before + 1e-12);
            proptest::prop_assert!(after <= max_norm.max(before) + 1e-9);
        }
    }
}
