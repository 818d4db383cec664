use rand::Rng;

use super::Tensor;

/// Half-width of the uniform Xavier range, `sqrt(3 / (n_in + n_out))`.
pub fn xavier_bound(n_in: usize, n_out: usize) -> f64 {
    (3.0 / (n_in + n_out) as f64).sqrt()
}

/// `[n_in, n_out]` matrix with entries drawn uniformly from `[-c, c]`.
pub fn xavier_init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Tensor {
    assert!(n_in >= 1 && n_out >= 1, "xavier_init needs non-empty fan-in/out");
    let c = xavier_bound(n_in, n_out);
    let data = (0..n_in * n_out).map(|_| rng.gen_range(-c..=c)).collect();
    Tensor::from_vec(&[n_in, n_out], data).expect("shape matches")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element multipliers applied by one dropout call; zero for dropped
/// units and `1 / (1 - p)` for survivors. `None` means identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    pub fn apply(&self, x: &mut [f64]) {
        if let Some(scale) = &self.0 {
            for (v, s) in x.iter_mut().zip(scale) {
                *v *= s;
            }
        }
    }

    /// Backward of [`apply`](Self::apply) is the same elementwise product.
    pub fn backward(&self, grad: &mut [f64]) {
        self.apply(grad);
    }
}

/// Inverted dropout. In eval mode, or with `p_drop == 0`, returns the input
/// unchanged.
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    p_drop: f64,
    mode: Mode,
    rng: &mut R,
) -> (Vec<f64>, DropoutMask) {
    assert!((0.0..1.0).contains(&p_drop), "dropout probability must be in [0, 1)");
    if mode == Mode::Eval || p_drop == 0.0 {
        return (x.to_vec(), DropoutMask::identity());
    }
    let keep = 1.0 / (1.0 - p_drop);
    let scale: Vec<f64> = x
        .iter()
        .map(|_| if rng.gen::<f64>() < p_drop { 0.0 } else { keep })
        .collect();
    let mask = DropoutMask(Some(scale));
    let mut out = x.to_vec();
    mask.apply(&mut out);
    (out, mask)
}
