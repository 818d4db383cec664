/// Scaling constant of the logistic IRT model.
pub const IRT_D: f64 = 1.7;

/// Three-parameter logistic item parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrtItemParams {
    /// Discrimination, > 0.
    pub a: f64,
    /// Difficulty.
    pub b: f64,
    /// Pseudo-guessing, in [0, 1).
    pub c: f64,
}

impl IrtItemParams {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        assert!(a > 0.0, "discrimination must be positive");
        assert!((0.0..1.0).contains(&c), "guessing must be in [0, 1)");
        IrtItemParams { a, b, c }
    }
}

/// `c + (1 - c) / (1 + exp(-D a (theta - b)))`.
pub fn irt_prob(theta: f64, p: &IrtItemParams) -> f64 {
    p.c + (1.0 - p.c) / (1.0 + (-IRT_D * p.a * (theta - p.b)).exp())
}
