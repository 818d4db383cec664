/// Clamp applied to probabilities before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

/// Softmax restricted to `mask`; entries outside the mask are exactly zero.
///
/// Panics if `mask` is empty or names an index outside `logits`.
pub fn masked_softmax(logits: &[f64], mask: &[usize]) -> Vec<f64> {
    assert!(!mask.is_empty(), "masked_softmax needs a non-empty mask");
    let max = mask
        .iter()
        .map(|&i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for &i in mask {
        let e = (logits[i] - max).exp();
        probs[i] = e;
        total += e;
    }
    for &i in mask {
        probs[i] /= total;
    }
    probs
}

/// Gradient of `log p[action]` with respect to the logits, given the masked
/// softmax output `probs`: `onehot(action) - probs` on the mask, zero off it.
pub fn log_prob_grad(probs: &[f64], action: usize) -> Vec<f64> {
    let mut g: Vec<f64> = probs.iter().map(|p| -p).collect();
    g[action] += 1.0;
    g
}

fn clamp(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// Binary cross-entropy of a probability against a 0/1 label.
pub fn bce_loss(p: f64, label: f64) -> f64 {
    let p = clamp(p);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// `d bce / d p` evaluated at the clamped probability.
pub fn bce_grad(p: f64, label: f64) -> f64 {
    let p = clamp(p);
    (p - label) / (p * (1.0 - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn masked_softmax_examples() {
        let p = masked_softmax(&[1.0, 1.0, 1.0, 1.0], &[0, 2]);
        assert_eq!(p, vec![0.5, 0.0, 0.5, 0.0]);

        let p = masked_softmax(&[5.0, -2.0, 9.0, 0.3], &[3]);
        assert_eq!(p, vec![0.0, 0.0, 0.0, 1.0]);

        let p = masked_softmax(&[0.0, 3f64.ln()], &[0, 1]);
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn masked_softmax_is_stable_for_large_logits() {
        let p = masked_softmax(&[1000.0, 999.0, -1e9], &[0, 1]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(p[0] + p[1], 1.0, epsilon = 1e-12);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    #[should_panic]
    fn masked_softmax_rejects_empty_mask() {
        masked_softmax(&[1.0], &[]);
    }

    #[test]
    fn bce_examples() {
        assert_abs_diff_eq!(bce_loss(0.5, 1.0), std::f64::consts::LN_2, epsilon = 1e-12);
        assert!(bce_loss(1.0 - BCE_EPS, 1.0) < 1e-6);
        assert!(bce_loss(1.0, 0.0).is_finite());
        assert!(bce_loss(0.0, 1.0).is_finite());
    }

    #[test]
    fn bce_grad_matches_finite_difference() {
        let h = 1e-5;
        for &(p, y) in &[(0.3, 1.0), (0.8, 0.0), (0.55, 1.0)] {
            let fd = (bce_loss(p + h, y) - bce_loss(p - h, y)) / (2.0 * h);
            let an = bce_grad(p, y);
            assert!(((fd - an) / an).abs() < 1e-4, "p={p} y={y}: {fd} vs {an}");
        }
    }

    proptest::proptest! {
        #[test]
        fn masked_softmax_is_a_distribution(
            logits in proptest::collection::vec(-30.0f64..30.0, 1..12),
            picks in proptest::collection::vec(proptest::bool::ANY, 12),
        ) {
            let n = logits.len();
            let mut mask: Vec<usize> = (0..n).filter(|&i| picks[i]).collect();
            if mask.is_empty() { mask.push(0); }
            let p = masked_softmax(&logits, &mask);
            let total: f64 = p.iter().sum();
            proptest::prop_assert!((total - 1.0).abs() < 1e-9);
            for i in 0..n {
                proptest::prop_assert!(p[i] >= 0.0);
                if !mask.contains(&i) { proptest::prop_assert_eq!(p[i], 0.0); }
            }
        }
    }
}
