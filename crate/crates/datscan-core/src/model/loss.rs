//! Binary cross-entropy and the sigmoid it pairs with.

/// Probabilities are clipped to `[EPSILON, 1 - EPSILON]` before taking
/// logs, so a saturated prediction yields a large finite loss instead
/// of infinity.
pub const BCE_EPSILON: f64 = 1e-7;

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over the batch, with probability clipping.
pub fn bce_loss(probs: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(probs.len(), targets.len());
    assert!(!probs.is_empty());
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(targets) {
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    total / probs.len() as f64
}

/// Gradient of the mean BCE with respect to the *logits*, using the
/// combined sigmoid-BCE form `(p - y) / n`. Away from the clipping
/// region this equals the chain-rule gradient exactly; inside it the
/// combined form stays bounded where the separate factors would not.
pub fn bce_logit_grad(probs: &[f64], targets: &[f64]) -> Vec<f64> {
    assert_eq!(probs.len(), targets.len());
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| (p - y) / n)
        .collect()
}

/// Fraction of predictions on the right side of 0.5.
pub fn threshold_accuracy(probs: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(probs.len(), targets.len());
    assert!(!probs.is_empty());
    let correct = probs
        .iter()
        .zip(targets)
        .filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5))
        .count();
    correct as f64 / probs.len() as f64
}
