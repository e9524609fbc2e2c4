//! Small numeric helpers used throughout the estimation code.

/// Floor/ceiling applied to every probability-scale outcome prediction so the
/// logistic fluctuation offset logit(Q) stays finite.
pub const Q_CLAMP: f64 = 1e-6;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Clamp an outcome prediction to `[Q_CLAMP, 1 - Q_CLAMP]`.
pub fn clamp_unit(p: f64) -> f64 {
    p.clamp(Q_CLAMP, 1.0 - Q_CLAMP)
}

pub fn mean(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 divisor). Returns 0 for a single point.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Population variance (divisor n).
pub fn pop_variance(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}
