/// Relative difference of two multipliers, `|l1 - l2| / max(|l1|, |l2|, |l1 - l2|, 1)`.
///
/// Always in `[0, 1]`; zero exactly when the multipliers are equal.
pub fn theta(l1: f64, l2: f64) -> f64 {
    let d = (l1 - l2).abs();
    d / l1.abs().max(l2.abs()).max(d).max(1.0)
}

/// Largest pairwise [`theta`] over a list of multipliers; 0 for fewer than two.
pub fn theta_multi(lambdas: &[f64]) -> f64 {
    let mut best = 0.0_f64;
    for (i, &a) in lambdas.iter().enumerate() {
        for &b in &lambdas[i + 1..] {
            best = best.max(theta(a, b));
        }
    }
    best
}
