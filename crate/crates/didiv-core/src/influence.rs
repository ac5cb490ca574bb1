//! Influence-function composition rules.
//!
//! Estimators in this crate are smooth functions of sample means, so their
//! asymptotic behaviour is captured by per-observation linear terms. Two
//! rules compose everything here: the ratio rule (for `A/B` with linear terms
//! `a_i`, `b_i`, the ratio's term is `(a_i - (A/B) b_i) / B`) and the product
//! rule (`A*B` has term `A b_i + B a_i`).

/// Per-observation linear term of a ratio `A/B` given terms for `A` and `B`.
#[inline]
pub fn ratio_if_term(ratio: f64, denom: f64, a_i: f64, b_i: f64) -> f64 {
    (a_i - ratio * b_i) / denom
}

/// Apply the ratio rule across a slice of paired terms.
pub fn ratio_if(ratio: f64, denom: f64, a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| ratio_if_term(ratio, denom, ai, bi))
        .collect()
}

/// Per-observation linear term of a product `A*B`.
#[inline]
pub fn product_if_term(a: f64, b: f64, a_i: f64, b_i: f64) -> f64 {
    a * b_i + b * a_i
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composing the ratio `A/B` as the product `A * (1/B)` through the
    /// reciprocal and product rules reproduces the direct ratio rule, and
    /// both match the Gateaux derivative of the ratio functional computed by
    /// Richardson-extrapolated central differences.
    #[test]
    fn ratio_rule_matches_composed_and_numeric_derivative() {
        let xs = [1.0, 2.5, -0.5, 4.0, 0.25];
        let ws = [0.5, 1.5, 2.0, 1.0, 0.75];
        let a_hat: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let b_hat: f64 = ws.iter().sum::<f64>() / ws.len() as f64;
        let ratio = a_hat / b_hat;

        for i in 0..xs.len() {
            let a_i = xs[i] - a_hat;
            let b_i = ws[i] - b_hat;
            let direct = ratio_if_term(ratio, b_hat, a_i, b_i);

            // Chain rules: reciprocal IF of 1/B is -b/B^2, then the product
            // rule for A * (1/B).
            let recip_if = -b_i / (b_hat * b_hat);
            let composed = product_if_term(a_hat, 1.0 / b_hat, a_i, recip_if);
            assert!(
                (direct - composed).abs() < 1e-12,
                "term {i}: direct {direct} vs composed {composed}"
            );

            // Contaminate the empirical distribution in the direction of
            // observation i and differentiate the ratio at eps = 0; the
            // agreement is limited by float cancellation in the difference
            // quotient.
            let f = |eps: f64| (a_hat + eps * a_i) / (b_hat + eps * b_i);
            let diff = |h: f64| (f(h) - f(-h)) / (2.0 * h);
            let d1 = diff(1e-3);
            let d2 = diff(5e-4);
            let richardson = (4.0 * d2 - d1) / 3.0;
            assert!(
                (direct - richardson).abs() < 1e-9,
                "term {i}: direct {direct} vs numeric {richardson}"
            );
        }
    }

    /// Linear terms of a mean are exactly the demeaned observations, so the
    /// composed ratio terms are mean-zero.
    #[test]
    fn ratio_terms_are_centered() {
        let xs: Vec<f64> = (0..20).map(|i| (i as f64).sin() * 3.0).collect();
        let ws: Vec<f64> = (0..20).map(|i| 1.0 + 0.1 * i as f64).collect();
        let a_hat = xs.iter().sum::<f64>() / 20.0;
        let b_hat = ws.iter().sum::<f64>() / 20.0;
        let a: Vec<f64> = xs.iter().map(|x| x - a_hat).collect();
        let b: Vec<f64> = ws.iter().map(|w| w - b_hat).collect();
        let terms = ratio_if(a_hat / b_hat, b_hat, &a, &b);
        let mean: f64 = terms.iter().sum::<f64>() / terms.len() as f64;
        assert!(mean.abs() < 1e-14);
    }
}
