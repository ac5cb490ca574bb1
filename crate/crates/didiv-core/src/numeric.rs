//! Compensated summation and small numeric helpers.
//!
//! Decomposition identities elsewhere in the crate are asserted to 1e-8 or
//! tighter, so group means are accumulated with Kahan compensation rather
//! than naive summation.

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of an iterator.
pub fn ksum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Compensated mean; returns `(mean, count)`. Empty input yields `(NaN, 0)`.
pub fn kmean(values: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let mut acc = KahanSum::new();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        (f64::NAN, 0)
    } else {
        (acc.value() / n as f64, n)
    }
}

/// Standard normal quantile for a two-sided 95% interval.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Sample standard deviation (ddof = 1). Returns NaN when fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let (mean, _) = kmean(values.iter().copied());
    let ss = ksum(values.iter().map(|v| {
        let d = v - mean;
        d * d
    }));
    (ss / (n as f64 - 1.0)).sqrt()
}

/// Slope of the least-squares line through `(x, y)` pairs.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        // 1.0 followed by 1e16 copies of 1e-16 sums to 2.0 exactly under
        // compensation at this scale; naive summation loses the tail.
        let mut acc = KahanSum::new();
        acc.add(1.0);
        for _ in 0..10_000 {
            acc.add(1e-16);
        }
        assert!((acc.value() - (1.0 + 1e-12)).abs() < 1e-18);
    }

    #[test]
    fn kmean_empty_is_nan() {
        let (m, n) = kmean(std::iter::empty());
        assert!(m.is_nan());
        assert_eq!(n, 0);
    }

    #[test]
    fn slope_of_exact_line() {
        let pts = [(1.0, 3.0), (2.0, 5.0), (3.0, 7.0)];
        assert!((ls_slope(&pts) - 2.0).abs() < 1e-12);
    }
}
