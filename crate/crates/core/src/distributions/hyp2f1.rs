use crate::error::{invalid, Error, Result};

/// Relative truncation threshold of the series.
pub const SERIES_RTOL: f64 = 1e-15;
pub const MAX_TERMS: usize = 100_000;

/// Gauss hypergeometric function `₂F₁(a, b; c; z)` on `0 ≤ z < 1` by direct
/// power series `Σ (a)_k (b)_k / (c)_k · z^k / k!`.
///
/// No analytic continuation: the series converges on the whole supported range,
/// slowly as `z → 1`.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(invalid("c", "must be strictly positive"));
    }
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Domain(format!("hyp2f1 needs 0 <= z < 1, got {z}")));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if term == 0.0 || term.abs() < SERIES_RTOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Convergence {
        iterations: MAX_TERMS,
        detail: format!("hyp2f1({a}, {b}; {c}; {z}) series"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_argument() {
        assert_eq!(hyp2f1(1.5, -0.5, 3.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn log_identity() {
        let z = 0.5;
        let expect = -(1.0f64 - z).ln() / z;
        assert!((hyp2f1(1.0, 1.0, 2.0, z).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn terminating_series() {
        // (1 - z)^2 = 2F1(-2, 1; 1; z)
        let z = 0.3;
        assert!((hyp2f1(-2.0, 1.0, 1.0, z).unwrap() - (1.0 - z) * (1.0 - z)).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(hyp2f1(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(hyp2f1(1.0, 1.0, 2.0, -0.1).is_err());
        assert!(hyp2f1(1.0, 1.0, 0.0, 0.5).is_err());
    }
}
