use crate::error::{Error, Result};

// Rational approximation of the standard normal quantile (P. J. Acklam),
// relative error below 1.2e-9 over (0, 1).
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383_577_518_672_69e2,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

/// Inverse CDF of the standard normal distribution.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability {p} outside (0, 1)"
        )));
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let z = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    Ok(z)
}

/// Quantile of χ² with one degree of freedom: `Φ⁻¹((1 + p)/2)²`.
pub fn chi2_quantile_1dof(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability {p} outside (0, 1)"
        )));
    }
    let z = normal_quantile((1.0 + p) / 2.0)?;
    Ok(z * z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_quantiles() {
        assert!((normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-8);
        assert!(normal_quantile(0.5).unwrap().abs() < 1e-12);
        assert!((chi2_quantile_1dof(0.95).unwrap() - 3.841458820694124).abs() < 1e-6);
        assert!((chi2_quantile_1dof(0.5).unwrap() - 0.454936423119572).abs() < 1e-6);
    }

    #[test]
    fn out_of_range() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(chi2_quantile_1dof(p).is_err());
        }
    }

    #[test]
    fn monotone() {
        let qs: Vec<f64> = (1..100)
            .map(|i| chi2_quantile_1dof(i as f64 / 100.0).unwrap())
            .collect();
        assert!(qs.windows(2).all(|w| w[0] < w[1]));
    }
}
