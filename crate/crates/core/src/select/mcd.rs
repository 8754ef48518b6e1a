use serde::{Deserialize, Serialize};

use super::chi2::chi2_quantile_1dof;
use crate::error::{Error, Result};

/// Robust location and scale of a 1-D sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdFit {
    pub mu: f64,
    /// Consistency-corrected variance; zero when degenerate.
    pub sigma2: f64,
    /// Variance of the support subset before correction.
    pub raw_variance: f64,
    pub h: usize,
    /// Indices into the input of the minimum-variance subset, ascending.
    pub support: Vec<usize>,
    /// The support subset is constant.
    pub degenerate: bool,
}

/// Default support size `⌊(n + 2)/2⌋`.
pub fn default_support(n: usize) -> usize {
    (n + 2) / 2
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Exact minimum covariance determinant estimate in one dimension.
///
/// The minimum-variance subset of size `h` is contiguous in sorted order, so
/// every window of the sorted sample is scanned (ties resolve to the lowest
/// start). The variance is rescaled by `median(d²)/χ²₁(0.5)` so that it is
/// consistent for Gaussian data.
pub fn mcd_1d(x: &[f64], h: usize) -> Result<McdFit> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "MCD needs at least 2 values, got {n}"
        )));
    }
    if h < default_support(n) || h > n {
        return Err(Error::InvalidArgument(format!(
            "support size {h} outside [{}, {n}]",
            default_support(n)
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in MCD input".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| x[i]).collect();

    let mut best = (0usize, f64::INFINITY, 0.0);
    for start in 0..=n - h {
        let (mean, var) = mean_var(&sorted[start..start + h]);
        if var < best.1 {
            best = (start, var, mean);
        }
    }
    let (start, raw_variance, mu) = best;
    let mut support: Vec<usize> = order[start..start + h].to_vec();
    support.sort_unstable();

    if raw_variance == 0.0 {
        return Ok(McdFit {
            mu,
            sigma2: 0.0,
            raw_variance,
            h,
            support,
            degenerate: true,
        });
    }

    // d² = (x − mu)²/raw_variance, so raw_variance · median(d²) = median((x − mu)²)
    let mut sq: Vec<f64> = x.iter().map(|v| (v - mu) * (v - mu)).collect();
    let sigma2 = median(&mut sq) / chi2_quantile_1dof(0.5)?;
    Ok(McdFit {
        mu,
        sigma2,
        raw_variance,
        h,
        support,
        degenerate: sigma2 <= 0.0,
    })
}

/// Robust distance `|x − mu| / √sigma2`.
pub fn mahalanobis(x: f64, fit: &McdFit) -> Result<f64> {
    if fit.degenerate || fit.sigma2 <= 0.0 {
        return Err(Error::Degenerate(
            "robust variance is zero; distances are undefined".into(),
        ));
    }
    Ok(((x - fit.mu) * (x - fit.mu) / fit.sigma2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case_excludes_outlier() {
        let fit = mcd_1d(&[0.0, 0.1, 0.2, 10.0], 3).unwrap();
        assert_eq!(fit.support, vec![0, 1, 2]);
        assert!((fit.mu - 0.1).abs() < 1e-12);
        assert!(!fit.degenerate);
    }

    #[test]
    fn full_support_recovers_classical_mean() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let fit = mcd_1d(&x, 5).unwrap();
        assert_eq!(fit.mu, 0.0);
        assert!((fit.raw_variance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariant() {
        let x = [3.0, 0.5, 9.0, 1.5, 2.25, 0.75, 4.0];
        let y = [9.0, 4.0, 0.75, 2.25, 3.0, 1.5, 0.5];
        let a = mcd_1d(&x, 4).unwrap();
        let b = mcd_1d(&y, 4).unwrap();
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.sigma2, b.sigma2);
    }

    #[test]
    fn constant_window_is_degenerate() {
        let fit = mcd_1d(&[1.0, 1.0, 1.0, 5.0], 3).unwrap();
        assert!(fit.degenerate);
        assert!(mahalanobis(5.0, &fit).is_err());
    }

    #[test]
    fn distance_definition() {
        let fit = McdFit {
            mu: 1.0,
            sigma2: 4.0,
            raw_variance: 4.0,
            h: 3,
            support: vec![],
            degenerate: false,
        };
        assert_eq!(mahalanobis(1.0, &fit).unwrap(), 0.0);
        assert_eq!(mahalanobis(1.0 + 2.0 * 2.0, &fit).unwrap(), 2.0);
        assert_eq!(mahalanobis(3.5, &fit).unwrap(), mahalanobis(2.0 - 3.5, &fit).unwrap());
    }

    #[test]
    fn argument_checks() {
        assert!(mcd_1d(&[1.0], 1).is_err());
        assert!(mcd_1d(&[1.0, 2.0, 3.0], 4).is_err());
        assert!(mcd_1d(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
    }
}
