//! Independent reference computations for band selection.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Minimum-variance subset of size `h` by enumerating every subset.
/// Returns the subset (ascending input indices), its mean and its
/// population variance.
pub fn brute_force_mcd(x: &[f64], h: usize) -> (Vec<usize>, f64, f64) {
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut pick = Vec::with_capacity(h);
    fn walk(x: &[f64], h: usize, start: usize, pick: &mut Vec<usize>, best: &mut Option<(f64, Vec<usize>)>) {
        if pick.len() == h {
            let m = pick.iter().map(|&i| x[i]).sum::<f64>() / h as f64;
            let v = pick.iter().map(|&i| (x[i] - m) * (x[i] - m)).sum::<f64>() / h as f64;
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                *best = Some((v, pick.clone()));
            }
            return;
        }
        let need = h - pick.len();
        for i in start..=x.len() - need {
            pick.push(i);
            walk(x, h, i + 1, pick, best);
            pick.pop();
        }
    }
    walk(x, h, 0, &mut pick, &mut best);
    let (var, subset) = best.expect("n >= h");
    let mean = subset.iter().map(|&i| x[i]).sum::<f64>() / h as f64;
    (subset, mean, var)
}

/// Quantile of χ² with one degree of freedom by bisection on its CDF.
pub fn chi2_quantile_bisect(p: f64) -> f64 {
    let dist = ChiSquared::new(1.0).unwrap();
    let (mut lo, mut hi) = (0.0f64, 100.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
