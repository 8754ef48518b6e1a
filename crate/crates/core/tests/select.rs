mod common;

use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use common::oracles::{brute_force_mcd, chi2_quantile_bisect};
use specband::select::{
    aggregate_heatmaps, chi2_quantile_1dof, default_support, mahalanobis, mcd_1d, normal_quantile,
    select_bands, Heatmap, DEFAULT_LAMBDAS,
};

#[test]
fn chi2_quantiles_match_cdf_inversion() {
    for (p, expected) in [(0.95, 3.8415), (0.5, 0.4549)] {
        let q = chi2_quantile_1dof(p).unwrap();
        assert!((q - expected).abs() < 1e-3, "{p}: {q}");
        assert!((q - chi2_quantile_bisect(p)).abs() < 1e-6, "{p}: {q}");
    }
    for p in [0.01, 0.2, 0.6, 0.9, 0.99, 0.999] {
        assert!((chi2_quantile_1dof(p).unwrap() - chi2_quantile_bisect(p)).abs() < 1e-6 * (1.0 + chi2_quantile_bisect(p)));
    }
    assert!(chi2_quantile_1dof(0.0).is_err());
    assert!(chi2_quantile_1dof(1.0).is_err());
}

#[test]
fn normal_quantile_matches_statrs() {
    let n = Normal::new(0.0, 1.0).unwrap();
    for i in 1..200 {
        let p = i as f64 / 200.0;
        assert!((normal_quantile(p).unwrap() - n.inverse_cdf(p)).abs() < 1e-6);
    }
}

#[test]
fn distance_examples() {
    let fit = mcd_1d(&[0.9, 1.0, 1.1, 1.05, 0.95, 7.0], 4).unwrap();
    assert_eq!(mahalanobis(fit.mu, &fit).unwrap(), 0.0);
    let two = fit.mu + 2.0 * fit.sigma2.sqrt();
    assert!((mahalanobis(two, &fit).unwrap() - 2.0).abs() < 1e-12);
    let flat = mcd_1d(&[1.0, 1.0, 1.0, 5.0], 3).unwrap();
    assert!(flat.degenerate);
    assert!(mahalanobis(1.0, &flat).is_err());
}

#[test]
fn three_tall_bands_are_exactly_selected() {
    let mut scores = vec![1.0; 32];
    for (j, s) in scores.iter_mut().enumerate() {
        *s += 0.01 * ((j * 13 % 7) as f64 - 3.0);
    }
    for j in [5, 13, 27] {
        scores[j] = 10.0;
    }
    let h = Heatmap::normalized(scores, vec![]).unwrap();
    assert_eq!(select_bands(&h, 0.05).unwrap().selected, vec![5, 13, 27]);
}

#[test]
fn aggregate_examples() {
    let mut a = vec![0.0; 4];
    a[1] = 1.0;
    let mut b = vec![0.0; 4];
    b[2] = 1.0;
    let (ha, hb) = (
        Heatmap::new(a, vec!["a".into()]).unwrap(),
        Heatmap::new(b, vec!["b".into()]).unwrap(),
    );
    let m = aggregate_heatmaps(&[ha.clone(), hb.clone()]).unwrap();
    assert_eq!(m.scores(), &[0.0, 0.5, 0.5, 0.0]);
    assert_eq!(m.provenance(), &["a".to_string(), "b".to_string()]);
    assert_eq!(aggregate_heatmaps(std::slice::from_ref(&ha)).unwrap().scores(), ha.scores());
    let short = Heatmap::new(vec![0.5, 0.5], vec![]).unwrap();
    assert!(aggregate_heatmaps(&[ha, short]).is_err());
    assert!(aggregate_heatmaps(&[]).is_err());
}

fn scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 4..max_len)
}

proptest! {
    #[test]
    fn mcd_matches_exhaustive_search(x in prop::collection::vec(-5.0f64..5.0, 2..15), extra in 0usize..15) {
        let n = x.len();
        let h = (default_support(n) + extra).min(n);
        let fit = mcd_1d(&x, h).unwrap();
        let (subset, mean, var) = brute_force_mcd(&x, h);
        prop_assert_eq!(&fit.support, &subset);
        prop_assert!((fit.mu - mean).abs() < 1e-12);
        prop_assert!((fit.raw_variance - var).abs() < 1e-12);
    }

    #[test]
    fn mcd_ignores_input_order(x in prop::collection::vec(-5.0f64..5.0, 2..30)) {
        let h = default_support(x.len());
        let mut rev = x.clone();
        rev.reverse();
        let (a, b) = (mcd_1d(&x, h).unwrap(), mcd_1d(&rev, h).unwrap());
        prop_assert!((a.mu - b.mu).abs() < 1e-12);
        prop_assert!((a.sigma2 - b.sigma2).abs() < 1e-12);
    }

    #[test]
    fn distance_is_symmetric(x in prop::collection::vec(-5.0f64..5.0, 3..20), y in -10.0f64..10.0) {
        let fit = mcd_1d(&x, default_support(x.len())).unwrap();
        prop_assume!(!fit.degenerate);
        let a = mahalanobis(y, &fit).unwrap();
        let b = mahalanobis(2.0 * fit.mu - y, &fit).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
    }

    #[test]
    fn selections_are_nested(s in scores(80)) {
        let h = Heatmap::normalized(s, vec![]).unwrap();
        let sels: Vec<_> = DEFAULT_LAMBDAS.iter().map(|&l| select_bands(&h, l).unwrap()).collect();
        for w in sels.windows(2) {
            prop_assert!(w[0].selected.iter().all(|j| w[1].selected.contains(j)));
        }
    }

    #[test]
    fn selection_obeys_upper_side_rule(s in scores(80), lambda in 0.001f64..0.499) {
        let h = Heatmap::normalized(s, vec![]).unwrap();
        let sel = select_bands(&h, lambda).unwrap();
        prop_assert!(sel.selected.windows(2).all(|w| w[0] < w[1]));
        for &j in &sel.selected {
            prop_assert!(j < h.bands());
            prop_assert!(sel.distances[j] > sel.threshold);
            prop_assert!(h.scores()[j] > sel.mu);
        }
        prop_assert_eq!(select_bands(&h, lambda).unwrap(), sel);
    }

    #[test]
    fn selection_ignores_rescaling(s in scores(60), k in 0.01f64..100.0) {
        let a = Heatmap::normalized(s.clone(), vec![]).unwrap();
        let b = Heatmap::normalized(s.iter().map(|v| v * k).collect(), vec![]).unwrap();
        prop_assert_eq!(
            select_bands(&a, 0.05).unwrap().selected,
            select_bands(&b, 0.05).unwrap().selected
        );
    }

    #[test]
    fn aggregation_commutes(a in scores(30), seed in 0.0f64..1.0) {
        let b: Vec<f64> = a.iter().map(|v| (v + seed).fract()).collect();
        let (ha, hb) = (Heatmap::normalized(a, vec![]).unwrap(), Heatmap::normalized(b, vec![]).unwrap());
        let x = aggregate_heatmaps(&[ha.clone(), hb.clone()]).unwrap();
        let y = aggregate_heatmaps(&[hb, ha]).unwrap();
        for (u, v) in x.scores().iter().zip(y.scores()) {
            prop_assert!((u - v).abs() < 1e-15);
        }
        prop_assert!((x.scores().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
