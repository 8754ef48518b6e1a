//! Band selection as robust outlier detection over an attention heatmap.

mod chi2;
mod heatmap;
mod mcd;

pub use chi2::{chi2_quantile_1dof, normal_quantile};
pub use heatmap::{aggregate_heatmaps, Heatmap};
pub use mcd::{default_support, mahalanobis, mcd_1d, McdFit};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contamination rates swept by default.
pub const DEFAULT_LAMBDAS: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];

/// Bands flagged as informative for one contamination rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub lambda: f64,
    /// `√χ²₁(1 − λ)`
    pub threshold: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub support_size: usize,
    /// True when the robust scale collapsed and nothing could be selected.
    pub degenerate: bool,
    /// Ascending band indices.
    pub selected: Vec<usize>,
    /// Robust distance of every band; empty when degenerate.
    pub distances: Vec<f64>,
}

impl BandSelection {
    pub fn to_report(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_report(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Flags bands whose score lies above the robust mean by more than the
/// χ²₁ cutoff at `1 − lambda`.
pub fn select_bands(heatmap: &Heatmap, lambda: f64) -> Result<BandSelection> {
    if !(lambda > 0.0 && lambda < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "contamination rate {lambda} outside (0, 0.5)"
        )));
    }
    let scores = heatmap.scores();
    let fit = mcd_1d(scores, default_support(scores.len()))?;
    let threshold = chi2_quantile_1dof(1.0 - lambda)?.sqrt();

    if fit.degenerate {
        warn!("heatmap is flat over its robust support; no bands selected (lambda {lambda})");
        return Ok(BandSelection {
            lambda,
            threshold,
            mu: fit.mu,
            sigma2: fit.sigma2,
            support_size: fit.h,
            degenerate: true,
            selected: Vec::new(),
            distances: Vec::new(),
        });
    }

    let distances = scores
        .iter()
        .map(|&s| mahalanobis(s, &fit))
        .collect::<Result<Vec<_>>>()?;
    let selected = (0..scores.len())
        .filter(|&j| distances[j] > threshold && scores[j] > fit.mu)
        .collect();
    Ok(BandSelection {
        lambda,
        threshold,
        mu: fit.mu,
        sigma2: fit.sigma2,
        support_size: fit.h,
        degenerate: false,
        selected,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spiky(b: usize, spikes: &[usize]) -> Heatmap {
        let scores = (0..b)
            .map(|j| {
                let base = 1.0 + 0.02 * ((j * 7 % 5) as f64 - 2.0);
                if spikes.contains(&j) {
                    10.0
                } else {
                    base
                }
            })
            .collect();
        Heatmap::normalized(scores, vec![]).unwrap()
    }

    #[test]
    fn uniform_heatmap_selects_nothing() {
        let h = Heatmap::normalized(vec![1.0; 16], vec![]).unwrap();
        let sel = select_bands(&h, 0.05).unwrap();
        assert!(sel.degenerate);
        assert!(sel.selected.is_empty());
    }

    #[test]
    fn three_spikes_are_selected() {
        let sel = select_bands(&spiky(32, &[3, 17, 30]), 0.05).unwrap();
        assert_eq!(sel.selected, vec![3, 17, 30]);
    }

    #[test]
    fn low_outliers_are_ignored() {
        let mut scores: Vec<f64> = spiky(32, &[]).scores().to_vec();
        scores[4] = 0.0;
        let h = Heatmap::normalized(scores, vec![]).unwrap();
        assert!(select_bands(&h, 0.05).unwrap().selected.is_empty());
    }

    #[test]
    fn lambda_range() {
        let h = spiky(8, &[1]);
        assert!(select_bands(&h, 0.0).is_err());
        assert!(select_bands(&h, 0.5).is_err());
    }

    #[test]
    fn report_round_trip() {
        let sel = select_bands(&spiky(16, &[2]), 0.03).unwrap();
        let back = BandSelection::from_report(&sel.to_report().unwrap()).unwrap();
        assert_eq!(back, sel);
    }
}
