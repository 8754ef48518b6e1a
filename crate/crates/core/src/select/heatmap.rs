use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

/// Nonnegative per-band attention scores summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    scores: Vec<f64>,
    provenance: Vec<String>,
}

impl Heatmap {
    /// Validates nonnegativity and unit sum.
    pub fn new(scores: Vec<f64>, provenance: Vec<String>) -> Result<Self> {
        check_scores(&scores)?;
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "heatmap scores sum to {sum}, not 1"
            )));
        }
        Ok(Self { scores, provenance })
    }

    /// Rescales arbitrary nonnegative scores to unit sum.
    pub fn normalized(mut scores: Vec<f64>, provenance: Vec<String>) -> Result<Self> {
        check_scores(&scores)?;
        let sum: f64 = scores.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument("heatmap has zero mass".into()));
        }
        scores.iter_mut().for_each(|s| *s /= sum);
        Ok(Self { scores, provenance })
    }

    pub fn bands(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    /// `band,score` CSV with 0-indexed bands.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,score\n");
        for (i, s) in self.scores.iter().enumerate() {
            let _ = writeln!(out, "{i},{s}");
        }
        out
    }

    /// Parses `band,score` CSV; rows may appear in any order but must cover
    /// every band exactly once. Scores are renormalized.
    pub fn from_csv(text: &str, provenance: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or("");
        if header.trim().replace(' ', "") != "band,score" {
            return Err(Error::Parse(format!(
                "heatmap CSV header must be `band,score`, got `{header}`"
            )));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let mut parts = line.split(',');
            let (Some(b), Some(s), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse(format!("line {}: expected 2 fields", lineno + 2)));
            };
            let band: usize = b
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: band: {e}", lineno + 2)))?;
            let score: f64 = s
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: score: {e}", lineno + 2)))?;
            rows.push((band, score));
        }
        let n = rows.len();
        let mut scores = vec![f64::NAN; n];
        for (band, score) in rows {
            if band >= n || !scores[band].is_nan() {
                return Err(Error::Parse(format!(
                    "band index {band} duplicated or outside 0..{n}"
                )));
            }
            scores[band] = score;
        }
        Self::normalized(scores, vec![provenance.to_string()])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, &path.display().to_string())
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("empty heatmap".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "heatmap score {bad} is negative or non-finite"
        )));
    }
    Ok(())
}

/// Element-wise mean of equally sized heatmaps, renormalized. The result does
/// not depend on the order of `heatmaps`.
pub fn aggregate_heatmaps(heatmaps: &[Heatmap]) -> Result<Heatmap> {
    let first = heatmaps
        .first()
        .ok_or_else(|| Error::InvalidArgument("no heatmaps to aggregate".into()))?;
    let b = first.bands();
    if let Some(other) = heatmaps.iter().find(|h| h.bands() != b) {
        return Err(Error::InvalidArgument(format!(
            "heatmaps have different band counts: {b} and {}",
            other.bands()
        )));
    }
    let n = heatmaps.len() as f64;
    let mut column = Vec::with_capacity(heatmaps.len());
    let scores: Vec<f64> = (0..b)
        .map(|j| {
            column.clear();
            column.extend(heatmaps.iter().map(|h| h.scores[j]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect();
    let mut provenance: Vec<String> = heatmaps
        .iter()
        .flat_map(|h| h.provenance.iter().cloned())
        .collect();
    provenance.sort();
    provenance.dedup();
    Heatmap::normalized(scores, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hm(scores: &[f64]) -> Heatmap {
        Heatmap::normalized(scores.to_vec(), vec!["t".into()]).unwrap()
    }

    #[test]
    fn single_heatmap_is_identity() {
        let h = hm(&[0.1, 0.2, 0.7]);
        assert_eq!(aggregate_heatmaps(std::slice::from_ref(&h)).unwrap().scores(), h.scores());
    }

    #[test]
    fn mirrored_one_hots() {
        let a = hm(&[1.0, 0.0, 0.0, 0.0]);
        let b = hm(&[0.0, 0.0, 0.0, 1.0]);
        let agg = aggregate_heatmaps(&[a, b]).unwrap();
        assert_eq!(agg.scores(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn mixed_band_counts_rejected() {
        let err = aggregate_heatmaps(&[hm(&[1.0, 1.0]), hm(&[1.0, 1.0, 1.0])]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let h = hm(&[0.1, 0.25, 0.65]);
        let back = Heatmap::from_csv(&h.to_csv(), "x").unwrap();
        assert_eq!(back.scores(), h.scores());
        assert!(Heatmap::from_csv("b,s\n0,1\n", "x").is_err());
        assert!(Heatmap::from_csv("band,score\n0,1\n0,2\n", "x").is_err());
        assert!(Heatmap::from_csv("band,score\n0,-1\n1,2\n", "x").is_err());
    }

    #[test]
    fn new_requires_unit_sum() {
        assert!(Heatmap::new(vec![0.5, 0.6], vec![]).is_err());
        assert!(Heatmap::new(vec![0.5, 0.5], vec![]).is_ok());
    }
}
