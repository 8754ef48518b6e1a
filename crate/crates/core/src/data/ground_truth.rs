use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Per-pixel class labels; 0 marks background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    rows: usize,
    cols: usize,
    labels: Vec<u16>,
}

impl GroundTruth {
    pub fn new(rows: usize, cols: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} labels for a {rows}x{cols} image",
                labels.len()
            )));
        }
        Ok(Self { rows, cols, labels })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// Largest label present, i.e. the number of classes.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.labels.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        let labels = bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Self::new(rows, cols, labels)
    }

    /// Lines of `row,col,label`; unlisted pixels are background.
    pub fn from_csv(rows: usize, cols: usize, text: &str) -> Result<Self> {
        let mut labels = vec![0u16; rows * cols];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if ln == 0 && fields.first().is_some_and(|f| f.parse::<usize>().is_err()) {
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected row,col,label",
                    ln + 1
                )));
            }
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))
            };
            let (r, c, l) = (num(fields[0])?, num(fields[1])?, num(fields[2])?);
            if r >= rows || c >= cols {
                return Err(Error::Parse(format!(
                    "line {}: pixel ({r},{c}) outside {rows}x{cols}",
                    ln + 1
                )));
            }
            labels[r * cols + c] = u16::try_from(l)
                .map_err(|_| Error::Parse(format!("line {}: label {l} too large", ln + 1)))?;
        }
        Self::new(rows, cols, labels)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,label\n");
        for (p, &l) in self.labels.iter().enumerate() {
            if l != 0 {
                out.push_str(&format!("{},{},{l}\n", p / self.cols, p % self.cols));
            }
        }
        out
    }
}

/// Reads a label image of the given size: raw little-endian u16, or CSV
/// when the file has a `.csv` extension.
pub fn load_ground_truth(path: &Path, rows: usize, cols: usize) -> Result<GroundTruth> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return GroundTruth::from_csv(rows, cols, &text);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (rows * cols * 2) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    GroundTruth::from_bytes(rows, cols, &bytes)
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        gt.to_csv().into_bytes()
    } else {
        gt.to_bytes()
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_and_csv_agree() {
        let gt = GroundTruth::new(2, 3, vec![0, 1, 2, 0, 0, 300]).unwrap();
        assert_eq!(GroundTruth::from_bytes(2, 3, &gt.to_bytes()).unwrap(), gt);
        assert_eq!(GroundTruth::from_csv(2, 3, &gt.to_csv()).unwrap(), gt);
        assert_eq!(gt.num_classes(), 300);
    }

    #[test]
    fn csv_rejects_out_of_range_pixels() {
        assert!(GroundTruth::from_csv(2, 2, "2,0,1\n").is_err());
        assert!(GroundTruth::from_csv(2, 2, "0,0\n").is_err());
    }
}
