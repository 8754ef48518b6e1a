use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DTYPE_F32_LE: &str = "float32-le";
pub const LAYOUT_BIP: &str = "bip";

/// Hyperspectral cube stored band-interleaved-by-pixel: the spectrum of
/// pixel `(r, c)` is the contiguous run at `(r * cols + c) * bands`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<f32>,
}

/// Text header that accompanies a raw cube payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub dtype: String,
    pub layout: String,
}

impl CubeHeader {
    pub fn new(rows: usize, cols: usize, bands: usize) -> Self {
        Self {
            rows,
            cols,
            bands,
            dtype: DTYPE_F32_LE.into(),
            layout: LAYOUT_BIP.into(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let h: CubeHeader =
            toml::from_str(text).map_err(|e| Error::Parse(format!("cube header: {e}")))?;
        if h.dtype != DTYPE_F32_LE {
            return Err(Error::Parse(format!(
                "unsupported dtype {:?} (expected {DTYPE_F32_LE:?})",
                h.dtype
            )));
        }
        if h.layout != LAYOUT_BIP {
            return Err(Error::Parse(format!(
                "unsupported layout {:?} (expected {LAYOUT_BIP:?})",
                h.layout
            )));
        }
        if h.rows == 0 || h.cols == 0 || h.bands == 0 {
            return Err(Error::Parse("rows, cols and bands must be positive".into()));
        }
        Ok(h)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("header serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Number of float values in the payload.
    pub fn values(&self) -> usize {
        self.rows * self.cols * self.bands
    }

    pub fn payload_bytes(&self) -> u64 {
        self.values() as u64 * 4
    }
}

impl HsiCube {
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::Shape("cube dimensions must be positive".into()));
        }
        if data.len() != rows * cols * bands {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols}x{bands} cube",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at pixel {}, band {}",
                i / bands,
                i % bands
            )));
        }
        Ok(Self {
            rows,
            cols,
            bands,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn header(&self) -> CubeHeader {
        CubeHeader::new(self.rows, self.cols, self.bands)
    }

    /// Spectrum of pixel `p` in row-major pixel order.
    pub fn spectrum(&self, p: usize) -> &[f32] {
        &self.data[p * self.bands..(p + 1) * self.bands]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(header: &CubeHeader, bytes: &[u8]) -> Result<Self> {
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(header.rows, header.cols, header.bands, data)
    }

    /// One pixel per line: `row,col,b_0,...,b_{bands-1}`. Pixels not listed
    /// are an error; the dimensions come from `header`.
    pub fn from_csv(header: &CubeHeader, text: &str) -> Result<Self> {
        let mut data = vec![0.0f32; header.values()];
        let mut seen = vec![false; header.rows * header.cols];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            // tolerate a header line
            if ln == 0 && fields.first().is_some_and(|f| f.parse::<usize>().is_err()) {
                continue;
            }
            if fields.len() != header.bands + 2 {
                return Err(Error::Parse(format!(
                    "line {}: {} fields, expected {}",
                    ln + 1,
                    fields.len(),
                    header.bands + 2
                )));
            }
            let parse_idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))
            };
            let (r, c) = (parse_idx(fields[0])?, parse_idx(fields[1])?);
            if r >= header.rows || c >= header.cols {
                return Err(Error::Parse(format!(
                    "line {}: pixel ({r},{c}) outside {}x{}",
                    ln + 1,
                    header.rows,
                    header.cols
                )));
            }
            let p = r * header.cols + c;
            seen[p] = true;
            for (j, f) in fields[2..].iter().enumerate() {
                data[p * header.bands + j] = f
                    .parse::<f32>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!(
                "pixel ({},{}) missing from CSV cube",
                p / header.cols,
                p % header.cols
            )));
        }
        Self::new(header.rows, header.cols, header.bands, data)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in 0..self.pixels() {
            out.push_str(&format!("{},{}", p / self.cols, p % self.cols));
            for v in self.spectrum(p) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a cube described by `header_path`. Payloads with a `.csv`
/// extension are read as text, anything else as raw little-endian float32.
pub fn load_cube(data_path: &Path, header_path: &Path) -> Result<HsiCube> {
    let header = CubeHeader::read(header_path)?;
    if is_csv(data_path) {
        let text = fs::read_to_string(data_path).map_err(|e| Error::io(data_path, e))?;
        return HsiCube::from_csv(&header, &text);
    }
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    if bytes.len() as u64 != header.payload_bytes() {
        return Err(Error::SizeMismatch {
            path: data_path.to_path_buf(),
            expected: header.payload_bytes(),
            actual: bytes.len() as u64,
        });
    }
    HsiCube::from_bytes(&header, &bytes)
}

/// Writes the payload and its header. A `.csv` data path gets the text form.
pub fn write_cube(cube: &HsiCube, data_path: &Path, header_path: &Path) -> Result<()> {
    if is_csv(data_path) {
        fs::write(data_path, cube.to_csv()).map_err(|e| Error::io(data_path, e))?;
    } else {
        fs::write(data_path, cube.to_bytes()).map_err(|e| Error::io(data_path, e))?;
    }
    fs::write(header_path, cube.header().to_text()).map_err(|e| Error::io(header_path, e))
}

/// Default header location for a payload: same stem, `.toml` extension.
pub fn header_path_for(data_path: &Path) -> PathBuf {
    data_path.with_extension("toml")
}

/// Sidecar listing the original band indices kept in a reduced cube.
pub fn sidecar_path_for(data_path: &Path) -> PathBuf {
    data_path.with_extension("bands.txt")
}

/// Cube restricted to `selection`, in ascending band order. Duplicates are
/// dropped.
pub fn reduce_bands(cube: &HsiCube, selection: &[usize]) -> Result<HsiCube> {
    let mut sel = selection.to_vec();
    sel.sort_unstable();
    sel.dedup();
    if sel.is_empty() {
        return Err(Error::InvalidArgument("empty band selection".into()));
    }
    if let Some(&j) = sel.iter().find(|&&j| j >= cube.bands) {
        return Err(Error::InvalidArgument(format!(
            "band {j} out of range for a {}-band cube",
            cube.bands
        )));
    }
    let mut data = Vec::with_capacity(cube.pixels() * sel.len());
    for p in 0..cube.pixels() {
        let s = cube.spectrum(p);
        data.extend(sel.iter().map(|&j| s[j]));
    }
    HsiCube::new(cube.rows, cube.cols, sel.len(), data)
}

/// Writes a reduced cube, its header and the sidecar of retained indices.
pub fn write_reduced(
    cube: &HsiCube,
    selection: &[usize],
    data_path: &Path,
    header_path: &Path,
) -> Result<HsiCube> {
    let reduced = reduce_bands(cube, selection)?;
    write_cube(&reduced, data_path, header_path)?;
    let mut sel = selection.to_vec();
    sel.sort_unstable();
    sel.dedup();
    let text: String = sel.iter().map(|j| format!("{j}\n")).collect();
    let side = sidecar_path_for(data_path);
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(reduced)
}

/// Parses a band index list: integers separated by commas, whitespace or
/// newlines, `#` comments allowed.
pub fn parse_index_list(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::Parse(format!("band index {t:?}: {e}")))
        })
        .collect()
}
