//! On-disk weight bundles and the oriented `WeightMatrix` they load into.
//!
//! A bundle is a directory holding `manifest.json` plus one raw binary file
//! per layer: contiguous row-major little-endian scalars with no header.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "layers": [
//!     { "name": "fc1", "shape": [300, 768], "dtype": "f32",
//!       "file": "fc1.bin", "layout": "row-major", "endianness": "little" }
//!   ]
//! }
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    #[serde(rename = "row-major")]
    RowMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    Little,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub shape: (usize, usize),
    pub dtype: DType,
    pub file: String,
    pub layout: Layout,
    pub endianness: Endianness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format_version: u32,
    pub layers: Vec<LayerEntry>,
}

impl BundleManifest {
    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut seen = HashSet::new();
        for entry in &self.layers {
            if !seen.insert(entry.name.as_str()) {
                return Err(Error::Format(format!("duplicate layer name `{}`", entry.name)));
            }
            if entry.shape.0 == 0 || entry.shape.1 == 0 {
                return Err(Error::Format(format!("layer `{}` has an empty shape {:?}", entry.name, entry.shape)));
            }
        }
        Ok(())
    }
}

/// Scale convention applied to a weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Normalization {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Scaled so the eigenvalues of `X = WᵀW / N` sum to `M`.
    #[serde(rename = "trace-m")]
    TraceM,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::TraceM => "trace-m",
        })
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "trace-m" => Ok(Normalization::TraceM),
            other => Err(Error::Domain(format!("unknown normalization `{other}`"))),
        }
    }
}

/// A layer weight matrix oriented so that `n_rows >= n_cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T: Real> {
    pub name: String,
    pub values: DMatrix<T>,
    pub transposed: bool,
    pub normalization: Normalization,
}

impl<T: Real> WeightMatrix<T> {
    /// Number of rows `N` (the larger dimension).
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of columns `M` (the smaller dimension).
    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// Aspect ratio `Q = N / M`.
    pub fn q(&self) -> T {
        T::count(self.n()) / T::count(self.m())
    }

    pub fn frobenius_sq(&self) -> T {
        self.values.iter().map(|&x| x * x).sum()
    }

    /// Builds from row-major data, orienting the result.
    pub fn from_row_major(name: impl Into<String>, rows: usize, cols: usize, data: &[T]) -> Result<Self> {
        let name = name.into();
        if data.len() != rows * cols {
            return Err(Error::Data {
                layer: name,
                reason: format!("expected {} values for shape ({rows}, {cols}), got {}", rows * cols, data.len()),
            });
        }
        orient(name, DMatrix::from_row_slice(rows, cols, data))
    }

    /// Row-major copy of the values.
    pub fn to_row_major(&self) -> Vec<T> {
        let (r, c) = self.values.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        WeightMatrix {
            name: self.name.clone(),
            values: self.values.map(f),
            transposed: self.transposed,
            normalization: self.normalization,
        }
    }
}

/// Orients a raw matrix so that rows >= cols, transposing when needed.
pub fn orient<T: Real>(name: impl Into<String>, raw: DMatrix<T>) -> Result<WeightMatrix<T>> {
    let name = name.into();
    if raw.nrows() == 0 || raw.ncols() == 0 {
        return Err(Error::Data { layer: name, reason: "empty matrix".into() });
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data { layer: name, reason: "non-finite entry".into() });
    }
    let transposed = raw.nrows() < raw.ncols();
    let values = if transposed { raw.transpose() } else { raw };
    Ok(WeightMatrix { name, values, transposed, normalization: Normalization::None })
}

/// Re-applies the orientation rule to an existing matrix. Idempotent.
pub fn reorient<T: Real>(w: &WeightMatrix<T>) -> Result<WeightMatrix<T>> {
    let mut out = orient(w.name.clone(), w.values.clone())?;
    out.transposed ^= w.transposed;
    out.normalization = w.normalization;
    Ok(out)
}

/// Rescales `w` according to `mode`. `TraceM` uses `c = sqrt(M N / ||W||_F^2)`.
pub fn normalize<T: Real>(w: &WeightMatrix<T>, mode: Normalization) -> Result<WeightMatrix<T>> {
    match mode {
        Normalization::None => {
            let mut out = w.clone();
            out.normalization = Normalization::None;
            Ok(out)
        }
        Normalization::TraceM => {
            let fro = w.frobenius_sq();
            if !(fro > T::zero()) {
                return Err(Error::DegenerateMatrix(format!(
                    "layer `{}` is all zeros and cannot be trace-normalized",
                    w.name
                )));
            }
            let c = (T::count(w.m()) * T::count(w.n()) / fro).sqrt();
            let mut out = w.map_values(|x| x * c);
            out.normalization = Normalization::TraceM;
            Ok(out)
        }
    }
}

fn decode<T: Real>(bytes: &[u8], dtype: DType) -> Vec<T> {
    match dtype {
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|b| T::from_f32(f32::from_le_bytes([b[0], b[1], b[2], b[3]])).unwrap_or(T::nan()))
            .collect(),
        DType::F64 => bytes
            .chunks_exact(8)
            .map(|b| {
                let mut a = [0u8; 8];
                a.copy_from_slice(b);
                T::from_f64(f64::from_le_bytes(a)).unwrap_or(T::nan())
            })
            .collect(),
    }
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let manifest: BundleManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("invalid manifest {}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Loads every layer listed in the bundle manifest at `dir`.
pub fn load_bundle<T: Real>(dir: &Path) -> Result<Vec<WeightMatrix<T>>> {
    let manifest = read_manifest(dir)?;
    manifest
        .layers
        .iter()
        .map(|entry| {
            let path = dir.join(&entry.file);
            let bytes = fs::read(&path).map_err(|e| {
                Error::CorruptBundle(format!("layer `{}`: cannot read {}: {e}", entry.name, path.display()))
            })?;
            let (rows, cols) = entry.shape;
            let expected = rows * cols * entry.dtype.size_of();
            if bytes.len() != expected {
                return Err(Error::CorruptBundle(format!(
                    "layer `{}`: {} holds {} bytes, shape {:?} as {:?} needs {expected}",
                    entry.name,
                    entry.file,
                    bytes.len(),
                    entry.shape,
                    entry.dtype
                )));
            }
            let data: Vec<T> = decode(&bytes, entry.dtype);
            if data.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data { layer: entry.name.clone(), reason: "non-finite entry".into() });
            }
            WeightMatrix::from_row_major(entry.name.clone(), rows, cols, &data)
        })
        .collect()
}

/// Writes `layers` as a bundle under `dir` with f64 payloads.
///
/// Each matrix is stored in its oriented shape, so reloading reproduces the
/// values bit for bit.
pub fn write_bundle<T: Real>(dir: &Path, layers: &[WeightMatrix<T>]) -> Result<BundleManifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(layers.len());
    for (i, w) in layers.iter().enumerate() {
        let file = format!("{:03}_{}.bin", i, sanitize_file_stem(&w.name));
        let mut bytes = Vec::with_capacity(w.n() * w.m() * 8);
        for x in w.to_row_major() {
            bytes.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
        }
        fs::write(dir.join(&file), bytes)?;
        entries.push(LayerEntry {
            name: w.name.clone(),
            shape: (w.n(), w.m()),
            dtype: DType::F64,
            file,
            layout: Layout::RowMajor,
            endianness: Endianness::Little,
        });
    }
    let manifest = BundleManifest { format_version: FORMAT_VERSION, layers: entries };
    manifest.validate()?;
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// Maps a layer name onto something safe to use in a file name.
pub fn sanitize_file_stem(name: &str) -> String {
    let s: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        "layer".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::eigenspectrum;

    fn write_raw(dir: &Path, name: &str, shape: (usize, usize), dtype: DType, bytes: &[u8]) {
        let manifest = BundleManifest {
            format_version: 1,
            layers: vec![LayerEntry {
                name: name.into(),
                shape,
                dtype,
                file: format!("{name}.bin"),
                layout: Layout::RowMajor,
                endianness: Endianness::Little,
            }],
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string(&manifest).unwrap()).unwrap();
        fs::write(dir.join(format!("{name}.bin")), bytes).unwrap();
    }

    #[test]
    fn zero_square_layer_loads_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        write_raw(dir.path(), "z", (5, 5), DType::F64, &[0u8; 5 * 5 * 8]);
        let layers = load_bundle::<f64>(dir.path()).unwrap();
        assert_eq!(layers.len(), 1);
        let w = &layers[0];
        assert_eq!((w.n(), w.m()), (5, 5));
        assert!(!w.transposed);
        assert_eq!(w.normalization, Normalization::None);
    }

    #[test]
    fn wide_layer_is_transposed_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = (0..300 * 768).flat_map(|i| (i as f32 * 1e-3).to_le_bytes()).collect();
        write_raw(dir.path(), "fc1", (300, 768), DType::F32, &bytes);
        let w = &load_bundle::<f64>(dir.path()).unwrap()[0];
        assert_eq!((w.n(), w.m()), (768, 300));
        assert!(w.transposed);
        // raw element (row 1, col 2) lands at (2, 1)
        assert_eq!(w.values[(2, 1)], (770.0f32 * 1e-3) as f64);
    }

    #[test]
    fn wrong_byte_length_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_raw(dir.path(), "bad", (4, 4), DType::F64, &[0u8; 4 * 4 * 8 - 1]);
        assert!(matches!(load_bundle::<f64>(dir.path()), Err(Error::CorruptBundle(_))));
    }

    #[test]
    fn missing_manifest_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle::<f64>(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_entry_names_layer() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes: Vec<u8> = (0..4).flat_map(|_| 1.0f64.to_le_bytes()).collect();
        bytes[8..16].copy_from_slice(&f64::NAN.to_le_bytes());
        write_raw(dir.path(), "nanlayer", (2, 2), DType::F64, &bytes);
        match load_bundle::<f64>(dir.path()) {
            Err(Error::Data { layer, .. }) => assert_eq!(layer, "nanlayer"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let entry = LayerEntry {
            name: "a".into(),
            shape: (1, 1),
            dtype: DType::F64,
            file: "a.bin".into(),
            layout: Layout::RowMajor,
            endianness: Endianness::Little,
        };
        let manifest = BundleManifest { format_version: 1, layers: vec![entry.clone(), entry] };
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&manifest).unwrap()).unwrap();
        fs::write(dir.path().join("a.bin"), 1.0f64.to_le_bytes()).unwrap();
        assert!(matches!(load_bundle::<f64>(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), r#"{"format_version": 2, "layers": []}"#).unwrap();
        assert!(matches!(load_bundle::<f64>(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn orientation_rule() {
        let w = orient("a", DMatrix::<f64>::from_element(3, 7, 1.0)).unwrap();
        assert_eq!((w.n(), w.m(), w.transposed), (7, 3, true));
        let w = orient("b", DMatrix::<f64>::from_element(7, 3, 1.0)).unwrap();
        assert_eq!((w.n(), w.m(), w.transposed), (7, 3, false));
        let w = orient("c", DMatrix::<f64>::from_element(4, 4, 1.0)).unwrap();
        assert_eq!((w.n(), w.m(), w.transposed), (4, 4, false));
        assert!(matches!(orient("d", DMatrix::<f64>::zeros(0, 3)), Err(Error::Data { .. })));
    }

    #[test]
    fn trace_m_scales_identity_by_two() {
        let w = orient("id", DMatrix::<f64>::identity(4, 4)).unwrap();
        let before: f64 = eigenspectrum(&w).unwrap().eigenvalues.iter().sum();
        assert!((before - 1.0).abs() < 1e-12);
        let n = normalize(&w, Normalization::TraceM).unwrap();
        assert!((n.values[(0, 0)] - 2.0).abs() < 1e-15);
        let after: f64 = eigenspectrum(&n).unwrap().eigenvalues.iter().sum();
        assert!((after - 4.0).abs() < 1e-12);
        assert_eq!(n.normalization, Normalization::TraceM);
    }

    #[test]
    fn normalize_none_is_identity() {
        let w = WeightMatrix::<f64>::from_row_major("x", 2, 3, &[1.0, -2.0, 3.0, 0.5, 0.25, 9.0]).unwrap();
        assert_eq!(normalize(&w, Normalization::None).unwrap().values, w.values);
    }

    #[test]
    fn zero_matrix_cannot_be_trace_normalized() {
        let w = orient("z", DMatrix::<f64>::zeros(3, 3)).unwrap();
        assert!(matches!(normalize(&w, Normalization::TraceM), Err(Error::DegenerateMatrix(_))));
    }
}
