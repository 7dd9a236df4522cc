//! Array file formats: NPY (v1/v2/v3, little-endian float32/float64, C order),
//! headerless CSV, and the JSON layer manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseArray, OrientedMatrix, Provenance, ReshapeMode};

const NPY_MAGIC: &[u8] = b"\x93NUMPY";

/// Reads an `.npy` file into `f64` values (float32 widened exactly).
pub fn read_npy(path: &Path) -> Result<DenseArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes)
}

pub fn parse_npy(bytes: &[u8]) -> Result<DenseArray> {
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(Error::UnsupportedFormat("missing NPY magic string".into()));
    }
    let major = bytes[6];
    let (header_len, header_start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::UnsupportedFormat("truncated NPY header".into()));
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        v => return Err(Error::UnsupportedFormat(format!("NPY version {v} is not supported"))),
    };
    let body_start = header_start + header_len;
    if bytes.len() < body_start {
        return Err(Error::UnsupportedFormat("truncated NPY header".into()));
    }
    let header = std::str::from_utf8(&bytes[header_start..body_start])
        .map_err(|_| Error::UnsupportedFormat("NPY header is not valid text".into()))?;
    let header = NpyHeader::parse(header)?;
    if header.fortran_order {
        return Err(Error::UnsupportedFormat("Fortran-ordered arrays are not supported".into()));
    }
    let count: usize = header.shape.iter().product();
    let body = &bytes[body_start..];
    let width = match header.descr.as_str() {
        "<f8" => 8,
        "<f4" => 4,
        other => return Err(Error::UnsupportedDtype(other.to_string())),
    };
    if body.len() < count * width {
        return Err(Error::InvalidShape(format!(
            "NPY data holds {} bytes, shape {:?} needs {}",
            body.len(),
            header.shape,
            count * width
        )));
    }
    let data = if width == 8 {
        body.chunks_exact(8).take(count).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    } else {
        body.chunks_exact(4)
            .take(count)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect()
    };
    DenseArray::new(header.shape, data)
}

struct NpyHeader {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl NpyHeader {
    // The header is a Python dict literal; only the three known keys are read.
    fn parse(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::UnsupportedFormat(format!("malformed NPY header ({what}): {text:?}"));
        let value_after = |key: &str| -> Option<&str> {
            let at = text.find(&format!("'{key}'"))?;
            let rest = &text[at + key.len() + 2..];
            let colon = rest.find(':')?;
            Some(rest[colon + 1..].trim_start())
        };
        let descr = value_after("descr").ok_or_else(|| bad("descr"))?;
        let quote = descr.chars().next().ok_or_else(|| bad("descr"))?;
        if quote != '\'' && quote != '"' {
            return Err(bad("descr"));
        }
        let end = descr[1..].find(quote).ok_or_else(|| bad("descr"))?;
        let descr = descr[1..1 + end].to_string();

        let fortran = value_after("fortran_order").ok_or_else(|| bad("fortran_order"))?;
        let fortran_order = if fortran.starts_with("True") {
            true
        } else if fortran.starts_with("False") {
            false
        } else {
            return Err(bad("fortran_order"));
        };

        let shape = value_after("shape").ok_or_else(|| bad("shape"))?;
        let open = shape.strip_prefix('(').ok_or_else(|| bad("shape"))?;
        let close = open.find(')').ok_or_else(|| bad("shape"))?;
        let shape = open[..close]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.trim_end_matches('L').parse::<usize>().map_err(|_| bad("shape")))
            .collect::<Result<Vec<_>>>()?;
        if shape.is_empty() {
            return Err(Error::InvalidShape("NPY scalar (0-d array) is not a matrix".into()));
        }
        Ok(NpyHeader { descr, fortran_order, shape })
    }
}

/// Writes a little-endian float64 C-order `.npy` file.
pub fn write_npy(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let bytes = encode_npy(shape, data)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_npy(shape: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::InvalidShape(format!(
            "shape {shape:?} does not match {} values",
            data.len()
        )));
    }
    let dims = match shape {
        [d] => format!("({d},)"),
        _ => format!("({})", shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")),
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {dims}, }}");
    // magic + version + length field + header + '\n' must be 64-byte aligned
    let (version, prefix) = if header.len() + 11 < 65536 { (1u8, 10) } else { (2u8, 12) };
    let pad = (64 - (prefix + header.len() + 1) % 64) % 64;
    header.extend(std::iter::repeat(' ').take(pad));
    header.push('\n');
    let mut out = Vec::with_capacity(prefix + header.len() + data.len() * 8);
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[version, 0]);
    if version == 1 {
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    } else {
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    }
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Reads a headerless comma-separated matrix.
pub fn read_csv(path: &Path) -> Result<DenseArray> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<DenseArray> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for (c, field) in line.split(',').enumerate() {
            let v = field.trim().parse::<f64>().map_err(|_| {
                Error::UnsupportedDtype(format!("non-numeric CSV field {field:?} at line {}, column {}", r + 1, c + 1))
            })?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(w) if w != width => {
                return Err(Error::InvalidShape(format!(
                    "CSV line {} has {width} fields, expected {w}",
                    r + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::InvalidShape("CSV file is empty".into()))?;
    DenseArray::new(vec![rows, cols], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Fc,
    Conv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: String,
    pub kind: LayerKind,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<String>,
}

/// Layer manifest shared with the checkpoint exporter. Accepts either a bare
/// list of entries or `{"model": ..., "entries": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub model: Option<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    List(Vec<ManifestEntry>),
    Object {
        #[serde(default)]
        model: Option<String>,
        entries: Vec<ManifestEntry>,
    },
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: ManifestFile = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let (model, entries) = match parsed {
            ManifestFile::List(entries) => (None, entries),
            ManifestFile::Object { model, entries } => (model, entries),
        };
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { model, entries, base_dir })
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads one entry, checking the file's shape against the manifest.
    pub fn load_entry(&self, entry: &ManifestEntry, mode: ReshapeMode) -> Result<OrientedMatrix> {
        let path = self.resolve(entry);
        let array = read_array(&path)?;
        if array.shape != entry.shape {
            return Err(Error::Manifest(format!(
                "entry {:?}: manifest shape {:?} but file holds {:?}",
                entry.name, entry.shape, array.shape
            )));
        }
        let source = Provenance {
            path: Some(path.display().to_string()),
            layer: Some(entry.name.clone()),
            ..Provenance::default()
        };
        OrientedMatrix::from_array(&array, mode, source)
    }
}

/// Reads a single array file, dispatching on the extension.
pub fn read_array(path: &Path) -> Result<DenseArray> {
    match extension(path).as_deref() {
        Some("npy") => read_npy(path),
        Some("csv") => read_csv(path),
        _ => Err(Error::UnsupportedFormat(format!(
            "{}: expected .npy or .csv",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

/// Loads and orients a matrix. `path` may be an `.npy`/`.csv` array or a
/// `.json` manifest, in which case `layer` selects the entry (optional when
/// the manifest has exactly one).
pub fn load_matrix(path: &Path, layer: Option<&str>, mode: ReshapeMode) -> Result<OrientedMatrix> {
    if extension(path).as_deref() == Some("json") {
        let manifest = Manifest::load(path)?;
        let entry = match layer {
            Some(name) => manifest
                .entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Manifest(format!("no layer named {name:?}")))?,
            None if manifest.entries.len() == 1 => &manifest.entries[0],
            None => {
                return Err(Error::Manifest(format!(
                    "{} lists {} layers; choose one",
                    path.display(),
                    manifest.entries.len()
                )))
            }
        };
        return manifest.load_entry(entry, mode);
    }
    let array = read_array(path)?;
    let source = Provenance {
        path: Some(path.display().to_string()),
        layer: layer.map(str::to_string),
        ..Provenance::default()
    };
    OrientedMatrix::from_array(&array, mode, source)
}
