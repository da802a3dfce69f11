//! Embedding file ingestion and emission.
//!
//! Two formats are supported: version-1.0 `.npy` arrays (little-endian
//! `<f4`/`<f8`, C order, two-dimensional) and bare numeric CSV with an
//! optional single header row. 32-bit floats are widened to 64-bit on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use nsa_core::PointCloud;

#[derive(Debug, Error)]
pub enum IoError {
    /// The file's structure does not match the declared or detected format.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    /// Structurally valid file carrying unusable values.
    #[error("invalid input in {path}: {reason}")]
    InvalidInput { path: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] nsa_core::NsaError),
}

pub type Result<T> = std::result::Result<T, IoError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    NpyV1,
    Csv,
}

const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn invalid_err(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::InvalidInput {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Guess the format from the extension, falling back to the magic bytes.
pub fn detect_format(path: &Path, bytes: &[u8]) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("npy") => Format::NpyV1,
        Some("csv") => Format::Csv,
        _ => {
            if bytes.len() >= 6 && &bytes[..6] == NPY_MAGIC {
                Format::NpyV1
            } else {
                Format::Csv
            }
        }
    }
}

/// Loads a 2-D embedding matrix, validating shape and finiteness.
pub fn load_embedding(path: &Path, format_hint: Option<Format>) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let format = format_hint.unwrap_or_else(|| detect_format(path, &bytes));
    let data = match format {
        Format::NpyV1 => parse_npy(path, &bytes)?,
        Format::Csv => parse_csv(path, &bytes)?,
    };
    for ((i, j), v) in data.indexed_iter() {
        if !v.is_finite() {
            return Err(invalid_err(
                path,
                format!("non-finite value {v} at row {i}, column {j}"),
            ));
        }
    }
    PointCloud::new(data).map_err(IoError::from)
}

fn parse_npy(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(format_err(path, "bad magic bytes, not an npy file"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(format_err(
            path,
            format!("unsupported npy version {major}.{minor}, only 1.0 is handled"),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(format_err(path, "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| format_err(path, "header is not ASCII"))?;

    let descr = extract_quoted(header, "descr")
        .ok_or_else(|| format_err(path, "header lacks a descr entry"))?;
    let item_size = match descr.as_str() {
        "<f4" => 4,
        "<f8" => 8,
        other => {
            return Err(format_err(
                path,
                format!("unsupported dtype '{other}', expected '<f4' or '<f8'"),
            ))
        }
    };
    let fortran = extract_bool(header, "fortran_order")
        .ok_or_else(|| format_err(path, "header lacks a fortran_order entry"))?;
    if fortran {
        return Err(format_err(path, "fortran order is not supported"));
    }
    let shape = extract_shape(header).ok_or_else(|| format_err(path, "header lacks a shape entry"))?;
    if shape.len() != 2 {
        return Err(format_err(
            path,
            format!("expected 2-D shape, got {}-D", shape.len()),
        ));
    }
    let (n, d) = (shape[0], shape[1]);

    let expected = n * d * item_size;
    let payload = &bytes[data_start..];
    if payload.len() != expected {
        return Err(format_err(
            path,
            format!("payload is {} bytes, shape needs {expected}", payload.len()),
        ));
    }
    let mut data = Array2::zeros((n, d));
    for idx in 0..n * d {
        let off = idx * item_size;
        let v = if item_size == 4 {
            f32::from_le_bytes(payload[off..off + 4].try_into().unwrap()) as f64
        } else {
            f64::from_le_bytes(payload[off..off + 8].try_into().unwrap())
        };
        data[(idx / d, idx % d)] = v;
    }
    Ok(data)
}

fn extract_quoted(header: &str, key: &str) -> Option<String> {
    let pos = header.find(&format!("'{key}'"))?;
    let rest = &header[pos + key.len() + 2..];
    let colon = rest.find(':')?;
    let rest = rest[colon + 1..].trim_start();
    let quote = rest.chars().next()?;
    if quote != '\'' && quote != '"' {
        return None;
    }
    let end = rest[1..].find(quote)?;
    Some(rest[1..1 + end].to_string())
}

fn extract_bool(header: &str, key: &str) -> Option<bool> {
    let pos = header.find(&format!("'{key}'"))?;
    let rest = &header[pos + key.len() + 2..];
    let colon = rest.find(':')?;
    let rest = rest[colon + 1..].trim_start();
    if rest.starts_with("True") {
        Some(true)
    } else if rest.starts_with("False") {
        Some(false)
    } else {
        None
    }
}

fn extract_shape(header: &str) -> Option<Vec<usize>> {
    let pos = header.find("'shape'")?;
    let rest = &header[pos + 7..];
    let open = rest.find('(')?;
    let close = rest[open..].find(')')? + open;
    let inner = &rest[open + 1..close];
    let mut dims = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        dims.push(part.parse().ok()?);
    }
    Some(dims)
}

fn parse_csv(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    let text = std::str::from_utf8(bytes).map_err(|_| format_err(path, "csv is not UTF-8"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(format_err(
                            path,
                            format!("ragged row {line_no}: {} fields, expected {w}", values.len()),
                        ));
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err(_) if rows.is_empty() && width.is_none() => {
                // a single non-numeric first row is treated as a header
                continue;
            }
            Err(e) => {
                let col = fields.iter().position(|f| f.parse::<f64>().is_err()).unwrap_or(0);
                return Err(format_err(
                    path,
                    format!("row {line_no}, column {col}: {e}"),
                ));
            }
        }
    }
    if rows.is_empty() {
        return Err(format_err(path, "no numeric rows"));
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| format_err(path, e.to_string()))
}

/// Writes the cloud as little-endian C-order `<f8` npy (version 1.0) or as
/// CSV with 17-significant-digit rendering. Parent directories are created.
pub fn save_embedding(cloud: &PointCloud, path: &Path, format: Format) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
    }
    let bytes = match format {
        Format::NpyV1 => encode_npy(cloud.data()),
        Format::Csv => encode_csv(cloud.data()).into_bytes(),
    };
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&bytes).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn encode_npy(data: &Array2<f64>) -> Vec<u8> {
    let (n, d) = data.dim();
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({n}, {d}), }}");
    // total preamble (magic + version + len + header + newline) pads to 64
    let unpadded = 10 + header.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + n * d * 8);
    out.extend_from_slice(NPY_MAGIC);
    out.push(1);
    out.push(0);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_csv(data: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in data.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Format chosen from an output path's extension; npy is the default.
pub fn format_for(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Format::Csv,
        _ => Format::NpyV1,
    }
}
