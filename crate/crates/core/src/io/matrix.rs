//! CSV and NPY (format version 1.0) matrices and label vectors.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::observer::format_17;

const NPY_MAGIC: &[u8] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
    I4,
    I8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F4 | Dtype::I4 => 4,
            Dtype::F8 | Dtype::I8 => 8,
        }
    }
}

/// Parsed NPY payload, widened to `f64` (floats) or `i64` (integers).
enum NpyData {
    Float(Vec<f64>),
    Int(Vec<i64>),
}

struct Npy {
    shape: Vec<usize>,
    data: NpyData,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn is_npy(path: &Path, bytes: &[u8]) -> bool {
    bytes.starts_with(NPY_MAGIC) || path.extension().is_some_and(|e| e.eq_ignore_ascii_case("npy"))
}

/// Text value of `'key':` in an NPY header dictionary.
fn header_field<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let pattern = format!("'{key}':");
    let start = header.find(&pattern)? + pattern.len();
    Some(header[start..].trim_start())
}

fn parse_npy(path: &Path, bytes: &[u8]) -> Result<Npy> {
    let bad = |m: String| Error::format(path, m);
    if !bytes.starts_with(NPY_MAGIC) {
        return Err(bad("byte 0: missing NPY magic string".into()));
    }
    if bytes.len() < 10 {
        return Err(bad(format!("byte {}: truncated NPY preamble", bytes.len())));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(bad(format!(
            "byte 6: NPY format version {major}.{minor} is not supported (only 1.0)"
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(bad(format!("byte 10: header of {header_len} bytes overruns the file")));
    }
    let header = std::str::from_utf8(&bytes[10..data_start]).map_err(|_| bad("byte 10: header is not ASCII".into()))?;

    let descr = header_field(header, "descr").ok_or_else(|| bad("byte 10: header has no 'descr'".into()))?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|d| d.split('\'').next())
        .ok_or_else(|| bad("byte 10: malformed 'descr'".into()))?;
    let dtype = match descr {
        "<f4" => Dtype::F4,
        "<f8" => Dtype::F8,
        "<i4" => Dtype::I4,
        "<i8" => Dtype::I8,
        other => {
            return Err(bad(format!(
                "byte 10: dtype '{other}' is not supported (expected little-endian <f4, <f8, <i4 or <i8)"
            )))
        }
    };
    let fortran = header_field(header, "fortran_order").ok_or_else(|| bad("byte 10: header has no 'fortran_order'".into()))?;
    if fortran.starts_with("True") {
        return Err(bad("byte 10: Fortran-order arrays are not supported".into()));
    } else if !fortran.starts_with("False") {
        return Err(bad("byte 10: malformed 'fortran_order'".into()));
    }
    let shape_text = header_field(header, "shape").ok_or_else(|| bad("byte 10: header has no 'shape'".into()))?;
    let inner = shape_text
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| bad("byte 10: malformed 'shape'".into()))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| bad(format!("byte 10: bad shape entry '{s}'"))))
        .collect::<Result<Vec<_>>>()?;

    let count: usize = shape.iter().product();
    let need = count * dtype.size();
    let payload = &bytes[data_start..];
    if payload.len() != need {
        return Err(bad(format!(
            "byte {data_start}: shape {shape:?} needs {need} data bytes, found {}",
            payload.len()
        )));
    }
    let chunks = payload.chunks_exact(dtype.size());
    let data = match dtype {
        Dtype::F4 => NpyData::Float(chunks.map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()),
        Dtype::F8 => NpyData::Float(chunks.map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
        Dtype::I4 => NpyData::Int(chunks.map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64).collect()),
        Dtype::I8 => NpyData::Int(chunks.map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect()),
    };
    Ok(Npy { shape, data })
}

fn npy_bytes(descr: &str, shape: &[usize], payload: &[u8]) -> Vec<u8> {
    let shape_text = match shape {
        [n] => format!("({n},)"),
        _ => format!("({})", shape.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut header = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_text}, }}");
    // Pad with spaces so the data starts on a 64-byte boundary.
    let total = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - total % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + payload.len());
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(payload);
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Non-empty, comma-separated lines with their 1-based line numbers. A
/// first line that is not numeric is taken as a header and skipped.
fn csv_records(path: &Path, text: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut records: Vec<(usize, Vec<String>)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(|c| c.trim().to_string()).collect()))
        .collect();
    if let Some((line, first)) = records.first() {
        let numeric = first.iter().filter(|c| c.parse::<f64>().is_ok()).count();
        if numeric == 0 {
            records.remove(0);
        } else if numeric < first.len() {
            let col = first.iter().position(|c| c.parse::<f64>().is_err()).unwrap_or(0);
            return Err(Error::format(
                path,
                format!("line {line}, column {}: cannot parse '{}'", col + 1, first[col]),
            ));
        }
    }
    Ok(records)
}

fn parse_csv_matrix(path: &Path, text: &str) -> Result<Array2<f64>> {
    let records = csv_records(path, text)?;
    let cols = records.first().map_or(0, |(_, r)| r.len());
    let mut values = Vec::with_capacity(records.len() * cols);
    for (line, record) in &records {
        if record.len() != cols {
            return Err(Error::format(
                path,
                format!("line {line}: {} values, expected {cols}", record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::format(path, format!("line {line}, column {}: cannot parse '{cell}'", j + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("line {line}, column {}: value is not finite", j + 1)));
            }
            values.push(v);
        }
    }
    Array2::from_shape_vec((records.len(), cols), values).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads an `N × C` matrix from CSV (optional header) or NPY 1.0. Rows
/// must be non-empty and every value finite.
pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = read_bytes(path)?;
    let m = if is_npy(path, &bytes) {
        let npy = parse_npy(path, &bytes)?;
        let values = match npy.data {
            NpyData::Float(v) => v,
            NpyData::Int(v) => v.into_iter().map(|x| x as f64).collect(),
        };
        let (rows, cols) = match npy.shape[..] {
            [r, c] => (r, c),
            [r] => (r, 1),
            _ => return Err(Error::format(path, format!("expected a 2-d array, got shape {:?}", npy.shape))),
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(path, format!("row {}, column {}: value is not finite", i / cols.max(1), i % cols.max(1))));
        }
        Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::format(path, e.to_string()))?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "file is neither NPY nor UTF-8 text"))?;
        parse_csv_matrix(path, &text)?
    };
    if m.nrows() == 0 {
        return Err(Error::Degenerate(format!("{}: matrix has no rows", path.display())));
    }
    if m.ncols() == 0 {
        return Err(Error::Degenerate(format!("{}: matrix has no columns", path.display())));
    }
    Ok(m)
}

/// Reads integer labels from a one-column CSV or a 1-d integer NPY. With
/// `num_classes`, every label must lie in `[0, num_classes)`.
pub fn load_labels(path: &Path, num_classes: Option<usize>) -> Result<Vec<usize>> {
    let bytes = read_bytes(path)?;
    let raw: Vec<(String, i64)> = if is_npy(path, &bytes) {
        let npy = parse_npy(path, &bytes)?;
        if npy.shape.len() != 1 && !(npy.shape.len() == 2 && npy.shape[1] == 1) {
            return Err(Error::format(path, format!("labels must be 1-d, got shape {:?}", npy.shape)));
        }
        match npy.data {
            NpyData::Int(v) => v.into_iter().enumerate().map(|(i, x)| (format!("row {i}"), x)).collect(),
            NpyData::Float(_) => return Err(Error::format(path, "labels must have an integer dtype (<i4 or <i8)")),
        }
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "file is neither NPY nor UTF-8 text"))?;
        let mut lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        if lines.first().is_some_and(|(_, l)| l.parse::<f64>().is_err()) {
            lines.remove(0);
        }
        lines
            .into_iter()
            .map(|(line, l)| {
                if l.contains(',') {
                    return Err(Error::format(path, format!("line {line}: expected a single label column")));
                }
                let v: i64 = l
                    .parse()
                    .map_err(|_| Error::format(path, format!("line {line}: '{l}' is not an integer label")))?;
                Ok((format!("line {line}"), v))
            })
            .collect::<Result<_>>()?
    };
    if raw.is_empty() {
        return Err(Error::Degenerate(format!("{}: no labels", path.display())));
    }
    raw.into_iter()
        .map(|(at, v)| {
            let in_range = v >= 0 && num_classes.is_none_or(|c| (v as usize) < c);
            if !in_range {
                let range = num_classes.map_or("[0, ∞)".to_string(), |c| format!("[0, {c})"));
                return Err(Error::format(path, format!("{at}: label {v} out of range {range}")));
            }
            Ok(v as usize)
        })
        .collect()
}

/// Writes CSV (17 significant digits, no header) or NPY `<f8` depending
/// on the extension.
pub fn save_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("npy")) {
        let payload: Vec<u8> = m.iter().flat_map(|v| v.to_le_bytes()).collect();
        write_bytes(path, &npy_bytes("<f8", &[m.nrows(), m.ncols()], &payload))
    } else {
        let mut out = String::new();
        for row in m.rows() {
            let cells: Vec<String> = row.iter().map(|v| format_17(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        write_bytes(path, out.as_bytes())
    }
}

/// Writes one label per line, or a 1-d `<i8` NPY.
pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("npy")) {
        let payload: Vec<u8> = labels.iter().flat_map(|&v| (v as i64).to_le_bytes()).collect();
        write_bytes(path, &npy_bytes("<i8", &[labels.len()], &payload))
    } else {
        let out: String = labels.iter().map(|l| format!("{l}\n")).collect();
        write_bytes(path, out.as_bytes())
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn csv_two_by_two() {
        let d = tmp();
        let p = d.path().join("m.csv");
        fs::write(&p, "1.0,2.0\n3.0,4.0").unwrap();
        let m = load_matrix(&p).unwrap();
        assert_eq!(m, ndarray::array![[1.0, 2.0], [3.0, 4.0]]);
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert_eq!(load_matrix(&p).unwrap(), ndarray::array![[1.0, 2.0]]);
    }

    #[test]
    fn csv_errors_carry_locations() {
        let d = tmp();
        let p = d.path().join("m.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(load_matrix(&p).unwrap_err().to_string().contains("line 2"));
        fs::write(&p, "1,2\n3,x\n").unwrap();
        assert!(load_matrix(&p).unwrap_err().to_string().contains("line 2, column 2"));
        fs::write(&p, "1,2\n3,inf\n").unwrap();
        assert!(load_matrix(&p).is_err());
        fs::write(&p, "h1,h2\n").unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn npy_round_trip_is_bitwise() {
        let d = tmp();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Array2::from_shape_fn((100, 10), |_| rng.random::<f64>() * 200.0 - 100.0);
        for name in ["m.npy", "m.csv"] {
            let p = d.path().join(name);
            save_matrix(&p, &m).unwrap();
            let back = load_matrix(&p).unwrap();
            assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let bytes = fs::read(d.path().join("m.npy")).unwrap();
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
    }

    #[test]
    fn npy_float32_widens() {
        let d = tmp();
        let p = d.path().join("f.npy");
        let payload: Vec<u8> = [0.5f32, -1.25, 3.0, 4.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&p, npy_bytes("<f4", &[2, 2], &payload)).unwrap();
        assert_eq!(load_matrix(&p).unwrap(), ndarray::array![[0.5, -1.25], [3.0, 4.0]]);
    }

    #[test]
    fn npy_rejections() {
        let d = tmp();
        let p = d.path().join("x.npy");
        fs::write(&p, npy_bytes("<f8", &[0, 5], &[])).unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Degenerate(_))));
        let mut v2 = npy_bytes("<f8", &[1, 1], &1.0f64.to_le_bytes());
        v2[6] = 2;
        fs::write(&p, &v2).unwrap();
        assert!(load_matrix(&p).unwrap_err().to_string().contains("version 2.0"));
        fs::write(&p, npy_bytes(">f8", &[1, 1], &1.0f64.to_be_bytes())).unwrap();
        assert!(load_matrix(&p).unwrap_err().to_string().contains(">f8"));
        fs::write(&p, npy_bytes("<f8", &[2, 2], &[0u8; 24])).unwrap();
        assert!(load_matrix(&p).unwrap_err().to_string().contains("needs 32 data bytes"));
        let mut bytes = npy_bytes("<f8", &[1, 1], &[]);
        let at = bytes.windows(5).position(|w| w == b"False").unwrap();
        bytes[at..at + 5].copy_from_slice(b"True ");
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(load_matrix(&p).unwrap_err().to_string().contains("Fortran"));
    }

    #[test]
    fn labels_from_csv() {
        let d = tmp();
        let p = d.path().join("y.csv");
        fs::write(&p, "0\n1\n2").unwrap();
        assert_eq!(load_labels(&p, Some(3)).unwrap(), vec![0, 1, 2]);
        fs::write(&p, "0\n7\n2").unwrap();
        let err = load_labels(&p, Some(3)).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("label 7"), "{err}");
        fs::write(&p, "0\n-1\n").unwrap();
        assert!(load_labels(&p, None).is_err());
        fs::write(&p, "0\n1.5\n").unwrap();
        assert!(load_labels(&p, None).is_err());
    }

    #[test]
    fn labels_npy_int64_round_trip() {
        let d = tmp();
        let p = d.path().join("y.npy");
        let labels: Vec<usize> = (0..257).map(|i| (i * 7) % 10).collect();
        save_labels(&p, &labels).unwrap();
        assert_eq!(load_labels(&p, Some(10)).unwrap(), labels);
        let payload: Vec<u8> = [1i32, 0, 2].iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&p, npy_bytes("<i4", &[3], &payload)).unwrap();
        assert_eq!(load_labels(&p, Some(3)).unwrap(), vec![1, 0, 2]);
        fs::write(&p, npy_bytes("<i4", &[3], &payload)).unwrap();
        assert!(load_labels(&p, Some(2)).unwrap_err().to_string().contains("row 2"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn matrices_round_trip(rows in 1usize..20, cols in 1usize..8, seed in 0u64..1000) {
            let d = tmp();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-5..6)));
            for name in ["a.npy", "a.csv"] {
                let p = d.path().join(name);
                save_matrix(&p, &m).unwrap();
                prop_assert_eq!(&load_matrix(&p).unwrap(), &m);
            }
        }
    }
}
