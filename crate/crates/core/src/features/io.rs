//! On-disk feature container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "VSFT"
//! version u32      1
//! rows    u32
//! cols    u32
//! echo    u32 length + UTF-8 configuration echo
//! data    rows*cols f32, row-major
//! ```
//!
//! Values are stored as 32-bit floats; reading a file back therefore
//! reproduces the written values only to f32 precision.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VSFT";
const VERSION: u32 = 1;

pub fn write_feature_file(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    echo: &str,
    data: &[f64],
) -> Result<()> {
    assert_eq!(data.len(), rows * cols);
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut out = Vec::with_capacity(20 + echo.len() + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(echo.as_bytes());
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(&path_str, e))?;
    f.write_all(&out).map_err(|e| Error::io(&path_str, e))?;
    Ok(())
}

/// Returns (rows, cols, config echo, data).
pub fn read_feature_file(path: impl AsRef<Path>) -> Result<(usize, usize, String, Vec<f64>)> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(&path_str, e))?;
    let fail = |detail: &str| Error::Checkpoint(format!("{path_str}: {detail}"));
    if bytes.len() < 20 || &bytes[0..4] != MAGIC {
        return Err(fail("not a feature file"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(fail("unsupported version"));
    }
    let rows = u32_at(8) as usize;
    let cols = u32_at(12) as usize;
    let echo_len = u32_at(16) as usize;
    let data_off = 20 + echo_len;
    if bytes.len() != data_off + rows * cols * 4 {
        return Err(fail("size mismatch"));
    }
    let echo = String::from_utf8(bytes[20..data_off].to_vec())
        .map_err(|_| fail("bad echo encoding"))?;
    let data = bytes[data_off..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok((rows, cols, echo, data))
}

/// Debug CSV: one matrix row per line.
pub fn write_feature_csv(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    data: &[f64],
) -> Result<()> {
    assert_eq!(data.len(), rows * cols);
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut text = String::new();
    for r in 0..rows {
        let row: Vec<String> = (0..cols)
            .map(|c| format!("{}", data[r * cols + c]))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(&path_str, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_file_round_trip() {
        let dir = std::env::temp_dir().join("vocalscreen-featio-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("m.vsft");
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
        write_feature_file(&p, 3, 4, "kind=test", &data).unwrap();
        let (rows, cols, echo, back) = read_feature_file(&p).unwrap();
        assert_eq!((rows, cols), (3, 4));
        assert_eq!(echo, "kind=test");
        assert_eq!(back, data); // quarter steps are exact in f32
    }
}
