use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// Rounds to 12 significant digits and prints the shortest decimal that
/// reads back as the rounded value.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// JSON has no infinity; non-finite values are written as strings.
pub fn json_float(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::Value::String(fmt_float(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_float(0.05), "0.05");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_float(2.0 / 3.0 * 1e-7), "0.0000000666666666667");
        assert_eq!(fmt_float(123_456_789.123_456), "123456789.123");
        assert_eq!(fmt_float(-0.0), "0");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(1.0), "1");
    }

    #[test]
    fn csv_uses_unix_line_endings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.csv");
        let mut w = csv_writer(&path).unwrap();
        w.write_record(["x", "y"]).unwrap();
        w.write_record(["1", "a,b"]).unwrap();
        w.flush().unwrap();
        drop(w);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "x,y\n1,\"a,b\"\n");
    }
}
