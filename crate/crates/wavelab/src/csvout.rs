//! Deterministic CSV emission. Floats are serialized with 17 significant
//! decimal digits so byte-identical reruns are a meaningful check.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CsvValue<'a> {
    F(f64),
    I(i64),
    S(&'a str),
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> std::io::Result<CsvWriter> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn row(&mut self, values: &[CsvValue<'_>]) -> std::io::Result<()> {
        let mut line = String::new();
        for (k, v) in values.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            match v {
                CsvValue::F(x) => line.push_str(&format_f64(*x)),
                CsvValue::I(i) => line.push_str(&i.to_string()),
                CsvValue::S(s) => line.push_str(s),
            }
        }
        writeln!(self.out, "{line}")
    }

    pub fn finish(mut self) -> std::io::Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_roundtrip() {
        let v = 0.1 + 0.2;
        let s = format_f64(v);
        let back: f64 = s.parse().unwrap();
        assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn writes_expected_bytes() {
        let dir = std::env::temp_dir().join("wavelab-csv-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("demo.csv");
        let mut w = CsvWriter::create(&path, &["t", "value", "tag"]).unwrap();
        w.row(&[CsvValue::F(1.0), CsvValue::I(7), CsvValue::S("ok")])
            .unwrap();
        let p = w.finish().unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "t,value,tag\n1.0000000000000000e0,7,ok\n");
    }
}
