//! CSV helpers and the plain-text parameter checkpoint format.
//!
//! Every float written by this crate uses 17 significant digits so that a
//! text round trip reproduces the exact bit pattern.
//!
//! Checkpoint layout:
//!
//! ```text
//! pglab-params 1
//! tensor <name> <dim> <dim> ...
//! <value>
//! ...
//! ```
//!
//! Values follow each header in row-major order, one per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "pglab-params 1";

/// 17 significant digits, scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `(state, value)` rows under the given column names.
pub fn write_state_table<W: Write>(out: W, value_column: &str, values: &[f64]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["state", value_column])?;
    for (s, v) in values.iter().enumerate() {
        w.write_record([s.to_string(), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension {
                what: "tensor data",
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            shape,
            data,
        })
    }
}

pub fn write_checkpoint<W: Write>(mut out: W, tensors: &[NamedTensor]) -> Result<()> {
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    for t in tensors {
        if t.name.is_empty() || t.name.contains(char::is_whitespace) {
            return Err(Error::input(format!("invalid tensor name {:?}", t.name)));
        }
        write!(out, "tensor {}", t.name)?;
        for d in &t.shape {
            write!(out, " {d}")?;
        }
        writeln!(out)?;
        for v in &t.data {
            writeln!(out, "{}", fmt_f64(*v))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Vec<NamedTensor>> {
    let bad = |line: usize, msg: &str| Error::Structure(format!("checkpoint line {line}: {msg}"));
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim() == CHECKPOINT_MAGIC => {}
        _ => return Err(bad(1, "missing header")),
    }
    let mut tensors = Vec::new();
    while let Some((i, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("tensor") {
            return Err(bad(i + 1, "expected tensor header"));
        }
        let name = parts.next().ok_or_else(|| bad(i + 1, "missing tensor name"))?;
        let shape = parts
            .map(|p| p.parse::<usize>().map_err(|_| bad(i + 1, "bad dimension")))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let (j, l) = lines.next().ok_or_else(|| bad(i + 1, "truncated tensor"))?;
            let l = l?;
            data.push(l.trim().parse::<f64>().map_err(|_| bad(j + 1, "bad value"))?);
        }
        tensors.push(NamedTensor::new(name, shape, data)?);
    }
    Ok(tensors)
}

pub fn save_checkpoint(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    write_checkpoint(create_file(path)?, tensors)
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<NamedTensor>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
