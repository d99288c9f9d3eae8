use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One observation `(X, A, Y)`. `x` is the 0-based category index; files use
/// 1-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Record {
    pub x: u32,
    pub a: bool,
    pub y: bool,
}

impl Record {
    pub fn new(x: u32, a: bool, y: bool) -> Self {
        Self { x, a, y }
    }

    /// Builds a record from a 1-based category and 0/1 indicators.
    pub fn from_one_based(x: u32, a: u8, y: u8) -> Self {
        debug_assert!(x >= 1 && a <= 1 && y <= 1);
        Self { x: x - 1, a: a == 1, y: y == 1 }
    }

    #[inline]
    pub fn category(&self) -> usize {
        self.x as usize
    }

    #[inline]
    pub fn a_f64(&self) -> f64 {
        if self.a {
            1.0
        } else {
            0.0
        }
    }

    #[inline]
    pub fn y_f64(&self) -> f64 {
        if self.y {
            1.0
        } else {
            0.0
        }
    }
}

/// An i.i.d. sample over `d` categories. Every record's category is below `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    d: usize,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(d: usize, records: Vec<Record>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("d must be at least 1".into()));
        }
        if records.is_empty() {
            return Err(Error::TooFewRecords { required: 1, actual: 0 });
        }
        if let Some(bad) = records.iter().find(|r| r.category() >= d) {
            return Err(Error::CategoryOutOfRange { category: bad.x as u64 + 1, d });
        }
        Ok(Self { d, records })
    }

    pub(crate) fn from_parts_unchecked(d: usize, records: Vec<Record>) -> Self {
        Self { d, records }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    /// Parses the `x,a,y` text format. `d` is the declared number of categories;
    /// `x` must lie in `[1, d]` and `a`, `y` in `{0, 1}`.
    pub fn from_csv_reader(reader: impl Read, d: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let parse_err = |reason: String| Error::Parse { path: "<dataset>".into(), reason };
        let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["x", "a", "y"] {
            return Err(parse_err(format!(
                "expected header x,a,y, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| parse_err(e.to_string()))?;
            let field = |i: usize| -> Result<u64> {
                row.get(i)
                    .ok_or_else(|| parse_err(format!("record {}: missing field", line + 1)))?
                    .parse::<u64>()
                    .map_err(|e| parse_err(format!("record {}: {e}", line + 1)))
            };
            let (x, a, y) = (field(0)?, field(1)?, field(2)?);
            if x == 0 || x > d as u64 {
                return Err(Error::CategoryOutOfRange { category: x, d });
            }
            if a > 1 || y > 1 {
                return Err(parse_err(format!("record {}: a and y must be 0 or 1", line + 1)));
            }
            records.push(Record::from_one_based(x as u32, a as u8, y as u8));
        }
        Self::new(d, records)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "x,a,y")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.x + 1, r.a as u8, r.y as u8)?;
        }
        Ok(())
    }

    /// Reads a dataset file. Without `d`, the largest category present is used.
    pub fn read(path: impl AsRef<Path>, d: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let d = match d {
            Some(d) => d,
            None => infer_d(&text).map_err(|reason| Error::Parse { path: path.display().to_string(), reason })?,
        };
        Self::from_csv_reader(text.as_bytes(), d).map_err(|e| match e {
            Error::Parse { reason, .. } => Error::Parse { path: path.display().to_string(), reason },
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(self.n() * 8);
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

fn infer_d(text: &str) -> std::result::Result<usize, String> {
    let mut max = 0u64;
    for line in text.lines().skip(1) {
        if let Some(first) = line.split(',').next() {
            if let Ok(x) = first.trim().parse::<u64>() {
                max = max.max(x);
            }
        }
    }
    if max == 0 {
        return Err("no records with a positive category".into());
    }
    usize::try_from(max).map_err(|e| e.to_string())
}
