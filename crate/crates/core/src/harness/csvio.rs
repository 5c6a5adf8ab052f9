//! Versioned CSV tables: a `#schema=v1` line, a `#table=NAME` line, then
//! plain CSV with a header row.

use crate::error::{Error, Result};

pub const CSV_SCHEMA: &str = "v1";

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(";")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("table {} has no column {name:?}", self.name)))
    }

    pub fn strings(&self, name: &str) -> Result<Vec<&str>> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c].as_str()).collect())
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[c].parse::<f64>()
                    .map_err(|_| Error::Schema(format!("column {name:?}: {:?} is not a number", r[c])))
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        format!("#schema={CSV_SCHEMA}\n#table={}\n{body}", self.name)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.splitn(3, '\n');
        let schema = lines.next().unwrap_or("").trim_end_matches('\r');
        match schema.strip_prefix("#schema=") {
            Some(CSV_SCHEMA) => {}
            Some(other) => {
                return Err(Error::Schema(format!("csv schema {other:?}, expected {CSV_SCHEMA}")))
            }
            None => return Err(Error::Schema("missing #schema line".into())),
        }
        let name_line = lines.next().unwrap_or("").trim_end_matches('\r');
        let name = name_line
            .strip_prefix("#table=")
            .filter(|n| !n.is_empty())
            .ok_or_else(|| Error::Schema("missing #table line".into()))?;
        let body = lines.next().unwrap_or("");
        let mut r = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.is_empty() || header.iter().any(String::is_empty) {
            return Err(Error::Schema("empty header".into()));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Table {
            name: name.to_string(),
            header,
            rows,
        })
    }
}
