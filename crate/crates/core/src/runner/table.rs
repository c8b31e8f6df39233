// SPDX-License-Identifier: MIT OR Apache-2.0

//! String tables written as CSV with pinned number formatting.

use std::collections::BTreeSet;

use crate::{Error, Result};

/// Shortest decimal that round-trips to the same `f64`. Exponent form only
/// outside `[1e-5, 1e16)` so small values stay short.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Missing values are empty fields.
pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name}")))
    }

    pub fn get(&self, row: usize, name: &str) -> Result<&str> {
        Ok(&self.rows[row][self.column(name)?])
    }

    pub fn get_f64(&self, row: usize, name: &str) -> Result<Option<f64>> {
        let s = self.get(row, name)?;
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::Schema(format!("column {name} row {row}: {s:?} is not a number")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    /// Fails on a repeated key tuple or an empty / non-numeric required field.
    pub fn audit(&self, keys: &[&str], required_numeric: &[&str]) -> Result<()> {
        let key_idx = keys.iter().map(|k| self.column(k)).collect::<Result<Vec<_>>>()?;
        let mut seen = BTreeSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            let key: Vec<&str> = key_idx.iter().map(|&j| r[j].as_str()).collect();
            if !seen.insert(key.clone()) {
                return Err(Error::Audit(format!("duplicate row for key {keys:?} = {key:?}")));
            }
            for name in required_numeric {
                match self.get_f64(i, name)? {
                    Some(v) if v.is_finite() => {}
                    _ => return Err(Error::Audit(format!("row {i} has no finite value in {name}"))),
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formatting() {
        assert_eq!(num(1.0), "1");
        assert_eq!(num(0.05), "0.05");
        assert_eq!(num(-0.0), "-0");
        assert_eq!(num(1e-7), "1e-7");
        assert_eq!(num(0.1 + 0.2), "0.30000000000000004");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn audit_catches_duplicates_and_gaps() {
        let mut t = Table::new(&["k", "v"]);
        t.push(vec!["a".into(), "1".into()]);
        t.push(vec!["b".into(), "".into()]);
        assert!(t.audit(&["k"], &[]).is_ok());
        assert!(matches!(t.audit(&["k"], &["v"]), Err(Error::Audit(_))));
        t.rows[1][1] = "2".into();
        t.push(vec!["a".into(), "3".into()]);
        assert!(matches!(t.audit(&["k"], &["v"]), Err(Error::Audit(_))));
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(&["name", "x"]);
        t.push(vec!["has,comma".into(), num(2.5)]);
        let b = t.to_bytes().unwrap();
        assert_eq!(Table::from_bytes(&b).unwrap(), t);
        assert!(b.ends_with(b"\n") && !b.contains(&b'\r'));
    }

    proptest! {
        #[test]
        fn num_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
