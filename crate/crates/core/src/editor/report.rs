use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub const REPORT_HEADER: &str = "k,t,sds_norm,consist,init,grad_norm";

/// Per-iteration optimization record. With several views per iteration, `t`
/// is the first view's timestep and the other columns are batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub t: usize,
    pub sds_norm: f64,
    pub consist: f64,
    pub init: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossReport {
    pub records: Vec<IterationRecord>,
}

impl LossReport {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with [`REPORT_HEADER`]. Floats use the shortest representation
    /// that parses back to the same value, so equal reports give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(REPORT_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.k, r.t, r.sds_norm, r.consist, r.init, r.grad_norm);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::Format {
                field: "header",
                detail: format!("expected `{REPORT_HEADER}`"),
            });
        }
        let bad = |line: usize, what: &str| Error::Format {
            field: "record",
            detail: format!("line {}: {what}", line + 2),
        };
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad(i, "expected 6 columns"));
            }
            let f = |j: usize| cols[j].parse::<f64>().map_err(|_| bad(i, "bad number"));
            records.push(IterationRecord {
                k: cols[0].parse().map_err(|_| bad(i, "bad k"))?,
                t: cols[1].parse().map_err(|_| bad(i, "bad t"))?,
                sds_norm: f(2)?,
                consist: f(3)?,
                init: f(4)?,
                grad_norm: f(5)?,
            });
        }
        Ok(Self { records })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let r = LossReport {
            records: vec![
                IterationRecord { k: 0, t: 512, sds_norm: 0.1 + 0.2, consist: 0.0, init: 1e-300, grad_norm: 3.0 },
                IterationRecord { k: 1, t: 20, sds_norm: 1.0 / 3.0, consist: 2.5, init: 0.0, grad_norm: 7.25 },
            ],
        };
        let csv = r.to_csv();
        assert!(csv.starts_with("k,t,sds_norm,consist,init,grad_norm\n0,512,"));
        assert_eq!(LossReport::from_csv(&csv).unwrap(), r);
        assert!(LossReport::from_csv("k,t\n").is_err());
        assert!(LossReport::from_csv(&format!("{REPORT_HEADER}\n1,2,3\n")).is_err());
    }
}
