use std::fmt::Write as _;

use super::stats::{mean, separation_auroc, std_dev};
use crate::error::{usage_err, Result};

/// Prefix of the first field of aggregate rows.
pub const AGGREGATE: &str = "#aggregate";

/// A CSV table: a header, one row per clip, then aggregate rows whose id
/// is `#aggregate:<name>`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
    pub aggregates: Vec<(String, Vec<f64>)>,
}

impl MetricReport {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            aggregates: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(usage_err!(
                "row has {} values for {} columns",
                values.len(),
                self.columns.len()
            ));
        }
        self.rows.push((id.into(), values));
        Ok(())
    }

    fn column(&self, j: usize, keep: impl Fn(usize) -> bool) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, (_, v))| v[j])
            .collect()
    }

    /// Appends `mean` and `std` rows over all clip rows.
    pub fn add_summary(&mut self) {
        let n = self.columns.len();
        let means = (0..n).map(|j| mean(&self.column(j, |_| true))).collect();
        let stds = (0..n).map(|j| std_dev(&self.column(j, |_| true))).collect();
        self.aggregates.push(("mean".into(), means));
        self.aggregates.push(("std".into(), stds));
    }

    /// Appends an `auroc` row: per column, how well higher values pick
    /// out the rows flagged incoherent.
    pub fn add_auroc(&mut self, incoherent: &[bool]) -> Result<()> {
        if incoherent.len() != self.rows.len() {
            return Err(usage_err!("{} labels for {} rows", incoherent.len(), self.rows.len()));
        }
        let mut out = Vec::with_capacity(self.columns.len());
        for j in 0..self.columns.len() {
            let coh = self.column(j, |i| !incoherent[i]);
            let inc = self.column(j, |i| incoherent[i]);
            out.push(separation_auroc(&coh, &inc)?);
        }
        self.aggregates.push(("auroc".into(), out));
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        let line = |s: &mut String, id: &str, values: &[f64]| {
            s.push_str(id);
            for v in values {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        };
        for (id, v) in &self.rows {
            line(&mut s, id, v);
        }
        for (name, v) in &self.aggregates {
            line(&mut s, &format!("{AGGREGATE}:{name}"), v);
        }
        s
    }
}
