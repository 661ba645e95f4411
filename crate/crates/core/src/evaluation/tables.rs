//! Replays the reference confusion matrices through the metric engine,
//! flagging arithmetic that does not add up.

use serde::{Deserialize, Serialize};

use super::{accuracy_over, ConfusionMatrix, DISCREPANCY_PP};
use crate::error::Result;
use crate::rubric::SchemeName;

const FIXTURE: &str = include_str!("../../data/reference_matrices.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub scheme: SchemeName,
    pub stated_accuracy_percent: f64,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub note: String,
    pub declared_n: u64,
    pub tables: Vec<ReferenceTable>,
}

pub fn reference_set() -> ReferenceSet {
    serde_json::from_str(FIXTURE).expect("embedded reference fixture parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReplay {
    pub scheme: SchemeName,
    pub confusion: ConfusionMatrix,
    pub declared_n: u64,
    pub row_sum: u64,
    pub correct: u64,
    /// `100 × trace / declared_n`.
    pub recomputed_accuracy_percent: f64,
    /// `100 × trace / row_sum`; differs from the above only when the
    /// printed counts do not add up to the declared size.
    pub accuracy_over_row_sum_percent: f64,
    pub stated_accuracy_percent: f64,
    pub discrepancy_pp: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub tables: Vec<TableReplay>,
    pub mean_stated_accuracy_percent: f64,
    pub mean_recomputed_accuracy_percent: f64,
}

pub fn replay_table(t: &ReferenceTable, declared_n: u64) -> Result<TableReplay> {
    let confusion = ConfusionMatrix::new(t.scheme, t.counts.clone())?;
    let row_sum = confusion.total();
    let recomputed = accuracy_over(&confusion, declared_n)?;
    let over_rows = accuracy_over(&confusion, row_sum)?;
    let discrepancy = recomputed - t.stated_accuracy_percent;
    let mut flags = Vec::new();
    if row_sum != declared_n {
        flags.push(format!("counts sum to {row_sum}, not the declared {declared_n}"));
    }
    if discrepancy.abs() >= DISCREPANCY_PP {
        flags.push(format!(
            "recomputed {recomputed:.2}% differs from stated {:.2}% by {:+.2} pp",
            t.stated_accuracy_percent, discrepancy
        ));
    }
    Ok(TableReplay {
        scheme: t.scheme,
        correct: confusion.trace(),
        confusion,
        declared_n,
        row_sum,
        recomputed_accuracy_percent: recomputed,
        accuracy_over_row_sum_percent: over_rows,
        stated_accuracy_percent: t.stated_accuracy_percent,
        discrepancy_pp: discrepancy,
        flags,
    })
}

pub fn replay(set: &ReferenceSet) -> Result<Replay> {
    let tables = set
        .tables
        .iter()
        .map(|t| replay_table(t, set.declared_n))
        .collect::<Result<Vec<_>>>()?;
    let n = tables.len() as f64;
    Ok(Replay {
        mean_stated_accuracy_percent: tables.iter().map(|t| t.stated_accuracy_percent).sum::<f64>() / n,
        mean_recomputed_accuracy_percent: tables.iter().map(|t| t.recomputed_accuracy_percent).sum::<f64>() / n,
        tables,
    })
}

impl Replay {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            out.push_str(&format!("{} ({} classes)\n", t.scheme, t.confusion.counts.len()));
            out.push_str(&super::matrix_markdown(&t.confusion));
            out.push_str(&format!(
                "recomputed accuracy {:.2}% ({}/{}), stated {:.2}%",
                t.recomputed_accuracy_percent, t.correct, t.declared_n, t.stated_accuracy_percent
            ));
            if t.row_sum != t.declared_n {
                out.push_str(&format!(
                    "; over printed counts {:.2}% ({}/{})",
                    t.accuracy_over_row_sum_percent, t.correct, t.row_sum
                ));
            }
            out.push('\n');
            for f in &t.flags {
                out.push_str(&format!("  FLAG: {f}\n"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "mean of stated accuracies {:.2}%; mean of recomputed {:.2}%\n",
            self.mean_stated_accuracy_percent, self.mean_recomputed_accuracy_percent
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_reproduces_recomputed_accuracies() {
        let r = replay(&reference_set()).unwrap();
        let acc: Vec<f64> = r
            .tables
            .iter()
            .map(|t| (t.recomputed_accuracy_percent * 100.0).round() / 100.0)
            .collect();
        assert_eq!(acc, vec![99.17, 90.83, 88.33, 86.67, 85.0]);
        let flagged: Vec<usize> = r.tables.iter().map(|t| t.flags.len()).collect();
        assert_eq!(flagged, vec![0, 1, 0, 1, 1]);
        assert!(r.tables[1].flags[0].contains("91.67"));
        assert!(r.tables[3].flags[0].contains("119"));
        assert!(r.tables[4].flags[0].contains("119"));
        assert!((r.mean_stated_accuracy_percent - 90.17).abs() < 0.01);
        assert!((r.tables[3].accuracy_over_row_sum_percent - 100.0 * 104.0 / 119.0).abs() < 1e-12);
    }
}
