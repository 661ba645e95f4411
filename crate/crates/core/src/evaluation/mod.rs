//! Agreement metrics between predicted and human totals, per-scheme
//! confusion matrices, and JSON / Markdown / scatter-plot reports.

pub mod plot;
pub mod tables;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::preprocess::{self, PreprocessConfig};
use crate::rubric::{self, BinningScheme, SchemeName};
use crate::training::Sample;

/// Reference values that differ from recomputation by this much are flagged.
pub const DISCREPANCY_PP: f64 = 0.5;

fn check_pair(pred: &[f64], actual: &[f64], min: usize) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", actual.len()),
            actual: format!("{} values", pred.len()),
        });
    }
    if pred.len() < min {
        return Err(Error::validation(format!(
            "need at least {min} pairs, got {}",
            pred.len()
        )));
    }
    if let Some(i) = pred.iter().chain(actual).position(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "non-finite value at position {}",
            i % pred.len()
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample Pearson correlation.
pub fn pearson(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual, 2)?;
    let (mp, ma) = (mean(pred), mean(actual));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, a) in pred.iter().zip(actual) {
        let (dp, da) = (p - mp, a - ma);
        sxy += dp * da;
        sxx += dp * dp;
        syy += da * da;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation undefined for a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Fisher-z confidence interval for a correlation `r` over `n` pairs.
pub fn fisher_ci(r: f64, n: usize, alpha: f64) -> Result<(f64, f64)> {
    if n < 4 {
        return Err(Error::validation(format!("confidence interval needs N ≥ 4, got {n}")));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::validation(format!("alpha {alpha} outside (0, 1)")));
    }
    if !(r > -1.0 && r < 1.0) {
        return Err(Error::Degenerate(format!("confidence interval degenerate at r = {r}")));
    }
    let z = r.atanh();
    let crit = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    let half = crit / ((n - 3) as f64).sqrt();
    Ok(((z - half).tanh(), (z + half).tanh()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn pearson_with_ci(pred: &[f64], actual: &[f64], alpha: f64) -> Result<Correlation> {
    check_pair(pred, actual, 4)?;
    let r = pearson(pred, actual)?;
    let (lo, hi) = fisher_ci(r, pred.len(), alpha)?;
    Ok(Correlation { r, lo, hi })
}

/// Coefficient of determination of `pred` against the mean of `actual`.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual, 2)?;
    let ma = mean(actual);
    let ss_tot: f64 = actual.iter().map(|a| (a - ma) * (a - ma)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("R² undefined for constant actual values".into()));
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual, 1)?;
    if let Some(i) = actual.iter().position(|a| *a == 0.0) {
        return Err(Error::validation(format!(
            "MAPE undefined: actual value at index {i} is zero"
        )));
    }
    let sum: f64 = pred.iter().zip(actual).map(|(p, a)| ((p - a) / a).abs()).sum();
    Ok(100.0 * sum / pred.len() as f64)
}

/// Counts with actual classes as rows and predicted classes as columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub scheme: SchemeName,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(scheme: SchemeName, counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = scheme.scheme().len();
        if counts.len() != c || counts.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch {
                expected: format!("{c}×{c} for {scheme}"),
                actual: format!(
                    "{} rows of widths {:?}",
                    counts.len(),
                    counts.iter().map(Vec::len).collect::<Vec<_>>()
                ),
            });
        }
        Ok(ConfusionMatrix { scheme, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        self.counts.iter().enumerate().map(|(i, row)| row[i]).sum()
    }

    pub fn misclassified(&self) -> u64 {
        self.total() - self.trace()
    }
}

pub fn confusion(pred: &[f64], actual: &[f64], scheme: &BinningScheme) -> Result<ConfusionMatrix> {
    check_pair(pred, actual, 0)?;
    let c = scheme.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (p, a) in pred.iter().zip(actual) {
        counts[scheme.class_index(*a)?][scheme.class_index(*p)?] += 1;
    }
    Ok(ConfusionMatrix {
        scheme: scheme.name,
        counts,
    })
}

/// `100 × trace / total`.
pub fn accuracy(matrix: &ConfusionMatrix) -> Result<f64> {
    accuracy_over(matrix, matrix.total())
}

/// Accuracy against an externally declared sample count.
pub fn accuracy_over(matrix: &ConfusionMatrix, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Degenerate("accuracy of an empty confusion matrix".into()));
    }
    Ok(100.0 * matrix.trace() as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub confusion: ConfusionMatrix,
    pub accuracy_percent: f64,
    pub misclassified: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub pearson_r: f64,
    pub ci95: (f64, f64),
    pub r_squared: f64,
    pub mape_percent: f64,
    pub per_scheme: BTreeMap<SchemeName, SchemeResult>,
    pub average_accuracy_percent: f64,
    /// `(human, predicted)` totals.
    pub scatter: Vec<(f64, f64)>,
    /// Item ids in scatter order.
    #[serde(default)]
    pub ids: Vec<String>,
}

impl EvaluationReport {
    /// Builds every metric from predicted and human totals (both in `[0, 100]`).
    pub fn from_scores(pred: &[f64], actual: &[f64]) -> Result<Self> {
        let corr = pearson_with_ci(pred, actual, 0.05)?;
        let mut per_scheme = BTreeMap::new();
        for scheme in rubric::scheme_catalog() {
            let m = confusion(pred, actual, &scheme)?;
            per_scheme.insert(
                scheme.name,
                SchemeResult {
                    accuracy_percent: accuracy(&m)?,
                    misclassified: m.misclassified(),
                    confusion: m,
                },
            );
        }
        let average_accuracy_percent =
            per_scheme.values().map(|s| s.accuracy_percent).sum::<f64>() / per_scheme.len() as f64;
        Ok(EvaluationReport {
            n: pred.len(),
            pearson_r: corr.r,
            ci95: (corr.lo, corr.hi),
            r_squared: r_squared(pred, actual)?,
            mape_percent: mape(pred, actual)?,
            per_scheme,
            average_accuracy_percent,
            scatter: actual.iter().copied().zip(pred.iter().copied()).collect(),
            ids: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Evaluation report\n\n");
        out.push_str(&format!(
            "| metric | value |\n|---|---|\n| N | {} |\n| Pearson r | {:.3} |\n| 95% CI | [{:.3}, {:.3}] |\n| R² | {:.3} |\n| MAPE | {:.2}% |\n| average accuracy | {:.2}% |\n\n",
            self.n, self.pearson_r, self.ci95.0, self.ci95.1, self.r_squared, self.mape_percent, self.average_accuracy_percent
        ));
        for (name, result) in &self.per_scheme {
            out.push_str(&format!("## {name}\n\n"));
            out.push_str(&thresholds_markdown(&name.scheme()));
            out.push('\n');
            out.push_str(&matrix_markdown(&result.confusion));
            out.push_str(&format!(
                "\naccuracy {:.2}% ({} misclassified)\n\n",
                result.accuracy_percent, result.misclassified
            ));
        }
        out
    }
}

pub fn thresholds_markdown(scheme: &BinningScheme) -> String {
    let mut out = String::from("| class | score range |\n|---|---|\n");
    let last = scheme.len() - 1;
    for (i, c) in scheme.classes.iter().enumerate() {
        let upper = if i == last { c.upper } else { c.upper - 1.0 };
        out.push_str(&format!("| {} | {}–{} |\n", c.label, c.lower, upper));
    }
    out
}

pub fn matrix_markdown(m: &ConfusionMatrix) -> String {
    let labels = m.scheme.scheme().labels();
    let mut out = String::from("| actual \\ predicted |");
    for l in &labels {
        out.push_str(&format!(" {l} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(labels.len()));
    out.push('\n');
    for (l, row) in labels.iter().zip(&m.counts) {
        out.push_str(&format!("| {l} |"));
        for v in row {
            out.push_str(&format!(" {v} |"));
        }
        out.push('\n');
    }
    out
}

/// Predicted totals for already-standardized samples (clamped to `[0, 100]`).
pub fn predict_totals(model: &Model, samples: &[Sample], preprocess: &PreprocessConfig) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            let img = if preprocess.augment_test {
                preprocess::augment(&s.image, preprocess, preprocess::item_seed(&s.id, 0))
            } else {
                s.image.clone()
            };
            Ok(model
                .predict_one(&preprocess::to_model_input(&img, preprocess))?
                .clamped_total)
        })
        .collect()
}

/// Scores `samples` with `model` and compares against their target sums.
pub fn evaluate(model: &Model, samples: &[Sample], preprocess: &PreprocessConfig) -> Result<EvaluationReport> {
    let pred = predict_totals(model, samples, preprocess)?;
    let actual: Vec<f64> = samples.iter().map(|s| s.target.iter().sum()).collect();
    let mut report = EvaluationReport::from_scores(&pred, &actual)?;
    report.ids = samples.iter().map(|s| s.id.clone()).collect();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub markdown: PathBuf,
    pub scatter_png: PathBuf,
}

/// Writes `report.json`, `report.md` and `scatter.png` into `dir`.
pub fn write_report(report: &EvaluationReport, dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let files = ReportFiles {
        json: dir.join("report.json"),
        markdown: dir.join("report.md"),
        scatter_png: dir.join("scatter.png"),
    };
    let write =
        |p: &Path, s: String| std::fs::write(p, s).map_err(|e| Error::io(format!("writing {}", p.display()), e));
    write(&files.json, report.to_json()? + "\n")?;
    write(&files.markdown, report.to_markdown())?;
    plot::scatter(&report.scatter).save(&files.scatter_png)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fisher_interval_matches_closed_form() {
        let (lo, hi) = fisher_ci(0.956, 120, 0.05).unwrap();
        assert_abs_diff_eq!(lo, 0.9368, epsilon = 1e-3);
        assert_abs_diff_eq!(hi, 0.9690, epsilon = 1e-3);
        assert_eq!(((lo * 100.0).round(), (hi * 100.0).round()), (94.0, 97.0));
        assert!(fisher_ci(0.5, 3, 0.05).is_err());
        assert!(matches!(fisher_ci(1.0, 10, 0.05), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pearson_edges() {
        let a = [1.0, 2.0, 4.0, 8.0, 3.0];
        assert!(matches!(pearson_with_ci(&a, &a, 0.05), Err(Error::Degenerate(_))));
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(pearson(&neg, &a).unwrap(), -1.0, epsilon = 1e-12);
        assert!(pearson(&[1.0; 5], &a).is_err());
        assert!(pearson_with_ci(&a[..3], &a[..3], 0.05).is_err());
    }

    #[test]
    fn r_squared_and_mape_examples() {
        assert_abs_diff_eq!(
            r_squared(&[50.0, 60.0, 70.0], &[40.0, 60.0, 80.0]).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        assert_eq!(r_squared(&[60.0; 3], &[40.0, 60.0, 80.0]).unwrap(), 0.0);
        assert!(r_squared(&[1.0, 2.0], &[3.0, 3.0]).is_err());
        assert_abs_diff_eq!(mape(&[50.0, 100.0], &[40.0, 80.0]).unwrap(), 25.0, epsilon = 1e-12);
        let err = mape(&[1.0, 1.0], &[1.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("index 1"));
    }

    #[test]
    fn confusion_examples() {
        let m1 = SchemeName::M1.scheme();
        let m = confusion(&[58.0], &[55.0], &m1).unwrap();
        assert_eq!(m.counts, vec![vec![0, 1], vec![0, 0]]);
        let m = ConfusionMatrix::new(SchemeName::M1, vec![vec![79, 1], vec![0, 40]]).unwrap();
        assert_abs_diff_eq!(accuracy(&m).unwrap(), 100.0 * 119.0 / 120.0, epsilon = 1e-12);
        assert!(ConfusionMatrix::new(SchemeName::M2, vec![vec![1, 2], vec![3, 4]]).is_err());
        let empty = ConfusionMatrix::new(SchemeName::M1, vec![vec![0, 0], vec![0, 0]]).unwrap();
        assert!(accuracy(&empty).is_err());
        assert!(confusion(&[101.0], &[50.0], &m1).is_err());
    }

    #[test]
    fn report_round_trips() {
        let actual: Vec<f64> = (0..30).map(|i| 5.0 + i as f64 * 3.0).collect();
        let pred: Vec<f64> = actual
            .iter()
            .enumerate()
            .map(|(i, a)| a + if i % 2 == 0 { 1.5 } else { -1.0 })
            .collect();
        let report = EvaluationReport::from_scores(&pred, &actual).unwrap();
        assert_eq!(EvaluationReport::from_json(&report.to_json().unwrap()).unwrap(), report);
        for s in report.per_scheme.values() {
            assert_eq!(s.confusion.total(), 30);
        }
        assert!(report.to_markdown().contains("| Low |"));
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&report, dir.path()).unwrap();
        assert!(files.scatter_png.exists());
    }
}
