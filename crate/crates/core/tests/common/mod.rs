//! Naive re-derivations of every metric, shared by the oracle suites.
#![allow(dead_code)]

use paintscore::rubric::SchemeName;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-9;

pub fn series(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(5..80);
    let actual: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..100.0)).collect();
    let pred = actual
        .iter()
        .map(|a| (a + rng.gen_range(-25.0..25.0)).clamp(0.0, 100.0))
        .collect();
    (pred, actual)
}

pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

pub fn oracle_r_squared(pred: &[f64], actual: &[f64]) -> f64 {
    let n = actual.len() as f64;
    let sum: f64 = actual.iter().sum();
    let sum_sq: f64 = actual.iter().map(|a| a * a).sum();
    let ss_tot = sum_sq - sum * sum / n;
    let mut ss_res = 0.0;
    for i in 0..pred.len() {
        ss_res += (pred[i] - actual[i]).powi(2);
    }
    1.0 - ss_res / ss_tot
}

pub fn oracle_mape(pred: &[f64], actual: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..pred.len() {
        acc += (pred[i] - actual[i]).abs() / actual[i].abs();
    }
    acc / pred.len() as f64 * 100.0
}

/// Two-way ANOVA with the residual computed cell by cell.
pub fn oracle_icc(table: &[Vec<f64>]) -> f64 {
    let n = table.len();
    let k = table[0].len();
    let grand = table.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row_mean: Vec<f64> = table.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_mean: Vec<f64> = (0..k)
        .map(|j| table.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut ss_rows = 0.0;
    for m in &row_mean {
        ss_rows += k as f64 * (m - grand).powi(2);
    }
    let mut ss_cols = 0.0;
    for m in &col_mean {
        ss_cols += n as f64 * (m - grand).powi(2);
    }
    let mut ss_err = 0.0;
    for i in 0..n {
        for j in 0..k {
            ss_err += (table[i][j] - row_mean[i] - col_mean[j] + grand).powi(2);
        }
    }
    let msr = ss_rows / (n - 1) as f64;
    let msc = ss_cols / (k - 1) as f64;
    let mse = ss_err / ((n - 1) * (k - 1)) as f64;
    (msr - mse) / (msr + (k - 1) as f64 * mse + k as f64 * (msc - mse) / n as f64)
}

pub fn oracle_class(score: f64, cuts: &[f64]) -> usize {
    let mut class = 0;
    for c in cuts {
        if score >= *c {
            class += 1;
        }
    }
    class
}

pub fn cuts(scheme: SchemeName) -> &'static [f64] {
    match scheme {
        SchemeName::M1 => &[58.0],
        SchemeName::M2 => &[36.0, 58.0],
        SchemeName::M3 => &[36.0, 58.0, 72.0],
        SchemeName::M4 => &[16.0, 36.0, 58.0, 72.0],
        SchemeName::M5 => &[16.0, 36.0, 58.0, 72.0, 90.0],
    }
}
