//! Inter-rater agreement over the latest ratings.

use std::collections::{BTreeMap, BTreeSet};

use paintscore::rubric::{self, Rating};
use serde::{Deserialize, Serialize};

use crate::ledger::RatingKey;

/// Fewest shared paintings for which an ICC is reported.
pub const MIN_COMMON: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub painting_id: String,
    pub total_a: f64,
    pub total_b: f64,
    pub abs_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSnapshot {
    /// The two raters compared (the two with the most ratings).
    pub raters: Vec<String>,
    pub n_common: usize,
    /// ICC(2,1) of totals; absent below `MIN_COMMON` shared paintings or when
    /// the totals have no variance.
    pub icc: Option<f64>,
    /// Shared paintings, largest total disagreement first.
    pub disagreements: Vec<Disagreement>,
}

impl AgreementSnapshot {
    pub fn empty() -> Self {
        AgreementSnapshot {
            raters: Vec::new(),
            n_common: 0,
            icc: None,
            disagreements: Vec::new(),
        }
    }
}

pub fn snapshot(latest: &BTreeMap<RatingKey, Rating>) -> AgreementSnapshot {
    let mut per_rater: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for ((painting, rater), r) in latest {
        per_rater
            .entry(rater.as_str())
            .or_default()
            .insert(painting.as_str(), r.rubric.total());
    }
    let mut raters: Vec<(&str, usize)> = per_rater.iter().map(|(r, m)| (*r, m.len())).collect();
    raters.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    if raters.len() < 2 {
        return AgreementSnapshot {
            raters: raters.iter().map(|r| r.0.to_string()).collect(),
            ..AgreementSnapshot::empty()
        };
    }
    let (a, b) = (raters[0].0, raters[1].0);
    let (ma, mb) = (&per_rater[a], &per_rater[b]);
    let common: BTreeSet<&str> = ma.keys().filter(|k| mb.contains_key(*k)).copied().collect();
    let table: Vec<[f64; 2]> = common.iter().map(|p| [ma[p], mb[p]]).collect();
    let icc = if common.len() >= MIN_COMMON {
        rubric::icc(&table).ok()
    } else {
        None
    };
    let mut disagreements: Vec<Disagreement> = common
        .iter()
        .zip(&table)
        .map(|(p, [ta, tb])| Disagreement {
            painting_id: p.to_string(),
            total_a: *ta,
            total_b: *tb,
            abs_difference: (ta - tb).abs(),
        })
        .collect();
    disagreements.sort_by(|x, y| {
        y.abs_difference
            .total_cmp(&x.abs_difference)
            .then_with(|| x.painting_id.cmp(&y.painting_id))
    });
    AgreementSnapshot {
        raters: vec![a.to_string(), b.to_string()],
        n_common: common.len(),
        icc,
        disagreements,
    }
}
