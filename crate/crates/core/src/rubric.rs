//! The five-component creativity rubric, quality bands, consensus scoring,
//! class binning schemes and inter-rater agreement.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COMPONENT_MAX: f64 = 20.0;
pub const TOTAL_MAX: f64 = 100.0;

/// The judged dimensions, in the order used by every 5-vector in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Originality,
    Color,
    Texture,
    Composition,
    Content,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::Originality,
        Component::Color,
        Component::Texture,
        Component::Composition,
        Component::Content,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Originality => "originality",
            Component::Color => "color",
            Component::Texture => "texture",
            Component::Composition => "composition",
            Component::Content => "content",
        }
    }
}

/// Five component scores, each in `[0, 20]`.
///
/// Human raters give integers; model outputs are reals. Both use this type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RubricScore {
    pub originality: f64,
    pub color: f64,
    pub texture: f64,
    pub composition: f64,
    pub content: f64,
}

impl RubricScore {
    pub fn new(originality: f64, color: f64, texture: f64, composition: f64, content: f64) -> Result<Self> {
        Self::from_array([originality, color, texture, composition, content])
    }

    pub fn from_array(values: [f64; 5]) -> Result<Self> {
        for (component, value) in Component::ALL.iter().zip(values) {
            check_component(*component, value)?;
        }
        Ok(Self::from_array_unchecked(values))
    }

    pub(crate) fn from_array_unchecked(values: [f64; 5]) -> Self {
        let [originality, color, texture, composition, content] = values;
        RubricScore {
            originality,
            color,
            texture,
            composition,
            content,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.originality,
            self.color,
            self.texture,
            self.composition,
            self.content,
        ]
    }

    pub fn get(&self, component: Component) -> f64 {
        match component {
            Component::Originality => self.originality,
            Component::Color => self.color,
            Component::Texture => self.texture,
            Component::Composition => self.composition,
            Component::Content => self.content,
        }
    }

    /// Re-checks the component ranges. Deserialized values bypass `new`.
    pub fn validate(&self) -> Result<()> {
        Self::from_array(self.to_array()).map(|_| ())
    }

    /// Sum of the five components, in `[0, 100]`.
    pub fn total(&self) -> f64 {
        self.to_array().iter().sum()
    }

    /// True when every component is a whole number of points.
    pub fn is_integral(&self) -> bool {
        self.to_array().iter().all(|v| v.fract() == 0.0)
    }
}

fn check_component(component: Component, value: f64) -> Result<()> {
    if !(0.0..=COMPONENT_MAX).contains(&value) {
        return Err(Error::validation(format!(
            "{} score {value} outside [0, 20]",
            component.name()
        )));
    }
    Ok(())
}

/// Validating form of [`RubricScore::total`].
pub fn total(rubric: &RubricScore) -> Result<f64> {
    rubric.validate()?;
    Ok(rubric.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QualityBand {
    Poor,
    Fair,
    Good,
    Excellent,
}

impl QualityBand {
    /// Inclusive point range printed on the rubric.
    pub fn range(self) -> (u8, u8) {
        match self {
            QualityBand::Poor => (1, 5),
            QualityBand::Fair => (6, 10),
            QualityBand::Good => (11, 15),
            QualityBand::Excellent => (16, 20),
        }
    }
}

impl fmt::Display for QualityBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Band for a single component score. Zero falls into `Poor`; fractional
/// scores belong to the band whose lower bound they have reached.
pub fn band_of(points: f64) -> Result<QualityBand> {
    if !(0.0..=COMPONENT_MAX).contains(&points) {
        return Err(Error::validation(format!("component score {points} outside [0, 20]")));
    }
    Ok(if points >= 16.0 {
        QualityBand::Excellent
    } else if points >= 11.0 {
        QualityBand::Good
    } else if points >= 6.0 {
        QualityBand::Fair
    } else {
        QualityBand::Poor
    })
}

/// One rater's judgement of one painting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub painting_id: String,
    pub rater_id: String,
    pub rubric: RubricScore,
    pub timestamp: DateTime<Utc>,
}

/// Mean of several raters' scores for one painting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    pub total: f64,
    pub components: RubricScore,
    pub raters: usize,
}

pub fn consensus(ratings: &[Rating]) -> Result<Consensus> {
    if ratings.is_empty() {
        return Err(Error::validation("consensus needs at least one rating"));
    }
    let n = ratings.len() as f64;
    let mut sums = [0.0; 5];
    let mut total = 0.0;
    for rating in ratings {
        for (sum, value) in sums.iter_mut().zip(rating.rubric.to_array()) {
            *sum += value;
        }
        total += rating.rubric.total();
    }
    Ok(Consensus {
        total: total / n,
        components: RubricScore::from_array_unchecked(sums.map(|s| s / n)),
        raters: ratings.len(),
    })
}

/// Intraclass correlation ICC(2,1): two-way random effects, absolute
/// agreement, single measure. `table` holds one `[rater_a, rater_b]` row per
/// painting.
pub fn icc(table: &[[f64; 2]]) -> Result<f64> {
    let rows: Vec<&[f64]> = table.iter().map(|r| r.as_slice()).collect();
    icc_2_1(&rows)
}

/// ICC(2,1) for `n` targets each rated by the same `k` raters.
pub fn icc_2_1(rows: &[&[f64]]) -> Result<f64> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::validation(format!("ICC needs at least 3 targets, got {n}")));
    }
    let k = rows[0].len();
    if k < 2 || rows.iter().any(|r| r.len() != k) {
        return Err(Error::validation(
            "ICC needs a rectangular table with at least 2 raters",
        ));
    }
    if rows.iter().flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::validation("ICC table contains non-finite values"));
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = rows.iter().flat_map(|r| r.iter()).sum::<f64>() / (nf * kf);

    let ss_total: f64 = rows.iter().flat_map(|r| r.iter()).map(|v| (v - grand).powi(2)).sum();
    if ss_total == 0.0 {
        return Err(Error::Degenerate("ICC undefined: zero total variance".into()));
    }
    let ss_rows: f64 = rows
        .iter()
        .map(|r| (r.iter().sum::<f64>() / kf - grand).powi(2))
        .sum::<f64>()
        * kf;
    let ss_cols: f64 = (0..k)
        .map(|j| (rows.iter().map(|r| r[j]).sum::<f64>() / nf - grand).powi(2))
        .sum::<f64>()
        * nf;
    let ss_err = ss_total - ss_rows - ss_cols;

    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (kf - 1.0);
    let ms_err = ss_err / ((nf - 1.0) * (kf - 1.0));

    Ok((ms_rows - ms_err) / (ms_rows + (kf - 1.0) * ms_err + kf * (ms_cols - ms_err) / nf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeName {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl SchemeName {
    pub const ALL: [SchemeName; 5] = [
        SchemeName::M1,
        SchemeName::M2,
        SchemeName::M3,
        SchemeName::M4,
        SchemeName::M5,
    ];

    pub fn scheme(self) -> BinningScheme {
        BinningScheme::named(self)
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeName::ALL
            .into_iter()
            .find(|n| n.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown binning scheme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    VeryLow,
    Low,
    Medium,
    MediumHigh,
    High,
    VeryHigh,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ClassLabel::VeryLow => "Very Low",
            ClassLabel::Low => "Low",
            ClassLabel::Medium => "Medium",
            ClassLabel::MediumHigh => "Medium High",
            ClassLabel::High => "High",
            ClassLabel::VeryHigh => "Very High",
        };
        f.write_str(s)
    }
}

/// `[lower, upper)`; the last class of a scheme also contains 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreClass {
    pub label: ClassLabel,
    pub lower: f64,
    pub upper: f64,
}

/// An ordered partition of `[0, 100]` into creativity classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub name: SchemeName,
    pub classes: Vec<ScoreClass>,
}

impl BinningScheme {
    pub fn named(name: SchemeName) -> Self {
        use ClassLabel::*;
        let (labels, cuts): (&[ClassLabel], &[f64]) = match name {
            SchemeName::M1 => (&[Low, High], &[58.0]),
            SchemeName::M2 => (&[Low, Medium, High], &[36.0, 58.0]),
            SchemeName::M3 => (&[Low, Medium, MediumHigh, High], &[36.0, 58.0, 72.0]),
            SchemeName::M4 => (&[VeryLow, Low, Medium, MediumHigh, High], &[16.0, 36.0, 58.0, 72.0]),
            SchemeName::M5 => (
                &[VeryLow, Low, Medium, MediumHigh, High, VeryHigh],
                &[16.0, 36.0, 58.0, 72.0, 90.0],
            ),
        };
        let bounds: Vec<f64> = std::iter::once(0.0)
            .chain(cuts.iter().copied())
            .chain(std::iter::once(TOTAL_MAX))
            .collect();
        let classes = labels
            .iter()
            .zip(bounds.windows(2))
            .map(|(&label, w)| ScoreClass {
                label,
                lower: w[0],
                upper: w[1],
            })
            .collect();
        BinningScheme { name, classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.classes.iter().map(|c| c.label).collect()
    }

    /// Index of the class containing `score`.
    pub fn class_index(&self, score: f64) -> Result<usize> {
        if !(0.0..=TOTAL_MAX).contains(&score) {
            return Err(Error::validation(format!("score {score} outside [0, 100]")));
        }
        let last = self.classes.len() - 1;
        Ok(self
            .classes
            .iter()
            .position(|c| score >= c.lower && score < c.upper)
            .unwrap_or(last))
    }

    pub fn bin(&self, score: f64) -> Result<ClassLabel> {
        Ok(self.classes[self.class_index(score)?].label)
    }
}

pub fn bin(score: f64, scheme: &BinningScheme) -> Result<ClassLabel> {
    scheme.bin(score)
}

/// The five schemes M1..M5 in order.
pub fn scheme_catalog() -> Vec<BinningScheme> {
    SchemeName::ALL.iter().map(|&n| BinningScheme::named(n)).collect()
}
