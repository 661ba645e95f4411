//! Painting manifests: ingestion from CSV/JSON, validation against the
//! image files, the every-k-th train/test split and class summaries.

pub mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordIssue, Result};
use crate::preprocess::{self, PreprocessConfig};
use crate::rubric::{self, Rating, RubricScore, SchemeName};
use crate::training::Sample;

pub const CSV_HEADER: [&str; 10] = [
    "id",
    "image_path",
    "source",
    "originality",
    "color",
    "texture",
    "composition",
    "content",
    "rater_id",
    "timestamp",
];

/// Minimum width and height for paintings by artists.
pub const MIN_ARTIST_SIDE: u32 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Child,
    Artist,
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "child" => Ok(Source::Child),
            "artist" => Ok(Source::Artist),
            other => Err(Error::validation(format!("unknown source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintingRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub source: Source,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub ratings: Vec<Rating>,
    #[serde(default)]
    pub consensus_total: Option<f64>,
    #[serde(default)]
    pub consensus_components: Option<RubricScore>,
    #[serde(default)]
    pub split: Split,
}

impl PaintingRecord {
    /// Recomputes the consensus fields from `ratings`.
    pub fn refresh_consensus(&mut self) {
        match rubric::consensus(&self.ratings) {
            Ok(c) => {
                self.consensus_total = Some(c.total);
                self.consensus_components = Some(c.components);
            }
            Err(_) => {
                self.consensus_total = None;
                self.consensus_components = None;
            }
        }
    }

    /// Five regression targets: consensus components, or total/5 each when
    /// only a total is known.
    pub fn targets(&self) -> Option<[f64; 5]> {
        match (self.consensus_components, self.consensus_total) {
            (Some(c), _) => Some(c.to_array()),
            (None, Some(t)) => Some([t / 5.0; 5]),
            _ => None,
        }
    }
}

pub const ORDERING_NOTE: &str = "child records first, then artist records, each in original file order";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub provenance: String,
    #[serde(default = "default_ordering_note")]
    pub ordering_note: String,
    /// Resolution floor applied to artist records when validating.
    #[serde(default = "default_min_side")]
    pub min_artist_side: u32,
    pub records: Vec<PaintingRecord>,
}

fn default_ordering_note() -> String {
    ORDERING_NOTE.to_string()
}

fn default_min_side() -> u32 {
    MIN_ARTIST_SIDE
}

impl DatasetManifest {
    pub fn new(provenance: impl Into<String>, records: Vec<PaintingRecord>) -> Self {
        let mut m = DatasetManifest {
            provenance: provenance.into(),
            ordering_note: default_ordering_note(),
            min_artist_side: MIN_ARTIST_SIDE,
            records,
        };
        m.normalize_order();
        m
    }

    /// Stable child-first ordering.
    pub fn normalize_order(&mut self) {
        self.records.sort_by_key(|r| r.source);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PaintingRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn ids(&self, split: Split) -> Vec<String> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.id.clone())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Flattens to one CSV row per rating (or one bare row if unrated).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            let path = r.image_path.to_string_lossy().into_owned();
            let source = match r.source {
                Source::Child => "child",
                Source::Artist => "artist",
            };
            if r.ratings.is_empty() {
                w.write_record([r.id.as_str(), &path, source, "", "", "", "", "", "", ""])?;
            }
            for rating in &r.ratings {
                let mut row = vec![r.id.clone(), path.clone(), source.to_string()];
                row.extend(rating.rubric.to_array().iter().map(|v| v.to_string()));
                row.push(rating.rater_id.clone());
                row.push(rating.timestamp.to_rfc3339());
                w.write_record(&row)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::io("flushing csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// One rating row as it appears in CSV or JSON-array manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub id: String,
    pub image_path: String,
    pub source: String,
    #[serde(default)]
    pub originality: Option<f64>,
    #[serde(default)]
    pub color: Option<f64>,
    #[serde(default)]
    pub texture: Option<f64>,
    #[serde(default)]
    pub composition: Option<f64>,
    #[serde(default)]
    pub content: Option<f64>,
    #[serde(default)]
    pub rater_id: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Directory that relative image paths resolve against; defaults to the
    /// manifest's own directory.
    pub images_dir: Option<PathBuf>,
    /// Resolution floor for artist records in CSV/row manifests.
    pub min_artist_side: u32,
    /// Skip opening image files (dimensions stay as recorded or zero).
    pub skip_image_check: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            images_dir: None,
            min_artist_side: MIN_ARTIST_SIDE,
            skip_image_check: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub manifest: DatasetManifest,
    /// Non-fatal findings (e.g. small child paintings).
    pub warnings: Vec<RecordIssue>,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    load_manifest_with(path, &LoadOptions::default()).map(|o| o.manifest)
}

/// Parses and validates a manifest, collecting every per-record problem.
pub fn load_manifest_with(path: &Path, opts: &LoadOptions) -> Result<LoadOutcome> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let base = opts
        .images_dir
        .clone()
        .or_else(|| path.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));

    let mut manifest = if is_csv {
        let rows = parse_csv(&text)?;
        let mut m = rows_to_manifest(rows)?;
        m.min_artist_side = opts.min_artist_side;
        m
    } else {
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.is_array() {
            let rows: Vec<RatingRow> = serde_json::from_value(value)?;
            let mut m = rows_to_manifest(rows)?;
            m.min_artist_side = opts.min_artist_side;
            m
        } else {
            let m: DatasetManifest = serde_json::from_value(value)?;
            check_canonical(&m)?;
            m
        }
    };
    manifest.normalize_order();
    for r in &mut manifest.records {
        r.refresh_consensus();
    }
    let warnings = if opts.skip_image_check {
        Vec::new()
    } else {
        validate_images(&mut manifest, &base)?
    };
    Ok(LoadOutcome { manifest, warnings })
}

fn parse_csv(text: &str) -> Result<Vec<RatingRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::validation(format!(
            "manifest header must be `{}`, got `{}`",
            CSV_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut issues = Vec::new();
    for (i, row) in reader.deserialize::<RatingRow>().enumerate() {
        match row {
            Ok(r) => rows.push(r),
            Err(e) => issues.push(RecordIssue {
                id: format!("row {}", i + 2),
                message: format!("malformed row: {e}"),
            }),
        }
    }
    if !issues.is_empty() {
        return Err(Error::Manifest(issues));
    }
    Ok(rows)
}

fn parse_timestamp(s: Option<&str>) -> std::result::Result<DateTime<Utc>, String> {
    match s.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(DateTime::<Utc>::UNIX_EPOCH),
        Some(s) => DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| format!("bad timestamp {s:?}: {e}")),
    }
}

fn row_rating(row: &RatingRow) -> std::result::Result<Option<Rating>, String> {
    let scores = [row.originality, row.color, row.texture, row.composition, row.content];
    let rater = row.rater_id.as_deref().map(str::trim).filter(|r| !r.is_empty());
    match (
        scores.iter().all(Option::is_some),
        scores.iter().all(Option::is_none),
        rater,
    ) {
        (_, true, None) => Ok(None),
        (true, _, Some(rater)) => {
            let rubric = RubricScore::from_array(scores.map(Option::unwrap)).map_err(|e| e.to_string())?;
            Ok(Some(Rating {
                painting_id: row.id.clone(),
                rater_id: rater.to_string(),
                rubric,
                timestamp: parse_timestamp(row.timestamp.as_deref())?,
            }))
        }
        (true, _, None) => Err("scores given without rater_id".into()),
        _ => Err("rating rows need all five component scores".into()),
    }
}

/// Groups rating rows into records; rows of one painting must agree on
/// image path and source.
pub fn rows_to_manifest(rows: Vec<RatingRow>) -> Result<DatasetManifest> {
    let mut records: Vec<PaintingRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashMap<(String, String, DateTime<Utc>), ()> = HashMap::new();
    let mut issues = Vec::new();

    for row in rows {
        let id = row.id.trim().to_string();
        if id.is_empty() {
            issues.push(RecordIssue {
                id: "<empty>".into(),
                message: "row without id".into(),
            });
            continue;
        }
        let source = match row.source.parse::<Source>() {
            Ok(s) => s,
            Err(e) => {
                issues.push(RecordIssue {
                    id,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let rating = match row_rating(&row) {
            Ok(r) => r,
            Err(message) => {
                issues.push(RecordIssue { id, message });
                continue;
            }
        };
        let image_path = PathBuf::from(row.image_path.trim());
        let slot = match index.get(&id) {
            Some(&i) => {
                let existing = &records[i];
                if existing.image_path != image_path || existing.source != source {
                    issues.push(RecordIssue {
                        id: id.clone(),
                        message: "duplicate id with a different image_path or source".into(),
                    });
                    continue;
                }
                if rating.is_none() {
                    issues.push(RecordIssue {
                        id: id.clone(),
                        message: "duplicate id".into(),
                    });
                    continue;
                }
                i
            }
            None => {
                index.insert(id.clone(), records.len());
                records.push(PaintingRecord {
                    id: id.clone(),
                    image_path,
                    source,
                    width: 0,
                    height: 0,
                    ratings: Vec::new(),
                    consensus_total: None,
                    consensus_components: None,
                    split: Split::Unassigned,
                });
                records.len() - 1
            }
        };
        if let Some(rating) = rating {
            let key = (id.clone(), rating.rater_id.clone(), rating.timestamp);
            if seen.insert(key, ()).is_some() {
                issues.push(RecordIssue {
                    id: id.clone(),
                    message: format!(
                        "duplicate id: rater {} listed twice with the same timestamp",
                        rating.rater_id
                    ),
                });
                continue;
            }
            records[slot].ratings.push(rating);
        }
    }
    if !issues.is_empty() {
        return Err(Error::Manifest(issues));
    }
    for r in &mut records {
        r.ratings = latest_per_rater(std::mem::take(&mut r.ratings));
    }
    Ok(DatasetManifest::new("", records))
}

/// Keeps the newest rating of each rater, ordered by rater id.
pub fn latest_per_rater(ratings: Vec<Rating>) -> Vec<Rating> {
    let mut latest: BTreeMap<String, Rating> = BTreeMap::new();
    for r in ratings {
        match latest.get(&r.rater_id) {
            Some(old) if old.timestamp > r.timestamp => {}
            _ => {
                latest.insert(r.rater_id.clone(), r);
            }
        }
    }
    latest.into_values().collect()
}

fn check_canonical(m: &DatasetManifest) -> Result<()> {
    let mut seen = HashMap::new();
    let mut issues = Vec::new();
    for r in &m.records {
        if seen.insert(r.id.as_str(), ()).is_some() {
            issues.push(RecordIssue {
                id: r.id.clone(),
                message: "duplicate id".into(),
            });
        }
        for rating in &r.ratings {
            if let Err(e) = rating.rubric.validate() {
                issues.push(RecordIssue {
                    id: r.id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Manifest(issues))
    }
}

pub fn resolve_image(base: &Path, image_path: &Path) -> PathBuf {
    if image_path.is_absolute() {
        image_path.to_path_buf()
    } else {
        base.join(image_path)
    }
}

/// Opens each image header, fills in dimensions and applies the resolution
/// rule. Errors for every bad record are reported together.
pub fn validate_images(manifest: &mut DatasetManifest, base: &Path) -> Result<Vec<RecordIssue>> {
    let min_side = manifest.min_artist_side;
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    for r in &mut manifest.records {
        let path = resolve_image(base, &r.image_path);
        match image_header(&path) {
            Ok((w, h)) => {
                r.width = w;
                r.height = h;
                if w < min_side || h < min_side {
                    let issue = RecordIssue {
                        id: r.id.clone(),
                        message: format!("{w}×{h} below the {min_side}×{min_side} minimum"),
                    };
                    match r.source {
                        Source::Artist => issues.push(issue),
                        Source::Child => {
                            log::warn!("[{}] {}", issue.id, issue.message);
                            warnings.push(issue);
                        }
                    }
                }
            }
            Err(message) => issues.push(RecordIssue {
                id: r.id.clone(),
                message,
            }),
        }
    }
    if issues.is_empty() {
        Ok(warnings)
    } else {
        Err(Error::Manifest(issues))
    }
}

fn image_header(path: &Path) -> std::result::Result<(u32, u32), String> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| format!("image {} unreadable: {e}", path.display()))?
        .with_guessed_format()
        .map_err(|e| format!("image {} unreadable: {e}", path.display()))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Jpeg) => {}
        other => return Err(format!("image {} is not PNG or JPEG ({other:?})", path.display())),
    }
    reader
        .into_dimensions()
        .map_err(|e| format!("image {} does not decode: {e}", path.display()))
}

/// Loads and standardizes the images of `split` (all records when `None`)
/// as training samples. Every selected record needs ground truth.
pub fn load_samples(
    manifest: &DatasetManifest,
    base: &Path,
    preprocess: &PreprocessConfig,
    split: Option<Split>,
) -> Result<Vec<Sample>> {
    let selected: Vec<&PaintingRecord> = manifest
        .records
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    let missing: Vec<RecordIssue> = selected
        .iter()
        .filter(|r| r.targets().is_none())
        .map(|r| RecordIssue {
            id: r.id.clone(),
            message: "missing ground truth (no ratings)".into(),
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::Manifest(missing));
    }
    selected
        .into_iter()
        .map(|r| {
            let img = preprocess::load_rgb(&resolve_image(base, &r.image_path))?;
            Ok(Sample {
                id: r.id.clone(),
                image: preprocess::standardize(&img, preprocess)?,
                target: r.targets().expect("checked above"),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub train_by_source: BTreeMap<Source, usize>,
    pub test_by_source: BTreeMap<Source, usize>,
    pub warnings: Vec<String>,
}

/// Assigns position `i` (0-based, manifest order) to test when
/// `(i + 1) % k == 0`, everything else to train.
pub fn split_every_kth(manifest: &mut DatasetManifest, k: usize) -> Result<SplitResult> {
    if k < 2 {
        return Err(Error::validation(format!(
            "every-k split needs k ≥ 2 (k = {k} would put everything in test)"
        )));
    }
    if manifest.is_empty() {
        return Err(Error::validation("cannot split an empty manifest"));
    }
    let mut result = SplitResult {
        train: Vec::new(),
        test: Vec::new(),
        train_by_source: BTreeMap::new(),
        test_by_source: BTreeMap::new(),
        warnings: Vec::new(),
    };
    if k > manifest.len() {
        let msg = format!("k = {k} exceeds {} records; test set is empty", manifest.len());
        log::warn!("{msg}");
        result.warnings.push(msg);
    }
    for (i, r) in manifest.records.iter_mut().enumerate() {
        if (i + 1) % k == 0 {
            r.split = Split::Test;
            result.test.push(r.id.clone());
            *result.test_by_source.entry(r.source).or_default() += 1;
        } else {
            r.split = Split::Train;
            result.train.push(r.id.clone());
            *result.train_by_source.entry(r.source).or_default() += 1;
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeCounts {
    pub scheme: SchemeName,
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub records: usize,
    pub scored: usize,
    pub by_source: BTreeMap<Source, usize>,
    pub by_split: BTreeMap<Split, usize>,
    pub by_scheme: Vec<SchemeCounts>,
}

/// Class counts of `scores` under every scheme.
pub fn scheme_counts(scores: &[f64]) -> Result<Vec<SchemeCounts>> {
    rubric::scheme_catalog()
        .into_iter()
        .map(|scheme| {
            let mut counts = vec![0; scheme.len()];
            for &s in scores {
                counts[scheme.class_index(s)?] += 1;
            }
            Ok(SchemeCounts {
                scheme: scheme.name,
                labels: scheme.labels().iter().map(|l| l.to_string()).collect(),
                counts,
            })
        })
        .collect()
}

pub fn summarize(manifest: &DatasetManifest) -> Result<Summary> {
    let mut by_source = BTreeMap::new();
    let mut by_split = BTreeMap::new();
    for r in &manifest.records {
        *by_source.entry(r.source).or_default() += 1;
        *by_split.entry(r.split).or_default() += 1;
    }
    let scores: Vec<f64> = manifest.records.iter().filter_map(|r| r.consensus_total).collect();
    Ok(Summary {
        records: manifest.len(),
        scored: scores.len(),
        by_source,
        by_split,
        by_scheme: scheme_counts(&scores)?,
    })
}

impl Summary {
    pub fn to_table(&self) -> String {
        let mut out = format!("records: {} (scored {})\n", self.records, self.scored);
        for (s, n) in &self.by_source {
            out.push_str(&format!("  source {s:?}: {n}\n"));
        }
        for (s, n) in &self.by_split {
            out.push_str(&format!("  split {s:?}: {n}\n"));
        }
        for sc in &self.by_scheme {
            let cells: Vec<String> = sc
                .labels
                .iter()
                .zip(&sc.counts)
                .map(|(l, n)| format!("{l}={n}"))
                .collect();
            out.push_str(&format!("  {}: {}\n", sc.scheme, cells.join(", ")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn record(id: &str, source: Source) -> PaintingRecord {
        PaintingRecord {
            id: id.into(),
            image_path: format!("{id}.png").into(),
            source,
            width: 0,
            height: 0,
            ratings: Vec::new(),
            consensus_total: None,
            consensus_components: None,
            split: Split::Unassigned,
        }
    }

    fn write_png(dir: &Path, name: &str, w: u32, h: u32) {
        RgbImage::from_pixel(w, h, Rgb([10, 20, 30]))
            .save(dir.join(name))
            .unwrap();
    }

    #[test]
    fn split_counts() {
        let mut m = DatasetManifest::new("", (0..600).map(|i| record(&format!("p{i}"), Source::Child)).collect());
        let s = split_every_kth(&mut m, 5).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (480, 120));

        let mut recs: Vec<_> = (0..200).map(|i| record(&format!("a{i}"), Source::Artist)).collect();
        recs.extend((0..400).map(|i| record(&format!("c{i}"), Source::Child)));
        let mut m = DatasetManifest::new("", recs);
        assert_eq!(m.records[0].source, Source::Child);
        let s = split_every_kth(&mut m, 5).unwrap();
        assert_eq!(s.train_by_source[&Source::Child], 320);
        assert_eq!(s.train_by_source[&Source::Artist], 160);

        let mut m = DatasetManifest::new("", (0..10).map(|i| record(&format!("p{i}"), Source::Child)).collect());
        let s = split_every_kth(&mut m, 5).unwrap();
        assert_eq!(s.test, vec!["p4".to_string(), "p9".to_string()]);
        assert_eq!(m.records[4].split, Split::Test);

        let mut m = DatasetManifest::new("", (0..3).map(|i| record(&format!("p{i}"), Source::Child)).collect());
        let s = split_every_kth(&mut m, 5).unwrap();
        assert!(s.test.is_empty());
        assert_eq!(s.warnings.len(), 1);
        assert!(split_every_kth(&mut m, 1).is_err());
    }

    #[test]
    fn csv_load_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "a.png", 640, 600);
        write_png(dir.path(), "b.png", 300, 300);
        write_png(dir.path(), "c.png", 700, 700);
        let csv = "id,image_path,source,originality,color,texture,composition,content,rater_id,timestamp\n\
                   c1,b.png,child,10,10,10,10,10,r1,2024-01-01T00:00:00Z\n\
                   a1,a.png,artist,16,14,12,10,8,r1,2024-01-01T00:00:00Z\n\
                   a2,c.png,artist,,,,,,,\n";
        let path = dir.path().join("m.csv");
        std::fs::write(&path, csv).unwrap();
        let out = load_manifest_with(&path, &LoadOptions::default()).unwrap();
        assert_eq!(out.manifest.len(), 3);
        assert_eq!(out.warnings.len(), 1, "small child painting warns");
        let a1 = out.manifest.get("a1").unwrap();
        assert_eq!((a1.width, a1.height), (640, 600));
        assert_eq!(a1.consensus_total, Some(60.0));
        assert_eq!(out.manifest.get("a2").unwrap().consensus_total, None);
    }

    #[test]
    fn duplicate_and_resolution_errors_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "small.png", 500, 700);
        write_png(dir.path(), "ok.png", 600, 600);
        let csv = "id,image_path,source,originality,color,texture,composition,content,rater_id,timestamp\n\
                   x,ok.png,artist,1,1,1,1,1,r1,2024-01-01T00:00:00Z\n\
                   x,small.png,artist,1,1,1,1,1,r2,2024-01-01T00:00:00Z\n";
        let path = dir.path().join("m.csv");
        std::fs::write(&path, csv).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(&err, Error::Manifest(v) if v[0].id == "x" && v[0].message.contains("duplicate id")));

        let csv = "id,image_path,source,originality,color,texture,composition,content,rater_id,timestamp\n\
                   s,small.png,artist,1,1,1,1,1,r1,\n\
                   m,missing.png,child,1,1,1,1,1,r1,\n";
        std::fs::write(&path, csv).unwrap();
        match load_manifest(&path).unwrap_err() {
            Error::Manifest(issues) => {
                let ids: Vec<&str> = issues.iter().map(|i| i.id.as_str()).collect();
                assert_eq!(ids, vec!["m", "s"]);
                assert!(issues[1].message.contains("500×700"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bad_rows() {
        let bad_header = "id,path\nx,y\n";
        assert!(parse_csv(bad_header).is_err());
        let rows = vec![RatingRow {
            id: "x".into(),
            image_path: "x.png".into(),
            source: "child".into(),
            originality: Some(21.0),
            color: Some(1.0),
            texture: Some(1.0),
            composition: Some(1.0),
            content: Some(1.0),
            rater_id: Some("r".into()),
            timestamp: None,
        }];
        assert!(rows_to_manifest(rows).is_err());
    }

    #[test]
    fn resubmission_latest_wins() {
        let mk = |ts: &str, v: f64| RatingRow {
            id: "x".into(),
            image_path: "x.png".into(),
            source: "child".into(),
            originality: Some(v),
            color: Some(v),
            texture: Some(v),
            composition: Some(v),
            content: Some(v),
            rater_id: Some("r".into()),
            timestamp: Some(ts.into()),
        };
        let m = rows_to_manifest(vec![mk("2024-01-02T00:00:00Z", 4.0), mk("2024-01-01T00:00:00Z", 2.0)]).unwrap();
        assert_eq!(m.records[0].ratings.len(), 1);
        assert_eq!(m.records[0].ratings[0].rubric.color, 4.0);
    }

    #[test]
    fn summaries() {
        let empty = summarize(&DatasetManifest::new("", vec![])).unwrap();
        assert_eq!(empty.records, 0);
        assert!(empty.by_scheme.iter().all(|s| s.counts.iter().all(|&c| c == 0)));

        // 600 totals placed inside the reference M5 class counts
        let mut scores = Vec::new();
        for (n, v) in [(6, 10.0), (218, 25.0), (158, 45.0), (28, 65.0), (185, 80.0), (5, 95.0)] {
            scores.extend(std::iter::repeat_n(v, n));
        }
        let counts = scheme_counts(&scores).unwrap();
        let c: Vec<Vec<usize>> = counts.iter().map(|s| s.counts.clone()).collect();
        assert_eq!(c[0], vec![382, 218]);
        assert_eq!(c[1], vec![224, 158, 218]);
        assert_eq!(c[2], vec![224, 158, 28, 190]);
        assert_eq!(c[3], vec![6, 218, 158, 28, 190]);
        assert_eq!(c[4], vec![6, 218, 158, 28, 185, 5]);
        for s in &counts {
            assert_eq!(s.counts.iter().sum::<usize>(), 600);
        }
    }

    #[test]
    fn canonical_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "a.png", 600, 600);
        let mut r = record("a", Source::Artist);
        r.ratings.push(Rating {
            painting_id: "a".into(),
            rater_id: "r1".into(),
            rubric: RubricScore::from_array([3.0; 5]).unwrap(),
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
        });
        let m = DatasetManifest::new("test", vec![r]);
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.records[0].consensus_total, Some(15.0));
        assert_eq!(loaded.records[0].width, 600);

        // JSON array of rating rows is accepted too
        let rows_path = dir.path().join("rows.json");
        let csv_text = m.to_csv().unwrap();
        let rows: Vec<RatingRow> = csv::Reader::from_reader(csv_text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        std::fs::write(&rows_path, serde_json::to_string(&rows).unwrap()).unwrap();
        assert_eq!(
            load_manifest(&rows_path).unwrap().records[0].ratings,
            loaded.records[0].ratings
        );
    }
}
