//! HTTP backend for the rating workbench.
//!
//! Serves the painting manifest, records rubric ratings in an append-only
//! ledger, keeps a live inter-rater agreement snapshot and compares human
//! consensus with model predictions. There is no authentication: a rater is
//! whatever `rater_id` the client declares.

pub mod agreement;
pub mod error;
pub mod ledger;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use paintscore::dataset::{self, DatasetManifest, LoadOptions, PaintingRecord, Source, Split};
use paintscore::evaluation::tables::{self, Replay};
use paintscore::evaluation::EvaluationReport;
use paintscore::model::checkpoint::{self, Checkpoint};
use paintscore::model::ScoreVector;
use paintscore::preprocess;
use paintscore::rubric::{self, Component, Consensus, Rating, RubricScore};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

pub use agreement::AgreementSnapshot;
pub use error::ServiceError;
pub use ledger::RatingLedger;

type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub manifest: PathBuf,
    /// Base for relative image paths; defaults to the manifest's directory.
    pub images_dir: Option<PathBuf>,
    pub ledger: PathBuf,
    /// Where `compare?checkpoint=NAME` looks for `NAME`.
    pub checkpoints_dir: PathBuf,
    /// Evaluation report JSON served by `/report`, if any.
    pub report: Option<PathBuf>,
}

/// Read-side state; replaced wholesale after every accepted rating.
#[derive(Debug)]
struct View {
    ledger_length: usize,
    latest: BTreeMap<ledger::RatingKey, Rating>,
    snapshot: AgreementSnapshot,
}

impl View {
    fn of(ledger: &RatingLedger) -> Self {
        View {
            ledger_length: ledger.len(),
            latest: ledger.latest().clone(),
            snapshot: agreement::snapshot(ledger.latest()),
        }
    }
}

struct Inner {
    manifest: DatasetManifest,
    index: HashMap<String, usize>,
    base: PathBuf,
    checkpoints_dir: PathBuf,
    report: Option<PathBuf>,
    ledger: Mutex<RatingLedger>,
    view: RwLock<Arc<View>>,
    models: Mutex<HashMap<PathBuf, Arc<Checkpoint>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let opts = LoadOptions {
            images_dir: config.images_dir.clone(),
            ..LoadOptions::default()
        };
        let outcome = dataset::load_manifest_with(&config.manifest, &opts)?;
        let base = config
            .images_dir
            .clone()
            .or_else(|| config.manifest.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        Self::from_manifest(outcome.manifest, base, config)
    }

    pub fn from_manifest(
        manifest: DatasetManifest,
        base: PathBuf,
        config: &ServiceConfig,
    ) -> Result<Self, ServiceError> {
        let ledger = RatingLedger::open(&config.ledger)?;
        let view = View::of(&ledger);
        let index = manifest
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        Ok(AppState(Arc::new(Inner {
            manifest,
            index,
            base,
            checkpoints_dir: config.checkpoints_dir.clone(),
            report: config.report.clone(),
            ledger: Mutex::new(ledger),
            view: RwLock::new(Arc::new(view)),
            models: Mutex::new(HashMap::new()),
        })))
    }

    fn view(&self) -> Arc<View> {
        self.0.view.read().expect("view lock").clone()
    }

    fn record(&self, id: &str) -> Result<&PaintingRecord, ServiceError> {
        self.0
            .index
            .get(id)
            .map(|&i| &self.0.manifest.records[i])
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    /// Manifest ratings overlaid with newer ledger ratings, one per rater.
    fn merged(&self, record: &PaintingRecord, view: &View) -> PaintingRecord {
        let mut by_rater: BTreeMap<String, Rating> =
            record.ratings.iter().map(|r| (r.rater_id.clone(), r.clone())).collect();
        for ((painting, rater), r) in view.latest.range((record.id.clone(), String::new())..) {
            if painting != &record.id {
                break;
            }
            by_rater.insert(rater.clone(), r.clone());
        }
        let mut out = record.clone();
        out.ratings = by_rater.into_values().collect();
        out.refresh_consensus();
        out
    }

    /// Submissions recorded so far (resubmissions included).
    pub fn ledger_len(&self) -> usize {
        self.view().ledger_length
    }

    pub fn snapshot(&self) -> AgreementSnapshot {
        self.view().snapshot.clone()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/paintings", get(list_paintings))
        .route("/paintings/{id}", get(get_painting))
        .route("/paintings/{id}/image", get(get_image))
        .route("/paintings/{id}/ratings", axum::routing::post(submit_rating))
        .route("/paintings/{id}/compare", get(compare))
        .route("/agreement", get(get_agreement))
        .route("/report", get(get_report))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(config: &ServiceConfig, addr: &str) -> Result<(), ServiceError> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

fn default_limit() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintingSummary {
    pub id: String,
    pub source: Source,
    pub width: u32,
    pub height: u32,
    pub split: Split,
    pub n_ratings: usize,
    pub consensus_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<PaintingSummary>,
}

async fn list_paintings(State(state): State<AppState>, Query(q): Query<PageQuery>) -> ApiResult<Page> {
    if q.limit == 0 || q.limit > 500 {
        return Err(ServiceError::Invalid("limit must be within 1..=500".into()));
    }
    let view = state.view();
    let records = &state.0.manifest.records;
    let items = records
        .iter()
        .skip(q.offset)
        .take(q.limit)
        .map(|r| {
            let m = state.merged(r, &view);
            PaintingSummary {
                id: m.id,
                source: m.source,
                width: m.width,
                height: m.height,
                split: m.split,
                n_ratings: m.ratings.len(),
                consensus_total: m.consensus_total,
            }
        })
        .collect();
    Ok(Json(Page {
        total: records.len(),
        offset: q.offset,
        limit: q.limit,
        items,
    }))
}

async fn get_painting(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<PaintingRecord> {
    let record = state.record(&id)?;
    Ok(Json(state.merged(record, &state.view())))
}

async fn get_image(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<impl IntoResponse, ServiceError> {
    let record = state.record(&id)?;
    let path = dataset::resolve_image(&state.0.base, &record.image_path);
    let bytes = tokio::fs::read(&path).await?;
    let mime = if bytes.starts_with(b"\x89PNG") {
        "image/png"
    } else if bytes.starts_with(&[0xFF, 0xD8]) {
        "image/jpeg"
    } else {
        "application/octet-stream"
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRating {
    pub rater_id: String,
    pub rubric: RubricScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub rating: Rating,
    pub ledger_length: usize,
    pub snapshot: AgreementSnapshot,
}

/// Workbench entries are whole points in `[0, 20]`.
pub fn check_submission(body: &SubmitRating) -> Result<(), ServiceError> {
    if body.rater_id.trim().is_empty() {
        return Err(ServiceError::Invalid("rater_id must not be empty".into()));
    }
    for c in Component::ALL {
        let v = body.rubric.get(c);
        if !(0.0..=rubric::COMPONENT_MAX).contains(&v) || v.fract() != 0.0 {
            return Err(ServiceError::Invalid(format!(
                "{} must be a whole number in [0, 20], got {v}",
                c.name()
            )));
        }
    }
    Ok(())
}

async fn submit_rating(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<SubmitRating>,
) -> ApiResult<SubmitResponse> {
    state.record(&id)?;
    check_submission(&body)?;
    let rating = Rating {
        painting_id: id,
        rater_id: body.rater_id.trim().to_string(),
        rubric: body.rubric,
        timestamp: Utc::now(),
    };
    // the ledger lock serializes appends and the view swap that follows
    let mut ledger = state.0.ledger.lock().await;
    let ledger_length = ledger.append(rating.clone())?;
    let view = Arc::new(View::of(&ledger));
    let snapshot = view.snapshot.clone();
    *state.0.view.write().expect("view lock") = view;
    drop(ledger);
    Ok(Json(SubmitResponse {
        rating,
        ledger_length,
        snapshot,
    }))
}

async fn get_agreement(State(state): State<AppState>) -> Json<AgreementSnapshot> {
    Json(state.snapshot())
}

#[derive(Debug, Deserialize)]
pub struct CompareQuery {
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub painting_id: String,
    pub checkpoint: String,
    pub human: Option<Consensus>,
    pub model: ScoreVector,
    /// `model − human` per component, when the painting has ratings.
    pub deltas: Option<[f64; 5]>,
}

fn checkpoint_path(dir: &Path, name: &str) -> Result<Option<PathBuf>, ServiceError> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(ServiceError::Invalid(format!("bad checkpoint name {name:?}")));
    }
    let direct = dir.join(name);
    let with_ext = dir.join(format!("{name}.safetensors"));
    Ok([direct, with_ext].into_iter().find(|p| p.is_file()))
}

async fn compare(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<CompareQuery>,
) -> ApiResult<Comparison> {
    let record = state.merged(state.record(&id)?, &state.view());
    let Some(path) = checkpoint_path(&state.0.checkpoints_dir, &q.checkpoint)? else {
        return Err(ServiceError::Conflict(format!(
            "checkpoint `{}` not found in {}; train one first (paintscore train --config ...)",
            q.checkpoint,
            state.0.checkpoints_dir.display()
        )));
    };
    let ckpt = {
        let mut cache = state.0.models.lock().await;
        match cache.get(&path) {
            Some(c) => c.clone(),
            None => {
                let p = path.clone();
                let loaded = tokio::task::spawn_blocking(move || checkpoint::load(&p))
                    .await
                    .map_err(|e| ServiceError::Io(std::io::Error::other(e)))??;
                let loaded = Arc::new(loaded);
                cache.insert(path, loaded.clone());
                loaded
            }
        }
    };
    let image_path = dataset::resolve_image(&state.0.base, &record.image_path);
    let model = tokio::task::spawn_blocking(move || -> Result<ScoreVector, paintscore::Error> {
        let pp = ckpt.meta.preprocess_or_default();
        let img = preprocess::load_rgb(&image_path)?;
        ckpt.model.predict_one(&preprocess::prepare(&img, &pp, None)?)
    })
    .await
    .map_err(|e| ServiceError::Io(std::io::Error::other(e)))??;
    let human = rubric::consensus(&record.ratings).ok();
    let deltas = human.map(|h| {
        let hc = h.components.to_array();
        std::array::from_fn(|k| model.components[k] - hc[k])
    });
    Ok(Json(Comparison {
        painting_id: id,
        checkpoint: q.checkpoint,
        human,
        model,
        deltas,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub evaluation: Option<EvaluationReport>,
    pub reference_tables: Replay,
}

async fn get_report(State(state): State<AppState>) -> ApiResult<ReportResponse> {
    let evaluation = match &state.0.report {
        Some(p) if p.is_file() => Some(EvaluationReport::from_json(&tokio::fs::read_to_string(p).await?)?),
        _ => None,
    };
    Ok(Json(ReportResponse {
        evaluation,
        reference_tables: tables::replay(&tables::reference_set())?,
    }))
}
