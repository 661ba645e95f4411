//! Python bindings: rubric arithmetic, agreement and accuracy metrics,
//! table replay, synthetic data and checkpoint scoring.
//!
//! Structured results (manifests, reports) cross the boundary as plain
//! dicts and lists, built by round-tripping through `json`.

use std::path::PathBuf;

use paintscore::dataset::{self, synthetic, LoadOptions, Split};
use paintscore::evaluation::{self, tables};
use paintscore::model::checkpoint::{self, Checkpoint};
use paintscore::preprocess::{self, PreprocessConfig};
use paintscore::rubric::{self, Component, RubricScore, SchemeName};
use paintscore::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Image(_) => PyOSError::new_err(e.to_string()),
        Error::NonFiniteLoss { .. } | Error::Checkpoint(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Converts any serializable value into Python objects via `json.loads`.
fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scheme(name: &str) -> PyResult<SchemeName> {
    name.parse().map_err(to_py)
}

/// Five component scores in [0, 20].
#[pyclass(name = "Rubric", module = "paintscore_py", from_py_object)]
#[derive(Clone)]
pub struct PyRubric {
    inner: RubricScore,
}

#[pymethods]
impl PyRubric {
    #[new]
    fn new(originality: f64, color: f64, texture: f64, composition: f64, content: f64) -> PyResult<Self> {
        RubricScore::new(originality, color, texture, composition, content)
            .map(|inner| PyRubric { inner })
            .map_err(to_py)
    }

    #[getter]
    fn originality(&self) -> f64 {
        self.inner.originality
    }
    #[getter]
    fn color(&self) -> f64 {
        self.inner.color
    }
    #[getter]
    fn texture(&self) -> f64 {
        self.inner.texture
    }
    #[getter]
    fn composition(&self) -> f64 {
        self.inner.composition
    }
    #[getter]
    fn content(&self) -> f64 {
        self.inner.content
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    /// Quality band name per component.
    fn bands(&self) -> PyResult<Vec<(String, String)>> {
        Component::ALL
            .iter()
            .map(|c| {
                let band = rubric::band_of(self.inner.get(*c)).map_err(to_py)?;
                Ok((c.name().to_string(), band.to_string()))
            })
            .collect()
    }

    /// Class label of the total under scheme "M1".."M5".
    fn classify(&self, scheme_name: &str) -> PyResult<String> {
        classify(self.inner.total(), scheme_name)
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.to_array().to_vec()
    }

    fn __repr__(&self) -> String {
        let [o, c, t, p, n] = self.inner.to_array();
        format!("Rubric(originality={o}, color={c}, texture={t}, composition={p}, content={n})")
    }
}

/// Validating sum of five component scores.
#[pyfunction]
fn total(components: [f64; 5]) -> PyResult<f64> {
    rubric::total(&RubricScore::from_array(components).map_err(to_py)?).map_err(to_py)
}

#[pyfunction]
fn classify(score: f64, scheme_name: &str) -> PyResult<String> {
    let label = scheme(scheme_name)?.scheme().bin(score).map_err(to_py)?;
    Ok(label.to_string())
}

/// Class labels for every scheme, as `{"M1": [...], ...}`.
#[pyfunction]
fn schemes(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_object(py, &rubric::scheme_catalog())
}

/// Returns `(r, lo, hi)` with a Fisher-z interval at level `1 - alpha`.
#[pyfunction]
#[pyo3(signature = (pred, actual, alpha = 0.05))]
fn pearson(pred: Vec<f64>, actual: Vec<f64>, alpha: f64) -> PyResult<(f64, f64, f64)> {
    let c = evaluation::pearson_with_ci(&pred, &actual, alpha).map_err(to_py)?;
    Ok((c.r, c.lo, c.hi))
}

#[pyfunction]
#[pyo3(signature = (r, n, alpha = 0.05))]
fn fisher_ci(r: f64, n: usize, alpha: f64) -> PyResult<(f64, f64)> {
    evaluation::fisher_ci(r, n, alpha).map_err(to_py)
}

#[pyfunction]
fn r_squared(pred: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    evaluation::r_squared(&pred, &actual).map_err(to_py)
}

/// Mean absolute percentage error, in percent.
#[pyfunction]
fn mape(pred: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    evaluation::mape(&pred, &actual).map_err(to_py)
}

/// ICC(2,1) over a paintings × raters table.
#[pyfunction]
fn icc(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    let rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    rubric::icc_2_1(&rows).map_err(to_py)
}

/// Confusion counts (rows actual, columns predicted) and accuracy in percent.
#[pyfunction]
fn confusion(pred: Vec<f64>, actual: Vec<f64>, scheme_name: &str) -> PyResult<(Vec<Vec<u64>>, f64)> {
    let m = evaluation::confusion(&pred, &actual, &scheme(scheme_name)?.scheme()).map_err(to_py)?;
    let acc = evaluation::accuracy(&m).map_err(to_py)?;
    Ok((m.counts, acc))
}

/// Recomputes the bundled reference confusion matrices and their flags.
#[pyfunction]
fn replay_tables(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_object(py, &tables::replay(&tables::reference_set()).map_err(to_py)?)
}

/// Pixel-measured rubric of an image file (the synthetic generator's labeler).
#[pyfunction]
fn measure(path: PathBuf) -> PyResult<PyRubric> {
    let img = preprocess::load_rgb(&path).map_err(to_py)?;
    Ok(PyRubric {
        inner: synthetic::measure(&img),
    })
}

/// Writes `count` synthetic paintings plus `manifest.json` into `out_dir`
/// and returns the manifest.
#[pyfunction]
#[pyo3(signature = (out_dir, count = 300, side = 72, seed = 0))]
fn generate_synthetic(
    py: Python<'_>,
    out_dir: PathBuf,
    count: usize,
    side: u32,
    seed: u64,
) -> PyResult<Bound<'_, PyAny>> {
    let spec = synthetic::SyntheticSpec::new(count, side, seed);
    let m = py.detach(|| synthetic::generate(&spec, &out_dir)).map_err(to_py)?;
    to_object(py, &m)
}

/// Loads and validates a CSV/JSON manifest; returns `(manifest, warnings)`.
#[pyfunction]
#[pyo3(signature = (path, images_dir = None, min_artist_side = dataset::MIN_ARTIST_SIDE))]
fn load_manifest(
    py: Python<'_>,
    path: PathBuf,
    images_dir: Option<PathBuf>,
    min_artist_side: u32,
) -> PyResult<(Bound<'_, PyAny>, Vec<String>)> {
    let opts = LoadOptions {
        images_dir,
        min_artist_side,
        skip_image_check: false,
    };
    let out = dataset::load_manifest_with(&path, &opts).map_err(to_py)?;
    let warnings = out
        .warnings
        .iter()
        .map(|w| format!("[{}] {}", w.id, w.message))
        .collect();
    Ok((to_object(py, &out.manifest)?, warnings))
}

/// A trained checkpoint ready to score images.
#[pyclass(name = "Scorer", module = "paintscore_py")]
pub struct PyScorer {
    ckpt: Checkpoint,
    preprocess: PreprocessConfig,
}

#[pymethods]
impl PyScorer {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        let ckpt = checkpoint::load(&path).map_err(to_py)?;
        let preprocess = ckpt.meta.preprocess_or_default();
        Ok(PyScorer { ckpt, preprocess })
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.ckpt.model.parameter_count()
    }

    #[getter]
    fn epochs_completed(&self) -> usize {
        self.ckpt.meta.training_meta.epochs_completed
    }

    /// Raw component scores, total and clamped total for one image file.
    fn score<'py>(&self, py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let s = py
            .detach(|| {
                let img = preprocess::load_rgb(&path)?;
                self.ckpt
                    .model
                    .predict_one(&preprocess::prepare(&img, &self.preprocess, None)?)
            })
            .map_err(to_py)?;
        to_object(py, &s)
    }

    /// Full evaluation report on one split ("test", "train" or "all").
    #[pyo3(signature = (manifest, split = "test", images_dir = None))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        manifest: PathBuf,
        split: &str,
        images_dir: Option<PathBuf>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let split = match split {
            "test" => Some(Split::Test),
            "train" => Some(Split::Train),
            "all" => None,
            other => return Err(PyValueError::new_err(format!("unknown split {other:?}"))),
        };
        let report = py
            .detach(|| {
                let opts = LoadOptions {
                    images_dir: images_dir.clone(),
                    ..LoadOptions::default()
                };
                let m = dataset::load_manifest_with(&manifest, &opts)?.manifest;
                let base = images_dir
                    .clone()
                    .or_else(|| manifest.parent().map(PathBuf::from))
                    .unwrap_or_default();
                let samples = dataset::load_samples(&m, &base, &self.preprocess, split)?;
                evaluation::evaluate(&self.ckpt.model, &samples, &self.preprocess)
            })
            .map_err(to_py)?;
        to_object(py, &report)
    }
}

#[pymodule]
pub fn paintscore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRubric>()?;
    m.add_class::<PyScorer>()?;
    m.add_function(wrap_pyfunction!(total, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(schemes, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_ci, m)?)?;
    m.add_function(wrap_pyfunction!(r_squared, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(icc, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(replay_tables, m)?)?;
    m.add_function(wrap_pyfunction!(measure, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    Ok(())
}
