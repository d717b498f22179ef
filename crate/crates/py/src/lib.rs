//! Python bindings: synthetic data, training, evaluation and gradient checks.
//!
//! Errors map by class: usage errors raise `ValueError`, data errors raise
//! `OSError` and numeric failures raise `ArithmeticError`.

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ppn_core::data::{self, DatasetBundle, SynthConfig};
use ppn_core::eval::{self, CalibrationConfig, CalibrationMode, Evaluator};
use ppn_core::training::gradcheck::{CheckDims, GradCheckInstance, GradCheckOptions};
use ppn_core::training::{self, EarlyStop, TrainConfig, TrainError};
use ppn_core::{Error, ErrorClass};

fn raise(class: ErrorClass, msg: String) -> PyErr {
    match class {
        ErrorClass::Usage => PyValueError::new_err(msg),
        ErrorClass::Data => PyOSError::new_err(msg),
        ErrorClass::Numeric => PyArithmeticError::new_err(msg),
    }
}

fn err(e: Error) -> PyErr {
    raise(e.class(), e.to_string())
}

fn train_err(e: TrainError) -> PyErr {
    raise(e.class(), e.to_string())
}

/// A dataset bundle (features, attributes, embeddings and splits).
#[pyclass(frozen, name = "Bundle")]
struct PyBundle {
    inner: DatasetBundle,
}

#[pymethods]
impl PyBundle {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_bundle(path.as_ref()).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        data::save_bundle(&self.inner, path.as_ref()).map_err(err)
    }

    /// Sizes as a dict with keys classes, attributes, embed_dim, regions, feature_dim.
    fn dims<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = self.inner.dims();
        let out = PyDict::new(py);
        out.set_item("classes", d.classes)?;
        out.set_item("attributes", d.attributes)?;
        out.set_item("embed_dim", d.embed_dim)?;
        out.set_item("regions", d.regions)?;
        out.set_item("feature_dim", d.feature_dim)?;
        Ok(out)
    }

    fn __len__(&self) -> usize {
        self.inner.examples().len()
    }

    fn __repr__(&self) -> String {
        format!("Bundle({}, {} examples)", self.inner.dims(), self.inner.examples().len())
    }
}

/// Trained parameters plus the config, epoch and training log.
#[pyclass(frozen, skip_from_py_object, name = "Checkpoint")]
#[derive(Clone)]
struct PyCheckpoint {
    inner: training::Checkpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: training::load_checkpoint(path.as_ref()).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        training::save_checkpoint(&self.inner, path.as_ref()).map_err(err)
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.inner.epoch
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.config.seed
    }

    /// The training log as tab-separated text with a header row.
    fn log_tsv(&self) -> String {
        self.inner.log_tsv()
    }

    /// Parameter arrays, flattened row-major, keyed by name.
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let p = &self.inner.params;
        let out = PyDict::new(py);
        out.set_item("alpha_weight", p.alpha_weight.as_slice().to_vec())?;
        out.set_item("alpha_bias", p.alpha_bias.clone())?;
        out.set_item("w", p.w.as_slice().to_vec())?;
        out.set_item("beta_weight", p.beta_weight.clone())?;
        out.set_item("beta_bias", p.beta_bias)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Checkpoint(epoch={}, seed={}, params={})",
            self.inner.epoch,
            self.inner.config.seed,
            self.inner.params.num_params()
        )
    }
}

#[pyclass(frozen, name = "TrainResult")]
struct PyTrainResult {
    #[pyo3(get)]
    best: PyCheckpoint,
    #[pyo3(get)]
    last: PyCheckpoint,
    #[pyo3(get)]
    stopped_early: bool,
}

#[pyfunction]
#[pyo3(signature = (seed=0, seen_classes=None, unseen_classes=None, attributes=None, regions=None,
                    examples_per_class=None, noise=None))]
fn synth(
    seed: u64,
    seen_classes: Option<usize>,
    unseen_classes: Option<usize>,
    attributes: Option<usize>,
    regions: Option<usize>,
    examples_per_class: Option<usize>,
    noise: Option<f64>,
) -> PyResult<PyBundle> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        seen_classes: seen_classes.unwrap_or(d.seen_classes),
        unseen_classes: unseen_classes.unwrap_or(d.unseen_classes),
        attributes: attributes.unwrap_or(d.attributes),
        regions: regions.unwrap_or(d.regions),
        examples_per_class: examples_per_class.unwrap_or(d.examples_per_class),
        noise: noise.unwrap_or(d.noise),
        ..d
    };
    Ok(PyBundle {
        inner: data::generate_synthetic(&cfg, seed).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (bundle, epochs=50, batch_size=64, learning_rate=0.001, lambda1=0.1, lambda2=0.1,
                    seed=0, early_stop="val_h", patience=10, restarts=1))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    bundle: &PyBundle,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    lambda1: f64,
    lambda2: f64,
    seed: u64,
    early_stop: &str,
    patience: usize,
    restarts: usize,
) -> PyResult<PyTrainResult> {
    let cfg = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        lambda1,
        lambda2,
        seed,
        early_stop: early_stop.parse::<EarlyStop>().map_err(err)?,
        patience,
        ..TrainConfig::default()
    };
    let out = py
        .detach(|| training::train_with_restarts(&bundle.inner, &cfg, restarts))
        .map_err(train_err)?;
    Ok(PyTrainResult {
        best: PyCheckpoint { inner: out.best },
        last: PyCheckpoint { inner: out.last },
        stopped_early: out.stopped_early,
    })
}

/// Mean per-class top-1 accuracy on unseen test examples among unseen classes.
#[pyfunction]
fn evaluate_zsl(checkpoint: &PyCheckpoint, bundle: &PyBundle) -> PyResult<f64> {
    eval::evaluate_zsl(&checkpoint.inner, &bundle.inner).map_err(err)
}

fn calibration(mode: &str, z: f64, gamma: f64) -> PyResult<CalibrationConfig> {
    let mode: CalibrationMode = mode.parse().map_err(err)?;
    let cfg = CalibrationConfig { mode, z, gamma };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Calibrated GZSL metrics as a dict with keys t1_unseen, u, s, h.
#[pyfunction]
#[pyo3(signature = (checkpoint, bundle, calibration="multiplicative", z=eval::DEFAULT_Z, gamma=0.0))]
fn evaluate_gzsl<'py>(
    py: Python<'py>,
    checkpoint: &PyCheckpoint,
    bundle: &PyBundle,
    calibration: &str,
    z: f64,
    gamma: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cal = self::calibration(calibration, z, gamma)?;
    let r = eval::evaluate_gzsl(&checkpoint.inner, &bundle.inner, &cal).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("t1_unseen", r.t1_unseen)?;
    out.set_item("u", r.u)?;
    out.set_item("s", r.s)?;
    out.set_item("h", r.h)?;
    Ok(out)
}

/// Rows of (parameter, u, s, h); `grid` defaults to the mode's standard grid.
#[pyfunction]
#[pyo3(signature = (checkpoint, bundle, mode="multiplicative", grid=None))]
fn calibration_sweep(
    checkpoint: &PyCheckpoint,
    bundle: &PyBundle,
    mode: &str,
    grid: Option<Vec<f64>>,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let mode: CalibrationMode = mode.parse().map_err(err)?;
    let grid = grid.unwrap_or_else(|| eval::default_grid(mode));
    let ev = Evaluator::for_checkpoint(&checkpoint.inner, &bundle.inner).map_err(err)?;
    let rows = ev.sweep(mode, &grid).map_err(err)?;
    Ok(rows.iter().map(|r| (r.parameter, r.u, r.s, r.h)).collect())
}

#[pyfunction]
fn harmonic_mean(u: f64, s: f64) -> f64 {
    eval::harmonic_mean(u, s)
}

/// Finite-difference check on a random instance; returns (passed, report text).
#[pyfunction]
#[pyo3(signature = (seed=0, lambda1=0.1, lambda2=0.1, corrupt=false))]
fn gradcheck(seed: u64, lambda1: f64, lambda2: f64, corrupt: bool) -> PyResult<(bool, String)> {
    let inst = GradCheckInstance::random(CheckDims::default(), seed).map_err(err)?;
    let opts = GradCheckOptions {
        corrupt,
        ..GradCheckOptions::default()
    };
    let report = inst.check(lambda1, lambda2, &opts).map_err(err)?;
    Ok((report.passed(), report.to_string()))
}

#[pymodule]
fn ppn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBundle>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_zsl, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_gzsl, m)?)?;
    m.add_function(wrap_pyfunction!(calibration_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_mean, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
