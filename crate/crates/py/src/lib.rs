//! Python bindings. Structured values cross the boundary as JSON strings so
//! Python callers can use `json.loads` on them directly.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use scope_nav::episode::{self, EpisodeConfig, EpisodeSpec, EpisodeTrace, Variant};
use scope_nav::harness::{self, RunConfig};
use scope_nav::scene::{self, GenParams};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(value_err)
}

/// Generates a scene and returns it in the scene file format.
#[pyfunction]
#[pyo3(signature = (seed, rooms = 4, objects_per_room = 4, size = 32, goals = 3))]
fn generate_scene(seed: u64, rooms: usize, objects_per_room: usize, size: usize, goals: usize) -> PyResult<String> {
    let params = GenParams {
        rooms,
        objects_per_room,
        size,
        goals,
    };
    let map = scene::generate_scene(seed, &params).map_err(value_err)?;
    Ok(scene::save_scene(&map))
}

/// Raises `ValueError` if the scene text fails to parse or breaks an invariant.
#[pyfunction]
fn validate_scene(text: &str) -> PyResult<()> {
    scene::load_scene(text).map(|_| ()).map_err(value_err)
}

/// Runs one episode and returns its JSONL trace.
#[pyfunction]
#[pyo3(signature = (scene, variant = "Full", seed = 0, config = None, scene_id = "scene"))]
fn run_episode(
    py: Python<'_>,
    scene: &str,
    variant: &str,
    seed: u64,
    config: Option<&str>,
    scene_id: &str,
) -> PyResult<String> {
    let map = scene::load_scene(scene).map_err(value_err)?;
    let cfg: EpisodeConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => EpisodeConfig::default(),
    };
    cfg.validate().map_err(value_err)?;
    let spec = EpisodeSpec::new(scene_id, self::variant(variant)?, seed);
    Ok(py.detach(|| episode::run_episode(&map, &spec, &cfg).to_jsonl()))
}

/// Metrics over a set of JSONL traces of one variant, as a JSON object.
#[pyfunction]
#[pyo3(signature = (traces, variant = "Full", metric_seed = 0))]
fn trace_metrics(traces: Vec<String>, variant: &str, metric_seed: u64) -> PyResult<String> {
    let parsed = traces
        .iter()
        .map(|t| EpisodeTrace::read_jsonl(t.as_bytes()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let m = harness::group_metrics(self::variant(variant)?, metric_seed, &parsed).map_err(value_err)?;
    serde_json::to_string(&m).map_err(value_err)
}

/// Runs a batch config, writes the run directory under `out`, and returns
/// `(run_dir, report_json)`.
#[pyfunction]
#[pyo3(signature = (config, out, workers = 1))]
fn run_batch(py: Python<'_>, config: &str, out: &str, workers: usize) -> PyResult<(String, String)> {
    let cfg = RunConfig::from_json(config).map_err(value_err)?;
    let (dir, report) = py
        .detach(|| harness::execute_run(&cfg, Path::new(out), workers))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let json = serde_json::to_string(&report).map_err(value_err)?;
    Ok((dir.display().to_string(), json))
}

/// Recomputes the report of a run directory as JSON.
#[pyfunction]
fn report(dir: &str) -> PyResult<String> {
    let r = harness::report_from_dir(Path::new(dir)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    serde_json::to_string(&r).map_err(value_err)
}

#[pyfunction]
fn variants() -> Vec<&'static str> {
    Variant::ALL.iter().map(|v| v.name()).collect()
}

#[pymodule]
fn pyscope(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(validate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(trace_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(variants, m)?)?;
    Ok(())
}
