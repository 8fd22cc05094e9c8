//! Batch runs: a scene × seed × metric-seed × variant grid executed on a
//! bounded worker pool, with traces, a manifest and metric reports on disk.
//!
//! Layout of a run directory:
//!
//! ```text
//! <out>/<run_id>/manifest.json
//! <out>/<run_id>/traces/<Variant>-m<metric_seed>.jsonl
//! <out>/<run_id>/report.csv
//! <out>/<run_id>/report.json
//! <out>/<run_id>/plot.csv
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{run_episode, EpisodeConfig, EpisodeSpec, EpisodeTrace, TraceLine, Variant};
use crate::metrics::{
    ece, efficiency, mean_std, reconsideration_stats, spl, success_rate, welch_t_test, EpisodeOutcome,
    MetricsError,
};
use crate::potential_graph::GraphParams;
use crate::rng::mix;
use crate::scene::{generate_scene, load_scene, GenParams, SceneError, SceneMap};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("scene {id}: {source}")]
    Scene { id: String, source: SceneError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Trace { path: PathBuf, message: String },
    #[error("no traces found under {0}")]
    NoTraces(PathBuf),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSource {
    /// One generated scene per entry of `seeds`.
    Generate(GenParams),
    /// Scene files matching a glob; every file runs once per entry of `seeds`.
    Files(String),
}

/// Pass/fail thresholds evaluated in `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Targets {
    pub min_sr_gap_random: f64,
    pub min_sr_gap_no_graph: f64,
    /// Metric seeds on which each ordering must hold.
    pub min_seed_wins: usize,
    pub min_precision_gain: f64,
}

impl Default for Targets {
    fn default() -> Self {
        Self {
            min_sr_gap_random: 10.0,
            min_sr_gap_no_graph: 2.0,
            min_seed_wins: 4,
            min_precision_gain: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    pub scenes: SceneSource,
    pub seeds: Vec<u64>,
    #[serde(default = "default_metric_seeds")]
    pub metric_seeds: Vec<u64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub episode: EpisodeConfig,
    /// Graph parameter override; replaces `episode.graph`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphParams>,
    #[serde(default)]
    pub targets: Targets,
}

fn default_run_id() -> String {
    "run".into()
}
fn default_metric_seeds() -> Vec<u64> {
    vec![0]
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Full]
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("`seeds` must not be empty");
        }
        if self.metric_seeds.is_empty() {
            return bad("`metric_seeds` must not be empty");
        }
        if self.variants.is_empty() {
            return bad("`variants` must not be empty");
        }
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return bad("`run_id` must be non-empty and use only [A-Za-z0-9._-]");
        }
        if self.graph.is_some() && self.variants.iter().all(|&v| v == Variant::NoPotentialGraph) {
            return bad("NoPotentialGraph does not use a potential graph; remove the `graph` override");
        }
        self.effective_episode()
            .validate()
            .map_err(HarnessError::Config)
    }

    pub fn effective_episode(&self) -> EpisodeConfig {
        let mut e = self.episode.clone();
        if let Some(g) = &self.graph {
            e.graph = g.clone();
        }
        e
    }
}

#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub id: String,
    /// Scene seed for generated scenes, file index otherwise.
    pub key: u64,
    pub map: SceneMap,
}

pub fn load_scenes(cfg: &RunConfig) -> Result<Vec<LoadedScene>, HarnessError> {
    match &cfg.scenes {
        SceneSource::Generate(params) => cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let id = format!("gen-{seed}");
                generate_scene(seed, params)
                    .map(|map| LoadedScene { id: id.clone(), key: seed, map })
                    .map_err(|source| HarnessError::Scene { id, source })
            })
            .collect(),
        SceneSource::Files(pattern) => {
            let mut paths: Vec<PathBuf> = glob::glob(pattern)
                .map_err(|e| HarnessError::Config(format!("bad glob {pattern:?}: {e}")))?
                .filter_map(Result::ok)
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(HarnessError::Config(format!("no scene files match {pattern:?}")));
            }
            paths
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let text = fs::read_to_string(p).map_err(io_err(p))?;
                    let id = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| format!("file-{i}"));
                    load_scene(&text)
                        .map(|map| LoadedScene { id: id.clone(), key: i as u64, map })
                        .map_err(|source| HarnessError::Scene { id, source })
                })
                .collect()
        }
    }
}

/// Seed that keys all randomness of one episode. Variants share it, so they
/// face identical noise draws.
pub fn episode_seed(cfg: &RunConfig, scene: &LoadedScene, seed: u64, metric_seed: u64) -> u64 {
    match cfg.scenes {
        SceneSource::Generate(_) => mix(&[metric_seed, scene.key]),
        SceneSource::Files(_) => mix(&[metric_seed, seed, scene.key]),
    }
}

/// All traces of one (variant, metric seed) cell, in canonical scene order.
#[derive(Clone, Debug)]
pub struct TraceGroup {
    pub variant: Variant,
    pub metric_seed: u64,
    pub traces: Vec<EpisodeTrace>,
}

/// Runs the whole grid with `workers` threads. Results do not depend on `workers`.
pub fn run_grid(cfg: &RunConfig, workers: usize) -> Result<Vec<TraceGroup>, HarnessError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        let scenes = load_scenes(cfg)?;
        let episode = cfg.effective_episode();
        let per_scene_seeds: Vec<u64> = match cfg.scenes {
            SceneSource::Generate(_) => vec![0],
            SceneSource::Files(_) => cfg.seeds.clone(),
        };
        let mut groups = Vec::new();
        for &variant in &cfg.variants {
            for &metric_seed in &cfg.metric_seeds {
                let jobs: Vec<(&LoadedScene, u64)> = scenes
                    .iter()
                    .flat_map(|s| per_scene_seeds.iter().map(move |&seed| (s, seed)))
                    .collect();
                let traces = jobs
                    .par_iter()
                    .map(|&(scene, seed)| {
                        let spec = EpisodeSpec {
                            scene_id: scene.id.clone(),
                            variant,
                            seed: episode_seed(cfg, scene, seed, metric_seed),
                            metric_seed,
                        };
                        run_episode(&scene.map, &spec, &episode)
                    })
                    .collect();
                groups.push(TraceGroup {
                    variant,
                    metric_seed,
                    traces,
                });
            }
        }
        Ok(groups)
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub variant: Option<Variant>,
    pub metric_seed: u64,
    pub episodes: usize,
    pub subtasks: usize,
    pub sr: f64,
    pub spl: f64,
    pub efficiency: f64,
    pub ece: f64,
    pub confirm_precision: Option<f64>,
    pub forced_error_rate: Option<f64>,
    pub memory_precision: Option<f64>,
}

pub fn group_metrics(variant: Variant, metric_seed: u64, traces: &[EpisodeTrace]) -> Result<GroupMetrics, HarnessError> {
    let outcomes: Vec<EpisodeOutcome> = traces.iter().flat_map(|t| t.outcomes()).collect();
    let stats = reconsideration_stats(traces.iter().flat_map(|t| t.decisions())).ok();
    Ok(GroupMetrics {
        variant: Some(variant),
        metric_seed,
        episodes: traces.len(),
        subtasks: outcomes.len(),
        sr: success_rate(&outcomes)?,
        spl: spl(&outcomes)?,
        efficiency: efficiency(&outcomes)?,
        ece: ece(&outcomes, 10)?.ece_percent,
        confirm_precision: stats.as_ref().and_then(|s| s.confirm_precision),
        forced_error_rate: stats.as_ref().and_then(|s| s.forced_error_rate),
        memory_precision: stats.as_ref().map(|s| s.memory_precision),
    })
}

pub const METRIC_NAMES: [&str; 7] = [
    "sr",
    "spl",
    "efficiency",
    "ece",
    "confirm_precision",
    "forced_error_rate",
    "memory_precision",
];

impl GroupMetrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "sr" => Some(self.sr),
            "spl" => Some(self.spl),
            "efficiency" => Some(self.efficiency),
            "ece" => Some(self.ece),
            "confirm_precision" => self.confirm_precision,
            "forced_error_rate" => self.forced_error_rate,
            "memory_precision" => self.memory_precision,
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub better: Variant,
    pub worse: Variant,
    pub metric: String,
    /// Mean difference `better − worse`.
    pub gap: f64,
    /// Metric seeds on which `better` strictly beats `worse`.
    pub seed_wins: usize,
    pub seeds: usize,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub groups: Vec<GroupMetrics>,
    /// variant → metric → summary across metric seeds.
    pub summary: BTreeMap<Variant, BTreeMap<String, Summary>>,
    pub comparisons: Vec<Comparison>,
    pub targets: Vec<TargetCheck>,
}

fn compare(groups: &[GroupMetrics], better: Variant, worse: Variant, metric: &str) -> Option<Comparison> {
    let by_seed = |v: Variant| -> BTreeMap<u64, f64> {
        groups
            .iter()
            .filter(|g| g.variant == Some(v))
            .filter_map(|g| g.get(metric).map(|x| (g.metric_seed, x)))
            .collect()
    };
    let (a, b) = (by_seed(better), by_seed(worse));
    let shared: Vec<u64> = a.keys().filter(|k| b.contains_key(k)).copied().collect();
    if shared.is_empty() {
        return None;
    }
    let xs: Vec<f64> = shared.iter().map(|k| a[k]).collect();
    let ys: Vec<f64> = shared.iter().map(|k| b[k]).collect();
    let test = welch_t_test(&xs, &ys);
    Some(Comparison {
        better,
        worse,
        metric: metric.to_string(),
        gap: mean_std(&xs).0 - mean_std(&ys).0,
        seed_wins: xs.iter().zip(&ys).filter(|(x, y)| x > y).count(),
        seeds: shared.len(),
        t: test.as_ref().map(|t| t.t),
        p_value: test.as_ref().map(|t| t.p_value),
    })
}

pub fn build_report(mut groups: Vec<GroupMetrics>, targets: &Targets) -> Report {
    groups.sort_by_key(|g| (g.variant, g.metric_seed));
    let mut summary: BTreeMap<Variant, BTreeMap<String, Summary>> = BTreeMap::new();
    for v in Variant::ALL {
        let gs: Vec<&GroupMetrics> = groups.iter().filter(|g| g.variant == Some(v)).collect();
        if gs.is_empty() {
            continue;
        }
        let entry = summary.entry(v).or_default();
        for m in METRIC_NAMES {
            let xs: Vec<f64> = gs.iter().filter_map(|g| g.get(m)).collect();
            if xs.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&xs);
            entry.insert(m.to_string(), Summary { mean, std, n: xs.len() });
        }
    }
    let mut comparisons = Vec::new();
    for worse in [Variant::NoPotentialGraph, Variant::RandomFrontier, Variant::NoFrontierImage, Variant::NoReconsideration] {
        if let Some(c) = compare(&groups, Variant::Full, worse, "sr") {
            comparisons.push(c);
        }
    }
    let mut checks = Vec::new();
    let seed_count = |c: &Comparison| c.seeds;
    for c in &comparisons {
        let threshold = match c.worse {
            Variant::RandomFrontier => targets.min_sr_gap_random,
            Variant::NoPotentialGraph => targets.min_sr_gap_no_graph,
            _ => continue,
        };
        checks.push(TargetCheck {
            name: format!("sr_gap_full_vs_{}", c.worse),
            value: c.gap,
            threshold,
            passed: c.gap >= threshold,
        });
        let wins = targets.min_seed_wins.min(seed_count(c)) as f64;
        checks.push(TargetCheck {
            name: format!("seed_wins_full_vs_{}", c.worse),
            value: c.seed_wins as f64,
            threshold: wins,
            passed: c.seed_wins as f64 >= wins,
        });
    }
    let precision = |v: Variant, f: fn(&GroupMetrics) -> Option<f64>| {
        let xs: Vec<f64> = groups.iter().filter(|g| g.variant == Some(v)).filter_map(f).collect();
        (!xs.is_empty()).then(|| mean_std(&xs).0)
    };
    if let (Some(cp), Some(np)) = (
        precision(Variant::Full, |g| g.confirm_precision),
        precision(Variant::NoReconsideration, |g| g.memory_precision),
    ) {
        let gain = 100.0 * (cp - np);
        checks.push(TargetCheck {
            name: "confirm_precision_gain".into(),
            value: gain,
            threshold: targets.min_precision_gain,
            passed: gain >= targets.min_precision_gain,
        });
    }
    Report {
        groups,
        summary,
        comparisons,
        targets: checks,
    }
}

pub fn report_from_groups(groups: &[TraceGroup], targets: &Targets) -> Result<Report, HarnessError> {
    let metrics = groups
        .iter()
        .map(|g| group_metrics(g.variant, g.metric_seed, &g.traces))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_report(metrics, targets))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Long format: one row per (variant, metric seed, metric), then mean and std rows.
pub fn report_csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "metric_seed", "metric", "value"]).unwrap();
    for g in &report.groups {
        let v = g.variant.map(|v| v.to_string()).unwrap_or_default();
        let seed = g.metric_seed.to_string();
        for m in METRIC_NAMES {
            w.write_record([v.as_str(), seed.as_str(), m, &fmt_opt(g.get(m))]).unwrap();
        }
    }
    for (v, metrics) in &report.summary {
        for (m, s) in metrics {
            let v = v.to_string();
            w.write_record([v.as_str(), "mean", m, &s.mean.to_string()]).unwrap();
            w.write_record([v.as_str(), "std", m, &s.std.to_string()]).unwrap();
        }
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Bar-chart input: variant, metric, mean, std.
pub fn plot_csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "metric", "mean", "std", "n"]).unwrap();
    for (v, metrics) in &report.summary {
        for (m, s) in metrics {
            w.write_record([v.to_string(), m.clone(), s.mean.to_string(), s.std.to_string(), s.n.to_string()])
                .unwrap();
        }
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub trace_version: u32,
    pub config: RunConfig,
    /// Effective per-episode knobs after overrides.
    pub episode: EpisodeConfig,
    pub scenes: Vec<String>,
}

pub fn trace_file_name(variant: Variant, metric_seed: u64) -> String {
    format!("{variant}-m{metric_seed}.jsonl")
}

fn write(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Runs the grid and writes everything under `<out>/<run_id>`. Returns the run directory.
pub fn execute_run(cfg: &RunConfig, out: &Path, workers: usize) -> Result<(PathBuf, Report), HarnessError> {
    let groups = run_grid(cfg, workers)?;
    let dir = out.join(&cfg.run_id);
    let traces_dir = dir.join("traces");
    if traces_dir.exists() {
        fs::remove_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;
    }
    fs::create_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;
    let scenes: Vec<String> = groups
        .first()
        .map(|g| g.traces.iter().filter_map(|t| t.header().map(|h| h.scene.clone())).collect())
        .unwrap_or_default();
    let manifest = Manifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        trace_version: crate::episode::TRACE_VERSION,
        config: cfg.clone(),
        episode: cfg.effective_episode(),
        scenes,
    };
    write(
        &dir.join("manifest.json"),
        (serde_json::to_string_pretty(&manifest).unwrap() + "\n").as_bytes(),
    )?;
    for g in &groups {
        let mut buf = Vec::new();
        for t in &g.traces {
            t.write_jsonl(&mut buf).expect("in-memory write");
        }
        write(&traces_dir.join(trace_file_name(g.variant, g.metric_seed)), &buf)?;
    }
    let report = report_from_groups(&groups, &cfg.targets)?;
    write_report(&dir, &report)?;
    Ok((dir, report))
}

pub fn write_report(dir: &Path, report: &Report) -> Result<(), HarnessError> {
    write(&dir.join("report.csv"), report_csv(report).as_bytes())?;
    write(
        &dir.join("report.json"),
        (serde_json::to_string_pretty(report).unwrap() + "\n").as_bytes(),
    )?;
    write(&dir.join("plot.csv"), plot_csv(report).as_bytes())
}

/// Reads every `*.jsonl` under `dir` (or `dir/traces`) and groups episodes by
/// (variant, metric seed) taken from their headers.
pub fn read_trace_groups(dir: &Path) -> Result<Vec<TraceGroup>, HarnessError> {
    let traces_dir = if dir.join("traces").is_dir() {
        dir.join("traces")
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&traces_dir)
        .map_err(io_err(&traces_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut grouped: BTreeMap<(Variant, u64), Vec<EpisodeTrace>> = BTreeMap::new();
    for path in &files {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let all = EpisodeTrace::read_jsonl(BufReader::new(file)).map_err(|message| HarnessError::Trace {
            path: path.clone(),
            message,
        })?;
        // split the concatenated stream at each episode header
        let mut current: Option<EpisodeTrace> = None;
        for line in all.lines {
            if matches!(line, TraceLine::Episode(_)) {
                if let Some(t) = current.take() {
                    push_trace(&mut grouped, t, path)?;
                }
                current = Some(EpisodeTrace::default());
            }
            match current.as_mut() {
                Some(t) => t.lines.push(line),
                None => {
                    return Err(HarnessError::Trace {
                        path: path.clone(),
                        message: "record before the first episode header".into(),
                    })
                }
            }
        }
        if let Some(t) = current {
            push_trace(&mut grouped, t, path)?;
        }
    }
    if grouped.is_empty() {
        return Err(HarnessError::NoTraces(dir.to_path_buf()));
    }
    Ok(grouped
        .into_iter()
        .map(|((variant, metric_seed), traces)| TraceGroup {
            variant,
            metric_seed,
            traces,
        })
        .collect())
}

fn push_trace(
    grouped: &mut BTreeMap<(Variant, u64), Vec<EpisodeTrace>>,
    trace: EpisodeTrace,
    path: &Path,
) -> Result<(), HarnessError> {
    let h = trace.header().ok_or_else(|| HarnessError::Trace {
        path: path.to_path_buf(),
        message: "episode without header".into(),
    })?;
    grouped.entry((h.variant, h.metric_seed)).or_default().push(trace);
    Ok(())
}

/// Recomputes a report from traces on disk; targets come from a sibling
/// manifest when present.
pub fn report_from_dir(dir: &Path) -> Result<Report, HarnessError> {
    let groups = read_trace_groups(dir)?;
    let targets = fs::read_to_string(dir.join("manifest.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
        .map(|m| m.config.targets)
        .unwrap_or_default();
    report_from_groups(&groups, &targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig::from_json(
            r#"{"run_id": "t", "scenes": {"generate": {"rooms": 3, "objects_per_room": 3, "size": 24, "goals": 2}},
                "seeds": [1, 2, 3], "metric_seeds": [0, 1], "variants": ["Full", "RandomFrontier"]}"#,
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let err = |s: &str| RunConfig::from_json(s).unwrap_err().to_string();
        assert!(err(r#"{"scenes": {"generate": {"rooms": 4, "objects_per_room": 4, "size": 32}}, "seeds": []}"#)
            .contains("seeds"));
        assert!(err(r#"{"scenes": {"generate": {"rooms": 4, "objects_per_room": 4, "size": 32}}, "seeds": [1],
                 "variants": ["NoPotentialGraph"], "graph": {"radius_m": 3.0, "weights": [0.25,0.25,0.25,0.25], "gamma": 0.5}}"#)
            .contains("NoPotentialGraph"));
        assert!(err(r#"{"scenes": {"generate": {"rooms": 4, "objects_per_room": 4, "size": 32}}, "seeds": [1], "bogus": 1}"#)
            .contains("bogus"));
        assert!(err(r#"{"scenes": {"generate": {"rooms": 4, "objects_per_room": 4, "size": 32}}, "seeds": [1],
                 "episode": {"matcher_error": 2.0}}"#)
            .contains("matcher_error"));
    }

    #[test]
    fn grid_is_worker_independent() {
        let cfg = small();
        let a = run_grid(&cfg, 1).unwrap();
        let b = run_grid(&cfg, 3).unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            let xs: Vec<String> = x.traces.iter().map(|t| t.to_jsonl()).collect();
            let ys: Vec<String> = y.traces.iter().map(|t| t.to_jsonl()).collect();
            assert_eq!(xs, ys);
        }
    }

    #[test]
    fn report_round_trips_through_disk() {
        let cfg = small();
        let tmp = tempfile::tempdir().unwrap();
        let (dir, report) = execute_run(&cfg, tmp.path(), 2).unwrap();
        let again = report_from_dir(&dir).unwrap();
        assert_eq!(report, again);
        assert!(dir.join("manifest.json").is_file());
        assert!(dir.join("traces").join("Full-m1.jsonl").is_file());
    }
}
