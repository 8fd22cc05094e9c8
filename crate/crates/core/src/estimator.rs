//! Frontier potential estimation: three scores per frontier snapshot
//! (semantic richness, explorability, goal relevance) and their aggregate.
//!
//! [`OracleEstimator`] reads the ground truth hidden behind a frontier and adds
//! seeded noise; [`crate::remote::RemoteEstimator`] asks an external model.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontier::{FrontierRegion, FrontierSnapshot};
use crate::grid::Cell;
use crate::rng::{keyed, Stream};
use crate::scene::{ResolvedGoal, SceneMap};
use crate::sim::{CellBelief, OccupancyBelief};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("remote model unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialVector {
    pub sem: f64,
    pub explore: f64,
    pub goal: f64,
}

impl PotentialVector {
    pub fn new(sem: f64, explore: f64, goal: f64) -> Self {
        Self { sem, explore, goal }
    }

    pub fn neutral() -> Self {
        Self::new(0.5, 0.5, 0.5)
    }

    pub fn clamped(self) -> Self {
        Self::new(clamp01(self.sem), clamp01(self.explore), clamp01(self.goal))
    }

    pub fn is_valid(&self) -> bool {
        [self.sem, self.explore, self.goal]
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
    }
}

fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Scalar utility of a potential vector: the unweighted mean of its components.
pub fn aggregate(v: &PotentialVector) -> f64 {
    (v.sem + v.explore + v.goal) / 3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    Oracle,
    Remote,
    /// Neutral substitute used after a remote failure.
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialEstimate {
    pub vector: PotentialVector,
    pub aggregate: f64,
    pub source: EstimateSource,
}

impl PotentialEstimate {
    pub fn from_vector(vector: PotentialVector, source: EstimateSource) -> Self {
        Self {
            vector,
            aggregate: aggregate(&vector),
            source,
        }
    }

    pub fn neutral() -> Self {
        Self::from_vector(PotentialVector::neutral(), EstimateSource::Fallback)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleNoise {
    pub seed: u64,
    pub sigma: f64,
    pub flip_rate: f64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self {
            seed: 0,
            sigma: 0.0,
            flip_rate: 0.0,
        }
    }
}

impl OracleNoise {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(0.0..=1.0).contains(&self.flip_rate) {
            return Err(format!("flip_rate must be in [0,1], got {}", self.flip_rate));
        }
        Ok(())
    }

    /// Perturbs and clamps `v`; the draws depend only on `(seed, step, region)`.
    pub fn apply(&self, v: PotentialVector, step: u64, region: u64) -> PotentialVector {
        if self.sigma == 0.0 && self.flip_rate == 0.0 {
            return v.clamped();
        }
        let mut rng = keyed(self.seed, Stream::Estimator, step, region);
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
        let mut perturb = |x: f64| {
            let flip: f64 = rng.random();
            let replacement: f64 = rng.random();
            let jitter = normal.sample(&mut rng);
            if flip < self.flip_rate {
                replacement
            } else {
                x + jitter
            }
        };
        let sem = perturb(v.sem);
        let explore = perturb(v.explore);
        let goal = perturb(v.goal);
        PotentialVector::new(sem, explore, goal).clamped()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Object count that saturates semantic richness.
    pub sem_cap: f64,
    /// Hidden free area (cells) that saturates explorability.
    pub area_cap: f64,
    /// Related-object count that saturates the soft goal score.
    pub cooccurrence_cap: f64,
    /// Depth (cells) of the hidden region explored behind a frontier.
    pub horizon_cells: usize,
    pub noise: OracleNoise,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            sem_cap: 6.0,
            area_cap: 100.0,
            cooccurrence_cap: 8.0,
            horizon_cells: 12,
            noise: OracleNoise::default(),
        }
    }
}

/// Everything an estimator may consult for one frontier.
pub struct EstimateRequest<'a> {
    pub map: &'a SceneMap,
    pub belief: &'a OccupancyBelief,
    pub region: &'a FrontierRegion,
    pub snapshot: &'a FrontierSnapshot,
    pub goal: &'a ResolvedGoal,
    pub step: u64,
}

pub trait PotentialEstimator: Send + Sync {
    fn estimate(&self, req: &EstimateRequest<'_>) -> Result<PotentialEstimate, EstimatorError>;

    /// Estimates a batch; results come back in request order.
    fn estimate_batch(
        &self,
        reqs: &[EstimateRequest<'_>],
    ) -> Vec<Result<PotentialEstimate, EstimatorError>> {
        reqs.iter().map(|r| self.estimate(r)).collect()
    }
}

/// Ground-truth free cells still unknown to the agent, reachable from the
/// region through unknown free cells within `horizon` steps.
pub fn hidden_component(
    map: &SceneMap,
    belief: &OccupancyBelief,
    region: &FrontierRegion,
    horizon: usize,
) -> BTreeSet<Cell> {
    let hidden = |c: Cell| belief.get(c) == CellBelief::Unknown && map.is_free(c);
    let mut out = BTreeSet::new();
    let mut queue = VecDeque::new();
    for &c in &region.cells {
        for n in belief.cells.neighbors4(c) {
            if hidden(n) && out.insert(n) {
                queue.push_back((n, 1usize));
            }
        }
    }
    while let Some((c, depth)) = queue.pop_front() {
        if depth >= horizon {
            continue;
        }
        for n in belief.cells.neighbors4(c) {
            if hidden(n) && out.insert(n) {
                queue.push_back((n, depth + 1));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct OracleEstimator {
    pub config: OracleConfig,
}

impl OracleEstimator {
    pub fn new(config: OracleConfig) -> Self {
        Self { config }
    }

    /// Noise-free scores.
    pub fn clean_vector(&self, req: &EstimateRequest<'_>) -> PotentialVector {
        let cfg = &self.config;
        let hidden = hidden_component(req.map, req.belief, req.region, cfg.horizon_cells);
        let inside: Vec<_> = req
            .map
            .objects
            .iter()
            .filter(|o| hidden.contains(&o.position))
            .collect();
        let sem = inside.len() as f64 / cfg.sem_cap;
        let explore = hidden.len() as f64 / cfg.area_cap;
        let goal = if inside.iter().any(|o| req.goal.matches(o)) {
            1.0
        } else {
            inside.iter().filter(|o| req.goal.related(o)).count() as f64 / cfg.cooccurrence_cap
        };
        PotentialVector::new(sem, explore, goal).clamped()
    }
}

impl PotentialEstimator for OracleEstimator {
    fn estimate(&self, req: &EstimateRequest<'_>) -> Result<PotentialEstimate, EstimatorError> {
        let clean = self.clean_vector(req);
        let noisy = self
            .config
            .noise
            .apply(clean, req.step, req.region.id as u64);
        Ok(PotentialEstimate::from_vector(noisy, EstimateSource::Oracle))
    }
}
