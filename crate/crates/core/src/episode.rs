//! The embodied loop: sense, extract frontiers, estimate, propagate, decide,
//! move. Every decision is logged to an [`EpisodeTrace`].

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimator::{
    EstimateRequest, OracleConfig, OracleEstimator, PotentialEstimate, PotentialEstimator,
};
use crate::frontier::{frontier_regions, snapshot_frontier, FrontierConfig, FrontierRegion};
use crate::grid::{Cell, Grid};
use crate::metrics::EpisodeOutcome;
use crate::policy::{
    belief_distances, decide, plan_path, Action, DecideContext, DecisionRecord, FrontierCandidate,
    FrontierChoice, Knowledge, Matcher, OracleValidator, PolicyError, ProposeContext,
    RemoteValidator, Validator,
};
use crate::potential_graph::{GraphParams, GraphUpdate, PotentialGraph};
use crate::remote::{Fallback, RemoteConfig, RemoteEstimator, RemoteValidatorClient};
use crate::scene::{goal_satisfied, GoalSpec, SceneMap};
use crate::sim::{move_along, sense_panorama, AgentState, ExploredMemory, OccupancyBelief, SensorConfig};

pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoFrontierImage,
    NoPotentialGraph,
    NoReconsideration,
    RandomFrontier,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoFrontierImage,
        Variant::NoPotentialGraph,
        Variant::NoReconsideration,
        Variant::RandomFrontier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "Full",
            Variant::NoFrontierImage => "NoFrontierImage",
            Variant::NoPotentialGraph => "NoPotentialGraph",
            Variant::NoReconsideration => "NoReconsideration",
            Variant::RandomFrontier => "RandomFrontier",
        }
    }

    fn uses_graph(self) -> bool {
        self != Variant::NoPotentialGraph
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        // accepts `NoPotentialGraph`, `no-potential-graph`, `no_potential_graph`
        let key: String = s.chars().filter(|c| !matches!(c, '-' | '_')).collect();
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub sensor: SensorConfig,
    pub frontier: FrontierConfig,
    /// Oracle estimator caps and noise; the noise seed is replaced by the episode seed.
    pub oracle: OracleConfig,
    pub graph: GraphParams,
    /// Probability the memory matcher proposes a look-alike instead of a true match.
    pub matcher_error: f64,
    pub validator_fp: f64,
    pub validator_fn: f64,
    pub retry_limit: u32,
    /// Decisions allowed per goal.
    pub max_steps: u32,
    /// Meters the agent may walk per goal; a declaration must land within it.
    pub max_travel_m: Option<f64>,
    /// Bonus for frontiers whose snapshot shows a goal match.
    pub image_bonus: f64,
    pub remote_estimator: Option<RemoteConfig>,
    pub remote_validator: Option<RemoteConfig>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            frontier: FrontierConfig::default(),
            oracle: OracleConfig::default(),
            graph: GraphParams::default(),
            matcher_error: 0.0,
            validator_fp: 0.0,
            validator_fn: 0.0,
            retry_limit: 3,
            max_steps: 250,
            max_travel_m: None,
            image_bonus: 0.5,
            remote_estimator: None,
            remote_validator: None,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.oracle.noise.validate()?;
        self.graph.validate().map_err(|e| e.to_string())?;
        for (name, v) in [
            ("matcher_error", self.matcher_error),
            ("validator_fp", self.validator_fp),
            ("validator_fn", self.validator_fn),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must be in [0,1], got {v}"));
            }
        }
        if self.retry_limit == 0 {
            return Err("retry_limit must be at least 1".into());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".into());
        }
        if !(self.sensor.range_cells > 0.0) || self.sensor.views == 0 {
            return Err("sensor needs a positive range and at least one view".into());
        }
        if let Some(b) = self.max_travel_m {
            if !(b > 0.0) {
                return Err(format!("max_travel_m must be positive, got {b}"));
            }
        }
        if self.frontier.min_cluster_size == 0 {
            return Err("min_cluster_size must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    /// Declared a memory object that does not satisfy the goal.
    WrongTarget,
    NoActionAvailable,
    MaxSteps,
    TravelBudget,
    RemoteFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub trace_version: u32,
    pub scene: String,
    pub seed: u64,
    pub metric_seed: u64,
    pub variant: Variant,
    pub spawn: Cell,
    pub goals: Vec<GoalSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierLog {
    pub id: usize,
    pub representative: Cell,
    pub size: usize,
    pub unknown_ray_fraction: f64,
    pub estimate: PotentialEstimate,
    /// Score the policy ranked by (graph value, or raw aggregate without the graph).
    pub score: f64,
    /// Objects in the frontier snapshot handed to the policy.
    pub shown_objects: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub subtask: usize,
    pub step: u64,
    pub agent: Cell,
    pub known_cells: usize,
    pub frontiers: Vec<FrontierLog>,
    /// Graph mutations in application order: this step's propagations, then
    /// one visit per traversed path cell.
    pub updates: Vec<GraphUpdate>,
    pub decision: DecisionRecord,
    pub path: Vec<Cell>,
    /// Cumulative meters walked after the move.
    pub path_length: f64,
    pub estimator_fallbacks: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRecord {
    pub subtask: usize,
    pub goal: GoalSpec,
    pub termination: Termination,
    pub outcome: EpisodeOutcome,
    pub final_cell: Cell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Episode(EpisodeHeader),
    Decision(StepRecord),
    Subtask(SubtaskRecord),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeTrace {
    pub lines: Vec<TraceLine>,
}

impl EpisodeTrace {
    pub fn header(&self) -> Option<&EpisodeHeader> {
        self.lines.iter().find_map(|l| match l {
            TraceLine::Episode(h) => Some(h),
            _ => None,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.lines.iter().filter_map(|l| match l {
            TraceLine::Decision(s) => Some(s),
            _ => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.steps().map(|s| &s.decision)
    }

    pub fn subtasks(&self) -> impl Iterator<Item = &SubtaskRecord> {
        self.lines.iter().filter_map(|l| match l {
            TraceLine::Subtask(s) => Some(s),
            _ => None,
        })
    }

    pub fn outcomes(&self) -> Vec<EpisodeOutcome> {
        self.subtasks().map(|s| s.outcome.clone()).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for line in &self.lines {
            serde_json::to_writer(&mut out, line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, String> {
        let mut lines = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
            if line.trim().is_empty() {
                continue;
            }
            lines.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
        }
        Ok(Self { lines })
    }
}

/// Episode trace plus the final potential graph of each goal, for replay checks.
pub struct EpisodeRun {
    pub trace: EpisodeTrace,
    pub graphs: Vec<Option<PotentialGraph>>,
}

/// Reachable member of `region` nearest its representative; diagonal
/// doorway gaps can leave the representative itself 4-unreachable.
fn approach_cell(region: &FrontierRegion, dist: &Grid<Option<usize>>, cell_size: f64) -> Cell {
    let rep = region.representative.center(cell_size);
    *region
        .cells
        .iter()
        .filter(|&&c| dist[c].is_some())
        .min_by(|a, b| {
            let da = a.center(cell_size).distance(rep);
            let db = b.center(cell_size).distance(rep);
            da.total_cmp(&db).then(a.cmp(b))
        })
        .expect("regions are filtered to reachable ones")
}

/// Identifies one episode within a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub scene_id: String,
    pub variant: Variant,
    /// Keys every random stream of the episode.
    pub seed: u64,
    /// Repetition label, carried into the trace header.
    pub metric_seed: u64,
}

impl EpisodeSpec {
    pub fn new(scene_id: impl Into<String>, variant: Variant, seed: u64) -> Self {
        Self {
            scene_id: scene_id.into(),
            variant,
            seed,
            metric_seed: 0,
        }
    }
}

pub fn run_episode(scene: &SceneMap, spec: &EpisodeSpec, cfg: &EpisodeConfig) -> EpisodeTrace {
    run_episode_detailed(scene, spec, cfg).trace
}

pub fn run_episode_detailed(scene: &SceneMap, spec: &EpisodeSpec, cfg: &EpisodeConfig) -> EpisodeRun {
    let (variant, seed) = (spec.variant, spec.seed);
    let mut oracle = cfg.oracle.clone();
    oracle.noise.seed = seed;
    let estimator: Box<dyn PotentialEstimator> = match &cfg.remote_estimator {
        Some(rc) => Box::new(RemoteEstimator::new(rc.clone().with_env_token())),
        None => Box::new(OracleEstimator::new(oracle)),
    };
    let estimator_fallback = cfg.remote_estimator.as_ref().map(|r| r.fallback);
    let prior = 1.0 - cfg.matcher_error;
    let validator: Box<dyn Validator> = match &cfg.remote_validator {
        Some(rc) => Box::new(RemoteValidator {
            client: RemoteValidatorClient::new(rc.clone().with_env_token()),
        }),
        None => Box::new(OracleValidator {
            fp_rate: cfg.validator_fp,
            fn_rate: cfg.validator_fn,
            seed,
            prior,
        }),
    };
    let validator_fallback = cfg
        .remote_validator
        .as_ref()
        .map_or(Fallback::FailEpisode, |r| r.fallback);
    let frontier_choice = if variant == Variant::RandomFrontier {
        FrontierChoice::Random { seed }
    } else {
        FrontierChoice::Argmax
    };

    let cs = scene.cell_size;
    let mut trace = EpisodeTrace::default();
    trace.lines.push(TraceLine::Episode(EpisodeHeader {
        trace_version: TRACE_VERSION,
        scene: spec.scene_id.clone(),
        seed,
        metric_seed: spec.metric_seed,
        variant,
        spawn: scene.spawn,
        goals: scene.goals.clone(),
    }));
    let mut graphs = Vec::new();

    let mut agent = AgentState::at(scene.spawn, cs);
    let mut belief = OccupancyBelief::for_scene(scene);
    let mut memory = ExploredMemory::new();
    let mut step: u64 = 0;

    for (k, goal_spec) in scene.goals.iter().enumerate() {
        let goal = scene.resolve(goal_spec);
        let mut graph = variant
            .uses_graph()
            .then(|| PotentialGraph::new(scene.height, scene.width, cs, cfg.graph.clone()).expect("graph params validated"));
        let start_cell = agent.cell(scene);
        let start_length = agent.path_length;
        let optimal_cells = scene.optimal_path_cells(goal_spec, start_cell).unwrap_or(0).max(1);
        let mut decisions = 0u32;

        let (termination, confidence) = loop {
            if decisions >= cfg.max_steps {
                break (Termination::MaxSteps, 0.0);
            }
            let over_budget = |a: &AgentState| cfg.max_travel_m.is_some_and(|b| a.path_length - start_length > b);
            if over_budget(&agent) {
                break (Termination::TravelBudget, 0.0);
            }
            let (b, snap) = sense_panorama(scene, &agent, &belief, step, &cfg.sensor);
            belief = b;
            memory.push(snap);
            let now = step;
            step += 1;
            let here = agent.cell(scene);
            let dist = belief_distances(&belief, here);

            let mut regions = frontier_regions(&belief, &cfg.frontier, cs);
            regions.retain(|r| r.cells.iter().any(|&c| dist[c].is_some()));
            if regions.is_empty() && cfg.frontier.min_cluster_size > 1 {
                // a one-cell doorway leaves a one-cell frontier; without this
                // the room behind it could never be entered
                let singles = FrontierConfig {
                    min_cluster_size: 1,
                    ..cfg.frontier.clone()
                };
                regions = frontier_regions(&belief, &singles, cs);
                regions.retain(|r| r.cells.iter().any(|&c| dist[c].is_some()));
            }
            for r in &mut regions {
                r.snapshot = Some(snapshot_frontier(scene, &belief, r, &cfg.sensor, &cfg.frontier));
            }
            let requests: Vec<EstimateRequest<'_>> = regions
                .iter()
                .map(|r| EstimateRequest {
                    map: scene,
                    belief: &belief,
                    region: r,
                    snapshot: r.snapshot.as_ref().expect("snapshot taken"),
                    goal: &goal,
                    step: now,
                })
                .collect();
            let mut fallbacks = 0u32;
            let mut failed = false;
            let estimates: Vec<PotentialEstimate> = estimator
                .estimate_batch(&requests)
                .into_iter()
                .map(|r| match r {
                    Ok(e) => e,
                    Err(e) => {
                        fallbacks += 1;
                        if estimator_fallback == Some(Fallback::FailEpisode) {
                            failed = true;
                        } else {
                            log::warn!("estimator unavailable, using neutral scores: {e}");
                        }
                        PotentialEstimate::neutral()
                    }
                })
                .collect();
            drop(requests);
            if failed {
                break (Termination::RemoteFailure, 0.0);
            }

            let mut updates = Vec::new();
            // unlogged if no decision comes of this step
            let before = graph.clone();
            if let Some(g) = graph.as_mut() {
                for (r, e) in regions.iter().zip(&estimates) {
                    let position = r.representative.center(cs);
                    g.propagate(position, e);
                    updates.push(GraphUpdate::Propagate {
                        position,
                        estimate: *e,
                    });
                }
            }
            let candidates: Vec<FrontierCandidate> = regions
                .iter()
                .zip(&estimates)
                .map(|(r, e)| FrontierCandidate {
                    id: r.id,
                    target: approach_cell(r, &dist, cs),
                    score: graph.as_ref().map_or(e.aggregate, |g| g.score_frontier(r)),
                    visible_objects: if variant == Variant::NoFrontierImage {
                        Vec::new()
                    } else {
                        r.snapshot.as_ref().unwrap().visible_objects.clone()
                    },
                })
                .collect();
            let frontier_logs: Vec<FrontierLog> = regions
                .iter()
                .zip(&estimates)
                .zip(&candidates)
                .map(|((r, e), c)| FrontierLog {
                    id: r.id,
                    representative: r.representative,
                    size: r.cells.len(),
                    unknown_ray_fraction: r.snapshot.as_ref().unwrap().unknown_ray_fraction,
                    estimate: *e,
                    score: c.score,
                    shown_objects: c.visible_objects.iter().map(|o| o.id).collect(),
                })
                .collect();

            let knowledge = Knowledge {
                memory: &memory,
                frontiers: &candidates,
                reachable: Some(&dist),
            };
            let ctx = DecideContext {
                propose: ProposeContext {
                    matcher: Matcher {
                        error_rate: cfg.matcher_error,
                        seed,
                    },
                    frontier_choice,
                    image_bonus: cfg.image_bonus,
                    step: now,
                    attempt: 0,
                },
                validator: validator.as_ref(),
                validator_fallback,
                retry_limit: cfg.retry_limit,
                reconsideration: variant != Variant::NoReconsideration,
                prior_confidence: prior,
                map: scene,
            };
            let (action, mut record) = match decide(&goal, &knowledge, &ctx) {
                Ok(x) => x,
                Err(e) => {
                    graph = before;
                    if let PolicyError::Validator(e) = e {
                        log::warn!("validator failed: {e}");
                        break (Termination::RemoteFailure, 0.0);
                    }
                    break (Termination::NoActionAvailable, 0.0);
                }
            };
            decisions += 1;

            let (target, declared) = match action {
                Action::Frontier { region } => {
                    let c = candidates.iter().find(|c| c.id == region).expect("active region");
                    (c.target, None)
                }
                Action::Memory { snapshot, object } => {
                    let obj = memory
                        .get(snapshot)
                        .and_then(|s| s.visible_objects.iter().find(|o| o.id == object))
                        .expect("memory pair exists")
                        .clone();
                    (obj.position, Some(obj))
                }
            };
            let path = plan_path(&belief, here, target).expect("targets are filtered to reachable cells");
            agent = move_along(scene, &agent, &path).expect("planned over observed free cells");
            if let Some(g) = graph.as_mut() {
                for &c in &path {
                    g.record_visit(c);
                    updates.push(GraphUpdate::Visit { cell: c });
                }
            }
            let success = declared.as_ref().map(|o| {
                let satisfied = goal_satisfied(scene, goal_spec, agent.position);
                record.correct = Some(satisfied && goal.matches(o));
                satisfied
            });
            let confidence = record.confidence.unwrap_or(0.0);
            trace.lines.push(TraceLine::Decision(StepRecord {
                subtask: k,
                step: now,
                agent: here,
                known_cells: belief.known_count(),
                frontiers: frontier_logs,
                updates,
                decision: record,
                path,
                path_length: agent.path_length,
                estimator_fallbacks: fallbacks,
            }));
            match success {
                Some(_) if over_budget(&agent) => break (Termination::TravelBudget, confidence),
                Some(true) => break (Termination::Success, confidence),
                Some(false) => break (Termination::WrongTarget, confidence),
                None => {}
            }
        };

        trace.lines.push(TraceLine::Subtask(SubtaskRecord {
            subtask: k,
            goal: goal_spec.clone(),
            termination,
            outcome: EpisodeOutcome {
                success: termination == Termination::Success,
                path_length: agent.path_length - start_length,
                optimal_path_length: optimal_cells as f64 * cs,
                decisions,
                confidence,
            },
            final_cell: agent.cell(scene),
        }));
        graphs.push(graph);
    }
    EpisodeRun { trace, graphs }
}
