//! Decision layer: memory-vs-frontier proposals, the validate-or-re-propose
//! loop for memory declarations, and path planning over the belief.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::EstimatorError;
use crate::grid::{Cell, Grid};
use crate::remote::{Fallback, RemoteValidatorClient};
use crate::rng::{keyed, Stream};
use crate::scene::{goal_satisfied, ObjectInstance, ResolvedGoal, SceneMap};
use crate::sim::{ExploredMemory, MemorySnapshot, OccupancyBelief};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no action available: memory and frontiers exhausted")]
    NoActionAvailable,
    #[error("no path from {from:?} to {to:?} over observed free space")]
    Unreachable { from: Cell, to: Cell },
    #[error("validator failed: {0}")]
    Validator(EstimatorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    /// Declare object `object` seen in memory snapshot `snapshot` as the goal.
    Memory { snapshot: usize, object: u32 },
    /// Explore the active frontier region `region`.
    Frontier { region: usize },
}

/// Only memory declarations go through validation.
pub fn needs_refinement(a: &Action) -> bool {
    matches!(a, Action::Memory { .. })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    Confirm,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Confidence that the verdict itself is right.
    pub confidence: f64,
    pub rationale: String,
}

impl Verdict {
    pub fn confirm(confidence: f64) -> Self {
        Self {
            kind: VerdictKind::Confirm,
            confidence,
            rationale: String::new(),
        }
    }

    pub fn reject(confidence: f64) -> Self {
        Self {
            kind: VerdictKind::Reject,
            confidence,
            rationale: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step: u64,
    pub candidates: Vec<Action>,
    pub verdicts: Vec<Verdict>,
    pub final_action: Action,
    /// Probability the executed memory action is correct; `None` for frontier moves.
    pub confidence: Option<f64>,
    /// Executed although the validator rejected it.
    pub forced: bool,
    /// The forced execution happened because nothing was left to propose.
    pub exhausted: bool,
    pub reconsideration: bool,
    /// Ground truth for executed memory actions, filled in by the episode runner.
    #[serde(default)]
    pub correct: Option<bool>,
}

impl DecisionRecord {
    /// Checks the record against the validate-or-re-propose rules.
    pub fn check_conformance(&self, retry_limit: u32) -> Result<(), String> {
        let n = self.candidates.len();
        if n == 0 {
            return Err("no candidates".into());
        }
        if self.candidates[n - 1] != self.final_action {
            return Err("final action is not the last candidate".into());
        }
        for (i, a) in self.candidates.iter().enumerate() {
            if self.candidates[..i].contains(a) {
                return Err(format!("candidate {i} repeats"));
            }
            if !needs_refinement(a) && i + 1 != n {
                return Err(format!("frontier candidate {i} was not final"));
            }
        }
        if !self.reconsideration {
            return if self.verdicts.is_empty() && n == 1 && !self.forced {
                Ok(())
            } else {
                Err("reconsideration disabled but record shows validation".into())
            };
        }
        let memory_candidates = self.candidates.iter().filter(|a| needs_refinement(a)).count();
        if self.verdicts.len() != memory_candidates {
            return Err(format!(
                "{} verdicts for {memory_candidates} memory candidates",
                self.verdicts.len()
            ));
        }
        let last_is_memory = needs_refinement(&self.final_action);
        let rejected_prefix = if last_is_memory { n - 1 } else { n.saturating_sub(1) };
        if self.verdicts[..rejected_prefix.min(self.verdicts.len())]
            .iter()
            .any(|v| v.kind != VerdictKind::Reject)
        {
            return Err("a non-final memory candidate was not rejected".into());
        }
        if last_is_memory {
            let last = self.verdicts.last().expect("memory candidate has a verdict");
            match (last.kind, self.forced) {
                (VerdictKind::Confirm, false) => {}
                (VerdictKind::Reject, true) => {
                    if !self.exhausted && self.verdicts.len() != retry_limit as usize {
                        return Err(format!(
                            "forced after {} rejections, limit {retry_limit}",
                            self.verdicts.len()
                        ));
                    }
                }
                _ => return Err("final memory candidate neither confirmed nor forced".into()),
            }
        } else if self.forced {
            return Err("frontier action marked forced".into());
        }
        if self.verdicts.len() > retry_limit as usize {
            return Err("more rejections than the retry limit".into());
        }
        Ok(())
    }
}

/// A frontier the policy may pick, with the score it should rank by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierCandidate {
    pub id: usize,
    pub target: Cell,
    pub score: f64,
    /// Objects shown in the frontier snapshot; empty when images are withheld.
    pub visible_objects: Vec<ObjectInstance>,
}

pub struct Knowledge<'a> {
    pub memory: &'a ExploredMemory,
    pub frontiers: &'a [FrontierCandidate],
    /// BFS distances over observed free space from the agent; memory objects
    /// outside it are ignored. `None` treats everything as reachable.
    pub reachable: Option<&'a Grid<Option<usize>>>,
}

/// Memory matcher with a false-positive knob: with probability `error_rate`
/// it proposes a look-alike object instead of a true match.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matcher {
    pub error_rate: f64,
    pub seed: u64,
}

impl Matcher {
    pub fn exact() -> Self {
        Self {
            error_rate: 0.0,
            seed: 0,
        }
    }

    fn slips(&self, step: u64, attempt: u32) -> bool {
        let u: f64 = keyed(self.seed, Stream::Matcher, step, attempt as u64).random();
        u < self.error_rate
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrontierChoice {
    Argmax,
    /// Uniform among the remaining frontiers.
    Random { seed: u64 },
}

#[derive(Clone, Copy, Debug)]
pub struct ProposeContext {
    pub matcher: Matcher,
    pub frontier_choice: FrontierChoice,
    /// Added to a frontier's score when its snapshot shows a goal match.
    pub image_bonus: f64,
    pub step: u64,
    pub attempt: u32,
}

fn excluded_object(excluded: &[Action], id: u32) -> bool {
    excluded
        .iter()
        .any(|a| matches!(a, Action::Memory { object, .. } if *object == id))
}

/// Primary policy. Prefers a memory object matching the goal (most recent
/// snapshot first, then lowest object id); otherwise the best frontier.
pub fn propose(
    goal: &ResolvedGoal,
    knowledge: &Knowledge<'_>,
    excluded: &[Action],
    ctx: &ProposeContext,
) -> Result<Action, PolicyError> {
    let reachable = |c: Cell| {
        knowledge
            .reachable
            .is_none_or(|d| d.get(c).is_some_and(|x| x.is_some()))
    };
    let mut best_true = None;
    let mut best_confusable = None;
    for (idx, snap) in knowledge.memory.snapshots().iter().enumerate().rev() {
        let mut objects: Vec<&ObjectInstance> = snap.visible_objects.iter().collect();
        objects.sort_by_key(|o| o.id);
        for o in objects {
            if excluded_object(excluded, o.id) || !reachable(o.position) {
                continue;
            }
            let action = Action::Memory {
                snapshot: idx,
                object: o.id,
            };
            if best_true.is_none() && goal.matches(o) {
                best_true = Some(action);
            }
            if best_confusable.is_none() && goal.confusable(o) {
                best_confusable = Some(action);
            }
        }
        if best_true.is_some() && best_confusable.is_some() {
            break;
        }
    }
    let slip = ctx.matcher.slips(ctx.step, ctx.attempt);
    if slip {
        if let Some(a) = best_confusable {
            return Ok(a);
        }
    }
    if let Some(a) = best_true {
        return Ok(a);
    }

    let open: Vec<&FrontierCandidate> = knowledge
        .frontiers
        .iter()
        .filter(|f| !excluded.contains(&Action::Frontier { region: f.id }))
        .collect();
    if open.is_empty() {
        return Err(PolicyError::NoActionAvailable);
    }
    let chosen = match ctx.frontier_choice {
        FrontierChoice::Random { seed } => {
            let i = keyed(seed, Stream::RandomFrontier, ctx.step, ctx.attempt as u64)
                .random_range(0..open.len());
            open[i]
        }
        FrontierChoice::Argmax => {
            let value = |f: &FrontierCandidate| {
                let shows_goal = f.visible_objects.iter().any(|o| goal.matches(o));
                f.score + if shows_goal { ctx.image_bonus } else { 0.0 }
            };
            let mut best = open[0];
            for &f in &open[1..] {
                let (v, bv) = (value(f), value(best));
                if v > bv || (v == bv && f.id < best.id) {
                    best = f;
                }
            }
            best
        }
    };
    Ok(Action::Frontier { region: chosen.id })
}

pub struct ValidationRequest<'a> {
    pub goal: &'a ResolvedGoal,
    pub snapshot: &'a MemorySnapshot,
    pub object: &'a ObjectInstance,
    pub map: &'a SceneMap,
    pub step: u64,
    pub attempt: u32,
}

pub trait Validator {
    fn validate(&self, req: &ValidationRequest<'_>) -> Result<Verdict, EstimatorError>;
}

/// Ground-truth validator with seeded false-negative / false-positive flips.
///
/// Its confidence is the posterior that its verdict is right given the flip
/// rates and `prior`, the probability that a proposed candidate is correct.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleValidator {
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub seed: u64,
    pub prior: f64,
}

impl OracleValidator {
    pub fn exact() -> Self {
        Self {
            fp_rate: 0.0,
            fn_rate: 0.0,
            seed: 0,
            prior: 1.0,
        }
    }

    /// P(candidate correct | CONFIRM).
    pub fn confirm_posterior(&self) -> f64 {
        let good = self.prior * (1.0 - self.fn_rate);
        let bad = (1.0 - self.prior) * self.fp_rate;
        if good + bad == 0.0 {
            0.5
        } else {
            good / (good + bad)
        }
    }

    /// P(candidate wrong | REJECT).
    pub fn reject_posterior(&self) -> f64 {
        let good = self.prior * self.fn_rate;
        let bad = (1.0 - self.prior) * (1.0 - self.fp_rate);
        if good + bad == 0.0 {
            0.5
        } else {
            bad / (good + bad)
        }
    }
}

impl Validator for OracleValidator {
    fn validate(&self, req: &ValidationRequest<'_>) -> Result<Verdict, EstimatorError> {
        // the agent walks to the object's observed cell before declaring
        let approach = req.object.position.center(req.map.cell_size);
        let truth = req.goal.matches(req.object) && goal_satisfied(req.map, &req.goal.spec, approach);
        let u: f64 = keyed(self.seed, Stream::Validator, req.step, req.attempt as u64).random();
        let confirm = if truth { u >= self.fn_rate } else { u < self.fp_rate };
        Ok(if confirm {
            Verdict::confirm(self.confirm_posterior())
        } else {
            Verdict::reject(self.reject_posterior())
        })
    }
}

pub struct RemoteValidator {
    pub client: RemoteValidatorClient,
}

impl Validator for RemoteValidator {
    fn validate(&self, req: &ValidationRequest<'_>) -> Result<Verdict, EstimatorError> {
        let v = self.client.validate(
            req.goal,
            &req.snapshot.visible_objects,
            &req.snapshot.viewpoint,
            req.object,
        )?;
        Ok(Verdict {
            kind: if v.confirm {
                VerdictKind::Confirm
            } else {
                VerdictKind::Reject
            },
            confidence: v.confidence,
            rationale: v.rationale,
        })
    }
}

pub struct DecideContext<'a> {
    pub propose: ProposeContext,
    pub validator: &'a dyn Validator,
    pub validator_fallback: Fallback,
    pub retry_limit: u32,
    /// When false the first candidate is always executed.
    pub reconsideration: bool,
    /// Confidence attached to unvalidated memory actions.
    pub prior_confidence: f64,
    pub map: &'a SceneMap,
}

fn memory_object<'m>(memory: &'m ExploredMemory, a: &Action) -> Option<(&'m MemorySnapshot, &'m ObjectInstance)> {
    let Action::Memory { snapshot, object } = *a else {
        return None;
    };
    let snap = memory.get(snapshot)?;
    let obj = snap.visible_objects.iter().find(|o| o.id == object)?;
    Some((snap, obj))
}

/// Proposes, validates memory declarations and re-proposes on rejection until
/// a frontier is chosen, a declaration is confirmed, or `retry_limit`
/// rejections force the last candidate through.
pub fn decide(
    goal: &ResolvedGoal,
    knowledge: &Knowledge<'_>,
    ctx: &DecideContext<'_>,
) -> Result<(Action, DecisionRecord), PolicyError> {
    let step = ctx.propose.step;
    let mut record = DecisionRecord {
        step,
        candidates: Vec::new(),
        verdicts: Vec::new(),
        final_action: Action::Frontier { region: 0 },
        confidence: None,
        forced: false,
        exhausted: false,
        reconsideration: ctx.reconsideration,
        correct: None,
    };
    let mut excluded: Vec<Action> = Vec::new();
    loop {
        let pctx = ProposeContext {
            attempt: record.candidates.len() as u32,
            ..ctx.propose
        };
        let action = match propose(goal, knowledge, &excluded, &pctx) {
            Ok(a) => a,
            Err(PolicyError::NoActionAvailable) if !record.candidates.is_empty() => {
                let last = *record.candidates.last().unwrap();
                let verdict = record.verdicts.last().expect("rejected candidate");
                record.final_action = last;
                record.forced = true;
                record.exhausted = true;
                record.confidence = Some(1.0 - verdict.confidence);
                return Ok((last, record));
            }
            Err(e) => return Err(e),
        };
        record.candidates.push(action);
        record.final_action = action;
        if !needs_refinement(&action) {
            return Ok((action, record));
        }
        if !ctx.reconsideration {
            record.confidence = Some(ctx.prior_confidence);
            return Ok((action, record));
        }
        let (snapshot, object) =
            memory_object(knowledge.memory, &action).expect("proposed memory pair exists");
        let req = ValidationRequest {
            goal,
            snapshot,
            object,
            map: ctx.map,
            step,
            attempt: pctx.attempt,
        };
        let verdict = match ctx.validator.validate(&req) {
            Ok(v) => v,
            Err(e) => match ctx.validator_fallback {
                Fallback::FailEpisode => return Err(PolicyError::Validator(e)),
                Fallback::Neutral => {
                    log::warn!("validator unavailable, treating candidate as unverified: {e}");
                    Verdict {
                        kind: VerdictKind::Reject,
                        confidence: 0.5,
                        rationale: format!("fallback: {e}"),
                    }
                }
            },
        };
        let kind = verdict.kind;
        let confidence = verdict.confidence;
        record.verdicts.push(verdict);
        match kind {
            VerdictKind::Confirm => {
                record.confidence = Some(confidence);
                return Ok((action, record));
            }
            VerdictKind::Reject if record.verdicts.len() >= ctx.retry_limit as usize => {
                record.forced = true;
                record.confidence = Some(1.0 - confidence);
                return Ok((action, record));
            }
            VerdictKind::Reject => excluded.push(action),
        }
    }
}

/// BFS distances over `FreeObserved` cells from `from`.
pub fn belief_distances(belief: &OccupancyBelief, from: Cell) -> Grid<Option<usize>> {
    let mut dist = Grid::filled(belief.height(), belief.width(), None);
    if !belief.is_free(from) {
        return dist;
    }
    dist.set(from, Some(0));
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        let d = dist[c].unwrap();
        for n in belief.cells.neighbors4(c) {
            if belief.is_free(n) && dist[n].is_none() {
                dist.set(n, Some(d + 1));
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Shortest 4-connected path over observed free cells, excluding `from` and
/// including `to`. Neighbours are expanded in (row, col) order, so ties
/// resolve deterministically.
pub fn plan_path(belief: &OccupancyBelief, from: Cell, to: Cell) -> Result<Vec<Cell>, PolicyError> {
    if from == to {
        return Ok(Vec::new());
    }
    let unreachable = PolicyError::Unreachable { from, to };
    if !belief.is_free(from) || !belief.is_free(to) {
        return Err(unreachable);
    }
    let mut parent: Grid<Option<Cell>> = Grid::filled(belief.height(), belief.width(), None);
    let mut queue = VecDeque::from([from]);
    parent.set(from, Some(from));
    while let Some(c) = queue.pop_front() {
        if c == to {
            break;
        }
        for n in belief.cells.neighbors4(c) {
            if belief.is_free(n) && parent[n].is_none() {
                parent.set(n, Some(c));
                queue.push_back(n);
            }
        }
    }
    if parent[to].is_none() {
        return Err(unreachable);
    }
    let mut path = vec![to];
    let mut cur = to;
    while let Some(p) = parent[cur] {
        if p == from {
            break;
        }
        path.push(p);
        cur = p;
    }
    path.reverse();
    Ok(path)
}
