//! Grid-aligned potential memory.
//!
//! Each frontier estimate is blended into every cell within radius `R` of the
//! frontier with weight `alpha = max(0, 1 - d / R)`. A cell's exploration value
//! is the weighted sum of its four scalars damped by `1 / (1 + gamma * visits)`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::PotentialEstimate;
use crate::frontier::FrontierRegion;
use crate::grid::{Cell, Grid, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialNode {
    pub potential: f64,
    pub sem: f64,
    pub explore: f64,
    pub goal: f64,
    pub visits: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphParams {
    /// Propagation radius in meters.
    pub radius_m: f64,
    /// Weights for (potential, semantic, explore, goal); sum to 1.
    pub weights: [f64; 4],
    /// Revisit decay, > 0.
    pub gamma: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            radius_m: 2.0,
            weights: [0.25; 4],
            gamma: 0.5,
        }
    }
}

impl GraphParams {
    /// Normalizes non-negative raw weights to sum to one.
    pub fn with_weights_normalized(mut self, raw: [f64; 4]) -> Result<Self, GraphError> {
        let sum: f64 = raw.iter().sum();
        if raw.iter().any(|w| !(*w >= 0.0)) || !(sum > 0.0) {
            return Err(GraphError::InvalidParams(format!("bad weights {raw:?}")));
        }
        self.weights = raw.map(|w| w / sum);
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let err = |m: String| Err(GraphError::InvalidParams(m));
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return err(format!("radius must be positive, got {}", self.radius_m));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return err(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return err(format!("weights must be non-negative: {:?}", self.weights));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return err(format!("weights must sum to 1, got {sum}"));
        }
        Ok(())
    }
}

/// One mutation of the graph; replaying a log rebuilds the graph bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum GraphUpdate {
    Propagate {
        position: Point,
        estimate: PotentialEstimate,
    },
    Visit {
        cell: Cell,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphDumpRow {
    pub row: usize,
    pub col: usize,
    pub potential: f64,
    pub sem: f64,
    pub explore: f64,
    pub goal: f64,
    pub visits: u32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialGraph {
    nodes: Grid<PotentialNode>,
    cell_size: f64,
    params: GraphParams,
}

fn blend(old: f64, new: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * old + alpha * new
}

impl PotentialGraph {
    pub fn new(height: usize, width: usize, cell_size: f64, params: GraphParams) -> Result<Self, GraphError> {
        params.validate()?;
        Ok(Self {
            nodes: Grid::filled(height, width, PotentialNode::default()),
            cell_size,
            params,
        })
    }

    pub fn params(&self) -> &GraphParams {
        &self.params
    }

    pub fn node(&self, cell: Cell) -> &PotentialNode {
        &self.nodes[cell]
    }

    pub fn height(&self) -> usize {
        self.nodes.height()
    }

    pub fn width(&self) -> usize {
        self.nodes.width()
    }

    /// Influence weight of a frontier at `frontier_pos` on `cell`.
    pub fn alpha(&self, cell: Cell, frontier_pos: Point) -> f64 {
        let d = cell.center(self.cell_size).distance(frontier_pos);
        (1.0 - d / self.params.radius_m).max(0.0)
    }

    pub fn propagate(&mut self, frontier_pos: Point, estimate: &PotentialEstimate) {
        let reach = (self.params.radius_m / self.cell_size).ceil() as i64 + 1;
        let col = (frontier_pos.x / self.cell_size).floor() as i64;
        let row = (frontier_pos.y / self.cell_size).floor() as i64;
        let rows = (row - reach).max(0)..=(row + reach).min(self.height() as i64 - 1);
        for r in rows {
            let cols = (col - reach).max(0)..=(col + reach).min(self.width() as i64 - 1);
            for c in cols {
                let cell = Cell::new(r as usize, c as usize);
                let alpha = self.alpha(cell, frontier_pos);
                if alpha <= 0.0 {
                    continue;
                }
                let v = &estimate.vector;
                let mut n = self.nodes[cell];
                n.potential = blend(n.potential, estimate.aggregate, alpha);
                n.sem = blend(n.sem, v.sem, alpha);
                n.explore = blend(n.explore, v.explore, alpha);
                n.goal = blend(n.goal, v.goal, alpha);
                self.nodes.set(cell, n);
            }
        }
    }

    pub fn record_visit(&mut self, cell: Cell) {
        let mut n = self.nodes[cell];
        n.visits += 1;
        self.nodes.set(cell, n);
    }

    pub fn apply(&mut self, update: &GraphUpdate) {
        match update {
            GraphUpdate::Propagate { position, estimate } => self.propagate(*position, estimate),
            GraphUpdate::Visit { cell } => self.record_visit(*cell),
        }
    }

    pub fn replay<'a>(
        height: usize,
        width: usize,
        cell_size: f64,
        params: GraphParams,
        log: impl IntoIterator<Item = &'a GraphUpdate>,
    ) -> Result<Self, GraphError> {
        let mut g = Self::new(height, width, cell_size, params)?;
        for u in log {
            g.apply(u);
        }
        Ok(g)
    }

    pub fn exploration_value(&self, cell: Cell) -> f64 {
        let n = &self.nodes[cell];
        let [w_pot, w_sem, w_explore, w_goal] = self.params.weights;
        let score = w_pot * n.potential + w_sem * n.sem + w_explore * n.explore + w_goal * n.goal;
        score / (1.0 + self.params.gamma * n.visits as f64)
    }

    pub fn score_frontier(&self, region: &FrontierRegion) -> f64 {
        self.exploration_value(region.representative)
    }

    pub fn dump_rows(&self) -> Vec<GraphDumpRow> {
        self.nodes
            .iter()
            .map(|(c, n)| GraphDumpRow {
                row: c.row,
                col: c.col,
                potential: n.potential,
                sem: n.sem,
                explore: n.explore,
                goal: n.goal,
                visits: n.visits,
                value: self.exploration_value(c),
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.dump_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimateSource, PotentialVector};
    use proptest::prelude::*;

    fn est(p: f64) -> PotentialEstimate {
        PotentialEstimate {
            vector: PotentialVector::new(p, p, p),
            aggregate: p,
            source: EstimateSource::Oracle,
        }
    }

    fn graph() -> PotentialGraph {
        PotentialGraph::new(20, 20, 0.25, GraphParams::default()).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        let bad = GraphParams {
            weights: [0.5, 0.5, 0.5, 0.0],
            ..Default::default()
        };
        assert!(PotentialGraph::new(4, 4, 0.25, bad).is_err());
        let bad = GraphParams {
            gamma: 0.0,
            ..Default::default()
        };
        assert!(PotentialGraph::new(4, 4, 0.25, bad).is_err());
    }

    #[test]
    fn visits_accumulate() {
        let mut g = graph();
        let c = Cell::new(3, 3);
        g.record_visit(c);
        assert_eq!(g.node(c).visits, 1);
        for _ in 0..4 {
            g.record_visit(c);
        }
        assert_eq!(g.node(c).visits, 5);
        assert_eq!(g.node(Cell::new(3, 4)).visits, 0);
    }

    #[test]
    fn csv_dump_has_row_per_cell() {
        let mut g = graph();
        g.propagate(Cell::new(5, 5).center(0.25), &est(0.8));
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 20 * 20);
        assert!(text.starts_with("row,col,potential,sem,explore,goal,visits,value"));
    }

    proptest! {
        #[test]
        fn propagate_is_convex_and_local(
            prior in proptest::collection::vec((0usize..20, 0usize..20, 0.0f64..=1.0), 0..6),
            fr in 0usize..20, fc in 0usize..20, p in 0.0f64..=1.0,
        ) {
            let mut g = graph();
            for (r, c, v) in prior {
                g.propagate(Cell::new(r, c).center(0.25), &est(v));
            }
            let before = g.clone();
            let pos = Cell::new(fr, fc).center(0.25);
            g.propagate(pos, &est(p));
            for r in 0..20 {
                for c in 0..20 {
                    let cell = Cell::new(r, c);
                    let (old, new) = (before.node(cell), g.node(cell));
                    if cell.center(0.25).distance(pos) >= 2.0 {
                        prop_assert_eq!(old, new);
                    }
                    let (lo, hi) = (old.potential.min(p), old.potential.max(p));
                    prop_assert!(new.potential >= lo - 1e-12 && new.potential <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn value_strictly_decays_with_visits(p in 0.01f64..=1.0, k in 0u32..20) {
            let mut g = graph();
            let c = Cell::new(10, 10);
            g.propagate(c.center(0.25), &est(p));
            for _ in 0..k { g.record_visit(c); }
            let e_k = g.exploration_value(c);
            g.record_visit(c);
            prop_assert!(g.exploration_value(c) < e_k);
        }

        #[test]
        fn ranking_survives_weight_rescaling(
            raw in proptest::array::uniform4(0.01f64..1.0), scale in 0.1f64..10.0,
            updates in proptest::collection::vec((0usize..20, 0usize..20, 0.0f64..=1.0), 1..5),
        ) {
            let base = GraphParams::default().with_weights_normalized(raw).unwrap();
            let scaled = GraphParams::default().with_weights_normalized(raw.map(|w| w * scale)).unwrap();
            let mut a = PotentialGraph::new(20, 20, 0.25, base).unwrap();
            let mut b = PotentialGraph::new(20, 20, 0.25, scaled).unwrap();
            for (r, c, v) in &updates {
                let e = PotentialEstimate { vector: PotentialVector::new(*v, 1.0 - v, v * v), aggregate: *v, source: EstimateSource::Oracle };
                a.propagate(Cell::new(*r, *c).center(0.25), &e);
                b.propagate(Cell::new(*r, *c).center(0.25), &e);
            }
            let cells: Vec<Cell> = (0..20).flat_map(|r| (0..20).map(move |c| Cell::new(r, c))).collect();
            let argmax = |g: &PotentialGraph| cells.iter().copied().max_by(|x, y| g.exploration_value(*x).total_cmp(&g.exploration_value(*y)).then(y.cmp(x))).unwrap();
            let (ma, mb) = (argmax(&a), argmax(&b));
            prop_assert!((a.exploration_value(ma) - a.exploration_value(mb)).abs() < 1e-12);
        }
    }
}
