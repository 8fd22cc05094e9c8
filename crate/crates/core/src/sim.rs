//! Embodied loop primitives: panoramic sensing, occupancy belief, explored
//! memory and motion along waypoints.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{bresenham, Cell, Grid, Point};
use crate::scene::{ObjectInstance, Occupancy, SceneMap};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point,
    pub heading: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Point,
    pub heading: f64,
    pub step_count: u64,
    pub path_length: f64,
}

impl AgentState {
    pub fn at(cell: Cell, cell_size: f64) -> Self {
        Self {
            position: cell.center(cell_size),
            heading: 0.0,
            step_count: 0,
            path_length: 0.0,
        }
    }

    pub fn cell(&self, map: &SceneMap) -> Cell {
        self.position
            .cell(map.cell_size, map.height, map.width)
            .expect("agent inside the map")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellBelief {
    Unknown,
    FreeObserved,
    OccupiedObserved,
}

/// The agent's partial map. Cells only ever move out of `Unknown`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OccupancyBelief {
    pub cells: Grid<CellBelief>,
}

impl OccupancyBelief {
    pub fn unknown(height: usize, width: usize) -> Self {
        Self {
            cells: Grid::filled(height, width, CellBelief::Unknown),
        }
    }

    pub fn for_scene(map: &SceneMap) -> Self {
        Self::unknown(map.height, map.width)
    }

    pub fn height(&self) -> usize {
        self.cells.height()
    }

    pub fn width(&self) -> usize {
        self.cells.width()
    }

    pub fn get(&self, cell: Cell) -> CellBelief {
        self.cells[cell]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.cells.get(cell) == Some(&CellBelief::FreeObserved)
    }

    pub fn known_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|(_, b)| **b != CellBelief::Unknown)
            .count()
    }

    fn observe(&mut self, cell: Cell, state: CellBelief) {
        if self.cells[cell] == CellBelief::Unknown {
            self.cells.set(cell, state);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub step: u64,
    pub viewpoint: Pose,
    pub visible_objects: Vec<ObjectInstance>,
    pub view_descriptor: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExploredMemory {
    snapshots: Vec<MemorySnapshot>,
}

impl ExploredMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a snapshot; steps must be strictly increasing.
    pub fn push(&mut self, snapshot: MemorySnapshot) {
        if let Some(last) = self.snapshots.last() {
            assert!(
                snapshot.step > last.step,
                "memory steps must strictly increase ({} after {})",
                snapshot.step,
                last.step
            );
        }
        self.snapshots.push(snapshot);
    }

    pub fn snapshots(&self) -> &[MemorySnapshot] {
        &self.snapshots
    }

    pub fn get(&self, index: usize) -> Option<&MemorySnapshot> {
        self.snapshots.get(index)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Sensing radius in cells.
    pub range_cells: f64,
    pub hfov_deg: f64,
    pub views: u32,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            range_cells: 10.0,
            hfov_deg: 120.0,
            views: 3,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

impl SensorConfig {
    /// Index of the panoramic view whose field of view contains `bearing`, if any.
    pub fn view_for(&self, heading: f64, bearing: f64) -> Option<u32> {
        let half = self.hfov_deg.to_radians() / 2.0;
        (0..self.views).find(|&v| {
            let center = heading + v as f64 * TAU / self.views as f64;
            let off = wrap_angle(bearing - center);
            off.abs() <= half + 1e-9
        })
    }
}

/// Bearing from `from` to `to` in grid terms (x along columns, y along rows).
pub fn bearing(from: Cell, to: Cell) -> f64 {
    let dy = to.row as f64 - from.row as f64;
    let dx = to.col as f64 - from.col as f64;
    dy.atan2(dx)
}

fn cell_distance(a: Cell, b: Cell) -> f64 {
    let dy = a.row as f64 - b.row as f64;
    let dx = a.col as f64 - b.col as f64;
    dx.hypot(dy)
}

/// Unobstructed Bresenham line of sight on the ground-truth map.
pub fn line_of_sight(map: &SceneMap, from: Cell, to: Cell) -> bool {
    bresenham(from, to)
        .into_iter()
        .all(|c| map.occupancy[c] == Occupancy::Free)
}

/// Objects within range, inside some view and with clear line of sight from `origin`.
pub fn visible_objects(
    map: &SceneMap,
    origin: Cell,
    heading: f64,
    cfg: &SensorConfig,
) -> Vec<ObjectInstance> {
    map.objects
        .iter()
        .filter(|o| {
            cell_distance(origin, o.position) <= cfg.range_cells
                && (o.position == origin
                    || cfg.view_for(heading, bearing(origin, o.position)).is_some())
                && line_of_sight(map, origin, o.position)
        })
        .cloned()
        .collect()
}

/// Casts a ray to every cell in range across the panoramic views and updates
/// the belief in place: traversed cells become free, the first blocking cell
/// occupied.
pub fn sense_into(
    map: &SceneMap,
    origin: Cell,
    heading: f64,
    belief: &mut OccupancyBelief,
    cfg: &SensorConfig,
) {
    belief.observe(origin, CellBelief::FreeObserved);
    let r = cfg.range_cells.floor() as i64;
    let (r0, c0) = (origin.row as i64, origin.col as i64);
    for row in (r0 - r).max(0)..=(r0 + r).min(map.height as i64 - 1) {
        for col in (c0 - r).max(0)..=(c0 + r).min(map.width as i64 - 1) {
            let target = Cell::new(row as usize, col as usize);
            if target == origin || cell_distance(origin, target) > cfg.range_cells {
                continue;
            }
            if cfg.view_for(heading, bearing(origin, target)).is_none() {
                continue;
            }
            for c in bresenham(origin, target) {
                match map.occupancy[c] {
                    Occupancy::Free => belief.observe(c, CellBelief::FreeObserved),
                    Occupancy::Wall => {
                        belief.observe(c, CellBelief::OccupiedObserved);
                        break;
                    }
                }
            }
        }
    }
}

/// One panoramic observation: returns the updated belief and the memory snapshot.
pub fn sense_panorama(
    map: &SceneMap,
    agent: &AgentState,
    belief: &OccupancyBelief,
    step: u64,
    cfg: &SensorConfig,
) -> (OccupancyBelief, MemorySnapshot) {
    let origin = agent.cell(map);
    let mut next = belief.clone();
    sense_into(map, origin, agent.heading, &mut next, cfg);
    let snapshot = MemorySnapshot {
        step,
        viewpoint: Pose {
            position: agent.position,
            heading: agent.heading,
        },
        visible_objects: visible_objects(map, origin, agent.heading, cfg),
        view_descriptor: format!("pano-{step}-{}-{}", origin.row, origin.col),
    };
    (next, snapshot)
}

/// Moves the agent through `waypoints`, each 4-adjacent to the previous cell.
pub fn move_along(
    map: &SceneMap,
    agent: &AgentState,
    waypoints: &[Cell],
) -> Result<AgentState, SimError> {
    let mut next = *agent;
    let mut prev = agent.cell(map);
    for (i, &w) in waypoints.iter().enumerate() {
        if !map.is_free(w) {
            return Err(SimError::InvalidPath(format!(
                "waypoint {i} at {w:?} is not a free cell"
            )));
        }
        if !prev.is_4_adjacent(w) {
            return Err(SimError::InvalidPath(format!(
                "waypoint {i} at {w:?} is not adjacent to {prev:?}"
            )));
        }
        let p = w.center(map.cell_size);
        next.path_length += next.position.distance(p);
        next.heading = (p.y - next.position.y).atan2(p.x - next.position.x);
        next.position = p;
        next.step_count += 1;
        prev = w;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::load_scene;

    fn room_scene(grid: &[&str], objects: &str) -> SceneMap {
        let rows: Vec<String> = grid.iter().map(|r| format!("\"{r}\"")).collect();
        let text = format!(
            r#"{{"version":1,"cell_size":0.25,"grid":[{}],"spawn":[1,1],"objects":[{objects}],"goals":[]}}"#,
            rows.join(",")
        );
        load_scene(&text).unwrap()
    }

    const OPEN: &[&str] = &[
        "#########",
        "#.......#",
        "#.......#",
        "#.......#",
        "#.......#",
        "#.......#",
        "#.......#",
        "#.......#",
        "#########",
    ];

    #[test]
    fn empty_room_fully_observed() {
        let map = room_scene(OPEN, "");
        let agent = AgentState::at(Cell::new(4, 4), 0.25);
        let (belief, _) = sense_panorama(
            &map,
            &agent,
            &OccupancyBelief::for_scene(&map),
            0,
            &SensorConfig::default(),
        );
        for (c, o) in map.occupancy.iter() {
            let expected = match o {
                Occupancy::Free => CellBelief::FreeObserved,
                Occupancy::Wall => CellBelief::OccupiedObserved,
            };
            assert_eq!(belief.get(c), expected, "{c:?}");
        }
    }

    #[test]
    fn three_views_cover_full_circle() {
        let cfg = SensorConfig::default();
        for heading in [0.0, 0.3, -2.0, 3.1] {
            for k in 0..3600 {
                let b = k as f64 * TAU / 3600.0 - std::f64::consts::PI;
                assert!(cfg.view_for(heading, b).is_some(), "gap at {b}");
            }
        }
        let narrow = SensorConfig {
            views: 1,
            ..cfg
        };
        assert!(narrow.view_for(0.0, std::f64::consts::PI).is_none());
    }

    #[test]
    fn object_behind_wall_is_hidden() {
        let grid = [
            "#########",
            "#.......#",
            "#.......#",
            "#...#...#",
            "#...#...#",
            "#...#...#",
            "#.......#",
            "#.......#",
            "#########",
        ];
        let objects = r#"{"id":0,"category":"lamp","attributes":["red"],"pos":[4,6]},
                         {"id":1,"category":"bed","attributes":["red"],"pos":[1,4]}"#;
        let map = room_scene(&grid, objects);
        let agent = AgentState::at(Cell::new(4, 2), 0.25);
        let (_, snap) = sense_panorama(
            &map,
            &agent,
            &OccupancyBelief::for_scene(&map),
            0,
            &SensorConfig::default(),
        );
        let ids: Vec<u32> = snap.visible_objects.iter().map(|o| o.id).collect();
        assert_eq!(ids, vec![1]);
    }

    #[test]
    fn move_along_accumulates_length() {
        let map = room_scene(OPEN, "");
        let agent = AgentState::at(Cell::new(1, 1), 0.25);
        let same = move_along(&map, &agent, &[]).unwrap();
        assert_eq!(same, agent);
        let path: Vec<Cell> = (2..=5).map(|c| Cell::new(1, c)).collect();
        let moved = move_along(&map, &agent, &path).unwrap();
        assert!((moved.path_length - 4.0 * 0.25).abs() < 1e-12);
        assert_eq!(moved.step_count, 4);
        assert_eq!(moved.cell(&map), Cell::new(1, 5));
    }

    #[test]
    fn move_along_rejects_walls_and_jumps() {
        let map = room_scene(OPEN, "");
        let agent = AgentState::at(Cell::new(1, 1), 0.25);
        assert!(move_along(&map, &agent, &[Cell::new(0, 1)]).is_err());
        assert!(move_along(&map, &agent, &[Cell::new(1, 3)]).is_err());
        assert!(move_along(&map, &agent, &[Cell::new(2, 2)]).is_err());
    }
}
