//! Frontier extraction and clustering over the occupancy belief.
//!
//! A frontier cell is a `FreeObserved` cell with at least one `Unknown`
//! 4-neighbour. Frontier cells are grouped into 8-connected regions; each region
//! carries a representative cell and a snapshot taken from it, looking into the
//! unknown side.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, Point};
use crate::scene::{ObjectInstance, SceneMap};
use crate::sim::{visible_objects, CellBelief, OccupancyBelief, Pose, SensorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontierConfig {
    pub min_cluster_size: usize,
    /// Rays cast across the snapshot's field of view.
    pub snapshot_rays: u32,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        Self {
            min_cluster_size: 2,
            snapshot_rays: 120,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierSnapshot {
    pub viewpoint: Pose,
    pub visible_objects: Vec<ObjectInstance>,
    pub unknown_ray_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierRegion {
    pub id: usize,
    /// Sorted row-major.
    pub cells: Vec<Cell>,
    pub centroid: Point,
    pub representative: Cell,
    pub snapshot: Option<FrontierSnapshot>,
}

pub fn is_frontier(belief: &OccupancyBelief, cell: Cell) -> bool {
    belief.get(cell) == CellBelief::FreeObserved
        && belief
            .cells
            .neighbors4(cell)
            .any(|n| belief.get(n) == CellBelief::Unknown)
}

pub fn extract_frontiers(belief: &OccupancyBelief) -> BTreeSet<Cell> {
    belief
        .cells
        .cells()
        .filter(|&c| is_frontier(belief, c))
        .collect()
}

/// Splits frontier cells into 8-connected regions, drops the ones smaller than
/// `min_cluster_size`, and numbers the rest by descending size, then by first
/// cell in row-major order.
pub fn cluster_frontiers(
    cells: &BTreeSet<Cell>,
    min_cluster_size: usize,
    cell_size: f64,
) -> Vec<FrontierRegion> {
    let mut seen = BTreeSet::new();
    let mut components: Vec<Vec<Cell>> = Vec::new();
    for &start in cells {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            // grid bounds are irrelevant here: only member cells are expanded
            for n in c.neighbors8(usize::MAX, usize::MAX) {
                if cells.contains(&n) && seen.insert(n) {
                    comp.push(n);
                    queue.push_back(n);
                }
            }
        }
        comp.sort();
        if comp.len() >= min_cluster_size {
            components.push(comp);
        }
    }
    components.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    components
        .into_iter()
        .enumerate()
        .map(|(id, cells)| {
            let n = cells.len() as f64;
            let (sx, sy) = cells.iter().fold((0.0, 0.0), |(sx, sy), c| {
                let p = c.center(cell_size);
                (sx + p.x, sy + p.y)
            });
            let centroid = Point::new(sx / n, sy / n);
            let representative = *cells
                .iter()
                .min_by(|a, b| {
                    let da = a.center(cell_size).distance(centroid);
                    let db = b.center(cell_size).distance(centroid);
                    da.total_cmp(&db).then(a.cmp(b))
                })
                .expect("non-empty component");
            FrontierRegion {
                id,
                cells,
                centroid,
                representative,
                snapshot: None,
            }
        })
        .collect()
}

/// Extracts and clusters in one pass.
pub fn frontier_regions(
    belief: &OccupancyBelief,
    cfg: &FrontierConfig,
    cell_size: f64,
) -> Vec<FrontierRegion> {
    cluster_frontiers(&extract_frontiers(belief), cfg.min_cluster_size, cell_size)
}

/// Mean direction from region cells toward their `Unknown` 4-neighbours.
pub fn unknown_heading(belief: &OccupancyBelief, region: &FrontierRegion) -> f64 {
    let (mut sx, mut sy) = (0.0, 0.0);
    for &c in &region.cells {
        for n in belief.cells.neighbors4(c) {
            if belief.get(n) == CellBelief::Unknown {
                sx += n.col as f64 - c.col as f64;
                sy += n.row as f64 - c.row as f64;
            }
        }
    }
    if sx == 0.0 && sy == 0.0 {
        0.0
    } else {
        sy.atan2(sx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RayEnd {
    Unknown,
    Occupied,
    /// Reached the range limit or the map edge through observed free space.
    Clear,
}

/// Grid traversal of a ray starting at the center of `origin`, over cells in
/// the belief. Cells are entered in order of their entry distance; a cell
/// whose entry distance exceeds `range_cells` ends the ray as `Clear`.
pub fn cast_ray(belief: &OccupancyBelief, origin: Cell, angle: f64, range_cells: f64) -> RayEnd {
    let (dx, dy) = (angle.cos(), angle.sin());
    let (ox, oy) = (origin.col as f64 + 0.5, origin.row as f64 + 0.5);
    let (mut cx, mut cy) = (origin.col as i64, origin.row as i64);
    let axis = |d: f64, o: f64, c: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, (c as f64 + 1.0 - o) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (o - c as f64) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_x, delta_x) = axis(dx, ox, cx);
    let (step_y, mut t_y, delta_y) = axis(dy, oy, cy);
    loop {
        let t = if t_x < t_y {
            cx += step_x;
            let t = t_x;
            t_x += delta_x;
            t
        } else {
            cy += step_y;
            let t = t_y;
            t_y += delta_y;
            t
        };
        if t > range_cells
            || cx < 0
            || cy < 0
            || cx as usize >= belief.width()
            || cy as usize >= belief.height()
        {
            return RayEnd::Clear;
        }
        match belief.get(Cell::new(cy as usize, cx as usize)) {
            CellBelief::Unknown => return RayEnd::Unknown,
            CellBelief::OccupiedObserved => return RayEnd::Occupied,
            CellBelief::FreeObserved => {}
        }
    }
}

/// Ray angles spread evenly over a field of view centred on `heading`.
pub fn fov_angles(heading: f64, hfov_deg: f64, rays: u32) -> impl Iterator<Item = f64> {
    let fov = hfov_deg.to_radians();
    (0..rays).map(move |i| heading - fov / 2.0 + (i as f64 + 0.5) * fov / rays as f64)
}

/// Builds the snapshot a camera at the region's representative would take,
/// facing the unknown side.
pub fn snapshot_frontier(
    map: &SceneMap,
    belief: &OccupancyBelief,
    region: &FrontierRegion,
    sensor: &SensorConfig,
    cfg: &FrontierConfig,
) -> FrontierSnapshot {
    let heading = unknown_heading(belief, region);
    let origin = region.representative;
    let view = SensorConfig {
        views: 1,
        ..sensor.clone()
    };
    let rays = cfg.snapshot_rays.max(1);
    let unknown = fov_angles(heading, sensor.hfov_deg, rays)
        .filter(|&a| cast_ray(belief, origin, a, sensor.range_cells) == RayEnd::Unknown)
        .count();
    FrontierSnapshot {
        viewpoint: Pose {
            position: origin.center(map.cell_size),
            heading,
        },
        visible_objects: visible_objects(map, origin, heading, &view),
        unknown_ray_fraction: unknown as f64 / rays as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn belief_from(rows: &[&str]) -> OccupancyBelief {
        let h = rows.len();
        let w = rows[0].len();
        let cells = rows
            .iter()
            .flat_map(|r| r.chars())
            .map(|ch| match ch {
                '.' => CellBelief::FreeObserved,
                '#' => CellBelief::OccupiedObserved,
                _ => CellBelief::Unknown,
            })
            .collect();
        OccupancyBelief {
            cells: Grid::from_vec(h, w, cells),
        }
    }

    #[test]
    fn all_unknown_or_all_known_has_no_frontier() {
        assert!(extract_frontiers(&OccupancyBelief::unknown(8, 8)).is_empty());
        let known = belief_from(&["........"; 8]);
        assert!(extract_frontiers(&known).is_empty());
    }

    #[test]
    fn half_known_belief_frontier_is_boundary_column() {
        let b = belief_from(&["....????"; 8]);
        let got = extract_frontiers(&b);
        let want: BTreeSet<Cell> = (0..8).map(|r| Cell::new(r, 3)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn clustering_connectivity_and_min_size() {
        let diag: BTreeSet<Cell> = [Cell::new(1, 1), Cell::new(2, 2)].into();
        assert_eq!(cluster_frontiers(&diag, 2, 0.25).len(), 1);
        let apart: BTreeSet<Cell> = [Cell::new(1, 1), Cell::new(1, 3)].into();
        assert!(cluster_frontiers(&apart, 2, 0.25).is_empty());
        assert_eq!(cluster_frontiers(&apart, 1, 0.25).len(), 2);
        assert!(cluster_frontiers(&BTreeSet::new(), 2, 0.25).is_empty());
    }

    #[test]
    fn ids_by_size_then_row_major() {
        let cells: BTreeSet<Cell> = [
            Cell::new(0, 0),
            Cell::new(0, 1),
            Cell::new(5, 5),
            Cell::new(5, 6),
            Cell::new(5, 7),
            Cell::new(9, 0),
            Cell::new(9, 1),
        ]
        .into();
        let regions = cluster_frontiers(&cells, 2, 0.25);
        assert_eq!(regions[0].cells[0], Cell::new(5, 5));
        assert_eq!(regions[0].representative, Cell::new(5, 6));
        assert_eq!(regions[1].cells[0], Cell::new(0, 0));
        assert_eq!(regions[2].cells[0], Cell::new(9, 0));
    }

    #[test]
    fn heading_points_at_unknown_side() {
        let b = belief_from(&["....????"; 8]);
        let regions = frontier_regions(&b, &FrontierConfig::default(), 0.25);
        assert_eq!(regions.len(), 1);
        let h = unknown_heading(&b, &regions[0]);
        assert!(h.abs() < 1e-12, "heading {h}");
        let b = belief_from(&["????????", "????????", "........", "........"]);
        let regions = frontier_regions(&b, &FrontierConfig::default(), 0.25);
        let h = unknown_heading(&b, &regions[0]);
        assert!((h + std::f64::consts::FRAC_PI_2).abs() < 1e-12, "heading {h}");
    }

    #[test]
    fn ray_classification() {
        let b = belief_from(&["...#....?"]);
        assert_eq!(cast_ray(&b, Cell::new(0, 0), 0.0, 10.0), RayEnd::Occupied);
        assert_eq!(cast_ray(&b, Cell::new(0, 4), 0.0, 10.0), RayEnd::Unknown);
        assert_eq!(cast_ray(&b, Cell::new(0, 4), 0.0, 2.0), RayEnd::Clear);
        assert_eq!(cast_ray(&b, Cell::new(0, 4), std::f64::consts::PI, 10.0), RayEnd::Occupied);
    }
}
