use std::collections::BTreeSet;

use proptest::prelude::*;
use scope_nav::frontier::{
    cluster_frontiers, extract_frontiers, fov_angles, frontier_regions, snapshot_frontier, unknown_heading,
    FrontierConfig,
};
use scope_nav::grid::{Cell, Grid};
use scope_nav::scene::{generate_scene, GenParams};
use scope_nav::sim::{sense_panorama, AgentState, CellBelief, OccupancyBelief, SensorConfig};

#[derive(Debug, PartialEq)]
enum End {
    Unknown,
    Occupied,
    Clear,
}

/// Exact ray classification: every cell whose box the ray crosses with
/// positive length is found by slab intersection, then cells are visited by
/// entry distance.
fn oracle_ray(b: &OccupancyBelief, origin: Cell, angle: f64, range: f64) -> End {
    let (dx, dy) = (angle.cos(), angle.sin());
    let (ox, oy) = (origin.col as f64 + 0.5, origin.row as f64 + 0.5);
    let slab = |o: f64, d: f64, lo: f64| -> (f64, f64) {
        if d == 0.0 {
            if o > lo && o < lo + 1.0 {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                (f64::INFINITY, f64::NEG_INFINITY)
            }
        } else {
            let (a, c) = ((lo - o) / d, (lo + 1.0 - o) / d);
            (a.min(c), a.max(c))
        }
    };
    let mut hits: Vec<(f64, Cell)> = Vec::new();
    for c in b.cells.cells() {
        if c == origin {
            continue;
        }
        let (x0, x1) = slab(ox, dx, c.col as f64);
        let (y0, y1) = slab(oy, dy, c.row as f64);
        let (enter, exit) = (x0.max(y0), x1.min(y1));
        if enter < exit && exit > 0.0 {
            hits.push((enter, c));
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, c) in hits {
        if t > range {
            break;
        }
        match b.get(c) {
            CellBelief::Unknown => return End::Unknown,
            CellBelief::OccupiedObserved => return End::Occupied,
            CellBelief::FreeObserved => {}
        }
    }
    End::Clear
}

#[test]
fn unknown_ray_fraction_matches_exhaustive_rays() {
    let sensor = SensorConfig::default();
    let cfg = FrontierConfig::default();
    let mut regions_checked = 0;
    for seed in 0..25 {
        let map = generate_scene(seed, &GenParams::default()).unwrap();
        let agent = AgentState::at(map.spawn, map.cell_size);
        let (belief, _) = sense_panorama(&map, &agent, &OccupancyBelief::for_scene(&map), 0, &sensor);
        for region in frontier_regions(&belief, &cfg, map.cell_size) {
            let snap = snapshot_frontier(&map, &belief, &region, &sensor, &cfg);
            let heading = unknown_heading(&belief, &region);
            let unknown = fov_angles(heading, sensor.hfov_deg, cfg.snapshot_rays)
                .filter(|&a| oracle_ray(&belief, region.representative, a, sensor.range_cells) == End::Unknown)
                .count();
            assert_eq!(
                snap.unknown_ray_fraction,
                unknown as f64 / cfg.snapshot_rays as f64,
                "seed {seed} region {}",
                region.id
            );
            regions_checked += 1;
        }
    }
    assert!(regions_checked > 25);
}

#[test]
fn enclosed_region_has_no_unknown_rays() {
    let map = generate_scene(2, &GenParams::default()).unwrap();
    let agent = AgentState::at(map.spawn, map.cell_size);
    let (belief, _) = sense_panorama(&map, &agent, &OccupancyBelief::for_scene(&map), 0, &SensorConfig::default());
    let cfg = FrontierConfig::default();
    let region = frontier_regions(&belief, &cfg, map.cell_size).remove(0);
    // reveal everything: the region is now surrounded by observed cells
    let full = OccupancyBelief {
        cells: Grid::from_vec(
            map.height,
            map.width,
            map.occupancy
                .cells()
                .map(|c| if map.is_free(c) { CellBelief::FreeObserved } else { CellBelief::OccupiedObserved })
                .collect(),
        ),
    };
    let snap = snapshot_frontier(&map, &full, &region, &SensorConfig::default(), &cfg);
    assert_eq!(snap.unknown_ray_fraction, 0.0);
}

fn belief_strategy() -> impl Strategy<Value = OccupancyBelief> {
    (4usize..20, 4usize..20).prop_flat_map(|(h, w)| {
        prop::collection::vec(0u8..3, h * w).prop_map(move |v| OccupancyBelief {
            cells: Grid::from_vec(
                h,
                w,
                v.into_iter()
                    .map(|x| match x {
                        0 => CellBelief::Unknown,
                        1 => CellBelief::FreeObserved,
                        _ => CellBelief::OccupiedObserved,
                    })
                    .collect(),
            ),
        })
    })
}

fn eight_connected(cells: &[Cell]) -> bool {
    let set: BTreeSet<Cell> = cells.iter().copied().collect();
    let mut seen = BTreeSet::from([cells[0]]);
    let mut stack = vec![cells[0]];
    while let Some(c) = stack.pop() {
        for n in c.neighbors8(usize::MAX, usize::MAX) {
            if set.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == set.len()
}

proptest! {
    #[test]
    fn region_invariants(b in belief_strategy(), min in 1usize..4) {
        let cells = extract_frontiers(&b);
        let regions = cluster_frontiers(&cells, min, 0.25);
        let mut covered = BTreeSet::new();
        for (i, r) in regions.iter().enumerate() {
            prop_assert_eq!(r.id, i);
            prop_assert!(r.cells.len() >= min);
            prop_assert!(r.cells.contains(&r.representative));
            prop_assert!(eight_connected(&r.cells));
            for &c in &r.cells {
                prop_assert_eq!(b.get(c), CellBelief::FreeObserved);
                prop_assert!(b.cells.neighbors4(c).any(|n| b.get(n) == CellBelief::Unknown));
                prop_assert!(covered.insert(c), "cell in two regions");
            }
            if i > 0 {
                let p = &regions[i - 1];
                prop_assert!(p.cells.len() > r.cells.len() || (p.cells.len() == r.cells.len() && p.cells[0] < r.cells[0]));
            }
        }
        // with min size 1 the regions partition the frontier set
        if min == 1 {
            prop_assert_eq!(covered, cells);
        }
    }
}
