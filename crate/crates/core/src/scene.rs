//! Ground-truth world: occupancy, labelled objects, goals, procedural generation
//! and the JSON scene file format.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, Grid, Point};
use crate::rng::{keyed, Stream};

pub const SCENE_FILE_VERSION: u32 = 1;
pub const DEFAULT_CELL_SIZE: f64 = 0.25;
/// Stop radius for success, in meters.
pub const SUCCESS_DISTANCE_M: f64 = 1.0;
pub const MAX_GENERATION_ATTEMPTS: u32 = 1000;
const MIN_ROOM_SIDE: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: u32, reason: String },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field `{field}`: {message}")]
    InvalidField { field: String, message: String },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Free,
    Wall,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectInstance {
    pub id: u32,
    pub category: String,
    pub attributes: BTreeSet<String>,
    #[serde(rename = "pos")]
    pub position: Cell,
}

/// What the agent is asked to find.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GoalRecord", into = "GoalRecord")]
pub enum GoalSpec {
    ObjectCategory(String),
    InstanceRef(u32),
    /// Matches any object whose attributes are a superset of these.
    Description(BTreeSet<String>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalRecord {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attributes: Option<BTreeSet<String>>,
}

impl TryFrom<GoalRecord> for GoalSpec {
    type Error = String;

    fn try_from(r: GoalRecord) -> Result<Self, String> {
        match (r.kind.as_str(), r.category, r.id, r.attributes) {
            ("category", Some(c), None, None) => Ok(GoalSpec::ObjectCategory(c)),
            ("instance", None, Some(id), None) => Ok(GoalSpec::InstanceRef(id)),
            ("description", None, None, Some(a)) => Ok(GoalSpec::Description(a)),
            ("category" | "instance" | "description", ..) => Err(format!(
                "goal of kind `{}` needs exactly its own payload field (category | id | attributes)",
                r.kind
            )),
            (other, ..) => Err(format!("unknown goal kind `{other}`")),
        }
    }
}

impl From<GoalSpec> for GoalRecord {
    fn from(g: GoalSpec) -> Self {
        let mut r = GoalRecord {
            kind: String::new(),
            category: None,
            id: None,
            attributes: None,
        };
        match g {
            GoalSpec::ObjectCategory(c) => {
                r.kind = "category".into();
                r.category = Some(c);
            }
            GoalSpec::InstanceRef(id) => {
                r.kind = "instance".into();
                r.id = Some(id);
            }
            GoalSpec::Description(a) => {
                r.kind = "description".into();
                r.attributes = Some(a);
            }
        }
        r
    }
}

// Room archetypes drive which categories share a room; co-occurrence feeds
// the goal-relevance score.
const ROOM_TYPES: &[(&str, &[&str])] = &[
    ("kitchen", &["oven", "fridge", "sink", "table", "chair"]),
    ("bedroom", &["bed", "lamp", "wardrobe", "desk", "plant"]),
    ("living_room", &["sofa", "tv", "plant", "chair", "table"]),
    ("bathroom", &["toilet", "sink", "towel", "cabinet"]),
    ("office", &["desk", "chair", "shelf", "lamp", "computer"]),
];

const LOOKALIKES: &[(&str, &str)] = &[
    ("chair", "sofa"),
    ("table", "desk"),
    ("cabinet", "wardrobe"),
    ("shelf", "cabinet"),
    ("tv", "computer"),
    ("sink", "toilet"),
    ("oven", "fridge"),
    ("bed", "sofa"),
    ("lamp", "plant"),
    ("towel", "plant"),
];

const COLORS: &[&str] = &["red", "blue", "green", "white", "black", "brown"];
const MATERIALS: &[&str] = &["wooden", "metal", "plastic", "fabric", "glass"];

/// True if the two categories appear together in some room archetype.
pub fn co_occurs(a: &str, b: &str) -> bool {
    a != b
        && ROOM_TYPES
            .iter()
            .any(|(_, cats)| cats.contains(&a) && cats.contains(&b))
}

pub fn lookalike(a: &str, b: &str) -> bool {
    LOOKALIKES
        .iter()
        .any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
}

/// A goal with the scene-dependent facts the agent is assumed to know
/// (for an instance goal, the category of the referenced object).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedGoal {
    pub spec: GoalSpec,
    pub category: Option<String>,
}

impl ResolvedGoal {
    pub fn matches(&self, obj: &ObjectInstance) -> bool {
        match &self.spec {
            GoalSpec::ObjectCategory(c) => obj.category == *c,
            GoalSpec::InstanceRef(id) => obj.id == *id,
            GoalSpec::Description(attrs) => attrs.is_subset(&obj.attributes),
        }
    }

    /// Non-matching objects that a sloppy matcher could mistake for the goal.
    pub fn confusable(&self, obj: &ObjectInstance) -> bool {
        if self.matches(obj) {
            return false;
        }
        match &self.spec {
            GoalSpec::ObjectCategory(c) => lookalike(c, &obj.category),
            GoalSpec::InstanceRef(_) => self.category.as_deref() == Some(obj.category.as_str()),
            GoalSpec::Description(attrs) => attrs.intersection(&obj.attributes).next().is_some(),
        }
    }

    /// Objects whose presence hints that the goal is nearby.
    pub fn related(&self, obj: &ObjectInstance) -> bool {
        if self.matches(obj) {
            return false;
        }
        match &self.spec {
            GoalSpec::ObjectCategory(c) => co_occurs(c, &obj.category),
            GoalSpec::InstanceRef(_) => self
                .category
                .as_deref()
                .is_some_and(|c| c == obj.category || co_occurs(c, &obj.category)),
            GoalSpec::Description(attrs) => attrs.intersection(&obj.attributes).next().is_some(),
        }
    }

    /// Text rendering handed to remote models.
    pub fn render(&self) -> String {
        match &self.spec {
            GoalSpec::ObjectCategory(c) => format!("find a {c}"),
            GoalSpec::InstanceRef(id) => match &self.category {
                Some(c) => format!("find the specific {c} instance #{id}"),
                None => format!("find object instance #{id}"),
            },
            GoalSpec::Description(attrs) => {
                let v: Vec<&str> = attrs.iter().map(String::as_str).collect();
                format!("find an object that is {}", v.join(" and "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneMap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub occupancy: Grid<Occupancy>,
    pub objects: Vec<ObjectInstance>,
    pub spawn: Cell,
    pub goals: Vec<GoalSpec>,
}

impl SceneMap {
    pub fn is_free(&self, cell: Cell) -> bool {
        self.occupancy.get(cell) == Some(&Occupancy::Free)
    }

    pub fn object(&self, id: u32) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn resolve(&self, goal: &GoalSpec) -> ResolvedGoal {
        let category = match goal {
            GoalSpec::ObjectCategory(c) => Some(c.clone()),
            GoalSpec::InstanceRef(id) => self.object(*id).map(|o| o.category.clone()),
            GoalSpec::Description(_) => None,
        };
        ResolvedGoal {
            spec: goal.clone(),
            category,
        }
    }

    pub fn matching_objects<'a>(
        &'a self,
        goal: &'a GoalSpec,
    ) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        let resolved = self.resolve(goal);
        self.objects.iter().filter(move |o| resolved.matches(o))
    }

    /// BFS distances (in cells) over ground-truth Free cells from `start`.
    pub fn free_distances(&self, start: Cell) -> Grid<Option<usize>> {
        let mut dist = Grid::filled(self.height, self.width, None);
        if !self.is_free(start) {
            return dist;
        }
        dist.set(start, Some(0));
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let d = dist[c].unwrap();
            for n in c.neighbors4(self.height, self.width) {
                if self.is_free(n) && dist[n].is_none() {
                    dist.set(n, Some(d + 1));
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Geodesic cell count from `start` to the nearest Free cell whose center
    /// satisfies `goal`.
    pub fn optimal_path_cells(&self, goal: &GoalSpec, start: Cell) -> Option<usize> {
        let dist = self.free_distances(start);
        dist.iter()
            .filter_map(|(c, d)| d.map(|d| (c, d)))
            .filter(|&(c, _)| goal_satisfied(self, goal, c.center(self.cell_size)))
            .map(|(_, d)| d)
            .min()
    }

    /// Checks every scene invariant, naming the first one that fails.
    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |m: &str| Err(SceneError::InvariantViolation(m.to_string()));
        if self.width < 8 || self.height < 8 {
            return fail("width and height must be at least 8");
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return fail("cell_size must be positive");
        }
        if self.occupancy.width() != self.width || self.occupancy.height() != self.height {
            return fail("occupancy grid dimensions disagree with width/height");
        }
        if !self.is_free(self.spawn) {
            return fail("spawn on occupied cell");
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return fail("duplicate object id");
            }
            if o.category.is_empty() {
                return fail("empty object category");
            }
            if !self.occupancy.contains(o.position) {
                return fail("object outside the grid");
            }
            if !self.is_free(o.position) {
                return fail("object on occupied cell");
            }
        }
        let dist = self.free_distances(self.spawn);
        for o in &self.objects {
            let reachable = o
                .position
                .neighbors4(self.height, self.width)
                .any(|n| dist[n].is_some());
            if !reachable {
                return fail("object unreachable from spawn");
            }
        }
        for g in &self.goals {
            match g {
                GoalSpec::InstanceRef(id) if self.object(*id).is_none() => {
                    return fail("instance goal names a missing object");
                }
                GoalSpec::Description(a) if a.is_empty() => {
                    return fail("description goal has no attributes");
                }
                _ => {}
            }
            if self.matching_objects(g).next().is_none() {
                return fail("goal matches no object");
            }
        }
        Ok(())
    }
}

/// True iff some goal-matching object's cell center lies within
/// [`SUCCESS_DISTANCE_M`] of `agent_pos`.
pub fn goal_satisfied(map: &SceneMap, goal: &GoalSpec, agent_pos: Point) -> bool {
    map.matching_objects(goal)
        .any(|o| o.position.center(map.cell_size).distance(agent_pos) <= SUCCESS_DISTANCE_M)
}

// ---------------------------------------------------------------------------
// Scene file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    version: u32,
    cell_size: f64,
    grid: Vec<String>,
    spawn: Cell,
    objects: Vec<ObjectInstance>,
    goals: Vec<GoalSpec>,
}

pub fn save_scene(map: &SceneMap) -> String {
    let grid = (0..map.height)
        .map(|row| {
            (0..map.width)
                .map(|col| match map.occupancy[Cell::new(row, col)] {
                    Occupancy::Free => '.',
                    Occupancy::Wall => '#',
                })
                .collect()
        })
        .collect();
    let file = SceneFile {
        version: SCENE_FILE_VERSION,
        cell_size: map.cell_size,
        grid,
        spawn: map.spawn,
        objects: map.objects.clone(),
        goals: map.goals.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("scene serializes");
    s.push('\n');
    s
}

pub fn load_scene(text: &str) -> Result<SceneMap, SceneError> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| SceneError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let field = |field: String, message: &str| SceneError::InvalidField {
        field,
        message: message.to_string(),
    };
    if file.version != SCENE_FILE_VERSION {
        return Err(field("version".into(), "unsupported version (expected 1)"));
    }
    let height = file.grid.len();
    let width = file.grid.first().map_or(0, |r| r.chars().count());
    if height == 0 || width == 0 {
        return Err(field("grid".into(), "grid is empty"));
    }
    let mut cells = Vec::with_capacity(height * width);
    for (i, row) in file.grid.iter().enumerate() {
        if row.chars().count() != width {
            return Err(field(format!("grid[{i}]"), "row width differs from row 0"));
        }
        for ch in row.chars() {
            cells.push(match ch {
                '.' => Occupancy::Free,
                '#' => Occupancy::Wall,
                _ => return Err(field(format!("grid[{i}]"), "cells must be '#' or '.'")),
            });
        }
    }
    let map = SceneMap {
        width,
        height,
        cell_size: file.cell_size,
        occupancy: Grid::from_vec(height, width, cells),
        objects: file.objects,
        spawn: file.spawn,
        goals: file.goals,
    };
    if !map.occupancy.contains(map.spawn) {
        return Err(field("spawn".into(), "spawn outside the grid"));
    }
    map.validate()?;
    Ok(map)
}

// ---------------------------------------------------------------------------
// Procedural generation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub rooms: usize,
    pub objects_per_room: usize,
    /// Cells per side of the square map.
    pub size: usize,
    #[serde(default = "default_goal_count")]
    pub goals: usize,
}

fn default_goal_count() -> usize {
    3
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            rooms: 4,
            objects_per_room: 4,
            size: 32,
            goals: default_goal_count(),
        }
    }
}

impl GenParams {
    fn check(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidParams(m));
        if !(2..=12).contains(&self.rooms) {
            return bad(format!("rooms must be in 2..=12, got {}", self.rooms));
        }
        if !(8..=128).contains(&self.size) {
            return bad(format!("size must be in 8..=128, got {}", self.size));
        }
        if !(1..=16).contains(&self.goals) {
            return bad(format!("goals must be in 1..=16, got {}", self.goals));
        }
        if self.objects_per_room == 0 {
            return bad("objects_per_room must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Rect {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
}

impl Rect {
    fn rows(&self) -> usize {
        self.r1 - self.r0
    }
    fn cols(&self) -> usize {
        self.c1 - self.c0
    }
    fn area(&self) -> usize {
        self.rows() * self.cols()
    }
    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.r0..self.r1).flat_map(move |r| (self.c0..self.c1).map(move |c| Cell::new(r, c)))
    }
}

/// Generates a multi-room scene. Identical `(seed, params)` always produce an
/// identical scene.
pub fn generate_scene(seed: u64, params: &GenParams) -> Result<SceneMap, SceneError> {
    params.check()?;
    let mut last_reason = String::new();
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = keyed(seed, Stream::Scene, attempt as u64, 0);
        match try_generate(&mut rng, params) {
            Ok(map) => {
                debug_assert!(map.validate().is_ok());
                return Ok(map);
            }
            Err(reason) => last_reason = reason,
        }
    }
    Err(SceneError::GenerationFailed {
        attempts: MAX_GENERATION_ATTEMPTS,
        reason: last_reason,
    })
}

fn split_rooms(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Result<Vec<Rect>, String> {
    let mut rects = vec![Rect {
        r0: 1,
        r1: size - 1,
        c0: 1,
        c1: size - 1,
    }];
    while rects.len() < n {
        let splittable = |r: &Rect| r.rows().max(r.cols()) > 2 * MIN_ROOM_SIDE;
        let Some((idx, _)) = rects
            .iter()
            .enumerate()
            .filter(|(_, r)| splittable(r))
            .max_by_key(|(i, r)| (r.area(), std::cmp::Reverse(*i)))
        else {
            return Err("no room is large enough to split".into());
        };
        let r = rects.swap_remove(idx);
        let horizontal = match r.rows().cmp(&r.cols()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => rng.random_bool(0.5),
        };
        let (lo, len) = if horizontal { (r.r0, r.rows()) } else { (r.c0, r.cols()) };
        // wall index w leaves [lo, w) and [w+1, lo+len), each at least MIN_ROOM_SIDE
        let margin = MIN_ROOM_SIDE.max(len * 3 / 10);
        let (a, b) = if lo + margin <= lo + len - 1 - margin {
            (lo + margin, lo + len - 1 - margin)
        } else {
            (lo + MIN_ROOM_SIDE, lo + len - 1 - MIN_ROOM_SIDE)
        };
        let w = rng.random_range(a..=b);
        let (first, second) = if horizontal {
            (Rect { r1: w, ..r }, Rect { r0: w + 1, ..r })
        } else {
            (Rect { c1: w, ..r }, Rect { c0: w + 1, ..r })
        };
        rects.push(first);
        rects.push(second);
    }
    rects.sort_by_key(|r| (r.r0, r.c0));
    Ok(rects)
}

/// Wall cells shared by two rooms, if they face each other across one wall line.
fn shared_wall(a: &Rect, b: &Rect) -> Option<Vec<Cell>> {
    let overlap = |a0: usize, a1: usize, b0: usize, b1: usize| {
        let (lo, hi) = (a0.max(b0), a1.min(b1));
        (lo < hi).then_some((lo, hi))
    };
    if a.r1 + 1 == b.r0 || b.r1 + 1 == a.r0 {
        let row = if a.r1 + 1 == b.r0 { a.r1 } else { b.r1 };
        let (lo, hi) = overlap(a.c0, a.c1, b.c0, b.c1)?;
        return Some((lo..hi).map(|c| Cell::new(row, c)).collect());
    }
    if a.c1 + 1 == b.c0 || b.c1 + 1 == a.c0 {
        let col = if a.c1 + 1 == b.c0 { a.c1 } else { b.c1 };
        let (lo, hi) = overlap(a.r0, a.r1, b.r0, b.r1)?;
        return Some((lo..hi).map(|r| Cell::new(r, col)).collect());
    }
    None
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn try_generate(rng: &mut ChaCha8Rng, params: &GenParams) -> Result<SceneMap, String> {
    let size = params.size;
    let rooms = split_rooms(rng, params.rooms, size)?;
    let mut occupancy = Grid::filled(size, size, Occupancy::Wall);
    for room in &rooms {
        for c in room.cells() {
            occupancy.set(c, Occupancy::Free);
        }
    }

    let mut edges: Vec<(usize, usize, Vec<Cell>)> = Vec::new();
    for i in 0..rooms.len() {
        for j in i + 1..rooms.len() {
            if let Some(wall) = shared_wall(&rooms[i], &rooms[j]) {
                edges.push((i, j, wall));
            }
        }
    }
    edges.shuffle(rng);
    let mut parent: Vec<usize> = (0..rooms.len()).collect();
    for (i, j, wall) in &edges {
        let (ri, rj) = (find(&mut parent, *i), find(&mut parent, *j));
        let tree_edge = ri != rj;
        if tree_edge {
            parent[ri] = rj;
        } else if !rng.random_bool(0.3) {
            continue;
        }
        let width = if wall.len() >= 4 && rng.random_bool(0.5) { 2 } else { 1 };
        let (lo, hi) = if wall.len() >= width + 2 {
            (1, wall.len() - 1 - width)
        } else if wall.len() >= width {
            (0, wall.len() - width)
        } else {
            return Err("shared wall shorter than a doorway".into());
        };
        let start = rng.random_range(lo..=hi);
        for c in &wall[start..start + width] {
            occupancy.set(*c, Occupancy::Free);
        }
    }
    let root = find(&mut parent, 0);
    if (0..rooms.len()).any(|i| find(&mut parent, i) != root) {
        return Err("rooms are not connected".into());
    }

    let mut taken = BTreeSet::new();
    let mut objects = Vec::new();
    for room in &rooms {
        let (_, categories) = *ROOM_TYPES.choose(rng).unwrap();
        let mut cells: Vec<Cell> = room.cells().filter(|c| !taken.contains(c)).collect();
        if cells.len() < params.objects_per_room {
            return Err("not enough free cells for objects".into());
        }
        cells.shuffle(rng);
        for &cell in cells.iter().take(params.objects_per_room) {
            taken.insert(cell);
            let category = categories.choose(rng).unwrap().to_string();
            let attributes = [
                COLORS.choose(rng).unwrap().to_string(),
                MATERIALS.choose(rng).unwrap().to_string(),
            ]
            .into_iter()
            .collect();
            objects.push(ObjectInstance {
                id: objects.len() as u32,
                category,
                attributes,
                position: cell,
            });
        }
    }

    let spawn_choices: Vec<Cell> = occupancy
        .iter()
        .filter(|(c, o)| **o == Occupancy::Free && !taken.contains(c))
        .map(|(c, _)| c)
        .collect();
    let spawn = *spawn_choices.choose(rng).ok_or("no free cell for spawn")?;

    let mut map = SceneMap {
        width: size,
        height: size,
        cell_size: DEFAULT_CELL_SIZE,
        occupancy,
        objects,
        spawn,
        goals: Vec::new(),
    };
    map.goals = pick_goals(rng, &map, params.goals)?;
    map.validate().map_err(|e| e.to_string())?;
    Ok(map)
}

fn pick_goals(rng: &mut ChaCha8Rng, map: &SceneMap, count: usize) -> Result<Vec<GoalSpec>, String> {
    let spawn_pos = map.spawn.center(map.cell_size);
    let mut per_category: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &map.objects {
        *per_category.entry(o.category.as_str()).or_default() += 1;
    }
    let mut goals = Vec::new();
    for i in 0..count {
        let mut candidates: Vec<GoalSpec> = match i % 3 {
            0 => map
                .objects
                .iter()
                .map(|o| GoalSpec::ObjectCategory(o.category.clone()))
                .collect(),
            1 => {
                let with_siblings: Vec<_> = map
                    .objects
                    .iter()
                    .filter(|o| per_category[o.category.as_str()] > 1)
                    .collect();
                let pool = if with_siblings.is_empty() {
                    map.objects.iter().collect()
                } else {
                    with_siblings
                };
                pool.into_iter().map(|o| GoalSpec::InstanceRef(o.id)).collect()
            }
            _ => map
                .objects
                .iter()
                .map(|o| GoalSpec::Description(o.attributes.clone()))
                .collect(),
        };
        candidates.dedup();
        candidates.retain(|g| !goals.contains(g) && !goal_satisfied(map, g, spawn_pos));
        let goal = candidates
            .choose(rng)
            .cloned()
            .ok_or("no goal candidate away from spawn")?;
        goals.push(goal);
    }
    Ok(goals)
}
