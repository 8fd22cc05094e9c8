//! Cell coordinates, continuous positions and a dense row-major grid.

use serde::{Deserialize, Serialize};

/// Integer grid coordinate. Serialized as `[row, col]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// 4-neighbours in lexicographic (row, col) order: up, left, right, down.
    pub fn neighbors4(self, height: usize, width: usize) -> impl Iterator<Item = Cell> {
        let Cell { row, col } = self;
        let up = (row > 0).then(|| Cell::new(row - 1, col));
        let left = (col > 0).then(|| Cell::new(row, col - 1));
        let right = (col + 1 < width).then(|| Cell::new(row, col + 1));
        let down = (row + 1 < height).then(|| Cell::new(row + 1, col));
        [up, left, right, down].into_iter().flatten()
    }

    /// 8-neighbours in row-major order.
    pub fn neighbors8(self, height: usize, width: usize) -> impl Iterator<Item = Cell> {
        let Cell { row, col } = self;
        (-1i64..=1)
            .flat_map(move |dr| (-1i64..=1).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| dr != 0 || dc != 0)
            .filter_map(move |(dr, dc)| {
                let r = row as i64 + dr;
                let c = col as i64 + dc;
                (r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width)
                    .then(|| Cell::new(r as usize, c as usize))
            })
    }

    pub fn is_4_adjacent(self, other: Cell) -> bool {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col) == 1
    }

    /// Center of the cell in meters.
    pub fn center(self, cell_size: f64) -> Point {
        Point {
            x: (self.col as f64 + 0.5) * cell_size,
            y: (self.row as f64 + 0.5) * cell_size,
        }
    }
}

impl From<[usize; 2]> for Cell {
    fn from([row, col]: [usize; 2]) -> Self {
        Cell { row, col }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

/// Continuous position in meters; `x` runs along columns, `y` along rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// The cell containing this point, or `None` if it lies outside the grid.
    pub fn cell(self, cell_size: f64, height: usize, width: usize) -> Option<Cell> {
        if !(self.x >= 0.0 && self.y >= 0.0) {
            return None;
        }
        let col = (self.x / cell_size).floor() as usize;
        let row = (self.y / cell_size).floor() as usize;
        (row < height && col < width).then_some(Cell { row, col })
    }
}

/// Dense row-major grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), height * width, "grid data length mismatch");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn get(&self, cell: Cell) -> Option<&T> {
        self.contains(cell)
            .then(|| &self.data[cell.row * self.width + cell.col])
    }

    pub fn set(&mut self, cell: Cell, value: T) {
        let idx = cell.row * self.width + cell.col;
        self.data[idx] = value;
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |row| (0..self.width).map(move |col| Cell { row, col }))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, &T)> + '_ {
        self.cells().zip(self.data.iter())
    }

    pub fn neighbors4(&self, cell: Cell) -> impl Iterator<Item = Cell> {
        cell.neighbors4(self.height, self.width)
    }

    pub fn neighbors8(&self, cell: Cell) -> impl Iterator<Item = Cell> {
        cell.neighbors8(self.height, self.width)
    }
}

impl<T> std::ops::Index<Cell> for Grid<T> {
    type Output = T;

    fn index(&self, cell: Cell) -> &T {
        assert!(self.contains(cell), "cell {cell:?} out of bounds");
        &self.data[cell.row * self.width + cell.col]
    }
}

/// Cells visited by an integer Bresenham line from `from` to `to`, both inclusive.
pub fn bresenham(from: Cell, to: Cell) -> Vec<Cell> {
    let (mut x, mut y) = (from.col as i64, from.row as i64);
    let (x1, y1) = (to.col as i64, to.row as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push(Cell::new(y as usize, x as usize));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}
