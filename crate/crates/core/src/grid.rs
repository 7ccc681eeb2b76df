//! Tri-state occupancy grids.
//!
//! Cell `(i, j)` covers `[origin.x + i*res, origin.x + (i+1)*res) x [origin.y + j*res, ...)`,
//! so row index `j` grows with `y`. Cells are stored row-major from `j = 0`.
//!
//! On the wire a grid is `{width, height, resolution, origin, cells}` where `cells`
//! is a run-length string such as `"12U3F1O"`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

impl CellState {
    fn code(self) -> char {
        match self {
            CellState::Unknown => 'U',
            CellState::Free => 'F',
            CellState::Occupied => 'O',
        }
    }

    fn from_code(c: char) -> Option<Self> {
        match c {
            'U' => Some(CellState::Unknown),
            'F' => Some(CellState::Free),
            'O' => Some(CellState::Occupied),
            _ => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != CellState::Unknown
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("resolution must be positive and finite")]
    BadResolution,
    #[error("cell count {actual} does not match {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },
    #[error("malformed run-length string: {0}")]
    BadEncoding(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridWire", into = "GridWire")]
pub struct GridMap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2,
    cells: Vec<CellState>,
}

impl GridMap {
    /// An all-unknown grid.
    pub fn new(width: usize, height: usize, resolution: f64, origin: Pose2) -> Self {
        assert!(
            resolution > 0.0 && resolution.is_finite(),
            "resolution must be positive"
        );
        Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![CellState::Unknown; width * height],
        }
    }

    /// A 0x0 grid, used for situations that have not been observed yet.
    pub fn empty() -> Self {
        Self::new(0, 0, 1.0, Pose2::at(0.0, 0.0))
    }

    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2,
        cells: Vec<CellState>,
    ) -> Result<Self, GridError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::BadResolution);
        }
        if cells.len() != width * height {
            return Err(GridError::SizeMismatch {
                width,
                height,
                actual: cells.len(),
            });
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2 {
        self.origin
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_all_unknown(&self) -> bool {
        self.cells.iter().all(|c| *c == CellState::Unknown)
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_known()).count()
    }

    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    pub fn get(&self, i: i64, j: i64) -> Option<CellState> {
        self.in_bounds(i, j)
            .then(|| self.cells[j as usize * self.width + i as usize])
    }

    pub fn set(&mut self, i: i64, j: i64, state: CellState) {
        if self.in_bounds(i, j) {
            self.cells[j as usize * self.width + i as usize] = state;
        }
    }

    /// Cell index containing a world point; may lie outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin.x) / self.resolution).floor() as i64,
            ((y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, i: i64, j: i64) -> (f64, f64) {
        (
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_box(&self, i: i64, j: i64) -> Aabb {
        let x0 = self.origin.x + i as f64 * self.resolution;
        let y0 = self.origin.y + j as f64 * self.resolution;
        Aabb {
            min: (x0, y0),
            max: (x0 + self.resolution, y0 + self.resolution),
        }
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (i64, i64, CellState)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(k, c)| ((k % self.width) as i64, (k / self.width) as i64, *c))
    }

    /// Run-length encoding of the cell array, e.g. `"4U2F1O"`.
    pub fn encode_cells(&self) -> String {
        encode_runs(&self.cells)
    }
}

pub fn encode_runs(cells: &[CellState]) -> String {
    let mut out = String::new();
    let mut iter = cells.iter().peekable();
    while let Some(&c) = iter.next() {
        let mut n = 1usize;
        while iter.peek() == Some(&&c) {
            iter.next();
            n += 1;
        }
        let _ = write!(out, "{n}{}", c.code());
    }
    out
}

pub fn decode_runs(text: &str) -> Result<Vec<CellState>, GridError> {
    let mut cells = Vec::new();
    let mut count: Option<usize> = None;
    for ch in text.chars() {
        if let Some(d) = ch.to_digit(10) {
            let n = count.unwrap_or(0);
            count = Some(
                n.checked_mul(10)
                    .and_then(|n| n.checked_add(d as usize))
                    .ok_or_else(|| GridError::BadEncoding("run length overflow".into()))?,
            );
        } else {
            let state = CellState::from_code(ch)
                .ok_or_else(|| GridError::BadEncoding(format!("unexpected character {ch:?}")))?;
            let n = count
                .take()
                .ok_or_else(|| GridError::BadEncoding(format!("missing count before {ch:?}")))?;
            if n == 0 {
                return Err(GridError::BadEncoding("zero-length run".into()));
            }
            cells.extend(std::iter::repeat_n(state, n));
        }
    }
    if count.is_some() {
        return Err(GridError::BadEncoding("trailing count".into()));
    }
    Ok(cells)
}

#[derive(Serialize, Deserialize)]
struct GridWire {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2,
    cells: String,
}

impl From<GridMap> for GridWire {
    fn from(g: GridMap) -> Self {
        GridWire {
            cells: g.encode_cells(),
            width: g.width,
            height: g.height,
            resolution: g.resolution,
            origin: g.origin,
        }
    }
}

impl TryFrom<GridWire> for GridMap {
    type Error = GridError;

    fn try_from(w: GridWire) -> Result<Self, Self::Error> {
        let cells = decode_runs(&w.cells)?;
        GridMap::from_cells(w.width, w.height, w.resolution, w.origin, cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodes_runs() {
        use CellState::*;
        let cells = vec![Unknown, Unknown, Free, Occupied, Occupied, Occupied];
        assert_eq!(encode_runs(&cells), "2U1F3O");
        assert_eq!(decode_runs("2U1F3O").unwrap(), cells);
        assert_eq!(encode_runs(&[]), "");
    }

    #[test]
    fn rejects_bad_runs() {
        assert!(decode_runs("U").is_err());
        assert!(decode_runs("3").is_err());
        assert!(decode_runs("0F").is_err());
        assert!(decode_runs("2X").is_err());
    }

    #[test]
    fn cell_geometry() {
        let g = GridMap::new(4, 3, 0.5, Pose2::at(1.0, 2.0));
        assert_eq!(g.cell_of(1.1, 2.1), (0, 0));
        assert_eq!(g.cell_of(2.6, 3.4), (3, 2));
        assert_eq!(g.cell_center(1, 1), (1.75, 2.75));
        assert_eq!(g.get(4, 0), None);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let json = r#"{"width":2,"height":2,"resolution":0.5,"origin":{"x":0,"y":0,"theta":0},"cells":"3U"}"#;
        assert!(serde_json::from_str::<GridMap>(json).is_err());
    }

    fn cell_state() -> impl Strategy<Value = CellState> {
        prop_oneof![
            Just(CellState::Unknown),
            Just(CellState::Free),
            Just(CellState::Occupied)
        ]
    }

    proptest! {
        #[test]
        fn wire_round_trip(w in 0usize..12, h in 0usize..12, seed in proptest::collection::vec(cell_state(), 144)) {
            let cells = seed[..w * h].to_vec();
            let g = GridMap::from_cells(w, h, 0.25, Pose2::new(-1.5, 3.0, 0.0), cells).unwrap();
            let text = serde_json::to_string(&g).unwrap();
            let back: GridMap = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
