use crate::geometry::Pose2;
use crate::grid::{CellState, GridMap};

/// Fused occupancy grid built from every local gridmap the robot produced.
///
/// All local grids must share the view's resolution and be aligned to the
/// same cell lattice (origin a multiple of the resolution). Known cells are
/// overwritten by later known observations; unknown never overwrites known.
#[derive(Debug, Clone)]
pub struct GlobalView {
    grid: GridMap,
    /// Absolute index of the grid's (0, 0) cell.
    offset: (i64, i64),
    known: usize,
}

impl GlobalView {
    pub fn new(resolution: f64) -> Self {
        Self {
            grid: GridMap::new(0, 0, resolution, Pose2::at(0.0, 0.0)),
            offset: (0, 0),
            known: 0,
        }
    }

    pub fn resolution(&self) -> f64 {
        self.grid.resolution()
    }

    pub fn grid(&self) -> &GridMap {
        &self.grid
    }

    pub fn known_count(&self) -> usize {
        self.known
    }

    fn abs_index(&self, g: &GridMap) -> (i64, i64) {
        let r = self.resolution();
        (
            (g.origin().x / r).round() as i64,
            (g.origin().y / r).round() as i64,
        )
    }

    fn grow_to(&mut self, lo: (i64, i64), hi: (i64, i64)) {
        let (w, h) = (self.grid.width() as i64, self.grid.height() as i64);
        let cur_hi = (self.offset.0 + w, self.offset.1 + h);
        let (nlo, nhi) = if w == 0 || h == 0 {
            (lo, hi)
        } else {
            (
                (lo.0.min(self.offset.0), lo.1.min(self.offset.1)),
                (hi.0.max(cur_hi.0), hi.1.max(cur_hi.1)),
            )
        };
        if w > 0 && h > 0 && nlo == self.offset && nhi == cur_hi {
            return;
        }
        let r = self.resolution();
        let mut grid = GridMap::new(
            (nhi.0 - nlo.0) as usize,
            (nhi.1 - nlo.1) as usize,
            r,
            Pose2::at(nlo.0 as f64 * r, nlo.1 as f64 * r),
        );
        for (i, j, c) in self.grid.iter_cells() {
            if c.is_known() {
                grid.set(i + self.offset.0 - nlo.0, j + self.offset.1 - nlo.1, c);
            }
        }
        self.grid = grid;
        self.offset = nlo;
    }

    /// Folds a local grid into the view and returns the cells that became
    /// occupied, as world points at their centres.
    pub fn merge(&mut self, local: &GridMap) -> Vec<(f64, f64)> {
        if local.is_empty() {
            return Vec::new();
        }
        assert!(
            (local.resolution() - self.resolution()).abs() < 1e-12,
            "local grid resolution differs from the view"
        );
        let base = self.abs_index(local);
        let hi = (base.0 + local.width() as i64, base.1 + local.height() as i64);
        self.grow_to(base, hi);
        let mut occupied = Vec::new();
        for (i, j, c) in local.iter_cells() {
            if !c.is_known() {
                continue;
            }
            let (vi, vj) = (base.0 + i - self.offset.0, base.1 + j - self.offset.1);
            let old = self.grid.get(vi, vj).expect("view covers the local grid");
            if old != c {
                if !old.is_known() {
                    self.known += 1;
                }
                if c == CellState::Occupied {
                    occupied.push(self.grid.cell_center(vi, vj));
                }
                self.grid.set(vi, vj, c);
            }
        }
        occupied
    }

    /// State of the cell containing a world point; outside the view is unknown.
    pub fn state_at(&self, x: f64, y: f64) -> CellState {
        let (i, j) = self.grid.cell_of(x, y);
        self.grid.get(i, j).unwrap_or(CellState::Unknown)
    }

    /// Cells whose square comes strictly closer than `radius` to segment `a`-`b`,
    /// including cells outside the view (reported as unknown).
    pub fn corridor_cells(
        &self,
        a: (f64, f64),
        b: (f64, f64),
        radius: f64,
    ) -> impl Iterator<Item = CellState> + '_ {
        let (i0, j0) = self.grid.cell_of(a.0.min(b.0) - radius, a.1.min(b.1) - radius);
        let (i1, j1) = self.grid.cell_of(a.0.max(b.0) + radius, a.1.max(b.1) + radius);
        (j0..=j1).flat_map(move |j| {
            (i0..=i1)
                .filter(move |&i| self.grid.cell_box(i, j).distance_to_segment(a, b) < radius)
                .map(move |i| self.grid.get(i, j).unwrap_or(CellState::Unknown))
        })
    }

    /// Whether the swept disk from `a` to `b` touches an occupied cell.
    pub fn corridor_blocked(&self, a: (f64, f64), b: (f64, f64), radius: f64) -> bool {
        self.corridor_cells(a, b, radius)
            .any(|c| c == CellState::Occupied)
    }

    /// Whether every cell touched by the swept disk is observed free.
    pub fn corridor_free(&self, a: (f64, f64), b: (f64, f64), radius: f64) -> bool {
        self.corridor_cells(a, b, radius).all(|c| c == CellState::Free)
    }

    /// Whether the segment crosses no occupied cell.
    pub fn line_of_sight(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let dist = (b.0 - a.0).hypot(b.1 - a.1);
        let angle = (b.1 - a.1).atan2(b.0 - a.0);
        let r = self.resolution();
        let mut clear = true;
        crate::world::raycast::traverse(r, a, angle, dist, |i, j, _| {
            let (x, y) = ((i as f64 + 0.5) * r, (j as f64 + 0.5) * r);
            if self.state_at(x, y) == CellState::Occupied {
                clear = false;
                return true;
            }
            false
        });
        clear
    }

    /// Whether an unknown cell centre lies within `radius` of `(x, y)`.
    pub fn unknown_within(&self, x: f64, y: f64, radius: f64) -> bool {
        let (i0, j0) = self.grid.cell_of(x - radius, y - radius);
        let (i1, j1) = self.grid.cell_of(x + radius, y + radius);
        (j0 - 1..=j1 + 1).any(|j| {
            (i0 - 1..=i1 + 1).any(|i| {
                let (cx, cy) = self.grid.cell_center(i, j);
                (cx - x).hypot(cy - y) <= radius + 1e-9
                    && self.grid.get(i, j).unwrap_or(CellState::Unknown) == CellState::Unknown
            })
        })
    }
}
