//! Periodic lattices on the torus and nodal fields.
//!
//! Axes are ordered `x_1, .., x_n` followed by the optional `y` axis. Node
//! values are stored lexicographically with the first axis fastest and `y`
//! slowest, sampled at coordinates `i * h` (node-centred, no cell averaging).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of axes (two `x` axes plus `y`).
pub const MAX_AXES: usize = 3;
/// Smallest admissible number of cells on any axis.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    space_dims: usize,
    has_y: bool,
    cells: [usize; MAX_AXES],
    periods: [f64; MAX_AXES],
}

impl TorusGrid {
    pub fn new(space_dims: usize, has_y: bool, cells: &[usize], periods: &[f64]) -> Result<Self> {
        if !(1..=2).contains(&space_dims) {
            return Err(Error::config(format!(
                "space_dims must be 1 or 2, got {space_dims}"
            )));
        }
        let axes = space_dims + has_y as usize;
        if cells.len() != axes || periods.len() != axes {
            return Err(Error::config(format!(
                "grid with {axes} axes needs {axes} cell counts and periods, got {} and {}",
                cells.len(),
                periods.len()
            )));
        }
        let mut grid = TorusGrid {
            space_dims,
            has_y,
            cells: [1; MAX_AXES],
            periods: [1.0; MAX_AXES],
        };
        for a in 0..axes {
            if cells[a] < MIN_CELLS {
                return Err(Error::config(format!(
                    "axis {a} has {} cells, at least {MIN_CELLS} required",
                    cells[a]
                )));
            }
            if !(periods[a].is_finite() && periods[a] > 0.0) {
                return Err(Error::config(format!(
                    "axis {a} period must be positive, got {}",
                    periods[a]
                )));
            }
            grid.cells[a] = cells[a];
            grid.periods[a] = periods[a];
        }
        Ok(grid)
    }

    /// Unit-period grid with the same cell count on every axis.
    pub fn uniform(space_dims: usize, has_y: bool, cells: usize) -> Result<Self> {
        let axes = space_dims + has_y as usize;
        Self::new(space_dims, has_y, &vec![cells; axes], &vec![1.0; axes])
    }

    pub fn space_dims(&self) -> usize {
        self.space_dims
    }

    pub fn has_y(&self) -> bool {
        self.has_y
    }

    pub fn axes(&self) -> usize {
        self.space_dims + self.has_y as usize
    }

    /// Index of the `y` axis, if present.
    pub fn y_axis(&self) -> Option<usize> {
        self.has_y.then_some(self.space_dims)
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.axes()]
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods[..self.axes()]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.cells[axis] as f64
    }

    pub fn len(&self) -> usize {
        self.cells().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.cells[..axis].iter().product()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (a, &c) in coords.iter().enumerate().take(self.axes()) {
            idx += (c % self.cells[a]) * stride;
            stride *= self.cells[a];
        }
        idx
    }

    pub fn coords(&self, mut idx: usize) -> [usize; MAX_AXES] {
        let mut out = [0; MAX_AXES];
        for (a, c) in out.iter_mut().enumerate().take(self.axes()) {
            *c = idx % self.cells[a];
            idx /= self.cells[a];
        }
        out
    }

    /// Index of the neighbour `offset` nodes away along `axis`, wrapping.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let n = self.cells[axis] as isize;
        let stride = self.stride(axis);
        let c = ((idx / stride) % self.cells[axis]) as isize;
        let shifted = (c + offset).rem_euclid(n);
        (idx as isize + (shifted - c) * stride as isize) as usize
    }

    /// Physical coordinates of a node, `x` axes first then `y`.
    pub fn position(&self, idx: usize) -> [f64; MAX_AXES] {
        let c = self.coords(idx);
        let mut out = [0.0; MAX_AXES];
        for a in 0..self.axes() {
            out[a] = c[a] as f64 * self.spacing(a);
        }
        out
    }

    /// The grid obtained by dropping the `y` axis.
    pub fn x_grid(&self) -> Result<TorusGrid> {
        if !self.has_y {
            return Err(Error::config("grid has no y-axis"));
        }
        let n = self.space_dims;
        TorusGrid::new(n, false, &self.cells[..n], &self.periods[..n])
    }

    /// True if `other` is this grid coarsened by an integer factor per axis.
    pub fn refines(&self, other: &TorusGrid) -> bool {
        self.space_dims == other.space_dims
            && self.has_y == other.has_y
            && (0..self.axes()).all(|a| {
                self.periods[a] == other.periods[a] && self.cells[a] % other.cells[a] == 0
            })
    }
}

/// Real nodal values on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("non-finite value at node {i}")));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(&grid.position(i)[..grid.axes()]))
            .collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.values[self.grid.index(coords)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Arithmetic mean, summed in storage order.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `max(f) - min(f)`.
    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_constant(&self, c: f64) -> Field {
        self.map(|v| v + c)
    }

    /// Per-column maximum over the `y` axis, on the `x`-only grid.
    pub fn reduce_max_over_y(&self) -> Result<Field> {
        let xg = self.grid.x_grid()?;
        let columns = xg.len();
        let mut out = vec![f64::NEG_INFINITY; columns];
        for (chunk_idx, row) in self.values.chunks(columns).enumerate() {
            let _ = chunk_idx;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = o.max(v);
            }
        }
        Ok(Field { grid: xg, values: out })
    }

    /// Values at the nodes of a coarser grid that this grid refines.
    pub fn restrict_to(&self, coarse: &TorusGrid) -> Result<Field> {
        if !self.grid.refines(coarse) {
            return Err(Error::config("target grid is not a coarsening of the field's grid"));
        }
        let values = (0..coarse.len())
            .map(|i| {
                let c = coarse.coords(i);
                let mut fine = [0; MAX_AXES];
                for a in 0..coarse.axes() {
                    fine[a] = c[a] * (self.grid.cells[a] / coarse.cells[a]);
                }
                self.values[self.grid.index(&fine)]
            })
            .collect();
        Ok(Field { grid: *coarse, values })
    }

    /// `sup |self - other|` on a shared grid.
    pub fn sup_distance(&self, other: &Field) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::config("fields live on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_coarse_or_malformed_grids() {
        assert!(TorusGrid::uniform(1, false, 4).is_err());
        assert!(TorusGrid::uniform(3, false, 16).is_err());
        assert!(TorusGrid::new(1, true, &[16], &[1.0]).is_err());
        assert!(TorusGrid::new(1, false, &[16], &[0.0]).is_err());
    }

    #[test]
    fn spacing_is_period_over_cells() {
        let g = TorusGrid::new(1, true, &[16, 32], &[2.0, 1.0]).unwrap();
        assert_eq!(g.spacing(0), 2.0 / 16.0);
        assert_eq!(g.spacing(1), 1.0 / 32.0);
        assert_eq!(g.len(), 512);
    }

    #[test]
    fn neighbors_wrap_on_every_axis() {
        let g = TorusGrid::uniform(2, true, 8).unwrap();
        let corner = g.index(&[0, 0, 0]);
        assert_eq!(g.coords(g.neighbor(corner, 0, -1))[..3], [7, 0, 0]);
        assert_eq!(g.coords(g.neighbor(corner, 1, -1))[..3], [0, 7, 0]);
        assert_eq!(g.coords(g.neighbor(corner, 2, -1))[..3], [0, 0, 7]);
        let far = g.index(&[7, 7, 7]);
        assert_eq!(g.neighbor(far, 2, 1), g.index(&[7, 7, 0]));
        assert_eq!(g.neighbor(far, 0, 9), g.index(&[0, 7, 7]));
    }

    #[test]
    fn y_axis_is_slowest() {
        let g = TorusGrid::uniform(1, true, 8).unwrap();
        assert_eq!(g.index(&[1, 0]), 1);
        assert_eq!(g.index(&[0, 1]), 8);
        assert_eq!(g.y_axis(), Some(1));
    }

    #[test]
    fn field_rejects_bad_lengths_and_nan() {
        let g = TorusGrid::uniform(1, false, 8).unwrap();
        assert!(Field::new(g, vec![0.0; 7]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(Field::new(g, v).is_err());
    }

    #[test]
    fn reduce_max_of_constant() {
        let g = TorusGrid::uniform(1, true, 16).unwrap();
        let f = Field::constant(g, 3.0).reduce_max_over_y().unwrap();
        assert_eq!(f.grid().cells(), &[16]);
        assert!(f.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn reduce_max_of_sine_in_y_hits_one() {
        let g = TorusGrid::uniform(1, true, 64).unwrap();
        let f = Field::from_fn(g, |p| (2.0 * PI * p[1]).sin()).reduce_max_over_y().unwrap();
        // y = 1/4 is a node, so the maximum is attained up to rounding of sin(pi/2)
        assert!(f.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn reduce_max_matches_brute_force_scan() {
        let g = TorusGrid::new(1, true, &[24, 40], &[1.0, 1.0]).unwrap();
        let f = Field::from_fn(g, |p| (2.0 * PI * p[0]).cos() + p[1] * (1.0 - p[1]));
        let reduced = f.reduce_max_over_y().unwrap();
        for i in 0..24 {
            let mut best = f64::NEG_INFINITY;
            for j in 0..40 {
                best = best.max(f.get(&[i, j]));
            }
            assert_eq!(reduced.values()[i], best);
        }
    }

    #[test]
    fn reduce_requires_y_axis() {
        let g = TorusGrid::uniform(1, false, 16).unwrap();
        assert!(matches!(
            Field::constant(g, 0.0).reduce_max_over_y(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn oscillation_examples() {
        let g = TorusGrid::uniform(1, false, 8).unwrap();
        assert_eq!(Field::constant(g, 5.0).oscillation(), 0.0);
        let f = Field::new(g, vec![-1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.5, 0.0]).unwrap();
        assert_eq!(f.oscillation(), 3.0);
        let g64 = TorusGrid::uniform(1, false, 64).unwrap();
        let s = Field::from_fn(g64, |p| (2.0 * PI * p[0]).sin());
        assert!((s.oscillation() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn restriction_samples_coarse_nodes() {
        let fine = TorusGrid::uniform(1, false, 32).unwrap();
        let coarse = TorusGrid::uniform(1, false, 8).unwrap();
        let f = Field::from_fn(fine, |p| p[0]);
        let r = f.restrict_to(&coarse).unwrap();
        assert_eq!(r.values()[3], 3.0 / 8.0);
        assert!(Field::constant(coarse, 0.0).restrict_to(&fine).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn oscillation_translation_invariant(vals in prop::collection::vec(-100i32..100, 16), c in -1000i32..1000) {
                // integer-valued data keeps the shift exact in floating point
                let g = TorusGrid::uniform(1, false, 16).unwrap();
                let f = Field::new(g, vals.iter().map(|&v| v as f64).collect()).unwrap();
                prop_assert_eq!(f.oscillation(), f.add_constant(c as f64).oscillation());
            }

            #[test]
            fn column_max_dominates_every_slice(vals in prop::collection::vec(-1e3f64..1e3, 64)) {
                let g = TorusGrid::uniform(1, true, 8).unwrap();
                let f = Field::new(g, vals).unwrap();
                let m = f.reduce_max_over_y().unwrap();
                for j in 0..8 {
                    for i in 0..8 {
                        prop_assert!(m.values()[i] >= f.get(&[i, j]));
                    }
                }
            }
        }
    }
}
