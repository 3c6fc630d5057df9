//! Homogenization experiments: fine-scale solves against the effective
//! equation, and the graph equation against its lifted cell problem.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::effective::{effective_at, EffectiveOptions, EffectiveTable};
use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid, MAX_AXES};
use crate::hamiltonians::{lift, CoeffField, GraphSpec, HamiltonianSpec};
use crate::scheme::{evolve, GraphHamiltonian, GridHamiltonian, Marcher, SampledHamiltonian, SchemeConfig};

/// Grid cells required per fast period.
pub const CELLS_PER_FAST_PERIOD: usize = 32;
/// Largest admissible denominator of a rational slope.
pub const MAX_DENOMINATOR: u32 = 8;

/// `1/ε` as an integer frequency multiplier.
pub fn fast_multiplier(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::config(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let m = 1.0 / epsilon;
    let r = m.round();
    if (m - r).abs() > 1e-9 * r {
        return Err(Error::config(format!("1/epsilon must be an integer, got {m}")));
    }
    Ok(r)
}

/// Cells needed on a unit axis to resolve oscillations of period `ε`.
pub fn required_cells(epsilon: f64) -> Result<usize> {
    Ok(CELLS_PER_FAST_PERIOD * fast_multiplier(epsilon)? as usize)
}

fn check_resolution(grid: &TorusGrid, epsilon: f64) -> Result<()> {
    let required = required_cells(epsilon)?;
    for axis in 0..grid.axes() {
        let actual = (grid.cells()[axis] as f64 / grid.periods()[axis]).floor() as usize;
        if actual < required {
            return Err(Error::UnderResolved {
                epsilon,
                axis,
                required,
                actual,
            });
        }
    }
    Ok(())
}

/// Nodal samples of `c(x, y, 0)`.
pub fn sample_initial(c: &CoeffField, grid: &TorusGrid) -> Field {
    let dims = grid.space_dims();
    let has_y = grid.has_y();
    Field::from_fn(*grid, |pos| {
        let y = if has_y { pos[dims] } else { 0.0 };
        c.eval(&pos[..dims], y, 0.0)
    })
}

/// `U^ε(T)` for `U_t + F(x/ε, y/ε, t/ε, DU) = 0`.
pub fn solve_fine(spec: &HamiltonianSpec, epsilon: f64, u0: &Field, horizon: f64, cfg: &SchemeConfig) -> Result<Field> {
    let m = fast_multiplier(epsilon)?;
    check_resolution(u0.grid(), epsilon)?;
    let ham = SampledHamiltonian::with_scale(spec, u0.grid(), m)?;
    evolve(&ham, u0, 0.0, horizon, cfg)
}

/// `F̄` read from a table by multilinear interpolation.
pub struct TableHamiltonian<'t> {
    table: &'t EffectiveTable,
    grid: TorusGrid,
    hull: Vec<(f64, f64)>,
    lipschitz: Vec<f64>,
}

impl<'t> TableHamiltonian<'t> {
    pub fn new(table: &'t EffectiveTable, grid: &TorusGrid) -> Result<Self> {
        let axes = &table.p_grid.axes;
        if axes.len() != grid.axes() {
            return Err(Error::config(format!(
                "table has {} slope axes, grid has {}",
                axes.len(),
                grid.axes()
            )));
        }
        if table.values.len() != table.p_grid.len() {
            return Err(Error::config("table value count does not match its slope grid"));
        }
        Ok(TableHamiltonian {
            table,
            grid: *grid,
            hull: axes.iter().map(|a| (a.min, a.max)).collect(),
            lipschitz: table.lipschitz_estimate(),
        })
    }
}

impl GridHamiltonian for TableHamiltonian<'_> {
    type Frame = ();

    fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn frame(&self, _t: f64, _values: &[f64]) {}

    #[inline]
    fn eval(&self, _frame: &(), _node: usize, p: &[f64; MAX_AXES]) -> f64 {
        self.table.interpolate_unchecked(&p[..self.grid.axes()])
    }

    fn time_dependent(&self) -> bool {
        false
    }

    fn gradient_bounds(&self, _radius: f64) -> Vec<f64> {
        self.lipschitz.clone()
    }

    fn slope_hull(&self) -> Option<&[(f64, f64)]> {
        Some(&self.hull)
    }
}

/// `U(T)` for `U_t + F̄(DU) = 0` with `F̄` from `table`.
pub fn solve_homogenized(table: &EffectiveTable, u0: &Field, horizon: f64, cfg: &SchemeConfig) -> Result<Field> {
    let ham = TableHamiltonian::new(table, u0.grid())?;
    evolve(&ham, u0, 0.0, horizon, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    pub decay_factors: Vec<f64>,
    /// Cells per axis of each fine solve.
    pub fine_cells: Vec<usize>,
    pub homogenized_cells: usize,
    pub comparison_cells: usize,
    pub horizon: f64,
    pub cells_per_fast_period: usize,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn min_decay(&self) -> f64 {
        self.decay_factors.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,cells,error,decay_factor\n");
        for (i, (e, err)) in self.epsilons.iter().zip(&self.errors).enumerate() {
            let decay = if i > 0 {
                self.decay_factors[i - 1].to_string()
            } else {
                String::new()
            };
            let _ = writeln!(out, "{e},{},{err},{decay}", self.fine_cells[i]);
        }
        out
    }
}

/// Unit-period grid for `spec` with `cells_per_period` cells per fast
/// period `ε` on every axis.
pub fn resolved_grid(spec: &HamiltonianSpec, epsilon: f64, cells_per_period: usize) -> Result<TorusGrid> {
    let cells = cells_per_period * fast_multiplier(epsilon)? as usize;
    TorusGrid::uniform(spec.space_dims, spec.has_drift() || spec.y_dependent(), cells)
}

/// `‖U^ε(T) − U(T)‖_∞` per `ε`, each fine solve on its own grid with
/// `cells_per_period` cells per fast period, `U` on the finest one, compared
/// on the coarsest lattice.
pub fn convergence_study(
    spec: &HamiltonianSpec,
    table: &EffectiveTable,
    epsilons: &[f64],
    u0: &CoeffField,
    horizon: f64,
    cells_per_period: usize,
    cfg: &SchemeConfig,
) -> Result<ConvergenceReport> {
    if epsilons.is_empty() {
        return Err(Error::config("epsilon list is empty"));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("epsilons must be strictly decreasing"));
    }
    let grids = epsilons
        .iter()
        .map(|&e| resolved_grid(spec, e, cells_per_period))
        .collect::<Result<Vec<_>>>()?;
    let coarse = grids[0];
    let finest = *grids.last().expect("nonempty");
    let homogenized = solve_homogenized(table, &sample_initial(u0, &finest), horizon, cfg)?.restrict_to(&coarse)?;
    let mut errors = Vec::with_capacity(epsilons.len());
    for (&e, grid) in epsilons.iter().zip(&grids) {
        let fine = solve_fine(spec, e, &sample_initial(u0, grid), horizon, cfg)?;
        errors.push(fine.restrict_to(&coarse)?.sup_distance(&homogenized)?);
    }
    Ok(ConvergenceReport {
        decay_factors: errors.windows(2).map(|w| w[0] / w[1]).collect(),
        epsilons: epsilons.to_vec(),
        errors,
        fine_cells: grids.iter().map(|g| g.cells()[0]).collect(),
        homogenized_cells: finest.cells()[0],
        comparison_cells: coarse.cells()[0],
        horizon,
        cells_per_fast_period: cells_per_period,
    })
}

/// `u^ε(T)` for `u_t + c(x/ε, t/ε)|Du| + g(u/ε, t/ε) = 0`, with `u/ε` taken
/// from the previous step.
pub fn solve_graph(graph: &GraphSpec, epsilon: f64, u0: &Field, horizon: f64, cfg: &SchemeConfig) -> Result<Field> {
    let m = fast_multiplier(epsilon)?;
    check_resolution(u0.grid(), epsilon)?;
    let ham = GraphHamiltonian::new(graph, u0.grid(), m, &[])?;
    evolve(&ham, u0, 0.0, horizon, cfg)
}

/// `H̄(p) = F̄(p, −1)` for the lift of `graph`, on `grid` (x-axes then y).
pub fn effective_h(
    graph: &GraphSpec,
    grid: &TorusGrid,
    p: &[f64],
    opts: &EffectiveOptions,
    cfg: &SchemeConfig,
) -> Result<f64> {
    if p.len() != graph.space_dims {
        return Err(Error::config(format!(
            "slope has {} components, graph has {} dimensions",
            p.len(),
            graph.space_dims
        )));
    }
    let mut q = p.to_vec();
    q.push(-1.0);
    Ok(effective_at(&lift(graph)?, grid, &q, opts, cfg)?.value)
}

/// A slope `r/q` per axis with a common denominator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationalSlope {
    pub numerators: Vec<i64>,
    pub denominator: u32,
}

impl RationalSlope {
    pub fn new(numerators: Vec<i64>, denominator: u32) -> Result<Self> {
        if denominator == 0 || denominator > MAX_DENOMINATOR {
            return Err(Error::config(format!(
                "slope denominator must lie in 1..={MAX_DENOMINATOR}, got {denominator}"
            )));
        }
        Ok(RationalSlope {
            numerators,
            denominator,
        })
    }

    /// Nearest rational with denominator at most 8, rejecting anything that
    /// is not exactly one.
    pub fn from_f64(p: &[f64]) -> Result<Self> {
        for q in 1..=MAX_DENOMINATOR {
            let nums: Vec<i64> = p.iter().map(|v| (v * q as f64).round() as i64).collect();
            if nums
                .iter()
                .zip(p)
                .all(|(n, v)| (*n as f64 / q as f64 - v).abs() <= 1e-12)
            {
                return RationalSlope::new(nums, q);
            }
        }
        Err(Error::config(format!(
            "slope {p:?} is not rational with denominator at most {MAX_DENOMINATOR}"
        )))
    }

    pub fn values(&self) -> Vec<f64> {
        self.numerators
            .iter()
            .map(|n| *n as f64 / self.denominator as f64)
            .collect()
    }
}

/// Long-time slope of `w = p·x + ŵ` for the graph equation, with `ŵ` solved
/// on the `q`-fold torus from `ŵ(·, 0) = w0`; estimates `−H̄(p)`.
pub fn longtime_slope(
    graph: &GraphSpec,
    p: &RationalSlope,
    w0: &CoeffField,
    horizon: f64,
    cells_per_unit: usize,
    cfg: &SchemeConfig,
) -> Result<f64> {
    let dims = graph.space_dims;
    if p.numerators.len() != dims {
        return Err(Error::config(format!(
            "slope has {} components, graph has {dims} dimensions",
            p.numerators.len()
        )));
    }
    if p.denominator == 0 || p.denominator > MAX_DENOMINATOR {
        return Err(Error::config("slope denominator out of range"));
    }
    if !(horizon >= crate::ergodic::MIN_HORIZON) {
        return Err(Error::config(format!("horizon must be at least {}", crate::ergodic::MIN_HORIZON)));
    }
    let half = horizon / 2.0;
    if graph.time_dependent() && half.fract() != 0.0 {
        return Err(Error::config("horizon must be an even integer for time-periodic graph equations"));
    }
    let q = p.denominator as usize;
    let grid = TorusGrid::new(dims, false, &vec![q * cells_per_unit; dims], &vec![q as f64; dims])?;
    let ham = GraphHamiltonian::new(graph, &grid, 1.0, &p.values())?;
    let mut m = Marcher::new(&ham, &sample_initial(w0, &grid), 0.0, 0.0, cfg)?;
    let n = m.steps_for(half);
    m.advance(half, n)?;
    let mid = m.field().mean();
    m.advance(half, n)?;
    Ok((m.field().mean() - mid) / half)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphResult {
    pub p: RationalSlope,
    pub h_bar_lifted: f64,
    pub slope_longtime: f64,
    pub discrepancy: f64,
}

impl GraphResult {
    pub fn new(p: RationalSlope, h_bar_lifted: f64, slope_longtime: f64) -> Self {
        GraphResult {
            p,
            h_bar_lifted,
            slope_longtime,
            discrepancy: (h_bar_lifted + slope_longtime).abs(),
        }
    }
}

pub fn graph_results_csv(results: &[GraphResult]) -> String {
    let mut out = String::from("p,numerators,denominator,h_bar_lifted,slope_longtime,discrepancy\n");
    for r in results {
        let p: Vec<String> = r.p.values().iter().map(f64::to_string).collect();
        let nums: Vec<String> = r.p.numerators.iter().map(i64::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.join(" "),
            nums.join(" "),
            r.p.denominator,
            r.h_bar_lifted,
            r.slope_longtime,
            r.discrepancy
        );
    }
    out
}
