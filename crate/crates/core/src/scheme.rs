//! Explicit monotone finite-difference marching for `v_t + G(x, y, t, Dv) = 0`
//! on the torus.
//!
//! The numerical Hamiltonian is local Lax-Friedrichs,
//! `Ĝ = G(·, (p⁻ + p⁺)/2) − Σ_a θ_a (p⁺_a − p⁻_a)/2`, advanced with forward
//! Euler. The update is nondecreasing in every nodal value as long as
//! `θ_a ≥ |∂G/∂p_a|` on the slopes visited and
//! `dt (Σ_a θ_a/h_a + L_u + α) ≤ 1`, where `L_u` is the Lipschitz constant of
//! `G` in the unknown itself (graph equations) and `α` the discount.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid, MAX_AXES};
use crate::hamiltonians::{pow_norm, CoeffField, DriftShape, GraphSpec, HamiltonianSpec, SampledCoeff, Term};

/// Smallest dissipation on an axis along which `G` depends on the slope;
/// axes with no slope dependence get none.
const THETA_FLOOR: f64 = 1e-2;
/// Safety factor on sampled slope bounds.
const THETA_MARGIN: f64 = 1.1;
/// Below this many nodes a step runs on the calling thread.
const PARALLEL_MIN_NODES: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub cfl: f64,
    /// Per-axis dissipation; derived from the Hamiltonian when absent.
    pub dissipation: Option<Vec<f64>>,
    pub gradient_probe_radius: f64,
    pub residual_tol: f64,
    pub max_steps: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            cfl: 0.5,
            dissipation: None,
            gradient_probe_radius: 20.0,
            residual_tol: 1e-6,
            max_steps: 20_000_000,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::config("residual_tol must be positive"));
        }
        if !(self.gradient_probe_radius > 0.0) {
            return Err(Error::config("gradient_probe_radius must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be positive"));
        }
        if let Some(theta) = &self.dissipation {
            if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(Error::config("dissipation coefficients must be positive"));
            }
        }
        Ok(())
    }
}

/// A Hamiltonian sampled on a grid, evaluated node by node during marching.
pub trait GridHamiltonian: Sync {
    /// Per-step cache of coefficient values.
    type Frame: Sync;

    fn grid(&self) -> &TorusGrid;

    /// Coefficients at time `t`; `values` is the current field, for
    /// Hamiltonians that depend on the unknown.
    fn frame(&self, t: f64, values: &[f64]) -> Self::Frame;

    /// `G` at `node` for the gradient `p` (one slope per grid axis).
    fn eval(&self, frame: &Self::Frame, node: usize, p: &[f64; MAX_AXES]) -> f64;

    fn time_dependent(&self) -> bool;

    /// Bounds on `|∂G/∂p_a|` for `|p| ≤ radius`, per grid axis.
    fn gradient_bounds(&self, radius: f64) -> Vec<f64>;

    /// Lipschitz constant of `G` in the value of the unknown.
    fn value_lipschitz(&self) -> f64 {
        0.0
    }

    /// Admissible averaged slopes per axis, when `G` is only known on a box.
    fn slope_hull(&self) -> Option<&[(f64, f64)]> {
        None
    }
}

/// Local Lax-Friedrichs flux from explicit one-sided slopes.
pub fn numerical_hamiltonian(
    g: impl Fn(&[f64]) -> f64,
    left: &[f64],
    right: &[f64],
    theta: &[f64],
) -> f64 {
    let avg: Vec<f64> = left.iter().zip(right).map(|(l, r)| 0.5 * (l + r)).collect();
    let mut diss = 0.0;
    for ((l, r), th) in left.iter().zip(right).zip(theta) {
        diss += th * (r - l);
    }
    g(&avg) - 0.5 * diss
}

/// A [`HamiltonianSpec`] sampled at the nodes of a grid, optionally with
/// fast variables `F(m x, m y, m t, p)` for an integer frequency multiplier `m`.
pub struct SampledHamiltonian {
    spec: HamiltonianSpec,
    grid: TorusGrid,
    dims: usize,
    y_axis: Option<usize>,
    shift_x: [f64; 2],
    shift_y: f64,
    exponent: f64,
    coercive: SampledCoeff,
    drifts: Vec<(SampledCoeff, DriftShape, f64)>,
    source: Option<SampledCoeff>,
    time_dependent: bool,
}

pub struct SpecFrame {
    a: Option<Vec<f64>>,
    b: Vec<Option<Vec<f64>>>,
    f: Option<Vec<f64>>,
}

pub(crate) fn node_points(grid: &TorusGrid) -> Vec<([f64; 2], f64)> {
    let dims = grid.space_dims();
    (0..grid.len())
        .map(|i| {
            let pos = grid.position(i);
            let mut x = [0.0; 2];
            x[..dims].copy_from_slice(&pos[..dims]);
            let y = if grid.has_y() { pos[dims] } else { 0.0 };
            (x, y)
        })
        .collect()
}

fn fill_if_timed(c: &SampledCoeff, t: f64) -> Option<Vec<f64>> {
    (!c.is_static()).then(|| {
        let mut out = Vec::new();
        c.fill(t, &mut out);
        out
    })
}

impl SampledHamiltonian {
    pub fn new(spec: &HamiltonianSpec, grid: &TorusGrid) -> Result<Self> {
        Self::with_scale(spec, grid, 1.0)
    }

    /// Samples `F(scale·x, scale·y, scale·t, p)`.
    pub fn with_scale(spec: &HamiltonianSpec, grid: &TorusGrid, scale: f64) -> Result<Self> {
        spec.validate()?;
        if grid.space_dims() != spec.space_dims {
            return Err(Error::config(format!(
                "spec has {} x-dimensions, grid has {}",
                spec.space_dims,
                grid.space_dims()
            )));
        }
        if !grid.has_y() && (spec.has_drift() || spec.y_dependent()) {
            return Err(Error::config("spec has drift terms but the grid has no y-axis"));
        }
        let points = node_points(grid);
        let mut coercive = None;
        let mut exponent = 1.0;
        let mut drifts = Vec::new();
        let mut source = CoeffField::constant(0.0);
        let mut has_source = false;
        for term in &spec.terms {
            match term {
                Term::Coercive { a, exponent: e } => {
                    coercive = Some(SampledCoeff::new(a, &points, scale));
                    exponent = *e;
                }
                Term::Drift { b, shape, offset } => {
                    drifts.push((SampledCoeff::new(b, &points, scale), *shape, *offset));
                }
                Term::Source { f } => {
                    has_source = true;
                    source.mean += f.mean;
                    source.modes.extend(f.modes.iter().cloned());
                }
            }
        }
        let mut shift_x = [0.0; 2];
        for (axis, s) in shift_x.iter_mut().enumerate().take(spec.space_dims) {
            *s = spec.shift.px_at(axis);
        }
        Ok(SampledHamiltonian {
            spec: spec.clone(),
            grid: *grid,
            dims: spec.space_dims,
            y_axis: grid.y_axis(),
            shift_x,
            shift_y: spec.shift.py,
            exponent,
            coercive: coercive.expect("validated spec has a coercive term"),
            drifts,
            source: has_source.then(|| SampledCoeff::new(&source, &points, scale)),
            time_dependent: spec.time_dependent(),
        })
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }
}

impl GridHamiltonian for SampledHamiltonian {
    type Frame = SpecFrame;

    fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn frame(&self, t: f64, _values: &[f64]) -> SpecFrame {
        SpecFrame {
            a: fill_if_timed(&self.coercive, t),
            b: self.drifts.iter().map(|(b, _, _)| fill_if_timed(b, t)).collect(),
            f: self.source.as_ref().and_then(|f| fill_if_timed(f, t)),
        }
    }

    #[inline]
    fn eval(&self, frame: &SpecFrame, node: usize, p: &[f64; MAX_AXES]) -> f64 {
        let mut norm2 = 0.0;
        for axis in 0..self.dims {
            let q = p[axis] + self.shift_x[axis];
            norm2 += q * q;
        }
        let a = frame.a.as_deref().unwrap_or(self.coercive.fixed())[node];
        let mut value = a * pow_norm(norm2, self.exponent);
        if let Some(ya) = self.y_axis {
            let qy = p[ya] + self.shift_y;
            for ((b, shape, offset), fb) in self.drifts.iter().zip(&frame.b) {
                let b = fb.as_deref().unwrap_or(b.fixed())[node];
                value += b * shape.apply(qy + offset);
            }
        }
        if let Some(src) = &self.source {
            value -= frame.f.as_deref().unwrap_or(src.fixed())[node];
        }
        value
    }

    fn time_dependent(&self) -> bool {
        self.time_dependent
    }

    fn gradient_bounds(&self, radius: f64) -> Vec<f64> {
        // the shift moves the probe box; widen the radius accordingly
        let shift = self.shift_x.iter().map(|s| s * s).sum::<f64>().sqrt();
        self.spec.gradient_bounds(radius + shift, self.grid.has_y())
    }
}

/// The graph Hamiltonian `c(m x, m t)|p + p₀| + g(m (u₀(x) + u), m t)` on an
/// `x`-only grid; `m` is the fast-variable multiplier, `p₀` a constant slope
/// and `u₀(x) = p₀·x` the matching affine offset of the unknown.
pub struct GraphHamiltonian {
    grid: TorusGrid,
    dims: usize,
    scale: f64,
    slope: [f64; 2],
    u_offset: Vec<f64>,
    c: SampledCoeff,
    c_bound: f64,
    g: CoeffField,
    time_dependent: bool,
}

pub struct GraphFrame {
    c: Option<Vec<f64>>,
    g: Vec<f64>,
}

impl GraphHamiltonian {
    pub fn new(graph: &GraphSpec, grid: &TorusGrid, scale: f64, slope: &[f64]) -> Result<Self> {
        graph.validate()?;
        if grid.has_y() || grid.space_dims() != graph.space_dims {
            return Err(Error::config(format!(
                "graph equation needs an x-only grid with {} axes",
                graph.space_dims
            )));
        }
        let dims = graph.space_dims;
        let mut s = [0.0; 2];
        s[..slope.len().min(dims)].copy_from_slice(&slope[..slope.len().min(dims)]);
        let points = node_points(grid);
        let u_offset = points
            .iter()
            .map(|(x, _)| x[..dims].iter().zip(&s).map(|(x, p)| x * p).sum())
            .collect();
        Ok(GraphHamiltonian {
            grid: *grid,
            dims,
            scale,
            slope: s,
            u_offset,
            c: SampledCoeff::new(&graph.c, &points, scale),
            c_bound: graph.c.sup_bound(),
            g: graph.g.clone(),
            time_dependent: graph.time_dependent(),
        })
    }
}

impl GridHamiltonian for GraphHamiltonian {
    type Frame = GraphFrame;

    fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn frame(&self, t: f64, values: &[f64]) -> GraphFrame {
        let st = self.scale * t;
        let g = if self.g.is_constant() {
            vec![self.g.mean; values.len()]
        } else {
            values
                .iter()
                .zip(&self.u_offset)
                .map(|(v, u0)| self.g.eval(&[], self.scale * (u0 + v), st))
                .collect()
        };
        GraphFrame {
            c: fill_if_timed(&self.c, t),
            g,
        }
    }

    #[inline]
    fn eval(&self, frame: &GraphFrame, node: usize, p: &[f64; MAX_AXES]) -> f64 {
        let mut norm2 = 0.0;
        for axis in 0..self.dims {
            let q = p[axis] + self.slope[axis];
            norm2 += q * q;
        }
        let c = frame.c.as_deref().unwrap_or(self.c.fixed())[node];
        c * pow_norm(norm2, 1.0) + frame.g[node]
    }

    fn time_dependent(&self) -> bool {
        self.time_dependent
    }

    fn gradient_bounds(&self, _radius: f64) -> Vec<f64> {
        vec![self.c_bound; self.dims]
    }

    fn value_lipschitz(&self) -> f64 {
        self.scale * self.g.y_lipschitz()
    }
}

/// Per-axis dissipation for `ham` under `cfg`.
pub fn dissipation<H: GridHamiltonian>(ham: &H, cfg: &SchemeConfig) -> Result<Vec<f64>> {
    let axes = ham.grid().axes();
    match &cfg.dissipation {
        Some(theta) if theta.len() == axes => Ok(theta.clone()),
        Some(theta) => Err(Error::config(format!(
            "dissipation has {} entries, grid has {axes} axes",
            theta.len()
        ))),
        None => Ok(ham
            .gradient_bounds(cfg.gradient_probe_radius)
            .into_iter()
            .map(|b| if b == 0.0 { 0.0 } else { (THETA_MARGIN * b).max(THETA_FLOOR) })
            .collect()),
    }
}

/// Forward-Euler marching state for one field.
pub struct Marcher<'h, H: GridHamiltonian> {
    ham: &'h H,
    grid: TorusGrid,
    theta: [f64; MAX_AXES],
    inv_h: [f64; MAX_AXES],
    discount: f64,
    dt_max: f64,
    t: f64,
    steps: usize,
    max_steps: usize,
    values: Vec<f64>,
    residual: Vec<f64>,
}

impl<'h, H: GridHamiltonian> Marcher<'h, H> {
    pub fn new(ham: &'h H, v0: &Field, t0: f64, discount: f64, cfg: &SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = *ham.grid();
        if *v0.grid() != grid {
            return Err(Error::config("initial field lives on a different grid than the Hamiltonian"));
        }
        if !(discount >= 0.0 && discount.is_finite()) {
            return Err(Error::config("discount must be nonnegative"));
        }
        let th = dissipation(ham, cfg)?;
        let mut theta = [0.0; MAX_AXES];
        let mut inv_h = [0.0; MAX_AXES];
        let mut rate = ham.value_lipschitz() + discount;
        for a in 0..grid.axes() {
            theta[a] = th[a];
            inv_h[a] = 1.0 / grid.spacing(a);
            rate += th[a] * inv_h[a];
        }
        Ok(Marcher {
            ham,
            grid,
            theta,
            inv_h,
            discount,
            dt_max: cfg.cfl / rate,
            t: t0,
            steps: 0,
            max_steps: cfg.max_steps,
            values: v0.values().to_vec(),
            residual: vec![0.0; grid.len()],
        })
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta[..self.grid.axes()]
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn field(&self) -> Field {
        Field::from_vec_unchecked(self.grid, self.values.clone())
    }

    /// Adds a constant to every node.
    pub fn shift_values(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }

    pub fn set_values(&mut self, values: &[f64]) {
        self.values.copy_from_slice(values);
    }

    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    /// Number of equal steps covering `duration` without exceeding `dt_max`.
    pub fn steps_for(&self, duration: f64) -> usize {
        ((duration / self.dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// Evaluates `R = Ĝ(v) + α v` at the current state; returns `sup |R|`.
    pub fn compute_residual(&mut self) -> Result<f64> {
        let frame = self.ham.frame(self.t, &self.values);
        let violation = residual_kernel(
            self.ham,
            &frame,
            &self.grid,
            &self.theta,
            &self.inv_h,
            self.discount,
            &self.values,
            &mut self.residual,
        );
        if let Some((axis, slope, (lo, hi))) = violation {
            return Err(Error::OutOfRange {
                what: format!("slope on axis {axis} at t = {}", self.t),
                value: slope,
                min: lo,
                max: hi,
            });
        }
        let mut sup: f64 = 0.0;
        for r in &self.residual {
            if !r.is_finite() {
                return Err(Error::Divergence {
                    step: self.steps,
                    time: self.t,
                });
            }
            sup = sup.max(r.abs());
        }
        Ok(sup)
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// One forward-Euler step of length `dt`; returns `sup |R|` at the start.
    pub fn step(&mut self, dt: f64) -> Result<f64> {
        let sup = self.compute_residual()?;
        if self.steps >= self.max_steps {
            return Err(Error::NonConvergence {
                iterations: self.steps,
                last: sup,
                history: vec![sup],
            });
        }
        self.apply_residual(dt, 0.0, 0.0);
        Ok(sup)
    }

    /// `v ← v − dt (R − m) − c` with the residual from the last
    /// [`compute_residual`](Self::compute_residual): the residual's constant
    /// part `m` is replaced by an explicit constant correction `c`.
    pub fn apply_residual(&mut self, dt: f64, m: f64, c: f64) {
        for (v, r) in self.values.iter_mut().zip(&self.residual) {
            *v -= dt * (r - m) + c;
        }
        self.steps += 1;
        self.t += dt;
    }

    /// Marches `n` equal steps covering `duration` exactly.
    pub fn advance(&mut self, duration: f64, n: usize) -> Result<()> {
        let t0 = self.t;
        let dt = duration / n as f64;
        for k in 0..n {
            self.step(dt)?;
            self.t = t0 + (k + 1) as f64 * dt;
        }
        Ok(())
    }

    pub fn advance_by(&mut self, duration: f64) -> Result<()> {
        let n = self.steps_for(duration);
        self.advance(duration, n)
    }
}

#[allow(clippy::too_many_arguments)]
fn residual_kernel<H: GridHamiltonian>(
    ham: &H,
    frame: &H::Frame,
    grid: &TorusGrid,
    theta: &[f64; MAX_AXES],
    inv_h: &[f64; MAX_AXES],
    discount: f64,
    values: &[f64],
    out: &mut [f64],
) -> Option<(usize, f64, (f64, f64))> {
    let axes = grid.axes();
    let nx = grid.cells()[0];
    let hull = ham.slope_hull();
    let row = |r: usize, out_row: &mut [f64]| -> Option<(usize, f64, (f64, f64))> {
        let base = r * nx;
        let mut plus = [0usize; MAX_AXES];
        let mut minus = [0usize; MAX_AXES];
        let mut rem = r;
        for a in 1..axes {
            let n = grid.cells()[a];
            let c = rem % n;
            rem /= n;
            let stride = grid.stride(a);
            plus[a] = if c + 1 == n { base - c * stride } else { base + stride };
            minus[a] = if c == 0 { base + (n - 1) * stride } else { base - stride };
        }
        let mut violation = None;
        for ix in 0..nx {
            let i = base + ix;
            let v = values[i];
            let ixp = if ix + 1 == nx { 0 } else { ix + 1 };
            let ixm = if ix == 0 { nx - 1 } else { ix - 1 };
            let mut p = [0.0; MAX_AXES];
            let left = (v - values[base + ixm]) * inv_h[0];
            let right = (values[base + ixp] - v) * inv_h[0];
            p[0] = 0.5 * (left + right);
            let mut diss = theta[0] * (right - left);
            for a in 1..axes {
                let left = (v - values[minus[a] + ix]) * inv_h[a];
                let right = (values[plus[a] + ix] - v) * inv_h[a];
                p[a] = 0.5 * (left + right);
                diss += theta[a] * (right - left);
            }
            if let Some(h) = hull {
                if violation.is_none() {
                    for a in 0..axes {
                        let (lo, hi) = h[a];
                        if !(p[a] >= lo && p[a] <= hi) {
                            violation = Some((a, p[a], (lo, hi)));
                            break;
                        }
                    }
                }
                if violation.is_some() {
                    out_row[ix] = 0.0;
                    continue;
                }
            }
            out_row[ix] = ham.eval(frame, i, &p) - 0.5 * diss + discount * v;
        }
        violation
    };
    if values.len() >= PARALLEL_MIN_NODES {
        out.par_chunks_mut(nx)
            .enumerate()
            .map(|(r, chunk)| row(r, chunk))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .next()
    } else {
        out.chunks_mut(nx)
            .enumerate()
            .map(|(r, chunk)| row(r, chunk))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .next()
    }
}

/// Solution at `t0 + duration` of `v_t + G(x, y, t, Dv) = 0` from `v0`.
pub fn evolve<H: GridHamiltonian>(ham: &H, v0: &Field, t0: f64, duration: f64, cfg: &SchemeConfig) -> Result<Field> {
    let mut m = Marcher::new(ham, v0, t0, 0.0, cfg)?;
    m.advance_by(duration)?;
    Ok(m.field())
}

/// Like [`evolve`], also recording the field at the first step boundary at
/// or after each requested sample time.
pub fn evolve_sampled<H: GridHamiltonian>(
    ham: &H,
    v0: &Field,
    t0: f64,
    duration: f64,
    sample_times: &[f64],
    cfg: &SchemeConfig,
) -> Result<(Field, Vec<(f64, Field)>)> {
    let mut m = Marcher::new(ham, v0, t0, 0.0, cfg)?;
    let n = m.steps_for(duration);
    let dt = duration / n as f64;
    let mut pending: Vec<f64> = sample_times.to_vec();
    pending.sort_by(f64::total_cmp);
    let mut samples = Vec::new();
    let mut next = 0;
    let take = |t: f64, m: &Marcher<'_, H>, samples: &mut Vec<(f64, Field)>, next: &mut usize| {
        while *next < pending.len() && pending[*next] <= t - t0 + 1e-12 {
            samples.push((t, m.field()));
            *next += 1;
        }
    };
    take(t0, &m, &mut samples, &mut next);
    for k in 0..n {
        m.step(dt)?;
        let t = t0 + (k + 1) as f64 * dt;
        m.set_time(t);
        take(t, &m, &mut samples, &mut next);
    }
    Ok((m.field(), samples))
}

/// Marches `u0 ≤ v0` side by side and reports whether the order holds at
/// every step.
pub fn comparison_probe<H: GridHamiltonian>(
    ham: &H,
    u0: &Field,
    v0: &Field,
    duration: f64,
    cfg: &SchemeConfig,
) -> Result<bool> {
    if u0.values().iter().zip(v0.values()).any(|(u, v)| u > v) {
        return Err(Error::config("comparison probe needs u0 <= v0 nodewise"));
    }
    let mut mu = Marcher::new(ham, u0, 0.0, 0.0, cfg)?;
    let mut mv = Marcher::new(ham, v0, 0.0, 0.0, cfg)?;
    let n = mu.steps_for(duration);
    let dt = duration / n as f64;
    for k in 0..n {
        mu.step(dt)?;
        mv.step(dt)?;
        let t = (k + 1) as f64 * dt;
        mu.set_time(t);
        mv.set_time(t);
        if mu.values().iter().zip(mv.values()).any(|(u, v)| u > v) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// CSV rows `t,i0[,i1[,i2]],value` for recorded samples.
pub fn trajectory_csv(samples: &[(f64, Field)]) -> String {
    let mut out = String::new();
    let axes = samples.first().map_or(1, |(_, f)| f.grid().axes());
    out.push('t');
    for a in 0..axes {
        let _ = write!(out, ",i{a}");
    }
    out.push_str(",value\n");
    for (t, field) in samples {
        let grid = field.grid();
        for (i, v) in field.values().iter().enumerate() {
            let c = grid.coords(i);
            let _ = write!(out, "{t}");
            for ca in c.iter().take(axes) {
                let _ = write!(out, ",{ca}");
            }
            let _ = writeln!(out, ",{v}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use super::*;
    use crate::hamiltonians::Mode;

    fn spec1d(terms: Vec<Term>) -> HamiltonianSpec {
        HamiltonianSpec::new(1, 0.0, terms).unwrap()
    }

    fn coercive(a: f64) -> Term {
        Term::Coercive {
            a: CoeffField::constant(a),
            exponent: 1.0,
        }
    }

    #[test]
    fn flux_is_consistent_for_equal_slopes() {
        let g = |p: &[f64]| p[0].abs() + 0.3 * p[1];
        let v = numerical_hamiltonian(g, &[1.5, -2.0], &[1.5, -2.0], &[3.0, 7.0]);
        assert_eq!(v, g(&[1.5, -2.0]));
    }

    #[test]
    fn flux_worked_example() {
        let v = numerical_hamiltonian(|p| p[0].abs(), &[0.0], &[2.0], &[1.0]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn flux_is_monotone_on_random_probes() {
        // splitmix-style generator keeps the probe set fixed
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
        };
        let b = 0.7;
        let g = |p: &[f64]| p[0].abs() + b * p[1].abs() - 0.2;
        let theta = [1.1, 1.1 * b];
        for _ in 0..1000 {
            let l = [10.0 * next() - 5.0, 10.0 * next() - 5.0];
            let r = [10.0 * next() - 5.0, 10.0 * next() - 5.0];
            let d = next() + 1e-3;
            let base = numerical_hamiltonian(g, &l, &r, &theta);
            for a in 0..2 {
                let mut r2 = r;
                r2[a] += d;
                assert!(numerical_hamiltonian(g, &l, &r2, &theta) <= base);
                let mut l2 = l;
                l2[a] -= d;
                assert!(numerical_hamiltonian(g, &l2, &r, &theta) <= base);
            }
        }
    }

    #[test]
    fn constant_data_is_stationary_for_eikonal() {
        let spec = spec1d(vec![coercive(1.0)]);
        let grid = TorusGrid::uniform(1, false, 64).unwrap();
        let h = SampledHamiltonian::new(&spec, &grid).unwrap();
        let v0 = Field::constant(grid, 0.25);
        let v = evolve(&h, &v0, 0.0, 3.0, &SchemeConfig::default()).unwrap();
        assert_eq!(v, v0);
    }

    #[test]
    fn eikonal_matches_hopf_lax_minimum() {
        let grid = TorusGrid::uniform(1, false, 256).unwrap();
        let h = SampledHamiltonian::new(&spec1d(vec![coercive(1.0)]), &grid).unwrap();
        let v0 = Field::from_fn(grid, |p| (TAU * p[0]).sin());
        let v = evolve(&h, &v0, 0.0, 0.25, &SchemeConfig::default()).unwrap();
        // min over |z - x| ≤ t of sin(2πz), evaluated on a fine lattice
        let oracle = |x: f64, t: f64| {
            (0..=4000)
                .map(|k| x - t + 2.0 * t * k as f64 / 4000.0)
                .map(|z| (TAU * z).sin())
                .fold(f64::INFINITY, f64::min)
        };
        assert!((v.values()[0] - oracle(0.0, 0.25)).abs() <= 0.05);
        assert!((oracle(0.0, 0.25) + 1.0).abs() < 1e-9);
        let worst = (0..256)
            .map(|i| (v.values()[i] - oracle(i as f64 / 256.0, 0.25)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.05, "worst {worst}");
    }

    #[test]
    fn linear_drift_translates_data() {
        // the drift acts on y, the data varies in y only
        let spec = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                coercive(1.0),
                Term::Drift {
                    b: CoeffField::constant(0.5),
                    shape: DriftShape::Linear,
                    offset: 0.0,
                },
            ],
        )
        .unwrap();
        let grid = TorusGrid::new(1, true, &[8, 256], &[1.0, 1.0]).unwrap();
        let h = SampledHamiltonian::new(&spec, &grid).unwrap();
        let v0 = Field::from_fn(grid, |p| (TAU * p[1]).sin());
        let v = evolve(&h, &v0, 0.0, 1.0, &SchemeConfig::default()).unwrap();
        let worst = (0..grid.len())
            .map(|i| {
                let y = grid.position(i)[1];
                (v.values()[i] - (TAU * (y - 0.5)).sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 0.1, "worst {worst}");
    }

    #[test]
    fn constant_data_under_constant_hamiltonian_moves_linearly() {
        let spec = spec1d(vec![
            coercive(1.0),
            Term::Source {
                f: CoeffField::constant(-0.75),
            },
        ]);
        let grid = TorusGrid::uniform(1, false, 32).unwrap();
        let h = SampledHamiltonian::new(&spec, &grid).unwrap();
        let mut m = Marcher::new(&h, &Field::constant(grid, 1.0), 0.0, 0.0, &SchemeConfig::default()).unwrap();
        let dt = m.dt_max();
        m.step(dt).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0 - 0.75 * dt));
    }

    #[test]
    fn comparison_probe_with_constant_gap() {
        let spec = spec1d(vec![
            coercive(1.0),
            Term::Source {
                f: CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1])),
            },
        ]);
        let grid = TorusGrid::uniform(1, false, 128).unwrap();
        let h = SampledHamiltonian::new(&spec, &grid).unwrap();
        let v0 = Field::from_fn(grid, |p| (TAU * p[0]).cos());
        let u0 = v0.add_constant(-1.0);
        let cfg = SchemeConfig::default();
        assert!(comparison_probe(&h, &v0, &v0, 0.5, &cfg).unwrap());
        assert!(comparison_probe(&h, &u0, &v0, 0.5, &cfg).unwrap());
        let u = evolve(&h, &u0, 0.0, 0.5, &cfg).unwrap();
        let v = evolve(&h, &v0, 0.0, 0.5, &cfg).unwrap();
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((b - a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn comparison_probe_rejects_unordered_data() {
        let grid = TorusGrid::uniform(1, false, 16).unwrap();
        let h = SampledHamiltonian::new(&spec1d(vec![coercive(1.0)]), &grid).unwrap();
        let a = Field::constant(grid, 1.0);
        let b = Field::constant(grid, 0.0);
        assert!(comparison_probe(&h, &a, &b, 0.1, &SchemeConfig::default()).is_err());
    }

    #[test]
    fn misconfigured_dissipation_diverges() {
        // without dissipation, fixed steps of central differences blow up
        let grid = TorusGrid::uniform(1, false, 64).unwrap();
        let h = SampledHamiltonian::new(&spec1d(vec![coercive(1.0)]), &grid).unwrap();
        let cfg = SchemeConfig {
            dissipation: Some(vec![1e-9]),
            ..SchemeConfig::default()
        };
        let v0 = Field::from_fn(grid, |p| (TAU * p[0]).sin());
        let mut m = Marcher::new(&h, &v0, 0.0, 0.0, &cfg).unwrap();
        let err = (0..100_000).find_map(|_| m.step(0.05).err()).expect("no blow-up");
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn drift_spec_needs_y_axis() {
        let spec = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                coercive(1.0),
                Term::Drift {
                    b: CoeffField::constant(1.0),
                    shape: DriftShape::Absolute,
                    offset: 0.0,
                },
            ],
        )
        .unwrap();
        let grid = TorusGrid::uniform(1, false, 16).unwrap();
        assert!(SampledHamiltonian::new(&spec, &grid).is_err());
    }

    #[test]
    fn sampled_matches_spec_eval() {
        let spec = HamiltonianSpec::new(
            1,
            -1.0,
            vec![
                Term::Coercive {
                    a: CoeffField::constant(1.0).with(Mode::cos(0.3).x(&[1]).t(1)),
                    exponent: 1.0,
                },
                Term::Drift {
                    b: CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1]).y(-1)),
                    shape: DriftShape::Absolute,
                    offset: -1.0,
                },
                Term::Source {
                    f: CoeffField::constant(0.1).with(Mode::cos(1.0).t(1)),
                },
            ],
        )
        .unwrap()
        .shift(&[0.4], 0.2);
        let grid = TorusGrid::uniform(1, true, 16).unwrap();
        let h = SampledHamiltonian::new(&spec, &grid).unwrap();
        let t = 0.3;
        let frame = h.frame(t, &[]);
        for i in (0..grid.len()).step_by(7) {
            let pos = grid.position(i);
            let p = [0.7, -1.3, 0.0];
            let direct = spec.eval(&pos[..1], pos[1], t, &p[..1], p[1]);
            assert!((h.eval(&frame, i, &p) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let grid = TorusGrid::uniform(1, false, 8).unwrap();
        let csv = trajectory_csv(&[(0.5, Field::constant(grid, 2.0))]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,i0,value"));
        assert_eq!(lines.next(), Some("0.5,0,2"));
        assert_eq!(csv.lines().count(), 9);
    }
}
