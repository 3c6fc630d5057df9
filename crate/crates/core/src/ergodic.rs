//! Ergodic constants by vanishing discount and by long-time averaging.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid, MAX_AXES};
use crate::hamiltonians::{oscillation_bound_k, AssumptionReport, HamiltonianSpec};
use crate::scheme::{GridHamiltonian, Marcher, SampledHamiltonian, SchemeConfig};

pub const DEFAULT_ALPHAS: [f64; 3] = [0.2, 0.1, 0.05];
pub const DEFAULT_HORIZON: f64 = 50.0;
pub const MIN_HORIZON: f64 = 10.0;
/// Snapshots kept over the final period of a time-periodic solve.
const PERIOD_SNAPSHOTS: usize = 8;
/// Pseudo-time steps between two entries of the residual history.
const HISTORY_STRIDE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Discount,
    Longtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicResult {
    pub lambda: f64,
    pub method: Method,
    /// Final discount or horizon.
    pub parameter: f64,
    pub oscillation: f64,
    pub residual: f64,
    /// `(parameter, estimate)` pairs.
    pub history: Vec<(f64, f64)>,
}

impl ErgodicResult {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("parameter,estimate\n");
        for (p, e) in &self.history {
            let _ = writeln!(out, "{p},{e}");
        }
        out
    }
}

/// A converged discounted solution `w^α`.
#[derive(Debug, Clone)]
pub struct DiscountedSolution {
    pub alpha: f64,
    /// `w^α` at the start of the period (the whole solution when static).
    pub field: Field,
    /// Evenly spaced `(t, w^α(·, t))` over one period; empty when static.
    pub snapshots: Vec<(f64, Field)>,
    /// Space(-time) mean of `w^α`.
    pub mean: f64,
    pub residual: f64,
    /// Pseudo-time steps, or periods for time-periodic solves.
    pub iterations: usize,
    /// Range of `−G(·, 0, 0)` over the nodes and step times.
    pub window: (f64, f64),
}

impl DiscountedSolution {
    pub fn lambda(&self) -> f64 {
        -self.alpha * self.mean
    }

    /// The field followed by every snapshot.
    pub fn slices(&self) -> impl Iterator<Item = &Field> {
        std::iter::once(&self.field).chain(self.snapshots.iter().map(|(_, f)| f))
    }

    /// `(min, max)` of `α w^α` over every stored slice.
    pub fn scaled_range(&self) -> (f64, f64) {
        let (lo, hi) = self.slices().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
            (lo.min(f.min()), hi.max(f.max()))
        });
        (self.alpha * lo, self.alpha * hi)
    }
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn zero_slope_window<H: GridHamiltonian>(ham: &H, times: impl Iterator<Item = f64>) -> (f64, f64) {
    let zero = [0.0; MAX_AXES];
    let n = ham.grid().len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in times {
        let frame = ham.frame(t, &vec![0.0; n]);
        for i in 0..n {
            let v = -ham.eval(&frame, i, &zero);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// `w^α` for the discounted equation `w_t + G(x, y, t, Dw) + α w = 0`.
pub fn solve_discounted(
    spec: &HamiltonianSpec,
    grid: &TorusGrid,
    alpha: f64,
    cfg: &SchemeConfig,
) -> Result<DiscountedSolution> {
    let ham = SampledHamiltonian::new(spec, grid)?;
    discounted_with(&ham, alpha, cfg, None)
}

/// [`solve_discounted`] for any grid Hamiltonian, optionally starting from `warm`.
pub fn discounted_with<H: GridHamiltonian>(
    ham: &H,
    alpha: f64,
    cfg: &SchemeConfig,
    warm: Option<&Field>,
) -> Result<DiscountedSolution> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    let grid = *ham.grid();
    let w0 = match warm {
        Some(w) if *w.grid() == grid => w.clone(),
        Some(_) => return Err(Error::config("warm start lives on a different grid")),
        None => Field::constant(grid, 0.0),
    };
    if ham.time_dependent() {
        periodic_discounted(ham, alpha, cfg, w0)
    } else {
        static_discounted(ham, alpha, cfg, w0)
    }
}

// The iteration carries the constant mode exactly: R(w + c) = R(w) + α c, so
// the mean of the residual is removed in one shot and pseudo-time only has to
// relax the remaining modes.
fn static_discounted<H: GridHamiltonian>(
    ham: &H,
    alpha: f64,
    cfg: &SchemeConfig,
    w0: Field,
) -> Result<DiscountedSolution> {
    let mut m = Marcher::new(ham, &w0, 0.0, alpha, cfg)?;
    let dt = m.dt_max();
    let mut history = Vec::new();
    loop {
        let res = m.compute_residual()?;
        m.set_time(0.0);
        if m.steps() % HISTORY_STRIDE == 0 {
            history.push(res);
        }
        if res <= cfg.residual_tol {
            let field = m.field();
            return Ok(DiscountedSolution {
                alpha,
                mean: field.mean(),
                field,
                snapshots: Vec::new(),
                residual: res,
                iterations: m.steps(),
                window: zero_slope_window(ham, std::iter::once(0.0)),
            });
        }
        if m.steps() >= cfg.max_steps {
            return Err(Error::NonConvergence {
                iterations: m.steps(),
                last: res,
                history,
            });
        }
        let mean_r = mean_of(m.residual());
        m.apply_residual(dt, mean_r, mean_r / alpha);
    }
}

// Period map Φ over one unit of time. Φ(w + c) = Φ(w) + ρ c with
// ρ = (1 − α dt)^N, so the constant mode of the fixed point is solved directly.
fn periodic_discounted<H: GridHamiltonian>(
    ham: &H,
    alpha: f64,
    cfg: &SchemeConfig,
    mut w: Field,
) -> Result<DiscountedSolution> {
    let grid = *ham.grid();
    let mut m = Marcher::new(ham, &w, 0.0, alpha, cfg)?;
    let n = m.steps_for(1.0).next_multiple_of(PERIOD_SNAPSHOTS);
    let dt = 1.0 / n as f64;
    let rho = (1.0 - alpha * dt).powi(n as i32);
    let max_periods = (20.0 / alpha).ceil() as usize;
    let snap_every = n / PERIOD_SNAPSHOTS;
    let mut history = Vec::new();
    let mut total_steps = 0usize;
    for period in 1..=max_periods {
        m.set_values(w.values());
        let mut st_sum = 0.0;
        let mut snapshots = Vec::with_capacity(PERIOD_SNAPSHOTS);
        for k in 0..n {
            if total_steps >= cfg.max_steps {
                return Err(Error::NonConvergence {
                    iterations: period,
                    last: history.last().copied().unwrap_or(f64::NAN),
                    history,
                });
            }
            let t = k as f64 * dt;
            m.set_time(t);
            if k % snap_every == 0 {
                snapshots.push((t, m.field()));
            }
            st_sum += mean_of(m.values());
            m.compute_residual()?;
            m.apply_residual(dt, 0.0, 0.0);
            total_steps += 1;
        }
        let phi = m.values();
        let mut res: f64 = 0.0;
        let mut r_sum = 0.0;
        for (p, v) in phi.iter().zip(w.values()) {
            let r = p - v;
            res = res.max(r.abs());
            r_sum += r;
        }
        history.push(res);
        if res <= cfg.residual_tol {
            return Ok(DiscountedSolution {
                alpha,
                field: w,
                snapshots,
                mean: st_sum / n as f64,
                residual: res,
                iterations: period,
                window: zero_slope_window(ham, (0..n).map(|k| k as f64 * dt)),
            });
        }
        let c = rho * (r_sum / phi.len() as f64) / (1.0 - rho);
        w = Field::from_vec_unchecked(grid, phi.iter().map(|p| p + c).collect());
    }
    Err(Error::NonConvergence {
        iterations: max_periods,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::config("alpha list is empty"));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::config("alphas must be positive"));
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("alphas must be strictly decreasing"));
    }
    Ok(())
}

/// λ̄ from `−α mean(w^α)` over a decreasing sequence of discounts,
/// extrapolated linearly to `α = 0` from the last two.
pub fn ergodic_discount(
    spec: &HamiltonianSpec,
    grid: &TorusGrid,
    alphas: &[f64],
    cfg: &SchemeConfig,
) -> Result<ErgodicResult> {
    let ham = SampledHamiltonian::new(spec, grid)?;
    Ok(discount_sweep(&ham, alphas, cfg)?.0)
}

/// [`ergodic_discount`] for any grid Hamiltonian; also returns the solution
/// for every discount, each warm-started from the previous one.
pub fn discount_sweep<H: GridHamiltonian>(
    ham: &H,
    alphas: &[f64],
    cfg: &SchemeConfig,
) -> Result<(ErgodicResult, Vec<DiscountedSolution>)> {
    check_alphas(alphas)?;
    let mut history = Vec::with_capacity(alphas.len());
    let mut sols: Vec<DiscountedSolution> = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let sol = discounted_with(ham, alpha, cfg, sols.last().map(|s| &s.field))?;
        history.push((alpha, sol.lambda()));
        sols.push(sol);
    }
    let lambda = match history.as_slice() {
        [.., (a1, l1), (a2, l2)] => l2 - a2 * (l1 - l2) / (a1 - a2),
        [(_, l)] => *l,
        [] => unreachable!(),
    };
    let last = sols.last().expect("alphas is nonempty");
    let result = ErgodicResult {
        lambda,
        method: Method::Discount,
        parameter: last.alpha,
        oscillation: slices_oscillation(last.slices()),
        residual: last.residual,
        history,
    };
    Ok((result, sols))
}

fn slices_oscillation<'a>(slices: impl Iterator<Item = &'a Field>) -> f64 {
    let (lo, hi) = slices.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
        (lo.min(f.min()), hi.max(f.max()))
    });
    hi - lo
}

/// λ̄ from the slope of `v(T)` against `v(T/2)` for `v_t + G = 0`, `v(0) = 0`.
pub fn ergodic_longtime(
    spec: &HamiltonianSpec,
    grid: &TorusGrid,
    horizon: f64,
    cfg: &SchemeConfig,
) -> Result<ErgodicResult> {
    let ham = SampledHamiltonian::new(spec, grid)?;
    longtime_with(&ham, horizon, cfg)
}

pub fn longtime_with<H: GridHamiltonian>(ham: &H, horizon: f64, cfg: &SchemeConfig) -> Result<ErgodicResult> {
    if !(horizon >= MIN_HORIZON && horizon.is_finite()) {
        return Err(Error::config(format!("horizon must be at least {MIN_HORIZON}, got {horizon}")));
    }
    let half = horizon / 2.0;
    if ham.time_dependent() && half.fract() != 0.0 {
        return Err(Error::config(format!(
            "horizon {horizon} must be an even integer for time-periodic Hamiltonians"
        )));
    }
    let grid = *ham.grid();
    let mut m = Marcher::new(ham, &Field::constant(grid, 0.0), 0.0, 0.0, cfg)?;
    let n = m.steps_for(half);
    m.advance(half, n)?;
    let mid = m.field().mean();
    let mut history = vec![(half, -mid / half)];
    m.advance(half, n)?;
    let end = m.field();
    let lambda = -(end.mean() - mid) / half;
    history.push((horizon, lambda));
    let residual = m.compute_residual()?;
    Ok(ErgodicResult {
        lambda,
        method: Method::Longtime,
        parameter: horizon,
        oscillation: end.oscillation(),
        residual,
        history,
    })
}

/// Structural checks on a discounted solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub osc_full: f64,
    pub osc_xbar: f64,
    /// Oscillation bound; absent when the coercivity constant vanishes.
    pub k: Option<f64>,
    pub y_monotone_violation: f64,
    /// Largest spread along y of any x-column; reported when `l = 0`.
    pub y_variation: Option<f64>,
    pub alpha_w_min: f64,
    pub alpha_w_max: f64,
    pub window_min: f64,
    pub window_max: f64,
}

impl Diagnostics {
    /// Whether `α w^α` stays inside the window of `−G(·, 0, 0)` up to `tol`.
    pub fn window_holds(&self, tol: f64) -> bool {
        self.alpha_w_min >= self.window_min - tol && self.alpha_w_max <= self.window_max + tol
    }
}

fn y_column_stats(field: &Field, l: f64) -> (f64, f64) {
    let grid = field.grid();
    let Some(ya) = grid.y_axis() else {
        return (0.0, 0.0);
    };
    let ny = grid.cells()[ya];
    let stride = grid.stride(ya);
    let h = grid.spacing(ya);
    let v = field.values();
    let mut violation: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for base in 0..stride {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..ny {
            let a = v[base + j * stride];
            let b = v[base + ((j + 1) % ny) * stride];
            lo = lo.min(a);
            hi = hi.max(a);
            let d = if l < 0.0 {
                b - a + l * h
            } else if l > 0.0 {
                a - b - l * h
            } else {
                0.0
            };
            violation = violation.max(d);
        }
        spread = spread.max(hi - lo);
    }
    (violation, spread)
}

pub fn diagnostics(spec: &HamiltonianSpec, sol: &DiscountedSolution, report: &AssumptionReport) -> Diagnostics {
    let l = spec.effective_l();
    let mut violation: f64 = 0.0;
    let mut spread: f64 = 0.0;
    let mut xbar_lo = f64::INFINITY;
    let mut xbar_hi = f64::NEG_INFINITY;
    for f in sol.slices() {
        let (v, s) = y_column_stats(f, l);
        violation = violation.max(v);
        spread = spread.max(s);
        let reduced = f.reduce_max_over_y().unwrap_or_else(|_| f.clone());
        xbar_lo = xbar_lo.min(reduced.min());
        xbar_hi = xbar_hi.max(reduced.max());
    }
    let (aw_min, aw_max) = sol.scaled_range();
    Diagnostics {
        osc_full: slices_oscillation(sol.slices()),
        osc_xbar: xbar_hi - xbar_lo,
        k: oscillation_bound_k(report, spec.space_dims).ok(),
        y_monotone_violation: violation,
        y_variation: (l == 0.0 && sol.field.grid().has_y()).then_some(spread),
        alpha_w_min: aw_min,
        alpha_w_max: aw_max,
        window_min: sol.window.0,
        window_max: sol.window.1,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use super::*;
    use crate::hamiltonians::{CoeffField, DriftShape, Mode, Term};

    fn coercive() -> Term {
        Term::Coercive {
            a: CoeffField::constant(1.0),
            exponent: 1.0,
        }
    }

    fn source(f: CoeffField) -> Term {
        Term::Source { f }
    }

    fn eikonal_sin() -> HamiltonianSpec {
        HamiltonianSpec::new(
            1,
            0.0,
            vec![coercive(), source(CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1])))],
        )
        .unwrap()
    }

    fn constant(c: f64) -> HamiltonianSpec {
        HamiltonianSpec::new(1, 0.0, vec![coercive(), source(CoeffField::constant(-c))]).unwrap()
    }

    fn cfg() -> SchemeConfig {
        SchemeConfig::default()
    }

    #[test]
    fn constant_hamiltonian_discounted_solution() {
        let grid = TorusGrid::uniform(1, false, 32).unwrap();
        let sol = solve_discounted(&constant(2.0), &grid, 0.1, &cfg()).unwrap();
        for v in sol.field.values() {
            assert!((v + 20.0).abs() <= 1e-6 / 0.1);
        }
        let r = ergodic_discount(&constant(2.0), &grid, &DEFAULT_ALPHAS, &cfg()).unwrap();
        for (_, e) in &r.history {
            assert!((e - 2.0).abs() < 1e-9);
        }
        assert!((r.lambda - 2.0).abs() < 1e-9);
        let lt = ergodic_longtime(&constant(2.0), &grid, 10.0, &cfg()).unwrap();
        assert!((lt.lambda - 2.0).abs() < 1e-9);
    }

    #[test]
    fn eikonal_lambda_by_both_methods() {
        let grid = TorusGrid::uniform(1, false, 256).unwrap();
        let d = ergodic_discount(&eikonal_sin(), &grid, &DEFAULT_ALPHAS, &cfg()).unwrap();
        let l = ergodic_longtime(&eikonal_sin(), &grid, DEFAULT_HORIZON, &cfg()).unwrap();
        assert!((d.lambda - 1.0).abs() <= 0.05, "{}", d.lambda);
        assert!((l.lambda - 1.0).abs() <= 0.05, "{}", l.lambda);
        assert!((d.lambda - l.lambda).abs() <= 0.02);
    }

    #[test]
    fn estlb_window_and_oscillation_bound() {
        let spec = eikonal_sin();
        let grid = TorusGrid::uniform(1, false, 256).unwrap();
        let sol = solve_discounted(&spec, &grid, 0.1, &cfg()).unwrap();
        let (lo, hi) = sol.scaled_range();
        assert!(lo >= -1.0 - 1e-5 && hi <= 1.0 + 1e-5);
        let report = crate::hamiltonians::estimate_constants(&spec, &Default::default()).unwrap();
        let d = diagnostics(&spec, &sol, &report);
        assert!(d.window_holds(1e-5));
        let k_example = oscillation_bound_k(
            &AssumptionReport {
                c1: 0.5,
                c2: 0.0,
                ..report.clone()
            },
            1,
        )
        .unwrap();
        assert_eq!(k_example, 2.0);
        assert!(d.osc_full <= k_example + 0.05);
        assert!(d.osc_full <= d.k.unwrap());
    }

    #[test]
    fn additive_shift_moves_lambda() {
        let grid = TorusGrid::uniform(1, false, 64).unwrap();
        let a = ergodic_discount(&eikonal_sin(), &grid, &[0.2, 0.1], &cfg()).unwrap();
        let b = ergodic_discount(&eikonal_sin().plus_constant(0.7), &grid, &[0.2, 0.1], &cfg()).unwrap();
        assert!((b.lambda - a.lambda - 0.7).abs() <= 1e-5);
    }

    #[test]
    fn y_independent_when_l_vanishes() {
        let spec = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                coercive(),
                Term::Drift {
                    b: CoeffField::constant(0.0).with(Mode::sin(1.0).y(1)),
                    shape: DriftShape::Absolute,
                    offset: 0.0,
                },
                source(CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1]))),
            ],
        )
        .unwrap();
        let grid = TorusGrid::uniform(1, true, 32).unwrap();
        let sol = solve_discounted(&spec, &grid, 0.2, &cfg()).unwrap();
        let report = crate::hamiltonians::estimate_constants(&spec, &Default::default()).unwrap();
        let d = diagnostics(&spec, &sol, &report);
        assert!(d.y_variation.unwrap() <= 10.0 * 1e-6);
        assert_eq!(d.y_monotone_violation, 0.0);
    }

    #[test]
    fn time_periodic_constant_mean() {
        // G = |p| − cos(2πt): λ̄ = 0
        let spec = HamiltonianSpec::new(
            1,
            0.0,
            vec![coercive(), source(CoeffField::constant(0.0).with(Mode::cos(1.0).t(1)))],
        )
        .unwrap();
        let grid = TorusGrid::uniform(1, false, 64).unwrap();
        let r = ergodic_discount(&spec, &grid, &[0.2, 0.1], &cfg()).unwrap();
        assert!(r.lambda.abs() < 1e-6, "{}", r.lambda);
        let lt = ergodic_longtime(&spec, &grid, 10.0, &cfg()).unwrap();
        assert!(lt.lambda.abs() < 1e-9);
        assert!(ergodic_longtime(&spec, &grid, 11.0, &cfg()).is_err());
        let sol = solve_discounted(&spec, &grid, 0.1, &cfg()).unwrap();
        assert_eq!(sol.snapshots.len(), PERIOD_SNAPSHOTS);
        let quarter = &sol.snapshots[2];
        assert!((quarter.0 - 0.25).abs() < 1e-12);
        // w' + αw = cos 2πt
        let exact = |t: f64| (0.1 * (TAU * t).cos() + TAU * (TAU * t).sin()) / (0.01 + TAU * TAU);
        assert!((quarter.1.values()[0] - exact(0.25)).abs() < 5e-3);
    }

    #[test]
    fn monotone_profile_for_negative_l() {
        let spec = HamiltonianSpec::new(
            1,
            -1.0,
            vec![
                coercive(),
                Term::Drift {
                    b: CoeffField::constant(1.0).with(Mode::cos(0.5).y(1)),
                    shape: DriftShape::Absolute,
                    offset: -1.0,
                },
            ],
        )
        .unwrap();
        let grid = TorusGrid::new(1, true, &[8, 64], &[1.0, 1.0]).unwrap();
        let sol = solve_discounted(&spec, &grid, 0.1, &cfg()).unwrap();
        let report = crate::hamiltonians::estimate_constants(&spec, &Default::default()).unwrap();
        let d = diagnostics(&spec, &sol, &report);
        assert!(d.y_monotone_violation <= 1e-5, "{}", d.y_monotone_violation);
        assert!(d.y_variation.is_none());
    }

    #[test]
    fn rejects_bad_parameters() {
        let grid = TorusGrid::uniform(1, false, 16).unwrap();
        assert!(solve_discounted(&constant(1.0), &grid, 0.0, &cfg()).is_err());
        assert!(ergodic_discount(&constant(1.0), &grid, &[0.1, 0.2], &cfg()).is_err());
        assert!(ergodic_longtime(&constant(1.0), &grid, 5.0, &cfg()).is_err());
    }

    #[test]
    fn step_cap_reports_history() {
        let grid = TorusGrid::uniform(1, false, 64).unwrap();
        let cfg = SchemeConfig {
            max_steps: 10,
            ..cfg()
        };
        match solve_discounted(&eikonal_sin(), &grid, 0.1, &cfg) {
            Err(Error::NonConvergence { iterations, history, .. }) => {
                assert_eq!(iterations, 10);
                assert!(!history.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn history_csv_rows() {
        let r = ErgodicResult {
            lambda: 1.0,
            method: Method::Discount,
            parameter: 0.05,
            oscillation: 0.0,
            residual: 0.0,
            history: vec![(0.1, 1.5), (0.05, 1.25)],
        };
        assert_eq!(r.history_csv(), "parameter,estimate\n0.1,1.5\n0.05,1.25\n");
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["method"], "discount");
    }
}
