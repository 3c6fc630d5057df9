//! Sampled verification of the structure conditions on a Hamiltonian.
//!
//! The Lipschitz-type bounds are "almost everywhere" statements; here they are
//! estimated from central difference quotients on a fixed lattice, so the
//! report is an admission heuristic rather than a certificate.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use super::spec::HamiltonianSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Lattice nodes per space axis.
    pub samples_per_axis: usize,
    /// Time samples per period (only used for time-dependent specs).
    pub time_samples: usize,
    /// Radius of the gradient probe box.
    pub p_max: f64,
    pub fd_step: f64,
    /// Difference-quotient ratios above this are treated as unbounded.
    pub cap: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            samples_per_axis: 12,
            time_samples: 8,
            p_max: 20.0,
            fd_step: 1e-6,
            cap: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `sup |G(·, 0, 0)|`
    pub c0: f64,
    /// Affine minorant `G(·, p_x, 0) ≥ c1 |p_x| − c2`.
    pub c1: f64,
    pub c2: f64,
    /// `|∂_y G| ≤ c3 |p_y + l|`
    pub c3: f64,
    /// `|∂_t G| ≤ c4 (1 + |p_y| + |G|)`
    pub c4: f64,
    /// `|∂_{p_y} G| ≤ c5`
    pub c5: f64,
    pub l: f64,
    /// Sampled minimum of the coercive coefficient.
    pub eta: f64,
    pub coercive_ok: bool,
    pub lipschitz_ok: bool,
    pub graph_h6_ok: bool,
    /// `sup |∇_p H·p − H|` of the graph Hamiltonian, when present.
    pub h6_constant: Option<f64>,
    pub samples_used: usize,
}

struct Lattice {
    xs: Vec<[f64; 2]>,
    ys: Vec<f64>,
    ts: Vec<f64>,
}

impl Lattice {
    fn new(spec: &HamiltonianSpec, cfg: &ProbeConfig) -> Self {
        let n = cfg.samples_per_axis.max(1);
        let node = |i: usize| i as f64 / n as f64;
        let mut xs = Vec::new();
        let x2 = if spec.space_dims == 2 { n } else { 1 };
        for j in 0..x2 {
            for i in 0..n {
                xs.push([node(i), node(j)]);
            }
        }
        let ys = if spec.has_drift() || spec.y_dependent() {
            (0..n).map(node).collect()
        } else {
            vec![0.0]
        };
        let ts = if spec.time_dependent() {
            let m = cfg.time_samples.max(1);
            (0..m).map(|k| k as f64 / m as f64).collect()
        } else {
            vec![0.0]
        };
        Lattice { xs, ys, ts }
    }

    fn points(&self) -> impl Iterator<Item = ([f64; 2], f64, f64)> + '_ {
        self.ts.iter().flat_map(move |&t| {
            self.ys
                .iter()
                .flat_map(move |&y| self.xs.iter().map(move |&x| (x, y, t)))
        })
    }
}

fn directions(dims: usize) -> Vec<[f64; 2]> {
    if dims == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        let d = FRAC_1_SQRT_2;
        vec![
            [1.0, 0.0],
            [-1.0, 0.0],
            [0.0, 1.0],
            [0.0, -1.0],
            [d, d],
            [-d, d],
            [d, -d],
            [-d, -d],
        ]
    }
}

/// Estimates the structure constants of `spec` on a deterministic lattice.
pub fn estimate_constants(spec: &HamiltonianSpec, cfg: &ProbeConfig) -> Result<AssumptionReport> {
    spec.validate()?;
    if !(cfg.p_max > 1.0 && cfg.fd_step > 0.0 && cfg.cap > 0.0) {
        return Err(Error::config("probe config needs p_max > 1, fd_step > 0, cap > 0"));
    }
    let dims = spec.space_dims;
    let lattice = Lattice::new(spec, cfg);
    let l = spec.effective_l();
    let h = cfg.fd_step;
    let mut samples = 0usize;
    let mut g = |x: &[f64; 2], y: f64, t: f64, px: [f64; 2], py: f64| {
        samples += 1;
        spec.eval(&x[..dims], y, t, &px[..dims], py)
    };

    let mut c0: f64 = 0.0;
    for (x, y, t) in lattice.points() {
        c0 = c0.max(g(&x, y, t, [0.0; 2], 0.0).abs());
    }

    // coercivity: slope between |p| = p_max/2 and p_max, then the offset
    let dirs = directions(dims);
    let half = 0.5 * cfg.p_max;
    let mut min_slope = f64::INFINITY;
    for (x, y, t) in lattice.points() {
        for d in &dirs {
            let far = g(&x, y, t, [cfg.p_max * d[0], cfg.p_max * d[1]], 0.0);
            let mid = g(&x, y, t, [half * d[0], half * d[1]], 0.0);
            min_slope = min_slope.min((far - mid) / half);
        }
    }
    let c1 = 0.5 * min_slope;
    let mut c2: f64 = 0.0;
    let radii = 20;
    for (x, y, t) in lattice.points() {
        for d in &dirs {
            for k in 0..radii {
                let r = 1.0 + (cfg.p_max - 1.0) * k as f64 / (radii - 1) as f64;
                let v = g(&x, y, t, [r * d[0], r * d[1]], 0.0);
                c2 = c2.max(c1 * r - v);
            }
        }
    }

    // Lipschitz structure in (y, t, p_y)
    let offsets = [1e-6, 1e-3, 0.1, 1.0, 5.0, cfg.p_max];
    let mut pxs = vec![[0.0, 0.0]];
    let probe_dirs = if dims == 1 { &dirs[..2] } else { &dirs[4..6] };
    for d in probe_dirs {
        for r in [1.0, half] {
            pxs.push([r * d[0], r * d[1]]);
        }
    }
    let time_dependent = lattice.ts.len() > 1;
    let (mut c3, mut c4, mut c5): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (x, y, t) in lattice.points() {
        for px in &pxs {
            for s in offsets.iter().flat_map(|&s| [s, -s]) {
                let py = s - l;
                let dy = (g(&x, y + h, t, *px, py) - g(&x, y - h, t, *px, py)) / (2.0 * h);
                c3 = c3.max(dy.abs() / s.abs());
                let step = h.min(0.5 * s.abs());
                let dp = (g(&x, y, t, *px, py + step) - g(&x, y, t, *px, py - step)) / (2.0 * step);
                c5 = c5.max(dp.abs());
                if time_dependent {
                    let v = g(&x, y, t, *px, py);
                    let dt = (g(&x, y, t + h, *px, py) - g(&x, y, t - h, *px, py)) / (2.0 * h);
                    c4 = c4.max(dt.abs() / (1.0 + py.abs() + v.abs()));
                }
            }
        }
    }
    for (name, value) in [("|D_y G| / |p_y + l|", c3), ("|D_t G| / (1 + |p_y| + |G|)", c4), ("|D_py G|", c5)] {
        if !(value <= cfg.cap) {
            return Err(Error::OutsideClass(format!(
                "sampled ratio {name} = {value:.3e} exceeds cap {:.1e}",
                cfg.cap
            )));
        }
    }

    let h6_constant = spec.graph_inner.as_ref().map(|graph| {
        let gd = graph.space_dims;
        let mut worst: f64 = 0.0;
        for (x, u, t) in lattice.points() {
            for d in &dirs {
                for r in [0.5, 1.0, 5.0, cfg.p_max] {
                    let p = [r * d[0], r * d[1]];
                    let at = |s: f64| {
                        let q = [s * p[0], s * p[1]];
                        graph.eval(&x[..gd], u, t, &q[..gd])
                    };
                    samples += 3;
                    let radial = (at(1.0 + h) - at(1.0 - h)) / (2.0 * h);
                    worst = worst.max((radial - at(1.0)).abs());
                }
            }
        }
        worst
    });
    let graph_h6_ok = h6_constant.is_none_or(|c| c <= cfg.cap);

    let eta = spec.coercivity_floor();
    Ok(AssumptionReport {
        c0,
        c1,
        c2,
        c3,
        c4,
        c5,
        l,
        eta,
        coercive_ok: c1 > 0.0 && eta > 0.0,
        lipschitz_ok: true,
        graph_h6_ok,
        h6_constant,
        samples_used: samples,
    })
}

/// Oscillation bound `K = (C0 + C2)(1 + √n / (2 C1)) + |l|`.
///
/// `1 + √n/(2 C1)` is the smallest horizon for which the backward cone of
/// slope `C1` covers a full unit space-time period.
pub fn oscillation_bound_k(report: &AssumptionReport, space_dims: usize) -> Result<f64> {
    if !(report.c1 > 0.0) {
        return Err(Error::OutsideClass(format!(
            "oscillation bound needs C1 > 0, got {}",
            report.c1
        )));
    }
    let s = 1.0 + (space_dims as f64).sqrt() / (2.0 * report.c1);
    Ok((report.c0 + report.c2) * s + report.l.abs())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use super::*;
    use crate::hamiltonians::{lift, CoeffField, DriftShape, GraphSpec, Mode, Term};

    fn report(c0: f64, c1: f64, c2: f64, l: f64) -> AssumptionReport {
        AssumptionReport {
            c0,
            c1,
            c2,
            c3: 0.0,
            c4: 0.0,
            c5: 0.0,
            l,
            eta: 1.0,
            coercive_ok: true,
            lipschitz_ok: true,
            graph_h6_ok: true,
            h6_constant: None,
            samples_used: 0,
        }
    }

    #[test]
    fn eikonal_with_sine_source() {
        let spec = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                Term::Coercive { a: CoeffField::constant(1.0), exponent: 1.0 },
                Term::Source { f: CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1])) },
            ],
        )
        .unwrap();
        let r = estimate_constants(&spec, &ProbeConfig::default()).unwrap();
        assert!((r.c0 - 1.0).abs() < 1e-12);
        assert!(r.c1 >= 0.5 - 1e-12);
        assert!(r.coercive_ok);
        // the reported minorant really is one on the sampled lattice
        for i in 0..12 {
            let x = i as f64 / 12.0;
            for p in [0.0, 1.0, 3.0, 20.0] {
                assert!(spec.eval(&[x], 0.0, 0.0, &[p], 0.0) >= r.c1 * p - r.c2 - 1e-12 || p < 1.0);
            }
        }
    }

    #[test]
    fn drift_y_lipschitz_constant_is_two_pi() {
        let spec = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                Term::Coercive { a: CoeffField::constant(1.0), exponent: 1.0 },
                Term::Drift {
                    b: CoeffField::constant(0.0).with(Mode::sin(1.0).y(1)),
                    shape: DriftShape::Absolute,
                    offset: 0.0,
                },
            ],
        )
        .unwrap();
        let r = estimate_constants(&spec, &ProbeConfig::default()).unwrap();
        assert!((r.c3 - TAU).abs() <= 0.05 * TAU, "c3 = {}", r.c3);
        assert!((r.c5 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pure_eikonal_graph_has_zero_h6_constant() {
        let g = GraphSpec::new(1, CoeffField::constant(1.0), CoeffField::constant(0.0)).unwrap();
        let r = estimate_constants(&lift(&g).unwrap(), &ProbeConfig::default()).unwrap();
        assert!(r.graph_h6_ok);
        assert!(r.h6_constant.unwrap() < 1e-6);
    }

    #[test]
    fn unresolvable_drift_frequency_is_rejected() {
        // |D_y G| / |p_y| = 2π·200 |sin| exceeds the default cap of 10³
        let spec = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                Term::Coercive { a: CoeffField::constant(1.0), exponent: 1.0 },
                Term::Drift {
                    b: CoeffField::constant(0.0).with(Mode::cos(1.0).y(200)),
                    shape: DriftShape::Linear,
                    offset: 0.0,
                },
            ],
        )
        .unwrap();
        let err = estimate_constants(&spec, &ProbeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::OutsideClass(_)), "{err}");
    }

    #[test]
    fn k_formula_examples() {
        assert_eq!(oscillation_bound_k(&report(1.0, 1.0, 0.0, 0.0), 1).unwrap(), 1.5);
        assert_eq!(oscillation_bound_k(&report(1.0, 1.0, 0.0, -1.0), 1).unwrap(), 2.5);
        assert_eq!(oscillation_bound_k(&report(0.0, 1.0, 0.0, -0.7), 2).unwrap(), 0.7);
        assert!(oscillation_bound_k(&report(1.0, 0.0, 0.0, 0.0), 1).is_err());
    }

    #[test]
    fn estimates_are_deterministic() {
        let spec = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                Term::Coercive { a: CoeffField::constant(1.0).with(Mode::cos(0.3).x(&[1]).t(1)), exponent: 1.0 },
                Term::Drift {
                    b: CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1]).y(-1)),
                    shape: DriftShape::Absolute,
                    offset: 0.0,
                },
                Term::Source { f: CoeffField::constant(0.0).with(Mode::cos(1.0).t(1)) },
            ],
        )
        .unwrap();
        let a = estimate_constants(&spec, &ProbeConfig::default()).unwrap();
        let b = estimate_constants(&spec, &ProbeConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
