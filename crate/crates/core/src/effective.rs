//! Effective Hamiltonian `F̄(P)`: the ergodic constant of `F(·, · + P)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ergodic::{discount_sweep, longtime_with, zero_slope_window, DEFAULT_ALPHAS, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::grid::{TorusGrid, MAX_AXES};
use crate::hamiltonians::HamiltonianSpec;
use crate::scheme::{GridHamiltonian, SampledHamiltonian, SchemeConfig};

/// Agreement required between the two ergodic estimators.
pub const CROSS_CHECK_TOL: f64 = 0.02;
/// Slack on the bounds and continuity checks of a table.
pub const TABLE_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveOptions {
    pub alphas: Vec<f64>,
    pub horizon: f64,
    /// Run the long-time estimator as a cross-check at every point.
    pub cross_check: bool,
    pub cross_check_tol: f64,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        EffectiveOptions {
            alphas: DEFAULT_ALPHAS.to_vec(),
            horizon: DEFAULT_HORIZON,
            cross_check: true,
            cross_check_tol: CROSS_CHECK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivePoint {
    pub p: Vec<f64>,
    /// Discounted estimate.
    pub value: f64,
    pub longtime: Option<f64>,
    pub residual: f64,
    /// Set when the two estimators disagree beyond tolerance.
    pub flagged: bool,
    /// Range of `F(·, P)` over the nodes and sampled times.
    pub f_min: f64,
    pub f_max: f64,
}

impl EffectivePoint {
    /// Whether the value lies in `[f_min − slack, f_max + slack]`.
    pub fn within_bounds(&self, slack: f64) -> bool {
        self.value >= self.f_min - slack && self.value <= self.f_max + slack
    }
}

/// Splits `p` into x-components and the `p_y` slope for a grid.
fn split_slope<'a>(grid: &TorusGrid, p: &'a [f64]) -> Result<(&'a [f64], f64)> {
    if p.len() != grid.axes() {
        return Err(Error::config(format!(
            "slope has {} components, grid has {} axes",
            p.len(),
            grid.axes()
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("slope components must be finite"));
    }
    let n = grid.space_dims();
    Ok((&p[..n], if grid.has_y() { p[n] } else { 0.0 }))
}

/// `F̄(P)`, one component of `P` per grid axis.
pub fn effective_at(
    spec: &HamiltonianSpec,
    grid: &TorusGrid,
    p: &[f64],
    opts: &EffectiveOptions,
    cfg: &SchemeConfig,
) -> Result<EffectivePoint> {
    let (px, py) = split_slope(grid, p)?;
    let shifted = spec.shift(px, py);
    let ham = SampledHamiltonian::new(&shifted, grid)?;
    effective_with(&ham, p, opts, cfg)
}

pub(crate) fn effective_with<H: GridHamiltonian>(
    ham: &H,
    p: &[f64],
    opts: &EffectiveOptions,
    cfg: &SchemeConfig,
) -> Result<EffectivePoint> {
    let (d, _) = discount_sweep(ham, &opts.alphas, cfg)?;
    let longtime = if opts.cross_check {
        Some(longtime_with(ham, opts.horizon, cfg)?.lambda)
    } else {
        None
    };
    // the shifted Hamiltonian at zero slope is F(·, P)
    let (lo, hi) = zero_slope_window(ham, time_samples(ham).into_iter());
    Ok(EffectivePoint {
        p: p.to_vec(),
        value: d.lambda,
        f_min: -hi,
        f_max: -lo,
        flagged: longtime.is_some_and(|l| (l - d.lambda).abs() > opts.cross_check_tol),
        longtime,
        residual: d.residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let r = AxisRange { min, max, count };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.min.is_finite()
            && self.max.is_finite()
            && self.count >= 1
            && (self.count == 1 && self.min == self.max || self.count > 1 && self.max > self.min);
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "bad slope axis [{}, {}] with {} points",
                self.min, self.max, self.count
            )))
        }
    }

    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }
}

/// Rectangular slope lattice; the first axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PGrid {
    pub axes: Vec<AxisRange>,
}

impl PGrid {
    pub fn new(axes: Vec<AxisRange>) -> Result<Self> {
        let g = PGrid { axes };
        g.validate()?;
        Ok(g)
    }

    /// `[−2.5, 2.5]` with step 0.5 on every axis.
    pub fn default_for(axes: usize) -> Self {
        PGrid {
            axes: vec![
                AxisRange {
                    min: -2.5,
                    max: 2.5,
                    count: 11,
                };
                axes
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::config("slope grid has no axes"));
        }
        self.axes.iter().try_for_each(AxisRange::validate)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let c = idx % a.count;
                idx /= a.count;
                c
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (c, a) in coords.iter().zip(&self.axes) {
            idx += c * stride;
            stride *= a.count;
        }
        idx
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.coords(idx)
            .iter()
            .zip(&self.axes)
            .map(|(&c, a)| a.value(c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTable {
    pub p_grid: PGrid,
    pub values: Vec<f64>,
    pub points: Vec<EffectivePoint>,
    pub spec_digest: String,
    pub warnings: Vec<String>,
}

/// Hex SHA-256 of the spec's JSON form.
pub fn spec_digest(spec: &HamiltonianSpec) -> String {
    let json = serde_json::to_string(spec).expect("spec serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// `F̄` at every point of `p_grid`, with bounds and continuity checks.
pub fn tabulate(
    spec: &HamiltonianSpec,
    grid: &TorusGrid,
    p_grid: &PGrid,
    opts: &EffectiveOptions,
    cfg: &SchemeConfig,
) -> Result<EffectiveTable> {
    p_grid.validate()?;
    if p_grid.axes.len() != grid.axes() {
        return Err(Error::config(format!(
            "slope grid has {} axes, spatial grid has {}",
            p_grid.axes.len(),
            grid.axes()
        )));
    }
    let points: Vec<EffectivePoint> = (0..p_grid.len())
        .into_par_iter()
        .map(|i| effective_at(spec, grid, &p_grid.point(i), opts, cfg))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    for pt in &points {
        if pt.flagged {
            warnings.push(format!(
                "P = {:?}: discount {} and long-time {} disagree",
                pt.p,
                pt.value,
                pt.longtime.unwrap_or(f64::NAN)
            ));
        }
        if !pt.within_bounds(TABLE_SLACK) {
            warnings.push(format!(
                "P = {:?}: value {} outside [{}, {}]",
                pt.p, pt.value, pt.f_min, pt.f_max
            ));
        }
    }
    let values: Vec<f64> = points.iter().map(|pt| pt.value).collect();
    let radius = p_grid
        .axes
        .iter()
        .map(|a| a.min.abs().max(a.max.abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let lip = spec.gradient_bounds(radius + 1.0, grid.has_y());
    for i in 0..p_grid.len() {
        let c = p_grid.coords(i);
        for (a, axis) in p_grid.axes.iter().enumerate() {
            if c[a] + 1 >= axis.count {
                continue;
            }
            let mut n = c.clone();
            n[a] += 1;
            let j = p_grid.index(&n);
            let jump = (values[j] - values[i]).abs();
            let bound = lip[a] * axis.step() + TABLE_SLACK;
            if jump > bound {
                warnings.push(format!(
                    "jump {jump} between {:?} and {:?} exceeds {bound}",
                    p_grid.point(i),
                    p_grid.point(j)
                ));
            }
        }
    }
    Ok(EffectiveTable {
        p_grid: p_grid.clone(),
        values,
        points,
        spec_digest: spec_digest(spec),
        warnings,
    })
}

fn time_samples<H: GridHamiltonian>(ham: &H) -> Vec<f64> {
    if ham.time_dependent() {
        (0..64).map(|k| k as f64 / 64.0).collect()
    } else {
        vec![0.0]
    }
}

impl EffectiveTable {
    /// Multilinear interpolation inside the lattice hull.
    pub fn interpolate(&self, p: &[f64]) -> Result<f64> {
        let axes = &self.p_grid.axes;
        if p.len() != axes.len() || axes.len() > MAX_AXES {
            return Err(Error::config(format!(
                "query has {} components, table has {}",
                p.len(),
                axes.len()
            )));
        }
        for (a, (&q, axis)) in p.iter().zip(axes).enumerate() {
            if !(q >= axis.min && q <= axis.max) {
                return Err(Error::OutOfRange {
                    what: format!("slope component {a}"),
                    value: q,
                    min: axis.min,
                    max: axis.max,
                });
            }
        }
        Ok(self.interpolate_unchecked(p))
    }

    /// [`interpolate`](Self::interpolate) without hull or arity checks.
    pub(crate) fn interpolate_unchecked(&self, p: &[f64]) -> f64 {
        let axes = &self.p_grid.axes;
        let n = axes.len();
        let mut base = [0usize; MAX_AXES];
        let mut frac = [0.0; MAX_AXES];
        let mut stride = [0usize; MAX_AXES];
        let mut s_acc = 1;
        for a in 0..n {
            let axis = &axes[a];
            stride[a] = s_acc;
            s_acc *= axis.count;
            if axis.count == 1 {
                continue;
            }
            let s = ((p[a] - axis.min) / axis.step()).clamp(0.0, (axis.count - 1) as f64);
            let i = (s.floor() as usize).min(axis.count - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut value = 0.0;
        'corners: for mask in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut idx = 0;
            for a in 0..n {
                let up = mask >> a & 1 == 1;
                if up && axes[a].count == 1 {
                    continue 'corners;
                }
                idx += (base[a] + usize::from(up)) * stride[a];
                weight *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if weight != 0.0 {
                value += weight * self.values[idx];
            }
        }
        value
    }

    /// Largest Lipschitz quotient along the lattice axes.
    pub fn lipschitz_estimate(&self) -> Vec<f64> {
        let g = &self.p_grid;
        let mut out = vec![0.0f64; g.axes.len()];
        for i in 0..g.len() {
            let c = g.coords(i);
            for (a, axis) in g.axes.iter().enumerate() {
                if c[a] + 1 < axis.count {
                    let mut n = c.clone();
                    n[a] += 1;
                    let q = (self.values[g.index(&n)] - self.values[i]).abs() / axis.step();
                    out[a] = out[a].max(q);
                }
            }
        }
        out
    }

    /// One row per lattice point: slope components, value, method, residual,
    /// long-time estimate, bounds of `F(·, P)`, flags.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for a in 0..self.p_grid.axes.len() {
            let _ = write!(out, "p{a},");
        }
        out.push_str("value,method,residual,longtime,f_min,f_max,flags\n");
        for pt in &self.points {
            for c in &pt.p {
                let _ = write!(out, "{c},");
            }
            let lt = pt.longtime.map_or(String::new(), |l| l.to_string());
            let mut flags = Vec::new();
            if pt.flagged {
                flags.push("cross_check");
            }
            if !pt.within_bounds(TABLE_SLACK) {
                flags.push("bounds");
            }
            let _ = writeln!(
                out,
                "{},discount,{},{lt},{},{},{}",
                pt.value,
                pt.residual,
                pt.f_min,
                pt.f_max,
                flags.join(";")
            );
        }
        out
    }

    /// JSON header: slope grid, digest, warnings.
    pub fn header_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p_grid": self.p_grid,
            "spec_digest": self.spec_digest,
            "warnings": self.warnings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    /// `(P, s, F̄(sP), F̄(P))` per sample.
    pub samples: Vec<(Vec<f64>, f64, f64, f64)>,
    pub max_deviation: f64,
    pub f_bar_at_zero: f64,
}

impl HomogeneityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_deviation <= tol
    }
}

/// Degree-one homogeneity of `F̄` for a lifted graph Hamiltonian.
pub fn homogeneity_check(
    spec: &HamiltonianSpec,
    grid: &TorusGrid,
    points: &[Vec<f64>],
    scales: &[f64],
    opts: &EffectiveOptions,
    cfg: &SchemeConfig,
) -> Result<HomogeneityReport> {
    if spec.graph_inner.is_none() {
        return Err(Error::config("homogeneity check needs a lifted graph spec"));
    }
    let mut queries: Vec<Vec<f64>> = vec![vec![0.0; grid.axes()]];
    for p in points {
        queries.push(p.clone());
        for &s in scales {
            queries.push(p.iter().map(|v| s * v).collect());
        }
    }
    let values: Vec<f64> = queries
        .par_iter()
        .map(|p| effective_at(spec, grid, p, opts, cfg).map(|e| e.value))
        .collect::<Result<_>>()?;
    let mut samples = Vec::new();
    let mut max_deviation: f64 = 0.0;
    let mut k = 1;
    for p in points {
        let base = values[k];
        k += 1;
        for &s in scales {
            let scaled = values[k];
            k += 1;
            let dev = (scaled - s * base).abs() / (s * base.abs()).max(1.0);
            max_deviation = max_deviation.max(dev);
            samples.push((p.clone(), s, scaled, base));
        }
    }
    Ok(HomogeneityReport {
        samples,
        max_deviation,
        f_bar_at_zero: values[0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub points: Vec<Vec<f64>>,
    pub base: Vec<f64>,
    /// Perturbation sizes in the order given.
    pub deltas: Vec<f64>,
    /// Largest `|F̄_δ(P) − F̄(P)|` over the points, per δ.
    pub deviations: Vec<f64>,
    /// Largest deviation/δ over nonzero δ.
    pub observed_c: f64,
    /// Deviations decrease along the δ sequence up to 0.01 slack.
    pub monotone: bool,
}

/// `F̄` under mode amplitudes scaled by `1 + δ`, against the unperturbed `F̄`.
pub fn stability_check(
    spec: &HamiltonianSpec,
    grid: &TorusGrid,
    points: &[Vec<f64>],
    deltas: &[f64],
    opts: &EffectiveOptions,
    cfg: &SchemeConfig,
) -> Result<StabilityReport> {
    let eval_all = |s: &HamiltonianSpec| -> Result<Vec<f64>> {
        points
            .par_iter()
            .map(|p| effective_at(s, grid, p, opts, cfg).map(|e| e.value))
            .collect()
    };
    let base = eval_all(spec)?;
    let mut deviations = Vec::with_capacity(deltas.len());
    let mut observed_c: f64 = 0.0;
    for &d in deltas {
        let perturbed = eval_all(&spec.scale_amplitudes(1.0 + d))?;
        let dev = perturbed
            .iter()
            .zip(&base)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if d != 0.0 {
            observed_c = observed_c.max(dev / d.abs());
        }
        deviations.push(dev);
    }
    let monotone = deviations.windows(2).all(|w| w[1] <= w[0] + 0.01);
    Ok(StabilityReport {
        points: points.to_vec(),
        base,
        deltas: deltas.to_vec(),
        deviations,
        observed_c,
        monotone,
    })
}
