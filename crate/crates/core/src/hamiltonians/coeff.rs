use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

/// One Fourier mode `amplitude * cos(2π (kx·x + ky·y + kt·t) + phase)`.
///
/// For coefficients of a graph Hamiltonian `g(u, t)` the `ky` frequency acts
/// on the unknown `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kx: Vec<i64>,
    #[serde(default, skip_serializing_if = "is_zero_i64")]
    pub ky: i64,
    #[serde(default, skip_serializing_if = "is_zero_i64")]
    pub kt: i64,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "is_zero_f64")]
    pub phase: f64,
}

fn is_zero_i64(v: &i64) -> bool {
    *v == 0
}

fn is_zero_f64(v: &f64) -> bool {
    *v == 0.0
}

impl Mode {
    pub fn cos(amplitude: f64) -> Self {
        Mode {
            kx: Vec::new(),
            ky: 0,
            kt: 0,
            amplitude,
            phase: 0.0,
        }
    }

    pub fn sin(amplitude: f64) -> Self {
        Mode {
            phase: -FRAC_PI_2,
            ..Mode::cos(amplitude)
        }
    }

    pub fn x(mut self, k: &[i64]) -> Self {
        self.kx = k.to_vec();
        self
    }

    pub fn y(mut self, k: i64) -> Self {
        self.ky = k;
        self
    }

    pub fn t(mut self, k: i64) -> Self {
        self.kt = k;
        self
    }

    pub fn phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn kx_at(&self, axis: usize) -> i64 {
        self.kx.get(axis).copied().unwrap_or(0)
    }

    /// `kx·x` in cycles, before the `2π` factor.
    fn spatial_cycles(&self, x: &[f64], y: f64) -> f64 {
        let mut s = self.ky as f64 * y;
        for (k, xi) in self.kx.iter().zip(x) {
            s += *k as f64 * xi;
        }
        s
    }
}

/// Periodic coefficient `mean + Σ amplitude·cos(2π k·(x, y, t) + phase)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffField {
    #[serde(default)]
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<Mode>,
}

impl CoeffField {
    pub fn constant(mean: f64) -> Self {
        CoeffField {
            mean,
            modes: Vec::new(),
        }
    }

    pub fn with(mut self, mode: Mode) -> Self {
        self.modes.push(mode);
        self
    }

    /// Fourier series of `1 / (1 + a cos(2π k·z + φ))` for `|a| < 1`, with
    /// `k`, `φ` taken from `base` and `terms` harmonics. The coefficients
    /// decay like `rᵐ` with `r = (1 − √(1 − a²))/|a|`.
    pub fn reciprocal_cosine(a: f64, base: &Mode, terms: usize) -> Self {
        assert!(a.abs() < 1.0, "reciprocal_cosine needs |a| < 1");
        let s = (1.0 - a * a).sqrt();
        let mut field = CoeffField::constant(1.0 / s);
        if a == 0.0 {
            return field;
        }
        let r = (1.0 - s) / a.abs();
        let sign = -a.signum();
        for m in 1..=terms as i64 {
            let coef = 2.0 / s * (sign * r).powi(m as i32);
            field.modes.push(Mode {
                kx: base.kx.iter().map(|k| k * m).collect(),
                ky: base.ky * m,
                kt: base.kt * m,
                amplitude: coef,
                phase: base.phase * m as f64,
            });
        }
        field
    }

    pub fn eval(&self, x: &[f64], y: f64, t: f64) -> f64 {
        let mut v = self.mean;
        for m in &self.modes {
            let cycles = m.spatial_cycles(x, y) + m.kt as f64 * t;
            v += m.amplitude * (TAU * cycles + m.phase).cos();
        }
        v
    }

    pub fn is_constant(&self) -> bool {
        self.modes.iter().all(|m| m.amplitude == 0.0)
    }

    pub fn depends_on_y(&self) -> bool {
        self.modes.iter().any(|m| m.ky != 0 && m.amplitude != 0.0)
    }

    pub fn depends_on_t(&self) -> bool {
        self.modes.iter().any(|m| m.kt != 0 && m.amplitude != 0.0)
    }

    pub fn max_x_dims(&self) -> usize {
        self.modes
            .iter()
            .map(|m| {
                m.kx.iter()
                    .rposition(|&k| k != 0)
                    .map_or(0, |p| p + 1)
            })
            .max()
            .unwrap_or(0)
    }

    /// `|mean| + Σ|amplitude|`, an upper bound for `|c|` everywhere.
    pub fn sup_bound(&self) -> f64 {
        self.mean.abs() + self.modes.iter().map(|m| m.amplitude.abs()).sum::<f64>()
    }

    /// `mean - Σ|amplitude|`, a lower bound for `c` everywhere.
    pub fn inf_bound(&self) -> f64 {
        self.mean - self.modes.iter().map(|m| m.amplitude.abs()).sum::<f64>()
    }

    /// Upper bound on `|∂c/∂y|`.
    pub fn y_lipschitz(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| TAU * (m.ky as f64).abs() * m.amplitude.abs())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.mean.is_finite()
            && self
                .modes
                .iter()
                .all(|m| m.amplitude.is_finite() && m.phase.is_finite())
    }

    /// Same field with every mode amplitude multiplied by `factor`.
    pub fn scale_amplitudes(&self, factor: f64) -> Self {
        CoeffField {
            mean: self.mean,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    amplitude: m.amplitude * factor,
                    ..m.clone()
                })
                .collect(),
        }
    }

    pub fn negated(&self) -> Self {
        CoeffField {
            mean: -self.mean,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    amplitude: -m.amplitude,
                    ..m.clone()
                })
                .collect(),
        }
    }
}

/// Coefficient sampled on a lattice, with the time dependence factored as
/// `cos(a + b) = cos a cos b - sin a sin b` so that a time slice costs two
/// multiplies per node and mode.
#[derive(Debug, Clone)]
pub(crate) struct SampledCoeff {
    fixed: Vec<f64>,
    timed: Vec<TimedMode>,
}

#[derive(Debug, Clone)]
struct TimedMode {
    amplitude: f64,
    omega: f64,
    cos_space: Vec<f64>,
    sin_space: Vec<f64>,
}

impl SampledCoeff {
    /// Samples `c(scale·x, scale·y, scale·t)` at the given points.
    ///
    /// `scale` must be a positive integer for the result to stay periodic.
    pub(crate) fn new(coeff: &CoeffField, points: &[([f64; 2], f64)], scale: f64) -> Self {
        let mut fixed = vec![coeff.mean; points.len()];
        let mut timed = Vec::new();
        for m in &coeff.modes {
            if m.amplitude == 0.0 {
                continue;
            }
            let phases = points
                .iter()
                .map(|(x, y)| TAU * scale * m.spatial_cycles(x, *y) + m.phase);
            if m.kt == 0 {
                for (v, ph) in fixed.iter_mut().zip(phases) {
                    *v += m.amplitude * ph.cos();
                }
            } else {
                let (cos_space, sin_space) = phases.map(|ph| (ph.cos(), ph.sin())).unzip();
                timed.push(TimedMode {
                    amplitude: m.amplitude,
                    omega: TAU * scale * m.kt as f64,
                    cos_space,
                    sin_space,
                });
            }
        }
        SampledCoeff { fixed, timed }
    }

    pub(crate) fn is_static(&self) -> bool {
        self.timed.is_empty()
    }

    pub(crate) fn fixed(&self) -> &[f64] {
        &self.fixed
    }

    pub(crate) fn fill(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.fixed);
        for m in &self.timed {
            let (s, c) = (m.omega * t).sin_cos();
            let (ac, as_) = (m.amplitude * c, m.amplitude * s);
            for ((o, cs), ss) in out.iter_mut().zip(&m.cos_space).zip(&m.sin_space) {
                *o += ac * cs - as_ * ss;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_mode_is_exact_at_quarter() {
        let c = CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1]));
        assert_eq!(c.eval(&[0.25], 0.0, 0.0), 1.0);
        assert!(c.eval(&[0.75], 0.0, 0.0) == -1.0);
    }

    #[test]
    fn periodic_in_every_variable() {
        let c = CoeffField::constant(0.3)
            .with(Mode::cos(0.7).x(&[1, 2]).y(-1).t(3).phase(0.4))
            .with(Mode::sin(0.2).y(2));
        let a = c.eval(&[0.13, 0.71], 0.37, 0.91);
        let b = c.eval(&[1.13, -0.29], 2.37, -1.09);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn dependency_flags() {
        let c = CoeffField::constant(1.0).with(Mode::cos(0.5).x(&[0, 1]).t(1));
        assert!(c.depends_on_t());
        assert!(!c.depends_on_y());
        assert_eq!(c.max_x_dims(), 2);
        assert_eq!(c.sup_bound(), 1.5);
        assert_eq!(c.inf_bound(), 0.5);
    }

    #[test]
    fn reciprocal_series_inverts_cosine() {
        let base = Mode::sin(1.0).x(&[1]);
        let c = CoeffField::reciprocal_cosine(0.5, &base, 24);
        for i in 0..50 {
            let x = i as f64 / 50.0;
            let inner = 1.0 + 0.5 * (TAU * x).sin();
            assert!((c.eval(&[x], 0.0, 0.0) * inner - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_matches_direct_evaluation() {
        let c = CoeffField::constant(0.1)
            .with(Mode::cos(0.5).x(&[1]).y(-1).t(2).phase(0.3))
            .with(Mode::sin(0.25).x(&[2]));
        let pts: Vec<([f64; 2], f64)> = (0..16)
            .map(|i| ([i as f64 / 16.0, 0.0], (i % 4) as f64 / 4.0))
            .collect();
        let s = SampledCoeff::new(&c, &pts, 2.0);
        let mut out = Vec::new();
        for &t in &[0.0, 0.137, 0.5] {
            s.fill(t, &mut out);
            for (i, (x, y)) in pts.iter().enumerate() {
                let direct = c.eval(&[2.0 * x[0]], 2.0 * y, 2.0 * t);
                assert!((out[i] - direct).abs() < 1e-12);
            }
        }
    }
}
