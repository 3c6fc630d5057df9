use serde::{Deserialize, Serialize};

use super::coeff::CoeffField;
use crate::error::{Error, Result};

/// Lattice used to check pointwise coefficient constraints such as `a ≥ η > 0`.
const POSITIVITY_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftShape {
    /// `b·|p_y + l|`
    Absolute,
    /// `b·(p_y + l)`
    Linear,
}

impl DriftShape {
    #[inline]
    pub fn apply(self, q: f64) -> f64 {
        match self {
            DriftShape::Absolute => q.abs(),
            DriftShape::Linear => q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    /// `a(x,t)·|p_x|^exponent`
    Coercive { a: CoeffField, exponent: f64 },
    /// `b(x,y,t)·|p_y + offset|` or `b(x,y,t)·(p_y + offset)`
    Drift {
        b: CoeffField,
        shape: DriftShape,
        #[serde(default)]
        offset: f64,
    },
    /// `-f(x,t)`
    Source { f: CoeffField },
}

/// Graph Hamiltonian `H(x,u,t,p) = c(x,t)|p| + g(u,t)`; the `ky` frequencies
/// of `g` act on `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default = "one")]
    pub space_dims: usize,
    pub c: CoeffField,
    pub g: CoeffField,
}

fn one() -> usize {
    1
}

impl GraphSpec {
    pub fn new(space_dims: usize, c: CoeffField, g: CoeffField) -> Result<Self> {
        let spec = GraphSpec { space_dims, c, g };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.space_dims) {
            return Err(Error::spec("graph space_dims must be 1 or 2"));
        }
        if !self.c.all_finite() || !self.g.all_finite() {
            return Err(Error::spec("graph coefficients must be finite"));
        }
        if self.c.depends_on_y() {
            return Err(Error::spec("c(x,t) must not depend on u"));
        }
        if self.c.max_x_dims() > self.space_dims || self.g.max_x_dims() > 0 {
            return Err(Error::spec("g(u,t) must not depend on x; c(x,t) exceeds space_dims"));
        }
        let eta = sampled_min(&self.c, self.space_dims);
        if !(eta > 0.0) {
            return Err(Error::spec(format!(
                "c(x,t) must be positive (sampled minimum {eta})"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], u: f64, t: f64, p: &[f64]) -> f64 {
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.c.eval(x, 0.0, t) * norm + self.g.eval(&[], u, t)
    }

    pub fn time_dependent(&self) -> bool {
        self.c.depends_on_t() || self.g.depends_on_t()
    }
}

/// Constant gradient offset applied before evaluation: `F(·, q + shift)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shift {
    #[serde(default)]
    pub px: Vec<f64>,
    #[serde(default)]
    pub py: f64,
}

impl Shift {
    pub fn is_zero(&self) -> bool {
        self.py == 0.0 && self.px.iter().all(|&v| v == 0.0)
    }

    pub fn px_at(&self, axis: usize) -> f64 {
        self.px.get(axis).copied().unwrap_or(0.0)
    }
}

/// A Hamiltonian `F(x,y,t,p_x,p_y)` from the closed term algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub space_dims: usize,
    /// Declared drift offset; every drift term must carry the same offset.
    #[serde(default)]
    pub l: f64,
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_inner: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "Shift::is_zero")]
    pub shift: Shift,
}

impl HamiltonianSpec {
    pub fn new(space_dims: usize, l: f64, terms: Vec<Term>) -> Result<Self> {
        let spec = HamiltonianSpec {
            space_dims,
            l,
            terms,
            graph_inner: None,
            shift: Shift::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.space_dims) {
            return Err(Error::spec(format!(
                "space_dims must be 1 or 2, got {}",
                self.space_dims
            )));
        }
        if !self.l.is_finite() || !self.shift.py.is_finite() || self.shift.px.iter().any(|v| !v.is_finite()) {
            return Err(Error::spec("offsets must be finite"));
        }
        if self.shift.px.len() > self.space_dims {
            return Err(Error::spec("shift has more x components than space_dims"));
        }
        let mut coercive = 0;
        for (i, term) in self.terms.iter().enumerate() {
            match term {
                Term::Coercive { a, exponent } => {
                    coercive += 1;
                    if !(exponent.is_finite() && *exponent >= 1.0) {
                        return Err(Error::spec(format!(
                            "term {i}: coercive exponent must be >= 1, got {exponent}"
                        )));
                    }
                    self.check_coeff(i, "a", a, false)?;
                    let eta = sampled_min(a, self.space_dims);
                    if !(eta > 0.0) {
                        return Err(Error::spec(format!(
                            "term {i}: a(x,t) must be positive (sampled minimum {eta})"
                        )));
                    }
                }
                Term::Drift { b, offset, .. } => {
                    self.check_coeff(i, "b", b, true)?;
                    if *offset != self.l {
                        return Err(Error::spec(format!(
                            "term {i}: drift offset {offset} differs from declared l = {}",
                            self.l
                        )));
                    }
                }
                Term::Source { f } => self.check_coeff(i, "f", f, false)?,
            }
        }
        if coercive != 1 {
            return Err(Error::spec(format!(
                "exactly one coercive term required, found {coercive}"
            )));
        }
        if let Some(g) = &self.graph_inner {
            g.validate()?;
        }
        Ok(())
    }

    fn check_coeff(&self, term: usize, name: &str, c: &CoeffField, y_allowed: bool) -> Result<()> {
        if !c.all_finite() {
            return Err(Error::spec(format!("term {term}: {name} has non-finite data")));
        }
        if c.max_x_dims() > self.space_dims {
            return Err(Error::spec(format!(
                "term {term}: {name} uses more x axes than space_dims = {}",
                self.space_dims
            )));
        }
        if !y_allowed && c.depends_on_y() {
            return Err(Error::spec(format!("term {term}: {name} must not depend on y")));
        }
        Ok(())
    }

    /// `F(x, y, t, p_x + shift_x, p_y + shift_y)`.
    pub fn eval(&self, x: &[f64], y: f64, t: f64, px: &[f64], py: f64) -> f64 {
        let mut norm2 = 0.0;
        for axis in 0..self.space_dims {
            let q = px.get(axis).copied().unwrap_or(0.0) + self.shift.px_at(axis);
            norm2 += q * q;
        }
        let qy = py + self.shift.py;
        let mut value = 0.0;
        let mut sources = 0.0;
        for term in &self.terms {
            match term {
                Term::Coercive { a, exponent } => {
                    value += a.eval(x, y, t) * pow_norm(norm2, *exponent);
                }
                Term::Drift { b, shape, offset } => {
                    value += b.eval(x, y, t) * shape.apply(qy + offset);
                }
                Term::Source { f } => sources += f.eval(x, y, t),
            }
        }
        value - sources
    }

    /// `G(·, q) = F(·, q + P)`, realised by accumulating a stored offset.
    pub fn shift(&self, px: &[f64], py: f64) -> HamiltonianSpec {
        let mut out = self.clone();
        let dims = self.space_dims;
        let mut sx = vec![0.0; dims];
        for (axis, s) in sx.iter_mut().enumerate() {
            *s = self.shift.px_at(axis) + px.get(axis).copied().unwrap_or(0.0);
        }
        out.shift = Shift {
            px: sx,
            py: self.shift.py + py,
        };
        out
    }

    /// `F + c`, as an extra source term `-(-c)`.
    pub fn plus_constant(&self, c: f64) -> HamiltonianSpec {
        let mut out = self.clone();
        out.terms.push(Term::Source {
            f: CoeffField::constant(-c),
        });
        out
    }

    /// Every coefficient mode amplitude multiplied by `factor`.
    pub fn scale_amplitudes(&self, factor: f64) -> HamiltonianSpec {
        let mut out = self.clone();
        for term in &mut out.terms {
            match term {
                Term::Coercive { a, .. } => *a = a.scale_amplitudes(factor),
                Term::Drift { b, .. } => *b = b.scale_amplitudes(factor),
                Term::Source { f } => *f = f.scale_amplitudes(factor),
            }
        }
        out
    }

    /// The drift offset seen by the shifted Hamiltonian, i.e. the `l` of the
    /// Lipschitz structure condition for `G`.
    pub fn effective_l(&self) -> f64 {
        self.l + self.shift.py
    }

    pub fn has_drift(&self) -> bool {
        self.terms.iter().any(|t| matches!(t, Term::Drift { .. }))
    }

    pub fn time_dependent(&self) -> bool {
        self.coefficients().any(|c| c.depends_on_t())
    }

    pub fn y_dependent(&self) -> bool {
        self.coefficients().any(|c| c.depends_on_y())
    }

    pub(crate) fn coefficients(&self) -> impl Iterator<Item = &CoeffField> {
        self.terms.iter().map(|t| match t {
            Term::Coercive { a, .. } => a,
            Term::Drift { b, .. } => b,
            Term::Source { f } => f,
        })
    }

    pub fn coercive(&self) -> (&CoeffField, f64) {
        self.terms
            .iter()
            .find_map(|t| match t {
                Term::Coercive { a, exponent } => Some((a, *exponent)),
                _ => None,
            })
            .expect("validated spec has a coercive term")
    }

    /// Minimum of the coercive coefficient over the positivity lattice.
    pub fn coercivity_floor(&self) -> f64 {
        sampled_min(self.coercive().0, self.space_dims)
    }

    /// Closed-form bounds on `|∂F/∂p_axis|` for `|p| ≤ radius`, per axis
    /// (`x` axes then `y`).
    pub fn gradient_bounds(&self, radius: f64, with_y: bool) -> Vec<f64> {
        let mut x_bound = 0.0;
        let mut y_bound = 0.0;
        for term in &self.terms {
            match term {
                Term::Coercive { a, exponent } => {
                    let slope = if *exponent == 1.0 {
                        1.0
                    } else {
                        exponent * radius.powf(exponent - 1.0)
                    };
                    x_bound += a.sup_bound() * slope;
                }
                Term::Drift { b, .. } => y_bound += b.sup_bound(),
                Term::Source { .. } => {}
            }
        }
        let mut out = vec![x_bound; self.space_dims];
        if with_y {
            out.push(y_bound);
        }
        out
    }
}

#[inline]
pub(crate) fn pow_norm(norm2: f64, exponent: f64) -> f64 {
    if exponent == 1.0 {
        norm2.sqrt()
    } else if exponent == 2.0 {
        norm2
    } else {
        norm2.sqrt().powf(exponent)
    }
}

fn sampled_min(c: &CoeffField, space_dims: usize) -> f64 {
    if c.is_constant() {
        return c.mean;
    }
    let n = POSITIVITY_SAMPLES;
    let ts = if c.depends_on_t() { n } else { 1 };
    let x2 = if space_dims == 2 { n } else { 1 };
    let mut min = f64::INFINITY;
    for k in 0..ts {
        let t = k as f64 / ts as f64;
        for j in 0..x2 {
            for i in 0..n {
                let x = [i as f64 / n as f64, j as f64 / n as f64];
                min = min.min(c.eval(&x[..space_dims], 0.0, t));
            }
        }
    }
    min
}

/// Level-set lift `F(x,y,t,p_x,p_y) = c(x,t)|p_x| + g(y,t)|p_y|` of the graph
/// Hamiltonian `c|p| + g`; at `p_y = 0` it reduces to the recession function
/// `c|p_x|`.
pub fn lift(graph: &GraphSpec) -> Result<HamiltonianSpec> {
    graph.validate()?;
    let mut spec = HamiltonianSpec::new(
        graph.space_dims,
        0.0,
        vec![
            Term::Coercive {
                a: graph.c.clone(),
                exponent: 1.0,
            },
            Term::Drift {
                b: graph.g.clone(),
                shape: DriftShape::Absolute,
                offset: 0.0,
            },
        ],
    )?;
    spec.graph_inner = Some(graph.clone());
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::coeff::Mode;

    fn eikonal() -> HamiltonianSpec {
        HamiltonianSpec::new(
            1,
            0.0,
            vec![Term::Coercive {
                a: CoeffField::constant(1.0),
                exponent: 1.0,
            }],
        )
        .unwrap()
    }

    fn intro_model() -> HamiltonianSpec {
        HamiltonianSpec::new(
            1,
            0.0,
            vec![
                Term::Coercive {
                    a: CoeffField::constant(1.0),
                    exponent: 1.0,
                },
                Term::Drift {
                    b: CoeffField::constant(0.0).with(Mode::sin(1.0).y(1)),
                    shape: DriftShape::Absolute,
                    offset: 0.0,
                },
                Term::Source {
                    f: CoeffField::constant(2.0),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn coercive_only_ignores_py() {
        assert_eq!(eikonal().eval(&[0.3], 0.1, 0.0, &[3.0], 7.0), 3.0);
    }

    #[test]
    fn intro_model_hand_value() {
        // 1·|1| + sin(π/2)·|−2| − 2 = 1
        let v = intro_model().eval(&[0.4], 0.25, 0.7, &[1.0], -2.0);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn zero_gradient_is_minus_source() {
        let s = intro_model();
        assert_eq!(s.eval(&[0.1], 0.3, 0.0, &[0.0], 0.0), -2.0);
    }

    #[test]
    fn validation_rejects_malformed_specs() {
        let two_coercive = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                Term::Coercive { a: CoeffField::constant(1.0), exponent: 1.0 },
                Term::Coercive { a: CoeffField::constant(1.0), exponent: 2.0 },
            ],
        );
        assert!(matches!(two_coercive, Err(Error::InvalidSpec(_))));
        let nonpositive = HamiltonianSpec::new(
            1,
            0.0,
            vec![Term::Coercive {
                a: CoeffField::constant(0.5).with(Mode::cos(0.6).x(&[1])),
                exponent: 1.0,
            }],
        );
        assert!(nonpositive.is_err());
        let bad_offset = HamiltonianSpec::new(
            1,
            -1.0,
            vec![
                Term::Coercive { a: CoeffField::constant(1.0), exponent: 1.0 },
                Term::Drift { b: CoeffField::constant(1.0), shape: DriftShape::Absolute, offset: 0.0 },
            ],
        );
        assert!(bad_offset.is_err());
        let y_source = HamiltonianSpec::new(
            1,
            0.0,
            vec![
                Term::Coercive { a: CoeffField::constant(1.0), exponent: 1.0 },
                Term::Source { f: CoeffField::constant(0.0).with(Mode::cos(1.0).y(1)) },
            ],
        );
        assert!(y_source.is_err());
        let sub_linear = HamiltonianSpec::new(
            1,
            0.0,
            vec![Term::Coercive { a: CoeffField::constant(1.0), exponent: 0.5 }],
        );
        assert!(sub_linear.is_err());
    }

    #[test]
    fn lift_of_pure_eikonal() {
        let g = GraphSpec::new(1, CoeffField::constant(1.0), CoeffField::constant(0.0)).unwrap();
        let f = lift(&g).unwrap();
        assert_eq!(f.eval(&[0.2], 0.7, 0.0, &[-2.5], 4.0), 2.5);
        assert!(f.graph_inner.is_some());
    }

    #[test]
    fn lift_matches_scaled_graph_hamiltonian() {
        let g = GraphSpec::new(1, CoeffField::constant(2.0), CoeffField::constant(-1.0)).unwrap();
        let f = lift(&g).unwrap();
        let lifted = f.eval(&[0.0], 0.0, 0.0, &[1.0], -3.0);
        assert_eq!(lifted, -1.0);
        let direct = 3.0 * g.eval(&[0.0], 0.0, 0.0, &[1.0 / 3.0]);
        assert!((lifted - direct).abs() < 1e-15);
    }

    #[test]
    fn lift_rejects_nonpositive_c() {
        let g = GraphSpec {
            space_dims: 1,
            c: CoeffField::constant(0.0),
            g: CoeffField::constant(0.0),
        };
        assert!(lift(&g).is_err());
    }

    #[test]
    fn shift_examples() {
        let f = eikonal();
        let s = f.shift(&[2.0], 0.0);
        assert_eq!(s.eval(&[0.0], 0.0, 0.0, &[-2.0], 0.0), 0.0);
        let id = f.shift(&[0.0], 0.0);
        assert_eq!(id.eval(&[0.5], 0.0, 0.0, &[1.5], 0.0), f.eval(&[0.5], 0.0, 0.0, &[1.5], 0.0));
    }

    #[test]
    fn plus_constant_shifts_values() {
        let f = intro_model();
        let g = f.plus_constant(0.75);
        let a = f.eval(&[0.3], 0.2, 0.1, &[0.5], 1.0);
        let b = g.eval(&[0.3], 0.2, 0.1, &[0.5], 1.0);
        assert!((b - a - 0.75).abs() < 1e-15);
    }

    #[test]
    fn serde_roundtrip_keeps_spec() {
        let f = intro_model().shift(&[0.5], -1.0);
        let text = serde_json::to_string(&f).unwrap();
        let back: HamiltonianSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(f, back);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn graph() -> impl Strategy<Value = GraphSpec> {
            (0.0f64..0.6, -1.0f64..1.0, -1.0f64..1.0, 0i64..3).prop_map(|(ca, gm, ga, k)| {
                GraphSpec::new(
                    1,
                    CoeffField::constant(1.0).with(Mode::sin(ca).x(&[1]).t(1)),
                    CoeffField::constant(gm).with(Mode::cos(ga).y(k).phase(0.3)),
                )
                .unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn lift_is_positively_one_homogeneous(
                g in graph(),
                x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.0f64..1.0,
                px in -5.0f64..5.0, py in -5.0f64..5.0,
            ) {
                let f = lift(&g).unwrap();
                let base = f.eval(&[x], y, t, &[px], py);
                for s in [0.5, 2.0, 10.0] {
                    let scaled = f.eval(&[x], y, t, &[s * px], s * py);
                    // powers of two scale exactly; 10 only up to rounding
                    if s == 10.0 {
                        prop_assert!((scaled - s * base).abs() <= 1e-12 * (1.0 + scaled.abs()));
                    } else {
                        prop_assert_eq!(scaled, s * base);
                    }
                }
            }

            #[test]
            fn shift_composes(
                px in -3.0f64..3.0, py in -3.0f64..3.0,
                qx in -3.0f64..3.0, qy in -3.0f64..3.0,
                x in 0.0f64..1.0, y in 0.0f64..1.0,
            ) {
                let f = intro_model();
                let shifted = f.shift(&[px], py);
                prop_assert_eq!(
                    shifted.eval(&[x], y, 0.0, &[qx], qy),
                    f.eval(&[x], y, 0.0, &[qx + px], qy + py)
                );
            }
        }
    }
}
