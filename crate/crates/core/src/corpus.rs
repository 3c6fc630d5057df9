//! The built-in corpus of Hamiltonians and the acceptance suite run over it.

use std::sync::OnceLock;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{
    effective_at, homogeneity_check, stability_check, tabulate, AxisRange, EffectiveOptions, EffectiveTable, PGrid,
    TABLE_SLACK,
};
use crate::ergodic::{diagnostics, discount_sweep, longtime_with, Diagnostics, ErgodicResult, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid, MAX_AXES};
use crate::hamiltonians::{estimate_constants, lift, CoeffField, GraphSpec, HamiltonianSpec, Mode, ProbeConfig};
use crate::multiscale::{
    convergence_study, effective_h, graph_results_csv, longtime_slope, sample_initial, ConvergenceReport,
    GraphResult, RationalSlope, CELLS_PER_FAST_PERIOD,
};
use crate::scheme::{comparison_probe, numerical_hamiltonian, GridHamiltonian, Marcher, SampledHamiltonian, SchemeConfig};

/// Seed of the generator drawing the comparison pairs.
pub const COMPARISON_SEED: u64 = 0x5eed_0001;
pub const COMPARISON_PAIRS: usize = 50;

const AGREEMENT_TOL: f64 = 0.02;
const ANALYTIC_TOL: f64 = 0.05;
const OSC_SLACK: f64 = 0.05;
const MIN_DECAY: f64 = 1.3;
const HOMOGENEITY_TOL: f64 = 0.02;
const SHIFT_TOL: f64 = 0.02;
const EPSILONS: [f64; 3] = [0.25, 0.125, 0.0625];
const CONVERGENCE_HORIZON: f64 = 0.25;
const GRAPH_SLOPES: [f64; 5] = [0.0, 0.5, -0.5, 1.0, -1.0];
const HARMONIC_SLOPES: [f64; 6] = [0.5, -0.5, 1.0, -1.0, 2.0, -2.0];
const DELTAS: [f64; 3] = [0.2, 0.1, 0.05];

pub mod specs {
    use crate::hamiltonians::{CoeffField, DriftShape, GraphSpec, HamiltonianSpec, Mode, Term};

    fn unit_speed() -> Term {
        Term::Coercive {
            a: CoeffField::constant(1.0),
            exponent: 1.0,
        }
    }

    /// `|p_x| − sin(2πx)`
    pub fn eikonal_sin() -> HamiltonianSpec {
        HamiltonianSpec::new(
            1,
            0.0,
            vec![
                unit_speed(),
                Term::Source {
                    f: CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1])),
                },
            ],
        )
        .expect("valid spec")
    }

    /// `|p_x| + c`
    pub fn constant(c: f64) -> HamiltonianSpec {
        HamiltonianSpec::new(
            1,
            0.0,
            vec![
                unit_speed(),
                Term::Source {
                    f: CoeffField::constant(-c),
                },
            ],
        )
        .expect("valid spec")
    }

    /// `|p_x| + 0.5 sin(2πy)|p_y| − sin(2πx)`
    pub fn mixed() -> HamiltonianSpec {
        HamiltonianSpec::new(
            1,
            0.0,
            vec![
                unit_speed(),
                Term::Drift {
                    b: CoeffField::constant(0.0).with(Mode::sin(0.5).y(1)),
                    shape: DriftShape::Absolute,
                    offset: 0.0,
                },
                Term::Source {
                    f: CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1])),
                },
            ],
        )
        .expect("valid spec")
    }

    fn travelling(l: f64) -> HamiltonianSpec {
        HamiltonianSpec::new(
            1,
            l,
            vec![
                unit_speed(),
                Term::Drift {
                    b: CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1]).y(-1)),
                    shape: DriftShape::Absolute,
                    offset: l,
                },
                Term::Source {
                    f: CoeffField::constant(0.0).with(Mode::cos(1.0).t(1)),
                },
            ],
        )
        .expect("valid spec")
    }

    /// `|p_x| + sin(2π(x−y))|p_y| − cos(2πt)`
    pub fn noncoercive() -> HamiltonianSpec {
        travelling(0.0)
    }

    /// `|p_x| + sin(2π(x−y))|p_y − 1| − cos(2πt)`, drift offset `l = −1`.
    pub fn noncoercive_shifted() -> HamiltonianSpec {
        travelling(-1.0)
    }

    /// `|p_x| + (1 + 0.5 cos(2πy))|p_y − 1|`, drift offset `l = −1`.
    pub fn monotone_drift() -> HamiltonianSpec {
        HamiltonianSpec::new(
            1,
            -1.0,
            vec![
                unit_speed(),
                Term::Drift {
                    b: CoeffField::constant(1.0).with(Mode::cos(0.5).y(1)),
                    shape: DriftShape::Absolute,
                    offset: -1.0,
                },
            ],
        )
        .expect("valid spec")
    }

    /// `c(x) = 1/(1 + 0.5 sin(2πx))`, `g ≡ 0`.
    pub fn harmonic_graph() -> GraphSpec {
        let c = CoeffField::reciprocal_cosine(0.5, &Mode::sin(1.0).x(&[1]), 24);
        GraphSpec::new(1, c, CoeffField::constant(0.0)).expect("valid graph")
    }

    /// `c ≡ 1`, `g(u) = 0.3 + 0.2 cos(2πu)`.
    pub fn graph_positive() -> GraphSpec {
        GraphSpec::new(
            1,
            CoeffField::constant(1.0),
            CoeffField::constant(0.3).with(Mode::cos(0.2).y(1)),
        )
        .expect("valid graph")
    }

    /// `c(x) = 1 + 0.3 cos(2πx)`, `g(u, t) = 0.1 + 0.4 sin(2π(u + t))`.
    pub fn graph_sign_changing() -> GraphSpec {
        GraphSpec::new(
            1,
            CoeffField::constant(1.0).with(Mode::cos(0.3).x(&[1])),
            CoeffField::constant(0.1).with(Mode::sin(0.4).y(1).t(1)),
        )
        .expect("valid graph")
    }
}

/// Named corpus Hamiltonians with the cells per axis used for them.
pub fn ergodic_cases() -> Vec<(&'static str, HamiltonianSpec, usize)> {
    vec![
        ("eikonal_sin", specs::eikonal_sin(), 256),
        ("constant", specs::constant(2.0), 64),
        ("mixed", specs::mixed(), 64),
        ("noncoercive", specs::noncoercive(), 64),
        ("noncoercive_shifted", specs::noncoercive_shifted(), 64),
        ("monotone_drift", specs::monotone_drift(), 64),
    ]
}

pub fn graph_cases() -> Vec<(&'static str, GraphSpec)> {
    vec![
        ("graph_positive", specs::graph_positive()),
        ("graph_sign_changing", specs::graph_sign_changing()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusOptions {
    /// Multiplier on the default residual tolerance.
    pub residual_scale: f64,
    /// Every grid resolution is divided by this.
    pub cell_divisor: usize,
    /// Criteria to run; empty runs all.
    pub only: Vec<u8>,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            residual_scale: 1.0,
            cell_divisor: 1,
            only: Vec::new(),
        }
    }
}

impl CorpusOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_scale > 0.0 && self.residual_scale.is_finite()) {
            return Err(Error::config("residual_scale must be positive"));
        }
        if self.cell_divisor == 0 {
            return Err(Error::config("cell_divisor must be at least 1"));
        }
        if let Some(id) = self.only.iter().find(|id| !(1..=9).contains(*id)) {
            return Err(Error::config(format!("no criterion {id}")));
        }
        Ok(())
    }

    pub fn selects(&self, id: u8) -> bool {
        self.only.is_empty() || self.only.contains(&id)
    }

    pub fn scheme(&self) -> SchemeConfig {
        let mut cfg = SchemeConfig::default();
        cfg.residual_tol *= self.residual_scale;
        cfg
    }
}

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    /// `(file name, CSV)`; deterministic, unlike `seconds`.
    #[serde(skip)]
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "eikonal effective Hamiltonian",
        2 => "harmonic-mean lift",
        3 => "ergodic-method agreement",
        4 => "structure of discounted solutions",
        5 => "homogenization convergence",
        6 => "graph pipeline",
        7 => "scheme properties",
        8 => "stability under perturbation",
        9 => "determinism",
        _ => "unknown",
    }
}

/// `criterion,title,passed` for every outcome.
pub fn summary_csv(outcomes: &[Outcome]) -> String {
    let mut out = String::from("criterion,title,passed\n");
    for o in outcomes {
        let _ = writeln!(out, "{},{},{}", o.id, o.title, o.passed);
    }
    out
}

struct Check {
    passed: bool,
    detail: String,
    tables: Vec<(String, String)>,
}

struct ErgodicRun {
    name: &'static str,
    spec: HamiltonianSpec,
    discount: ErgodicResult,
    longtime: ErgodicResult,
    diags: Vec<(f64, Diagnostics)>,
}

type Cached<T> = OnceLock<std::result::Result<T, String>>;

struct Runner {
    opts: CorpusOptions,
    cfg: SchemeConfig,
    eikonal_table: Cached<EffectiveTable>,
    frozen_table: Cached<EffectiveTable>,
    noncoercive_table: Cached<EffectiveTable>,
    ergodic: Cached<Vec<ErgodicRun>>,
}

fn cached<'a, T>(cell: &'a Cached<T>, f: impl FnOnce() -> Result<T>) -> Result<&'a T> {
    cell.get_or_init(|| f().map_err(|e| e.to_string()))
        .as_ref()
        .map_err(|e| Error::Config(format!("earlier failure: {e}")))
}

fn fast_options() -> EffectiveOptions {
    EffectiveOptions {
        cross_check: false,
        ..EffectiveOptions::default()
    }
}

fn has_y(spec: &HamiltonianSpec) -> bool {
    spec.has_drift() || spec.y_dependent()
}

impl Runner {
    fn cells(&self, n: usize) -> usize {
        n / self.opts.cell_divisor
    }

    fn grid_for(&self, spec: &HamiltonianSpec, n: usize) -> Result<TorusGrid> {
        TorusGrid::uniform(spec.space_dims, has_y(spec), self.cells(n))
    }

    fn eikonal_table(&self) -> Result<&EffectiveTable> {
        cached(&self.eikonal_table, || {
            let spec = specs::eikonal_sin();
            let p_grid = PGrid::new(vec![AxisRange::new(-2.0, 2.0, 9)?])?;
            tabulate(&spec, &self.grid_for(&spec, 256)?, &p_grid, &EffectiveOptions::default(), &self.cfg)
        })
    }

    fn frozen_table(&self) -> Result<&EffectiveTable> {
        cached(&self.frozen_table, || {
            let spec = specs::eikonal_sin();
            let p_grid = PGrid::new(vec![AxisRange::new(-7.0, 7.0, 57)?])?;
            let grid = self.grid_for(&spec, CELLS_PER_FAST_PERIOD)?;
            tabulate(&spec, &grid, &p_grid, &EffectiveOptions::default(), &self.cfg)
        })
    }

    fn noncoercive_table(&self) -> Result<&EffectiveTable> {
        cached(&self.noncoercive_table, || {
            let spec = specs::noncoercive();
            let axis = AxisRange::new(-2.0, 2.0, 9)?;
            let p_grid = PGrid::new(vec![axis.clone(), axis])?;
            let grid = self.grid_for(&spec, CELLS_PER_FAST_PERIOD)?;
            tabulate(&spec, &grid, &p_grid, &EffectiveOptions::default(), &self.cfg)
        })
    }

    fn ergodic_runs(&self) -> Result<&Vec<ErgodicRun>> {
        cached(&self.ergodic, || {
            let probe = ProbeConfig::default();
            ergodic_cases()
                .into_iter()
                .map(|(name, spec, n)| {
                    let ham = SampledHamiltonian::new(&spec, &self.grid_for(&spec, n)?)?;
                    let (discount, sols) = discount_sweep(&ham, &EffectiveOptions::default().alphas, &self.cfg)?;
                    let longtime = longtime_with(&ham, DEFAULT_HORIZON, &self.cfg)?;
                    let report = estimate_constants(&spec, &probe)?;
                    let diags = sols.iter().map(|s| (s.alpha, diagnostics(&spec, s, &report))).collect();
                    Ok(ErgodicRun {
                        name,
                        spec,
                        discount,
                        longtime,
                        diags,
                    })
                })
                .collect()
        })
    }

    fn criterion_1(&self) -> Result<Check> {
        let start = Instant::now();
        let table = self.eikonal_table()?;
        let seconds = start.elapsed().as_secs_f64();
        let worst = table
            .points
            .iter()
            .map(|pt| (pt.value - pt.p[0].abs().max(1.0)).abs())
            .fold(0.0, f64::max);
        Ok(Check {
            passed: worst <= ANALYTIC_TOL && seconds <= 60.0,
            detail: format!("max |F̄ − max(1,|p|)| = {worst:.4} (tol {ANALYTIC_TOL}), table in {seconds:.1} s (limit 60 s)"),
            tables: vec![("c1_eikonal_table.csv".into(), table.to_csv())],
        })
    }

    fn criterion_2(&self) -> Result<Check> {
        let graph = specs::harmonic_graph();
        let grid = TorusGrid::new(1, true, &[self.cells(256), 8], &[1.0, 1.0])?;
        let opts = EffectiveOptions::default();
        let values = HARMONIC_SLOPES
            .par_iter()
            .map(|&p| effective_h(&graph, &grid, &[p], &opts, &self.cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut csv = String::from("p,h_bar,oracle,error\n");
        let mut worst: f64 = 0.0;
        for (&p, &h) in HARMONIC_SLOPES.iter().zip(&values) {
            let err = (h - p.abs()).abs();
            worst = worst.max(err);
            let _ = writeln!(csv, "{p},{h},{},{err}", p.abs());
        }
        Ok(Check {
            passed: worst <= ANALYTIC_TOL,
            detail: format!("max |H̄(p) − |p|| = {worst:.4} (tol {ANALYTIC_TOL})"),
            tables: vec![("c2_harmonic_lift.csv".into(), csv)],
        })
    }

    fn criterion_3(&self) -> Result<Check> {
        let start = Instant::now();
        let runs = self.ergodic_runs()?;
        let seconds = start.elapsed().as_secs_f64();
        let mut csv = String::from("spec,lambda_discount,lambda_longtime,difference\n");
        let mut worst: f64 = 0.0;
        let mut worst_name = "";
        for r in runs {
            let d = (r.discount.lambda - r.longtime.lambda).abs();
            if d >= worst {
                worst = d;
                worst_name = r.name;
            }
            let _ = writeln!(csv, "{},{},{},{d}", r.name, r.discount.lambda, r.longtime.lambda);
        }
        Ok(Check {
            passed: worst <= AGREEMENT_TOL && seconds <= 300.0,
            detail: format!(
                "{} specs, max |λ_discount − λ_longtime| = {worst:.4} on {worst_name} (tol {AGREEMENT_TOL}), {seconds:.1} s (limit 300 s)",
                runs.len()
            ),
            tables: vec![("c3_ergodic_agreement.csv".into(), csv)],
        })
    }

    fn criterion_4(&self) -> Result<Check> {
        let runs = self.ergodic_runs()?;
        let tol = 10.0 * self.cfg.residual_tol;
        let mut csv = String::from(
            "spec,alpha,osc_full,osc_xbar,k,y_monotone_violation,y_variation,alpha_w_min,alpha_w_max,window_min,window_max,passed\n",
        );
        let mut failures = Vec::new();
        let mut checked = 0;
        for r in runs {
            for (alpha, d) in &r.diags {
                checked += 1;
                let mut bad = Vec::new();
                if !d.window_holds(tol) {
                    bad.push("window");
                }
                if d.k.is_some_and(|k| d.osc_full > k + OSC_SLACK) {
                    bad.push("oscillation");
                }
                if d.y_monotone_violation > tol {
                    bad.push("y-monotonicity");
                }
                if r.spec.effective_l() == 0.0 && d.y_variation.is_some_and(|v| v > tol) {
                    bad.push("y-independence");
                }
                let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
                let _ = writeln!(
                    csv,
                    "{},{alpha},{},{},{},{},{},{},{},{},{},{}",
                    r.name,
                    d.osc_full,
                    d.osc_xbar,
                    opt(d.k),
                    d.y_monotone_violation,
                    opt(d.y_variation),
                    d.alpha_w_min,
                    d.alpha_w_max,
                    d.window_min,
                    d.window_max,
                    bad.is_empty()
                );
                if !bad.is_empty() {
                    failures.push(format!("{} α={alpha}: {}", r.name, bad.join("+")));
                }
            }
        }
        let detail = if failures.is_empty() {
            format!("{checked} (spec, α) pairs: window, oscillation ≤ K + {OSC_SLACK}, y-checks ≤ {tol:e}")
        } else {
            format!("violations: {}", failures.join("; "))
        };
        Ok(Check {
            passed: failures.is_empty(),
            detail,
            tables: vec![("c4_structure.csv".into(), csv)],
        })
    }

    fn criterion_5(&self) -> Result<Check> {
        let start = Instant::now();
        let per_period = self.cells(CELLS_PER_FAST_PERIOD);
        let frozen = convergence_study(
            &specs::eikonal_sin(),
            self.frozen_table()?,
            &EPSILONS,
            &CoeffField::constant(0.0).with(Mode::sin(1.0).x(&[1])),
            CONVERGENCE_HORIZON,
            per_period,
            &self.cfg,
        )?;
        let u0 = CoeffField::constant(0.0)
            .with(Mode::sin(0.25).x(&[1]))
            .with(Mode::cos(0.25).y(1));
        let noncoercive = convergence_study(
            &specs::noncoercive(),
            self.noncoercive_table()?,
            &EPSILONS,
            &u0,
            CONVERGENCE_HORIZON,
            per_period,
            &self.cfg,
        )?;
        let seconds = start.elapsed().as_secs_f64();
        let ok = |r: &ConvergenceReport| r.strictly_decreasing() && r.min_decay() >= MIN_DECAY;
        let fmt = |r: &ConvergenceReport| {
            let e: Vec<String> = r.errors.iter().map(|e| format!("{e:.4}")).collect();
            format!("errors [{}], min decay {:.2}", e.join(", "), r.min_decay())
        };
        Ok(Check {
            passed: ok(&frozen) && ok(&noncoercive) && seconds <= 600.0,
            detail: format!(
                "1D {}; 2D {} (need ≥ {MIN_DECAY}), {seconds:.1} s (limit 600 s)",
                fmt(&frozen),
                fmt(&noncoercive)
            ),
            tables: vec![
                ("c5_convergence_1d.csv".into(), frozen.to_csv()),
                ("c5_convergence_2d.csv".into(), noncoercive.to_csv()),
                ("c5_table_1d.csv".into(), self.frozen_table()?.to_csv()),
                ("c5_table_2d.csv".into(), self.noncoercive_table()?.to_csv()),
            ],
        })
    }

    fn criterion_6(&self) -> Result<Check> {
        let n = self.cells(64);
        let grid = TorusGrid::uniform(1, true, n)?;
        let opts = EffectiveOptions::default();
        let w0 = CoeffField::constant(0.0);
        let mut tables = Vec::new();
        let mut worst: f64 = 0.0;
        for (name, graph) in graph_cases() {
            let results = GRAPH_SLOPES
                .par_iter()
                .map(|&p| {
                    let h = effective_h(&graph, &grid, &[p], &opts, &self.cfg)?;
                    let q = RationalSlope::from_f64(&[p])?;
                    let s = longtime_slope(&graph, &q, &w0, DEFAULT_HORIZON, n, &self.cfg)?;
                    Ok(GraphResult::new(q, h, s))
                })
                .collect::<Result<Vec<_>>>()?;
            worst = results.iter().map(|r| r.discrepancy).fold(worst, f64::max);
            tables.push((format!("c6_{name}.csv"), graph_results_csv(&results)));
        }
        Ok(Check {
            passed: worst <= ANALYTIC_TOL,
            detail: format!("max |F̄(p,−1) + slope(p)| = {worst:.4} over 2 graphs × 5 slopes (tol {ANALYTIC_TOL})"),
            tables,
        })
    }

    fn criterion_7(&self) -> Result<Check> {
        let mut rows: Vec<(String, f64, f64, bool)> = Vec::new();
        rows.push(self.comparison_pairs()?);
        rows.extend(self.flux_consistency()?);
        rows.extend(self.lambda_equivariance()?);
        rows.extend(self.effective_identities()?);
        let graph = lift(&specs::graph_sign_changing())?;
        let report = homogeneity_check(
            &graph,
            &TorusGrid::uniform(1, true, self.cells(64))?,
            &[vec![0.5, -1.0], vec![-1.0, -1.0], vec![1.0, -0.5]],
            &[0.5, 2.0],
            &fast_options(),
            &self.cfg,
        )?;
        rows.push((
            "homogeneity_lifted_graph".into(),
            report.max_deviation,
            HOMOGENEITY_TOL,
            report.passes(HOMOGENEITY_TOL),
        ));
        rows.push((
            "lifted_f_bar_at_zero".into(),
            report.f_bar_at_zero.abs(),
            self.cfg.residual_tol,
            report.f_bar_at_zero.abs() <= self.cfg.residual_tol,
        ));
        for (name, table) in [
            ("eikonal", self.eikonal_table()?),
            ("frozen_1d", self.frozen_table()?),
            ("noncoercive_2d", self.noncoercive_table()?),
        ] {
            let outside = table.points.iter().filter(|p| !p.within_bounds(TABLE_SLACK)).count();
            rows.push((format!("bounds_{name}_table"), outside as f64, 0.0, outside == 0));
        }
        let mut csv = String::from("check,value,tolerance,passed\n");
        for (name, v, tol, ok) in &rows {
            let _ = writeln!(csv, "{name},{v},{tol},{ok}");
        }
        let failed: Vec<&str> = rows.iter().filter(|r| !r.3).map(|r| r.0.as_str()).collect();
        Ok(Check {
            passed: failed.is_empty(),
            detail: if failed.is_empty() {
                format!("{} checks passed", rows.len())
            } else {
                format!("failed: {}", failed.join(", "))
            },
            tables: vec![("c7_properties.csv".into(), csv)],
        })
    }

    fn comparison_pairs(&self) -> Result<(String, f64, f64, bool)> {
        let spec = specs::noncoercive();
        let grid = self.grid_for(&spec, 32)?;
        let ham = SampledHamiltonian::new(&spec, &grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(COMPARISON_SEED);
        let pairs: Vec<(Field, Field)> = (0..COMPARISON_PAIRS)
            .map(|_| {
                let u = random_smooth(&mut rng, 0.4);
                let gap = random_smooth(&mut rng, 0.2);
                let floor = gap.modes.iter().map(|m| m.amplitude.abs()).sum::<f64>() - gap.mean;
                let u0 = sample_initial(&u, &grid);
                let d = sample_initial(&gap, &grid);
                let v0 = Field::new(
                    grid,
                    u0.values()
                        .iter()
                        .zip(d.values())
                        .map(|(u, d)| u + (d + floor).max(0.0))
                        .collect(),
                )
                .expect("same grid");
                (u0, v0)
            })
            .collect();
        let held = pairs
            .par_iter()
            .map(|(u0, v0)| comparison_probe(&ham, u0, v0, 0.25, &self.cfg))
            .collect::<Result<Vec<bool>>>()?;
        let broken = held.iter().filter(|ok| !**ok).count();
        Ok(("comparison_random_pairs".into(), broken as f64, 0.0, broken == 0))
    }

    fn flux_consistency(&self) -> Result<Vec<(String, f64, f64, bool)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(COMPARISON_SEED + 1);
        let mut kernel_gap: f64 = 0.0;
        let mut formula_gap: f64 = 0.0;
        let mut spec_gap: f64 = 0.0;
        for (_, spec, _) in ergodic_cases() {
            let grid = TorusGrid::uniform(spec.space_dims, has_y(&spec), 16)?;
            for _ in 0..4 {
                let px = rng.gen_range(-3.0..3.0);
                let py = if grid.has_y() { rng.gen_range(-3.0..3.0) } else { 0.0 };
                let t = rng.gen_range(0.0..1.0);
                let shifted = spec.shift(&[px], py);
                let ham = SampledHamiltonian::new(&shifted, &grid)?;
                let v0 = Field::constant(grid, rng.gen_range(-1.0..1.0));
                let mut m = Marcher::new(&ham, &v0, t, 0.0, &self.cfg)?;
                m.compute_residual()?;
                let frame = ham.frame(t, v0.values());
                let theta = m.theta().to_vec();
                for node in 0..grid.len() {
                    let direct = ham.eval(&frame, node, &[0.0; MAX_AXES]);
                    kernel_gap = kernel_gap.max((m.residual()[node] - direct).abs());
                    let pos = grid.position(node);
                    let y = if grid.has_y() { pos[1] } else { 0.0 };
                    let exact = spec.eval(&pos[..1], y, t, &[px], py);
                    spec_gap = spec_gap.max((direct - exact).abs());
                    let p = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
                    let p = &p[..grid.axes()];
                    let g = |q: &[f64]| spec.eval(&pos[..1], y, t, &q[..1], q.get(1).copied().unwrap_or(0.0));
                    formula_gap = formula_gap.max((numerical_hamiltonian(g, p, p, &theta) - g(p)).abs());
                }
            }
        }
        Ok(vec![
            ("flux_consistency_kernel".into(), kernel_gap, 0.0, kernel_gap == 0.0),
            ("flux_consistency_formula".into(), formula_gap, 0.0, formula_gap == 0.0),
            ("flux_sampling_vs_spec".into(), spec_gap, 1e-12, spec_gap <= 1e-12),
        ])
    }

    fn lambda_equivariance(&self) -> Result<Vec<(String, f64, f64, bool)>> {
        let c = 0.5;
        let alphas = EffectiveOptions::default().alphas;
        let tol = self.cfg.residual_tol;
        let mut discount_gap: f64 = 0.0;
        let mut longtime_gap: f64 = 0.0;
        for (spec, n) in [(specs::eikonal_sin(), 256), (specs::mixed(), 32), (specs::noncoercive(), 32)] {
            let grid = self.grid_for(&spec, n)?;
            let base = SampledHamiltonian::new(&spec, &grid)?;
            let moved = SampledHamiltonian::new(&spec.plus_constant(c), &grid)?;
            let d0 = discount_sweep(&base, &alphas, &self.cfg)?.0.lambda;
            let d1 = discount_sweep(&moved, &alphas, &self.cfg)?.0.lambda;
            let l0 = longtime_with(&base, DEFAULT_HORIZON, &self.cfg)?.lambda;
            let l1 = longtime_with(&moved, DEFAULT_HORIZON, &self.cfg)?.lambda;
            discount_gap = discount_gap.max((d1 - d0 - c).abs());
            longtime_gap = longtime_gap.max((l1 - l0 - c).abs());
        }
        Ok(vec![
            ("lambda_shift_discount".into(), discount_gap, tol, discount_gap <= tol),
            ("lambda_shift_longtime".into(), longtime_gap, tol, longtime_gap <= tol),
        ])
    }

    fn effective_identities(&self) -> Result<Vec<(String, f64, f64, bool)>> {
        let c = 0.5;
        let opts = fast_options();
        let mut additive: f64 = 0.0;
        let mut shift: f64 = 0.0;
        let cases = [
            (specs::eikonal_sin(), 256, vec![vec![0.5], vec![1.5]], vec![0.5]),
            (specs::noncoercive(), 32, vec![vec![0.5, 0.5], vec![-1.0, 0.5]], vec![0.5, -0.25]),
        ];
        for (spec, n, points, p0) in cases {
            let grid = self.grid_for(&spec, n)?;
            let moved = spec.plus_constant(c);
            let shifted = spec.shift(&p0[..1], p0.get(1).copied().unwrap_or(0.0));
            for p in points {
                let base = effective_at(&spec, &grid, &p, &opts, &self.cfg)?.value;
                let plus = effective_at(&moved, &grid, &p, &opts, &self.cfg)?.value;
                additive = additive.max((plus - base - c).abs());
                let sum: Vec<f64> = p.iter().zip(&p0).map(|(a, b)| a + b).collect();
                let direct = effective_at(&spec, &grid, &sum, &opts, &self.cfg)?.value;
                let via_shift = effective_at(&shifted, &grid, &p, &opts, &self.cfg)?.value;
                shift = shift.max((direct - via_shift).abs());
            }
        }
        Ok(vec![
            ("f_bar_additive_equivariance".into(), additive, SHIFT_TOL, additive <= SHIFT_TOL),
            ("f_bar_shift_identity".into(), shift, SHIFT_TOL, shift <= SHIFT_TOL),
        ])
    }

    fn criterion_8(&self) -> Result<Check> {
        let opts = fast_options();
        let eik = specs::eikonal_sin();
        let analytic = stability_check(&eik, &self.grid_for(&eik, 256)?, &[vec![0.0]], &DELTAS, &opts, &self.cfg)?;
        let nc = specs::noncoercive();
        let property = stability_check(
            &nc,
            &self.grid_for(&nc, 64)?,
            &[vec![0.5, 0.5], vec![0.0, 1.0]],
            &DELTAS,
            &opts,
            &self.cfg,
        )?;
        let tracking = analytic
            .deviations
            .iter()
            .zip(&analytic.deltas)
            .map(|(dev, d)| (dev - d).abs())
            .fold(0.0, f64::max);
        let mut csv = String::from("spec,delta,deviation,observed_c,monotone\n");
        for (name, r) in [("eikonal_sin", &analytic), ("noncoercive", &property)] {
            for (d, dev) in r.deltas.iter().zip(&r.deviations) {
                let _ = writeln!(csv, "{name},{d},{dev},{},{}", r.observed_c, r.monotone);
            }
        }
        let fmt = |r: &crate::effective::StabilityReport| {
            let v: Vec<String> = r.deviations.iter().map(|d| format!("{d:.4}")).collect();
            format!("[{}]", v.join(", "))
        };
        Ok(Check {
            passed: analytic.monotone && property.monotone && tracking <= ANALYTIC_TOL,
            detail: format!(
                "eikonal deviations {} track δ within {tracking:.4} (tol {ANALYTIC_TOL}); noncoercive deviations {} monotone: {}",
                fmt(&analytic),
                fmt(&property),
                property.monotone
            ),
            tables: vec![("c8_stability.csv".into(), csv)],
        })
    }
}

/// Mean plus three random Fourier modes in `(x, y)` with amplitudes below `amp`.
fn random_smooth(rng: &mut ChaCha8Rng, amp: f64) -> CoeffField {
    let mut c = CoeffField::constant(rng.gen_range(-amp..amp));
    for _ in 0..3 {
        let mode = Mode::cos(rng.gen_range(-amp..amp))
            .x(&[rng.gen_range(-2..=2)])
            .y(rng.gen_range(-2..=2))
            .phase(rng.gen_range(0.0..TAU));
        c = c.with(mode);
    }
    c
}

/// Criteria 1 to 8 (those selected) in the current thread pool.
pub fn run(opts: &CorpusOptions) -> Result<Vec<Outcome>> {
    opts.validate()?;
    let runner = Runner {
        opts: opts.clone(),
        cfg: opts.scheme(),
        eikonal_table: OnceLock::new(),
        frozen_table: OnceLock::new(),
        noncoercive_table: OnceLock::new(),
        ergodic: OnceLock::new(),
    };
    let mut out = Vec::new();
    for id in 1..=8u8 {
        if !opts.selects(id) {
            continue;
        }
        let start = Instant::now();
        let check = match id {
            1 => runner.criterion_1(),
            2 => runner.criterion_2(),
            3 => runner.criterion_3(),
            4 => runner.criterion_4(),
            5 => runner.criterion_5(),
            6 => runner.criterion_6(),
            7 => runner.criterion_7(),
            _ => runner.criterion_8(),
        };
        let seconds = start.elapsed().as_secs_f64();
        out.push(match check {
            Ok(c) => Outcome {
                id,
                title: title(id).into(),
                passed: c.passed,
                detail: c.detail,
                seconds,
                tables: c.tables,
            },
            Err(e) => Outcome {
                id,
                title: title(id).into(),
                passed: false,
                detail: format!("error: {e}"),
                seconds,
                tables: Vec::new(),
            },
        });
    }
    Ok(out)
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

/// Thread count of the second determinism run.
pub fn parallel_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).max(4)
}

/// Compares the CSV tables of two runs byte for byte.
pub fn compare_runs(a: &[Outcome], b: &[Outcome], threads: (usize, usize), seconds: f64) -> Outcome {
    let tables = |o: &[Outcome]| -> Vec<(String, String)> { o.iter().flat_map(|o| o.tables.clone()).collect() };
    let (ta, tb) = (tables(a), tables(b));
    let differing: Vec<&str> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let same_verdicts = a.iter().zip(b).all(|(x, y)| x.passed == y.passed);
    let passed = !ta.is_empty() && ta.len() == tb.len() && differing.is_empty() && same_verdicts;
    let detail = if passed {
        format!("{} CSV tables bit-identical with {} and {} threads", ta.len(), threads.0, threads.1)
    } else if ta.len() != tb.len() {
        format!("table count differs: {} vs {}", ta.len(), tb.len())
    } else if ta.is_empty() {
        "no tables produced".into()
    } else if !differing.is_empty() {
        format!("differing tables: {}", differing.join(", "))
    } else {
        "pass/fail verdicts differ between runs".into()
    };
    Outcome {
        id: 9,
        title: title(9).into(),
        passed,
        detail,
        seconds,
        tables: Vec::new(),
    }
}

/// The full suite: criteria 1 to 8 on one thread, then again on
/// [`parallel_threads`] threads for the determinism criterion.
pub fn run_all(opts: &CorpusOptions) -> Result<Vec<Outcome>> {
    opts.validate()?;
    if !opts.selects(9) {
        return run(opts);
    }
    let mut inner = opts.clone();
    inner.only.retain(|&id| id != 9);
    let mut first = pool(1)?.install(|| run(&inner))?;
    let start = Instant::now();
    let threads = parallel_threads();
    let second = pool(threads)?.install(|| run(&inner))?;
    let check = compare_runs(&first, &second, (1, threads), start.elapsed().as_secs_f64());
    if opts.only.is_empty() || opts.only.iter().any(|&id| id != 9) {
        first.retain(|o| opts.selects(o.id));
    } else {
        first.clear();
    }
    first.push(check);
    Ok(first)
}
