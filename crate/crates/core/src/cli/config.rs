use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::effective::{EffectiveOptions, PGrid, CROSS_CHECK_TOL};
use crate::ergodic::{DEFAULT_ALPHAS, DEFAULT_HORIZON, MIN_HORIZON};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::hamiltonians::{CoeffField, GraphSpec, HamiltonianSpec, ProbeConfig};
use crate::multiscale::{fast_multiplier, RationalSlope, CELLS_PER_FAST_PERIOD};
use crate::scheme::SchemeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Verify,
    Ergodic,
    Effective,
    Homogenize,
    Graph,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Verify => "verify",
            Kind::Ergodic => "ergodic",
            Kind::Effective => "effective",
            Kind::Homogenize => "homogenize",
            Kind::Graph => "graph",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// One count for every axis, or one per axis (x axes, then y).
    #[serde(default = "default_cells")]
    pub cells: OneOrMany<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    /// Defaults to whether the spec depends on `y` or `p_y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_y: Option<bool>,
}

fn default_cells() -> OneOrMany<usize> {
    OneOrMany::One(64)
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            cells: default_cells(),
            periods: None,
            has_y: None,
        }
    }
}

impl GridSection {
    pub fn build(&self, space_dims: usize, has_y: bool) -> Result<TorusGrid> {
        let has_y = self.has_y.unwrap_or(has_y);
        let axes = space_dims + has_y as usize;
        let cells = match self.cells.to_vec().as_slice() {
            [n] => vec![*n; axes],
            many => many.to_vec(),
        };
        let periods = self.periods.clone().unwrap_or_else(|| vec![1.0; axes]);
        TorusGrid::new(space_dims, has_y, &cells, &periods)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Discount,
    Longtime,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErgodicParams {
    pub alphas: Vec<f64>,
    pub horizon: f64,
    pub method: MethodChoice,
    /// Structural checks on every discounted solution.
    pub diagnostics: bool,
}

impl Default for ErgodicParams {
    fn default() -> Self {
        ErgodicParams {
            alphas: DEFAULT_ALPHAS.to_vec(),
            horizon: DEFAULT_HORIZON,
            method: MethodChoice::Both,
            diagnostics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveParams {
    /// Defaults to `[-2.5, 2.5]` with 11 points per axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<PGrid>,
    pub alphas: Vec<f64>,
    pub horizon: f64,
    pub cross_check: bool,
    pub cross_check_tol: f64,
}

impl Default for EffectiveParams {
    fn default() -> Self {
        EffectiveParams {
            p_grid: None,
            alphas: DEFAULT_ALPHAS.to_vec(),
            horizon: DEFAULT_HORIZON,
            cross_check: true,
            cross_check_tol: CROSS_CHECK_TOL,
        }
    }
}

impl EffectiveParams {
    pub fn options(&self) -> EffectiveOptions {
        EffectiveOptions {
            alphas: self.alphas.clone(),
            horizon: self.horizon,
            cross_check: self.cross_check,
            cross_check_tol: self.cross_check_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomogenizeParams {
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    pub u0: CoeffField,
    /// Slope lattice of the `F̄` table; must cover the slopes of the solution.
    pub p_grid: Option<PGrid>,
    /// Cells per axis of the cell problems behind the table.
    pub table_cells: usize,
    pub cells_per_period: usize,
    pub table: EffectiveParams,
}

impl Default for HomogenizeParams {
    fn default() -> Self {
        HomogenizeParams {
            epsilons: vec![0.25, 0.125, 0.0625],
            horizon: 0.25,
            u0: CoeffField::constant(0.0),
            p_grid: None,
            table_cells: CELLS_PER_FAST_PERIOD,
            cells_per_period: CELLS_PER_FAST_PERIOD,
            table: EffectiveParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphParams {
    /// Rational slopes with denominator at most 8.
    pub slopes: Vec<OneOrMany<f64>>,
    pub horizon: f64,
    pub cells_per_unit: usize,
    pub w0: CoeffField,
    /// Agreement required between the lifted and the direct estimate.
    pub tolerance: f64,
    pub lifted: EffectiveParams,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            slopes: [0.0, 0.5, -0.5, 1.0, -1.0].map(OneOrMany::One).to_vec(),
            horizon: DEFAULT_HORIZON,
            cells_per_unit: 64,
            w0: CoeffField::constant(0.0),
            tolerance: 0.05,
            lifted: EffectiveParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Experiment {
    Verify(VerifyParams),
    Ergodic(ErgodicParams),
    Effective(EffectiveParams),
    Homogenize(HomogenizeParams),
    Graph(GraphParams),
}

impl Experiment {
    pub fn kind(&self) -> Kind {
        match self {
            Experiment::Verify(_) => Kind::Verify,
            Experiment::Ergodic(_) => Kind::Ergodic,
            Experiment::Effective(_) => Kind::Effective,
            Experiment::Homogenize(_) => Kind::Homogenize,
            Experiment::Graph(_) => Kind::Graph,
        }
    }
}

/// File layout before the experiment section is typed.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    spec: Option<HamiltonianSpec>,
    graph: Option<GraphSpec>,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    scheme: SchemeConfig,
    #[serde(default)]
    probe: ProbeConfig,
    #[serde(default)]
    experiment: toml::Table,
    #[serde(default)]
    output: OutputSection,
}

/// A fully resolved and validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<HamiltonianSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    pub grid: GridSection,
    pub scheme: SchemeConfig,
    pub probe: ProbeConfig,
    pub experiment: Experiment,
    pub output: OutputSection,
}

/// Sets `path = value` in `doc`; `value` is read as a TOML scalar, or as a
/// bare string when it does not parse.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{assignment}' is not key=value")))?;
    let path = path.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    if value.is_table() || value.is_array() {
        return Err(Error::config(format!("override '{path}' must be a scalar")));
    }
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!("bad override key '{path}'")));
    }
    let (last, parents) = keys.split_last().expect("nonempty");
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override '{path}': '{k}' is not a table")))?;
    }
    if table.get(*last).is_some_and(|v| v.is_table() || v.is_array()) {
        return Err(Error::config(format!("override '{path}' replaces a non-scalar")));
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn typed<T: DeserializeOwned>(table: toml::Table, what: &str) -> Result<T> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| Error::config(format!("[{what}]: {e}")))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, kind: Kind, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text, kind, overrides)
    }

    pub fn from_str(text: &str, kind: Kind, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e| Error::config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let raw: RawConfig = typed(doc, "config")?;
        let mut params = raw.experiment;
        if let Some(k) = params.remove("kind") {
            if k.as_str() != Some(kind.name()) {
                return Err(Error::config(format!(
                    "config is for experiment {k}, invoked as {}",
                    kind.name()
                )));
            }
        }
        let experiment = match kind {
            Kind::Verify => Experiment::Verify(typed(params, "experiment")?),
            Kind::Ergodic => Experiment::Ergodic(typed(params, "experiment")?),
            Kind::Effective => Experiment::Effective(typed(params, "experiment")?),
            Kind::Homogenize => Experiment::Homogenize(typed(params, "experiment")?),
            Kind::Graph => Experiment::Graph(typed(params, "experiment")?),
        };
        let cfg = ExperimentConfig {
            spec: raw.spec,
            graph: raw.graph,
            grid: raw.grid,
            scheme: raw.scheme,
            probe: raw.probe,
            experiment,
            output: raw.output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<&HamiltonianSpec> {
        self.spec
            .as_ref()
            .ok_or_else(|| Error::config(format!("experiment {} needs a [spec] section", self.experiment.kind().name())))
    }

    pub fn graph(&self) -> Result<&GraphSpec> {
        self.graph
            .as_ref()
            .ok_or_else(|| Error::config("experiment graph needs a [graph] section"))
    }

    /// Grid of the `[grid]` section for `spec`.
    pub fn grid_for(&self, spec: &HamiltonianSpec) -> Result<TorusGrid> {
        self.grid.build(spec.space_dims, spec.has_drift() || spec.y_dependent())
    }

    /// Everything the modules would reject, checked before any output exists.
    pub fn validate(&self) -> Result<()> {
        if self.spec.is_some() && self.graph.is_some() {
            return Err(Error::config("give either [spec] or [graph], not both"));
        }
        if let Some(s) = &self.spec {
            s.validate()?;
        }
        if let Some(g) = &self.graph {
            g.validate()?;
        }
        self.scheme.validate()?;
        if self.output.formats.is_empty() {
            return Err(Error::config("output.formats is empty"));
        }
        match &self.experiment {
            Experiment::Verify(_) => {
                self.spec()?;
            }
            Experiment::Ergodic(p) => {
                let spec = self.spec()?;
                self.grid_for(spec)?;
                check_alphas(&p.alphas)?;
                check_horizon(p.horizon, spec.time_dependent())?;
            }
            Experiment::Effective(p) => {
                let spec = self.spec()?;
                let grid = self.grid_for(spec)?;
                check_effective(p, spec.time_dependent())?;
                if let Some(g) = &p.p_grid {
                    g.validate()?;
                    check_axes(g, grid.axes())?;
                }
            }
            Experiment::Homogenize(p) => {
                let spec = self.spec()?;
                check_effective(&p.table, spec.time_dependent())?;
                if p.epsilons.is_empty() {
                    return Err(Error::config("epsilon list is empty"));
                }
                for &e in &p.epsilons {
                    fast_multiplier(e)?;
                }
                if p.epsilons.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::config("epsilons must be strictly decreasing"));
                }
                if !(p.horizon > 0.0 && p.horizon.is_finite()) {
                    return Err(Error::config("horizon must be positive"));
                }
                if !p.u0.all_finite() || p.u0.depends_on_t() {
                    return Err(Error::config("u0 must be finite and time-independent"));
                }
                let g = p
                    .p_grid
                    .as_ref()
                    .ok_or_else(|| Error::config("homogenize needs experiment.p_grid"))?;
                g.validate()?;
                check_axes(g, spec.space_dims + (spec.has_drift() || spec.y_dependent()) as usize)?;
                TorusGrid::uniform(spec.space_dims, spec.has_drift() || spec.y_dependent(), p.table_cells)?;
                if p.cells_per_period == 0 {
                    return Err(Error::config("cells_per_period must be positive"));
                }
            }
            Experiment::Graph(p) => {
                let graph = self.graph()?;
                check_effective(&p.lifted, graph.time_dependent())?;
                check_horizon(p.horizon, graph.time_dependent())?;
                if p.slopes.is_empty() {
                    return Err(Error::config("slope list is empty"));
                }
                for s in &p.slopes {
                    let s = s.to_vec();
                    if s.len() != graph.space_dims {
                        return Err(Error::config(format!(
                            "slope {s:?} has {} components, graph has {}",
                            s.len(),
                            graph.space_dims
                        )));
                    }
                    RationalSlope::from_f64(&s)?;
                }
                if p.cells_per_unit < crate::grid::MIN_CELLS {
                    return Err(Error::config("cells_per_unit is below the grid minimum"));
                }
                if !(p.tolerance >= 0.0) {
                    return Err(Error::config("tolerance must be nonnegative"));
                }
                if p.w0.depends_on_t() || p.w0.depends_on_y() {
                    return Err(Error::config("w0 must depend on x only"));
                }
                self.grid.build(graph.space_dims, true)?;
            }
        }
        Ok(())
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::config("alphas must be a nonempty list of positive numbers"));
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("alphas must be strictly decreasing"));
    }
    Ok(())
}

fn check_horizon(horizon: f64, time_dependent: bool) -> Result<()> {
    if !(horizon >= MIN_HORIZON && horizon.is_finite()) {
        return Err(Error::config(format!("horizon must be at least {MIN_HORIZON}, got {horizon}")));
    }
    if time_dependent && (horizon / 2.0).fract() != 0.0 {
        return Err(Error::config(format!(
            "horizon {horizon} must be an even integer for time-periodic Hamiltonians"
        )));
    }
    Ok(())
}

fn check_effective(p: &EffectiveParams, time_dependent: bool) -> Result<()> {
    check_alphas(&p.alphas)?;
    if p.cross_check {
        check_horizon(p.horizon, time_dependent)?;
    }
    if !(p.cross_check_tol > 0.0) {
        return Err(Error::config("cross_check_tol must be positive"));
    }
    Ok(())
}

fn check_axes(g: &PGrid, axes: usize) -> Result<()> {
    if g.axes.len() != axes {
        return Err(Error::config(format!(
            "p_grid has {} axes, the grid has {axes}",
            g.axes.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[spec]
space_dims = 1
[[spec.terms]]
kind = "coercive"
a = { mean = 1.0 }
exponent = 1.0
"#;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn override_parses_scalars() {
        let mut t = table("[scheme]\ncfl = 0.9\n");
        apply_override(&mut t, "scheme.cfl=0.4").unwrap();
        apply_override(&mut t, "experiment.method=discount").unwrap();
        apply_override(&mut t, "experiment.diagnostics=false").unwrap();
        assert_eq!(t["scheme"]["cfl"].as_float(), Some(0.4));
        assert_eq!(t["experiment"]["method"].as_str(), Some("discount"));
        assert_eq!(t["experiment"]["diagnostics"].as_bool(), Some(false));
    }

    #[test]
    fn override_rejects_structure() {
        let mut t = table("[grid]\ncells = [8, 8]\n");
        assert!(apply_override(&mut t, "grid.cells=4").is_err());
        assert!(apply_override(&mut t, "grid.cells.x=4").is_err());
        assert!(apply_override(&mut t, "scheme.cfl=[1, 2]").is_err());
        assert!(apply_override(&mut t, "scheme..cfl=1").is_err());
        assert!(apply_override(&mut t, "no_equals").is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_str(BASE, Kind::Ergodic, &[]).unwrap();
        let Experiment::Ergodic(p) = &c.experiment else { panic!() };
        assert_eq!(p.method, MethodChoice::Both);
        assert_eq!(c.grid_for(c.spec().unwrap()).unwrap().axes(), 1);
        assert!(c.output.wants(Format::Csv));
    }

    #[test]
    fn preconditions_checked_at_parse_time() {
        let bad = |extra: &str, kind| ExperimentConfig::from_str(&format!("{BASE}{extra}"), kind, &[]).is_err();
        assert!(bad("[experiment]\nalphas = [0.1, 0.2]\n", Kind::Ergodic));
        assert!(bad("[experiment]\nalphas = []\n", Kind::Ergodic));
        assert!(bad("[experiment]\nkind = \"graph\"\n", Kind::Ergodic));
        assert!(bad("[experiment]\nepsilons = [0.3]\n", Kind::Homogenize));
        assert!(bad("[output]\nformats = []\n", Kind::Verify));
        assert!(bad("[nonsense]\n", Kind::Verify));
        assert!(bad("", Kind::Graph));
        assert!(bad("[experiment]\np_grid = { axes = [{ min = 0.0, max = 1.0, count = 2 }, { min = 0.0, max = 1.0, count = 2 }] }\n", Kind::Effective));
        assert!(!bad("[experiment]\nkind = \"effective\"\n", Kind::Effective));
    }

    #[test]
    fn per_axis_cells() {
        let g = GridSection {
            cells: OneOrMany::Many(vec![16, 32]),
            ..GridSection::default()
        };
        let grid = g.build(1, true).unwrap();
        assert_eq!(grid.axes(), 2);
        assert!(g.build(1, false).is_err());
    }
}
