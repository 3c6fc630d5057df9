//! Command-line experiment runner.
//!
//! Exit status: 0 on success, 1 when the input is rejected, 2 when the
//! numerics fail (a report describing the failure is still written).

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::corpus::{run_all, summary_csv, CorpusOptions};
use crate::effective::{tabulate, PGrid};
use crate::ergodic::{diagnostics, discount_sweep, longtime_with, ErgodicResult};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::hamiltonians::{estimate_constants, oscillation_bound_k};
use crate::multiscale::{convergence_study, effective_h, graph_results_csv, longtime_slope, GraphResult, RationalSlope};
use crate::scheme::SampledHamiltonian;

use config::{ExperimentConfig, Experiment, Format, Kind, MethodChoice};
use report::{json_text, write_atomic, Artifacts};

/// Environment variable selecting the worker thread count.
pub const THREADS_ENV: &str = "HJHOMOG_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hjhomog", version, about = "Effective Hamiltonians and homogenization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the structure constants of a Hamiltonian.
    Verify(RunArgs),
    /// Ergodic constant by the discounted and long-time methods.
    Ergodic(RunArgs),
    /// Tabulate the effective Hamiltonian on a slope lattice.
    Effective(RunArgs),
    /// Fine-scale solves against the homogenized equation.
    Homogenize(RunArgs),
    /// Lifted effective Hamiltonian against long-time slopes of a graph equation.
    Graph(RunArgs),
    /// Run the built-in acceptance corpus.
    Corpus(CorpusArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override a scalar in the config, e.g. `scheme.cfl=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long, default_value = "corpus-out")]
    pub out: PathBuf,
    /// Multiplier on the residual tolerance.
    #[arg(long, default_value_t = 1.0)]
    pub residual_scale: f64,
    /// Divide every grid resolution by this.
    #[arg(long, default_value_t = 1)]
    pub cell_divisor: usize,
    /// Comma-separated criteria to run.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` and runs the command; returns the exit status.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    match cli.command {
        Command::Verify(a) => run_experiment(Kind::Verify, &a),
        Command::Ergodic(a) => run_experiment(Kind::Ergodic, &a),
        Command::Effective(a) => run_experiment(Kind::Effective, &a),
        Command::Homogenize(a) => run_experiment(Kind::Homogenize, &a),
        Command::Graph(a) => run_experiment(Kind::Graph, &a),
        Command::Corpus(a) => run_corpus(&a),
    }
}

fn run_experiment(kind: Kind, args: &RunArgs) -> i32 {
    let mut cfg = match ExperimentConfig::from_file(&args.config, kind, &args.set) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    if let Some(out) = &args.out {
        cfg.output.directory = out.clone();
    }
    let resolved = serde_json::to_value(&cfg).expect("config serializes");
    let (status, artifacts, error) = match execute(&cfg) {
        Ok(a) => (EXIT_OK, a, None),
        Err(e) if e.is_numerical() => {
            let mut a = Artifacts::default();
            if let Error::NonConvergence { history, .. } = &e {
                let mut csv = String::from("iteration,residual\n");
                for (i, r) in history.iter().enumerate() {
                    let _ = writeln!(csv, "{i},{r}");
                }
                a.tables.push(("residual_history.csv".into(), csv));
            }
            (EXIT_NUMERICAL, a, Some(e))
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let report = json!({
        "tool": "hjhomog",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": kind.name(),
        "status": if error.is_none() { "ok" } else { "numerical_failure" },
        "error": error.as_ref().map(|e| e.to_string()),
        "config": resolved,
        "result": artifacts.result,
    });
    let dir = &cfg.output.directory;
    let mut written = Vec::new();
    let mut write = |name: &str, text: &str| match write_atomic(dir, name, text) {
        Ok(p) => {
            written.push(p);
            true
        }
        Err(e) => {
            eprintln!("error: {e}");
            false
        }
    };
    let csv = cfg.output.wants(Format::Csv);
    for (name, text) in &artifacts.tables {
        if csv && !write(name, text) {
            return EXIT_INVALID;
        }
    }
    // the report is always written on failure so the diagnostics survive
    if (cfg.output.wants(Format::Json) || error.is_some()) && !write("report.json", &json_text(&report)) {
        return EXIT_INVALID;
    }
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    status
}

fn execute(cfg: &ExperimentConfig) -> Result<Artifacts> {
    match &cfg.experiment {
        Experiment::Verify(_) => verify(cfg),
        Experiment::Ergodic(p) => {
            let spec = cfg.spec()?;
            let grid = cfg.grid_for(spec)?;
            let ham = SampledHamiltonian::new(spec, &grid)?;
            let mut tables = Vec::new();
            let mut result = serde_json::Map::new();
            let mut summary = String::from("method,lambda,parameter,oscillation,residual\n");
            let mut row = |r: &ErgodicResult| {
                let m = serde_json::to_value(r.method).expect("serializes");
                let _ = writeln!(
                    summary,
                    "{},{},{},{},{}",
                    m.as_str().unwrap_or_default(),
                    r.lambda,
                    r.parameter,
                    r.oscillation,
                    r.residual
                );
            };
            let mut lambdas = Vec::new();
            if p.method != MethodChoice::Longtime {
                let (d, sols) = discount_sweep(&ham, &p.alphas, &cfg.scheme)?;
                row(&d);
                lambdas.push(d.lambda);
                tables.push(("discount_history.csv".to_string(), d.history_csv()));
                if p.diagnostics {
                    let report = estimate_constants(spec, &cfg.probe)?;
                    let mut csv = String::from(
                        "alpha,osc_full,osc_xbar,k,y_monotone_violation,y_variation,alpha_w_min,alpha_w_max,window_min,window_max\n",
                    );
                    let mut diags = Vec::new();
                    for s in &sols {
                        let d = diagnostics(spec, s, &report);
                        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{},{},{},{},{},{}",
                            s.alpha,
                            d.osc_full,
                            d.osc_xbar,
                            opt(d.k),
                            d.y_monotone_violation,
                            opt(d.y_variation),
                            d.alpha_w_min,
                            d.alpha_w_max,
                            d.window_min,
                            d.window_max
                        );
                        diags.push(json!({ "alpha": s.alpha, "diagnostics": d }));
                    }
                    tables.push(("diagnostics.csv".to_string(), csv));
                    result.insert("diagnostics".into(), json!(diags));
                    result.insert("assumptions".into(), json!(report));
                }
                result.insert("discount".into(), json!(d));
            }
            if p.method != MethodChoice::Discount {
                let l = longtime_with(&ham, p.horizon, &cfg.scheme)?;
                row(&l);
                lambdas.push(l.lambda);
                tables.push(("longtime_history.csv".to_string(), l.history_csv()));
                result.insert("longtime".into(), json!(l));
            }
            if let [a, b] = lambdas[..] {
                result.insert("difference".into(), json!((a - b).abs()));
            }
            tables.insert(0, ("ergodic.csv".to_string(), summary));
            Ok(Artifacts {
                tables,
                result: serde_json::Value::Object(result),
            })
        }
        Experiment::Effective(p) => {
            let spec = cfg.spec()?;
            let grid = cfg.grid_for(spec)?;
            let p_grid = p.p_grid.clone().unwrap_or_else(|| PGrid::default_for(grid.axes()));
            let table = tabulate(spec, &grid, &p_grid, &p.options(), &cfg.scheme)?;
            let mut header = table.header_json();
            header["lipschitz_estimate"] = json!(table.lipschitz_estimate());
            Ok(Artifacts {
                tables: vec![("effective.csv".into(), table.to_csv())],
                result: header,
            })
        }
        Experiment::Homogenize(p) => {
            let spec = cfg.spec()?;
            let has_y = spec.has_drift() || spec.y_dependent();
            let table_grid = TorusGrid::uniform(spec.space_dims, has_y, p.table_cells)?;
            let p_grid = p.p_grid.clone().expect("validated");
            let table = tabulate(spec, &table_grid, &p_grid, &p.table.options(), &cfg.scheme)?;
            let report = convergence_study(spec, &table, &p.epsilons, &p.u0, p.horizon, p.cells_per_period, &cfg.scheme)?;
            Ok(Artifacts {
                tables: vec![
                    ("convergence.csv".into(), report.to_csv()),
                    ("effective.csv".into(), table.to_csv()),
                ],
                result: json!({
                    "convergence": report,
                    "strictly_decreasing": report.strictly_decreasing(),
                    "min_decay": report.min_decay(),
                    "table": table.header_json(),
                }),
            })
        }
        Experiment::Graph(p) => {
            let graph = cfg.graph()?;
            let grid = cfg.grid.build(graph.space_dims, true)?;
            let opts = p.lifted.options();
            let mut results = Vec::new();
            for s in &p.slopes {
                let s = s.to_vec();
                let q = RationalSlope::from_f64(&s)?;
                let h = effective_h(graph, &grid, &s, &opts, &cfg.scheme)?;
                let slope = longtime_slope(graph, &q, &p.w0, p.horizon, p.cells_per_unit, &cfg.scheme)?;
                results.push(GraphResult::new(q, h, slope));
            }
            let worst = results.iter().map(|r| r.discrepancy).fold(0.0, f64::max);
            Ok(Artifacts {
                tables: vec![("graph.csv".into(), graph_results_csv(&results))],
                result: json!({
                    "results": results,
                    "max_discrepancy": worst,
                    "consistent": worst <= p.tolerance,
                }),
            })
        }
    }
}

fn verify(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let spec = cfg.spec()?;
    let report = estimate_constants(spec, &cfg.probe)?;
    let k = oscillation_bound_k(&report, spec.space_dims);
    let admitted = report.coercive_ok && report.lipschitz_ok && (spec.graph_inner.is_none() || report.graph_h6_ok);
    let mut csv = String::from("quantity,value\n");
    for (name, v) in [
        ("c0", report.c0),
        ("c1", report.c1),
        ("c2", report.c2),
        ("c3", report.c3),
        ("c4", report.c4),
        ("c5", report.c5),
        ("l", report.l),
        ("eta", report.eta),
    ] {
        let _ = writeln!(csv, "{name},{v}");
    }
    if let Ok(k) = &k {
        let _ = writeln!(csv, "k,{k}");
    }
    for (name, v) in [
        ("coercive_ok", report.coercive_ok),
        ("lipschitz_ok", report.lipschitz_ok),
        ("graph_h6_ok", report.graph_h6_ok),
        ("admitted", admitted),
    ] {
        let _ = writeln!(csv, "{name},{v}");
    }
    Ok(Artifacts {
        tables: vec![("assumptions.csv".into(), csv)],
        result: json!({
            "assumptions": report,
            "k": k.as_ref().ok(),
            "k_error": k.as_ref().err().map(|e| e.to_string()),
            "admitted": admitted,
        }),
    })
}

fn run_corpus(args: &CorpusArgs) -> i32 {
    let opts = CorpusOptions {
        residual_scale: args.residual_scale,
        cell_divisor: args.cell_divisor,
        only: args.only.clone(),
    };
    let outcomes = match run_all(&opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    for o in &outcomes {
        println!("{}", o.line());
    }
    let mut files: Vec<(String, String)> = outcomes.iter().flat_map(|o| o.tables.clone()).collect();
    files.push(("summary.csv".into(), summary_csv(&outcomes)));
    let report = json!({
        "tool": "hjhomog",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": "corpus",
        "options": opts,
        "outcomes": outcomes,
    });
    files.push(("report.json".into(), json_text(&report)));
    for (name, text) in &files {
        if let Err(e) = write_atomic(&args.out, name, text) {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{} ({})", o.id, o.title))
        .collect();
    if failed.is_empty() {
        EXIT_OK
    } else {
        eprintln!("failed criteria: {}", failed.join(", "));
        EXIT_INVALID
    }
}
