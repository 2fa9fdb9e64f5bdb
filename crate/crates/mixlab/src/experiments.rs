//! Reproducible experiment runner behind the `mixlab` binary.
//!
//! A scenario is a single JSON document naming a mode, a graph, a seed, and
//! mode-specific parameters (unknown keys are rejected). Every run writes a
//! `manifest.json` echoing the fully resolved configuration, the tool
//! version, and the RNG name, next to its CSV/JSON outputs. Fixed seeds
//! reproduce output files byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assumption::{check_assumption_torus_surrogate, check_assumption_with, DEFAULT_K2_CAP};
use crate::bounds;
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::lamplighter::{
    build_diamond_kernel, exp_moment_exact, exp_moment_mc, identity_check, proxy_mixing_time,
    ProxyCrossing, ProxyCurve, DEFAULT_DIAMOND_STATE_CAP,
};
use crate::mc::{coverage_trajectory, SimPlan, StartSpec};
use crate::rng::RNG_NAME;
use crate::spectral::{
    default_eps, greens_table, hitting_times, spectrum, tv_mixing_time, uniform_mixing_time,
    DenseKernel,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Experiment mode; mirrors the CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    Simulate,
    Lamplighter,
    Bounds,
    CheckAssumptions,
    ScalingStudy,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Simulate => "simulate",
            Mode::Lamplighter => "lamplighter",
            Mode::Bounds => "bounds",
            Mode::CheckAssumptions => "check-assumptions",
            Mode::ScalingStudy => "scaling-study",
        }
    }
}

/// One experiment request.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub graph: Option<String>,
    #[serde(default = "Value::default")]
    pub parameters: Value,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::invalid("config", format!("{}: {e}", path.display())))
    }

    fn graph(&self) -> Result<GraphSpec> {
        let spec = self
            .graph
            .as_deref()
            .ok_or_else(|| Error::invalid("graph", "this mode requires a graph"))?;
        GraphSpec::parse(spec)
    }

    fn params<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        let value = match &self.parameters {
            Value::Null => Value::Object(serde_json::Map::new()),
            other => other.clone(),
        };
        serde_json::from_value::<T>(value)
            .map_err(|e| Error::invalid("parameters", format!("mode {}: {e}", self.mode.as_str())))
    }
}

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        // CSV cells must stay finite; anything else is a bug upstream.
        panic!("attempted to write a non-finite value to CSV: {v}")
    }
}

/// Writes rows as CSV with a header; all cells pre-rendered strings.
fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "{}", header.join(",")).unwrap();
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        writeln!(text, "{}", row.join(",")).unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Minimal static SVG: one polyline with axes and corner tick labels.
pub fn write_svg_polyline(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid("points", "cannot plot an empty series"));
    }
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 70.0, 20.0, 40.0, 50.0);
    let (x0, x1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    let (y0, y1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1), b.max(p.1))
        });
    let xspan = (x1 - x0).max(f64::MIN_POSITIVE);
    let yspan = (y1 - y0).max(f64::MIN_POSITIVE);
    let px = |x: f64| ml + (x - x0) / xspan * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / yspan * (h - mt - mb);
    let mut pts = String::new();
    for (x, y) in points {
        write!(pts, "{:.2},{:.2} ", px(*x), py(*y)).unwrap();
    }
    let svg = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
            "<line x1=\"{ml}\" y1=\"{yb}\" x2=\"{xr}\" y2=\"{yb}\" stroke=\"black\"/>\n",
            "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{yb}\" stroke=\"black\"/>\n",
            "<text x=\"{tx}\" y=\"{h2}\" text-anchor=\"middle\" font-size=\"12\">{xl}</text>\n",
            "<text x=\"16\" y=\"{ty}\" text-anchor=\"middle\" font-size=\"12\" ",
            "transform=\"rotate(-90 16 {ty})\">{yl}</text>\n",
            "<text x=\"{ml}\" y=\"{h3}\" font-size=\"10\">{x0}</text>\n",
            "<text x=\"{xr}\" y=\"{h3}\" text-anchor=\"end\" font-size=\"10\">{x1}</text>\n",
            "<text x=\"{ml2}\" y=\"{yb}\" text-anchor=\"end\" font-size=\"10\">{y0}</text>\n",
            "<text x=\"{ml2}\" y=\"{mt2}\" text-anchor=\"end\" font-size=\"10\">{y1}</text>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{pts}\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        ml = ml,
        mt = mt,
        tx = (ml + w - mr) / 2.0,
        xr = w - mr,
        yb = h - mb,
        ty = (mt + h - mb) / 2.0,
        h2 = h - 12.0,
        h3 = h - mb + 16.0,
        ml2 = ml - 6.0,
        mt2 = mt + 4.0,
        title = title,
        xl = x_label,
        yl = y_label,
        x0 = fmt_f64(x0),
        x1 = fmt_f64(x1),
        y0 = fmt_f64(y0),
        y1 = fmt_f64(y1),
        pts = pts.trim_end(),
    );
    std::fs::write(path, svg)?;
    Ok(())
}

/// Runs a scenario, writing all artifacts under its output directory.
pub fn run(scenario: &Scenario) -> Result<RunArtifacts> {
    let out_dir = scenario
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    std::fs::create_dir_all(&out_dir)?;
    let mut files = Vec::new();

    // Manifest first: the resolved configuration every output pairs with.
    let manifest = serde_json::json!({
        "name": scenario.name,
        "mode": scenario.mode.as_str(),
        "graph": scenario.graph,
        "parameters": scenario.parameters,
        "seed": scenario.seed,
        "out_dir": out_dir,
        "tool_version": TOOL_VERSION,
        "rng": RNG_NAME,
    });
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    files.push(manifest_path);

    match scenario.mode {
        Mode::Exact => run_exact(scenario, &out_dir, &mut files)?,
        Mode::Simulate => run_simulate(scenario, &out_dir, &mut files)?,
        Mode::Lamplighter => run_lamplighter(scenario, &out_dir, &mut files)?,
        Mode::Bounds => run_bounds(scenario, &out_dir, &mut files)?,
        Mode::CheckAssumptions => run_check(scenario, &out_dir, &mut files)?,
        Mode::ScalingStudy => run_scaling(scenario, &out_dir, &mut files)?,
    }
    Ok(RunArtifacts { out_dir, files })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ExactParams {
    eps: Option<f64>,
    gstar_max_n: Option<usize>,
}

fn run_exact(scenario: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let params: ExactParams = scenario.params()?;
    let g = scenario.graph()?;
    let eps = params.eps.unwrap_or_else(default_eps);
    let kernel = DenseKernel::build(&g)?;
    let spectral = spectrum(&kernel)?;
    let t_u = uniform_mixing_time(&kernel, eps)?;
    let t_mix = tv_mixing_time(&kernel, eps)?;
    let hitting = hitting_times(&kernel)?;
    let table = greens_table(&kernel, t_u)?;
    let max_n = params.gstar_max_n.unwrap_or(64).min(kernel.size());
    let gstar_curve: Vec<f64> = (1..=max_n)
        .map(|n| table.g_star(n))
        .collect::<Result<_>>()?;
    let report = serde_json::json!({
        "graph": g.to_string(),
        "cardinality": g.vertex_count(),
        "eps": eps,
        "lambda0": spectral.lambda0,
        "t_rel": spectral.t_rel,
        "t_u": t_u,
        "t_mix": t_mix,
        "t_hit": hitting.t_hit,
        "g_adj": table.g_adj(),
        "gstar_curve": gstar_curve,
    });
    let report_path = out_dir.join("exact.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    files.push(report_path);

    let rows: Vec<Vec<String>> = table
        .row()
        .iter()
        .enumerate()
        .map(|(v, val)| vec![v.to_string(), fmt_f64(*val)])
        .collect();
    let csv_path = out_dir.join("greens_row.csv");
    write_csv(&csv_path, &["vertex", "green_value"], &rows)?;
    files.push(csv_path);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum StartParam {
    Fixed(u64),
    Named(String),
}

impl StartParam {
    fn to_start(&self) -> Result<StartSpec> {
        match self {
            StartParam::Fixed(v) => Ok(StartSpec::Fixed(*v)),
            StartParam::Named(s) if s == "stationary" => Ok(StartSpec::Stationary),
            StartParam::Named(s) => Err(Error::invalid(
                "start",
                format!("expected a vertex id or \"stationary\", got \"{s}\""),
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    t_max: u64,
    replicas: u64,
    #[serde(default)]
    start: Option<StartParam>,
    #[serde(default)]
    checkpoints: Option<Vec<u64>>,
    #[serde(default)]
    thresholds: Vec<u64>,
    #[serde(default)]
    plot: bool,
}

fn run_simulate(scenario: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let params: SimulateParams = scenario.params()?;
    let g = scenario.graph()?;
    let start = match &params.start {
        Some(s) => s.to_start()?,
        None => StartSpec::Fixed(0),
    };
    let checkpoints = match params.checkpoints {
        Some(c) => c,
        None => {
            let mut c: Vec<u64> = (0..=32u64).map(|i| params.t_max * i / 32).collect();
            c.dedup();
            c
        }
    };
    let plan = SimPlan::new(g, start, params.t_max, params.replicas, scenario.seed)
        .with_checkpoints(checkpoints);
    let sample = coverage_trajectory(&plan, &params.thresholds)?;
    let rows: Vec<Vec<String>> = sample
        .checkpoints
        .iter()
        .enumerate()
        .map(|(ci, &t)| {
            vec![
                t.to_string(),
                fmt_f64(sample.mean_uncovered[ci]),
                fmt_f64(sample.q10[ci]),
                fmt_f64(sample.q50[ci]),
                fmt_f64(sample.q90[ci]),
                sample.replicas.to_string(),
                sample.seed.to_string(),
            ]
        })
        .collect();
    let csv_path = out_dir.join("simulate.csv");
    write_csv(
        &csv_path,
        &[
            "t",
            "mean_uncovered",
            "q10",
            "q50",
            "q90",
            "replicas",
            "seed",
        ],
        &rows,
    )?;
    files.push(csv_path);

    if !sample.thresholds.is_empty() {
        let mut rows = Vec::new();
        for (i, &s) in sample.thresholds.iter().enumerate() {
            for (replica, t) in sample.threshold_times[i].iter().enumerate() {
                rows.push(vec![
                    s.to_string(),
                    replica.to_string(),
                    t.map(|t| t.to_string()).unwrap_or_else(|| "-1".into()),
                ]);
            }
        }
        let path = out_dir.join("threshold_times.csv");
        write_csv(&path, &["s", "replica", "first_time"], &rows)?;
        files.push(path);
    }
    if params.plot {
        let pts: Vec<(f64, f64)> = sample
            .checkpoints
            .iter()
            .zip(&sample.mean_uncovered)
            .map(|(&t, &u)| (t as f64, u))
            .collect();
        let path = out_dir.join("uncovered.svg");
        write_svg_polyline(&path, &scenario.name, "t", "mean uncovered", &pts)?;
        files.push(path);
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LamplighterParams {
    mode: String,
    #[serde(default)]
    eps: Option<f64>,
    #[serde(default)]
    t_max: Option<u64>,
    #[serde(default)]
    grid_step: Option<u64>,
    #[serde(default)]
    replicas: Option<u64>,
    #[serde(default)]
    plot: bool,
}

fn crossing_json(crossing: &ProxyCrossing) -> (Option<u64>, String) {
    match crossing {
        ProxyCrossing::Determined(t) => (Some(*t), "determined".into()),
        ProxyCrossing::Undetermined { lower, upper } => {
            (None, format!("undetermined between {lower} and {upper}"))
        }
        ProxyCrossing::NoCrossing => (None, "no crossing within grid".into()),
    }
}

fn write_curve_csv(path: &Path, curve: &ProxyCurve) -> Result<()> {
    let zeroes;
    let stderr = match &curve.stderr {
        Some(se) => se,
        None => {
            zeroes = vec![0.0; curve.values.len()];
            &zeroes
        }
    };
    let rows: Vec<Vec<String>> = curve
        .times
        .iter()
        .zip(curve.values.iter().zip(stderr))
        .map(|(&t, (&v, &se))| vec![t.to_string(), fmt_f64(v), fmt_f64(se)])
        .collect();
    write_csv(path, &["t", "value", "stderr"], &rows)
}

fn run_lamplighter(scenario: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let params: LamplighterParams = scenario.params()?;
    let g = scenario.graph()?;
    let eps = params.eps.unwrap_or_else(default_eps);
    match params.mode.as_str() {
        "exact" | "mc" => {
            let kernel = DenseKernel::build(&g)?;
            let t_u_base = uniform_mixing_time(&kernel, eps)?;
            let t_max = match params.t_max {
                Some(t) => t,
                None => {
                    let spectral = spectrum(&kernel)?;
                    let card = g.vertex_count() as f64;
                    (3.0 * card * (spectral.t_rel + card.ln())).ceil() as u64
                }
            };
            let step = params.grid_step.unwrap_or(1).max(1);
            let grid: Vec<u64> = (0..=t_max).step_by(step as usize).collect();
            let curve = if params.mode == "exact" {
                exp_moment_exact(&g, 0, &grid)?
            } else {
                let replicas = params.replicas.unwrap_or(10_000);
                exp_moment_mc(&g, 0, &grid, replicas, scenario.seed, 0.95)?
            };
            let crossing = proxy_mixing_time(&curve, eps);
            let (t_star, status) = crossing_json(&crossing);
            let report = serde_json::json!({
                "graph": g.to_string(),
                "mode": params.mode,
                "eps": eps,
                "t_star": t_star,
                "status": status,
                "t_u_base": t_u_base,
                "estimate_total": t_star.map(|t| t + t_u_base),
            });
            let report_path = out_dir.join("lamplighter.json");
            std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
            files.push(report_path);
            let curve_path = out_dir.join("curve.csv");
            write_curve_csv(&curve_path, &curve)?;
            files.push(curve_path.clone());
            if params.plot {
                let pts: Vec<(f64, f64)> = curve
                    .times
                    .iter()
                    .zip(&curve.values)
                    .map(|(&t, &v)| (t as f64, v))
                    .collect();
                let path = out_dir.join("curve.svg");
                write_svg_polyline(&path, &scenario.name, "t", "exp moment", &pts)?;
                files.push(path);
            }
        }
        "identity" => {
            let t_max = params.t_max.unwrap_or(20).max(1);
            let dk = build_diamond_kernel(&g, DEFAULT_DIAMOND_STATE_CAP)?;
            let n = g.vertex_count();
            let mut rows = Vec::new();
            let mut max_gap: f64 = 0.0;
            for target in 0..(1u64 << n) {
                for t in 1..=t_max {
                    let chk = identity_check(&dk, 0, 0, target, t)?;
                    max_gap = max_gap.max(chk.gap);
                    rows.push(vec![
                        target.to_string(),
                        t.to_string(),
                        fmt_f64(chk.lhs),
                        fmt_f64(chk.rhs),
                        fmt_f64(chk.gap),
                    ]);
                }
            }
            let csv_path = out_dir.join("identity.csv");
            write_csv(&csv_path, &["target", "t", "lhs", "rhs", "gap"], &rows)?;
            files.push(csv_path);
            let report = serde_json::json!({
                "graph": g.to_string(),
                "mode": "identity",
                "t_max": t_max,
                "max_gap": max_gap,
            });
            let report_path = out_dir.join("lamplighter.json");
            std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
            files.push(report_path);
        }
        other => {
            return Err(Error::invalid(
                "mode",
                format!("lamplighter mode must be exact|mc|identity, got {other}"),
            ))
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsParams {
    formula: String,
    rows: Vec<BTreeMap<String, Value>>,
}

fn need_f64(row: &BTreeMap<String, Value>, key: &str) -> Result<f64> {
    row.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::invalid(key, "missing or non-numeric"))
}

fn need_u64(row: &BTreeMap<String, Value>, key: &str) -> Result<u64> {
    row.get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::invalid(key, "missing or non-integer"))
}

fn opt_f64(row: &BTreeMap<String, Value>, key: &str, default: f64) -> f64 {
    row.get(key).and_then(Value::as_f64).unwrap_or(default)
}

fn run_bounds(scenario: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let params: BoundsParams = scenario.params()?;
    // (input columns, extra output columns, evaluator)
    type Eval = fn(&BTreeMap<String, Value>) -> Result<Vec<f64>>;
    let (inputs, extras, eval): (&[&str], &[&str], Eval) = match params.formula.as_str() {
        "lazy-return" => (&["t", "d"], &[], |r| {
            Ok(vec![bounds::lazy_return_bound(
                need_u64(r, "t")?,
                need_u64(r, "d")? as u32,
            )])
        }),
        "nonlazy-return" => (&["t", "d"], &[], |r| {
            Ok(vec![bounds::nonlazy_return_bound(
                need_u64(r, "t")?,
                need_u64(r, "d")? as u32,
            )])
        }),
        "zd-return" => (&["t", "d", "lazy"], &[], |r| {
            let lazy = r.get("lazy").and_then(Value::as_bool).unwrap_or(true);
            Ok(vec![bounds::zd_return_exact(
                need_u64(r, "t")?,
                need_u64(r, "d")? as u32,
                lazy,
            )?])
        }),
        "low-degree-green" => (
            &["k", "n", "d", "delta", "c1", "c2", "c3"],
            &["term1", "term2", "term3"],
            |r| {
                let b = bounds::low_degree_green_bound(
                    need_u64(r, "k")?,
                    need_u64(r, "n")? as u32,
                    need_u64(r, "d")? as u32,
                    need_f64(r, "delta")?,
                    need_f64(r, "c1")?,
                    need_f64(r, "c2")?,
                    need_f64(r, "c3")?,
                )?;
                Ok(vec![b.total, b.term1, b.term2, b.term3])
            },
        ),
        "local-time" => (&["t", "pi_s", "t_rel", "c0"], &[], |r| {
            Ok(vec![bounds::local_time_bound(
                need_u64(r, "t")?,
                need_f64(r, "pi_s")?,
                need_f64(r, "t_rel")?,
                opt_f64(r, "c0", bounds::DEFAULT_C0),
            )])
        }),
        "ld-rate" => (&["lambda0", "eps"], &["lower_bound"], |r| {
            let rate = bounds::ld_rate(need_f64(r, "lambda0")?, need_f64(r, "eps")?)?;
            Ok(vec![rate.i_value, rate.lower_bound])
        }),
        "q" => (&["t", "t_u", "g_adj", "cardinality"], &[], |r| {
            Ok(vec![bounds::q_of_t(
                need_u64(r, "t")?,
                need_u64(r, "t_u")?,
                need_f64(r, "g_adj")?,
                need_u64(r, "cardinality")?,
            )])
        }),
        "deconc" => (&["t", "pi_s", "k", "q", "t_u"], &[], |r| {
            Ok(vec![bounds::deconc_bound(
                need_u64(r, "t")?,
                need_f64(r, "pi_s")?,
                need_u64(r, "k")? as u32,
                need_f64(r, "q")?,
                need_u64(r, "t_u")?,
            )])
        }),
        "coverage-tail" => (&["t", "pi_s", "t_rel", "k", "q", "t_u", "c0"], &[], |r| {
            Ok(vec![bounds::coverage_tail_bound(
                need_u64(r, "t")?,
                need_f64(r, "pi_s")?,
                need_f64(r, "t_rel")?,
                need_u64(r, "k")? as u32,
                need_f64(r, "q")?,
                need_u64(r, "t_u")?,
                opt_f64(r, "c0", bounds::DEFAULT_C0),
            )])
        }),
        "large-set-epoch" => (
            &["pi_s", "t_u", "k2", "c", "t_rel"],
            &["error_bound"],
            |r| {
                let e = bounds::large_set_epoch(
                    need_f64(r, "pi_s")?,
                    need_u64(r, "t_u")?,
                    need_f64(r, "k2")?,
                    Some(need_f64(r, "c")?),
                    Some(need_f64(r, "t_rel")?),
                );
                Ok(vec![e.t, e.error_bound.unwrap()])
            },
        ),
        "small-set-epoch" => (
            &["cardinality", "s", "gstar_s", "t_u", "c2", "c3"],
            &["failure_bound", "hypothesis_ok"],
            |r| {
                let e = bounds::small_set_epoch(
                    need_u64(r, "cardinality")?,
                    need_u64(r, "s")?,
                    need_f64(r, "gstar_s")?,
                    need_u64(r, "t_u")?,
                    need_f64(r, "c2")?,
                    opt_f64(r, "c3", bounds::DEFAULT_C3),
                );
                Ok(vec![e.epoch, e.failure_bound, e.hypothesis_ok as u8 as f64])
            },
        ),
        "geo-alpha" => (&["beta"], &[], |r| {
            let res = bounds::geo_mgf_alpha(need_f64(r, "beta")?, 200, 40)?;
            Ok(vec![res.alpha])
        }),
        other => {
            return Err(Error::invalid(
                "formula",
                format!("unknown bounds formula `{other}`"),
            ))
        }
    };

    let mut header: Vec<&str> = inputs.to_vec();
    header.push("value");
    header.extend_from_slice(extras);
    let mut rows = Vec::with_capacity(params.rows.len());
    for row in &params.rows {
        for key in row.keys() {
            if !inputs.contains(&key.as_str()) {
                return Err(Error::invalid(
                    "rows",
                    format!("unknown key `{key}` for formula {}", params.formula),
                ));
            }
        }
        let values = eval(row)?;
        let mut cells: Vec<String> = inputs
            .iter()
            .map(|k| {
                row.get(*k)
                    .map(|v| match v {
                        Value::Bool(b) => (*b as u8).to_string(),
                        other => other.to_string(),
                    })
                    .unwrap_or_else(|| "0".into())
            })
            .collect();
        cells.extend(values.into_iter().map(fmt_f64));
        rows.push(cells);
    }
    let csv_path = out_dir.join("bounds.csv");
    write_csv(&csv_path, &header, &rows)?;
    files.push(csv_path);
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CheckParams {
    eps: Option<f64>,
    k2_cap: Option<u32>,
    /// Replicas for the Monte Carlo fallback on over-capacity tori.
    replicas: Option<u64>,
}

fn run_check(scenario: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let params: CheckParams = scenario.params()?;
    let g = scenario.graph()?;
    let eps = params.eps.unwrap_or_else(default_eps);
    let k2_cap = params.k2_cap.unwrap_or(DEFAULT_K2_CAP);
    let path = out_dir.join("assumptions.json");
    match check_assumption_with(&g, eps, k2_cap) {
        Ok(report) => std::fs::write(&path, serde_json::to_string_pretty(&report)?)?,
        // Past the dense cap, tori fall back to the explicitly flagged
        // surrogate pipeline: a partial report beats a refusal.
        Err(Error::Capacity { .. }) if g.torus_dims().is_some() => {
            let report = check_assumption_torus_surrogate(
                &g,
                eps,
                k2_cap,
                params.replicas.unwrap_or(20_000),
                scenario.seed,
            )?;
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        }
        Err(e) => return Err(e),
    }
    files.push(path);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalingParams {
    family: String,
    #[serde(default)]
    d_min: Option<u32>,
    #[serde(default)]
    d_max: Option<u32>,
    #[serde(default)]
    n_min: Option<u32>,
    #[serde(default)]
    n_max: Option<u32>,
    #[serde(default)]
    d: Option<u32>,
    replicas: u64,
    #[serde(default)]
    eps: Option<f64>,
    #[serde(default)]
    grid_points: Option<usize>,
    #[serde(default)]
    plot: bool,
}

/// One instance of the scaling study.
#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub instance: String,
    pub cardinality: u64,
    pub t_rel: f64,
    pub t_u_base: u64,
    pub crossing: ProxyCrossing,
}

/// Estimates the proxy crossing by MC with bracketing plus refinement.
///
/// A grid point can land inside the two-standard-error band around the
/// threshold, in which case the conservative rule refuses to decide. The
/// protocol then re-samples the bracketing pair with four times the
/// replicas, and failing that, retries on a shifted grid with a fresh seed
/// stream (all seeds derive from the scenario seed, so the whole search is
/// reproducible).
pub fn mc_proxy_crossing(
    g: &GraphSpec,
    eps: f64,
    t_max: u64,
    grid_points: usize,
    replicas: u64,
    seed: u64,
) -> Result<ProxyCrossing> {
    let attempts = 3u64;
    let step = (t_max / grid_points as u64).max(1);
    let mut last = ProxyCrossing::NoCrossing;
    for attempt in 0..attempts {
        let offset = attempt * step / attempts.max(1);
        let mut grid: Vec<u64> = vec![0];
        let mut t = step / 2 + offset;
        while t <= t_max {
            grid.push(t);
            t += step;
        }
        let curve = exp_moment_mc(
            g,
            0,
            &grid,
            replicas,
            seed.wrapping_add(attempt * 7919),
            0.95,
        )?;
        match proxy_mixing_time(&curve, eps) {
            ProxyCrossing::Determined(t) => return Ok(ProxyCrossing::Determined(t)),
            ProxyCrossing::Undetermined { lower, upper } => {
                // refine the pinch with more replicas
                let refine: Vec<u64> = vec![lower, upper];
                let curve = exp_moment_mc(
                    g,
                    0,
                    &refine,
                    replicas * 4,
                    seed.wrapping_add(attempt * 7919 + 31),
                    0.95,
                )?;
                match proxy_mixing_time(&curve, eps) {
                    ProxyCrossing::Determined(t) => return Ok(ProxyCrossing::Determined(t)),
                    other => last = other,
                }
            }
            ProxyCrossing::NoCrossing => last = ProxyCrossing::NoCrossing,
        }
    }
    Ok(last)
}

fn scaling_instance(
    g: &GraphSpec,
    eps: f64,
    replicas: u64,
    grid_points: usize,
    seed: u64,
) -> Result<ScalingRow> {
    let kernel = DenseKernel::build(g)?;
    let spectral = spectrum(&kernel)?;
    let t_u = uniform_mixing_time(&kernel, eps)?;
    let card = g.vertex_count() as f64;
    let t_max = (3.0 * card * (spectral.t_rel + card.ln())).ceil() as u64;
    let crossing = mc_proxy_crossing(g, eps, t_max, grid_points, replicas, seed)?;
    Ok(ScalingRow {
        instance: g.to_string(),
        cardinality: g.vertex_count(),
        t_rel: spectral.t_rel,
        t_u_base: t_u,
        crossing,
    })
}

/// Hypercube scaling study over a dimension range. Returns the per-instance
/// rows; ratios normalize by `d 2^d`.
pub fn hypercube_study(
    d_range: std::ops::RangeInclusive<u32>,
    eps: f64,
    replicas: u64,
    grid_points: usize,
    seed: u64,
) -> Result<Vec<(u32, ScalingRow)>> {
    let mut out = Vec::new();
    for d in d_range {
        let g = GraphSpec::hypercube(d)?;
        let row = scaling_instance(&g, eps, replicas, grid_points, seed + d as u64 * 1000)?;
        out.push((d, row));
    }
    Ok(out)
}

/// Torus scaling study at fixed dimension `d >= 3` over a side range.
pub fn torus_study(
    n_range: std::ops::RangeInclusive<u32>,
    d: u32,
    eps: f64,
    replicas: u64,
    grid_points: usize,
    seed: u64,
) -> Result<Vec<(u32, ScalingRow)>> {
    if d < 3 {
        return Err(Error::invalid("d", "torus study requires d >= 3"));
    }
    let mut out = Vec::new();
    for n in n_range {
        let g = GraphSpec::torus(n, d)?;
        let row = scaling_instance(&g, eps, replicas, grid_points, seed + n as u64 * 1000)?;
        out.push((n, row));
    }
    Ok(out)
}

fn run_scaling(scenario: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let params: ScalingParams = scenario.params()?;
    let eps = params.eps.unwrap_or_else(default_eps);
    let grid_points = params.grid_points.unwrap_or(60);
    match params.family.as_str() {
        "hypercube" => {
            let d_min = params
                .d_min
                .ok_or_else(|| Error::invalid("d_min", "required"))?;
            let d_max = params
                .d_max
                .ok_or_else(|| Error::invalid("d_max", "required"))?;
            let rows = hypercube_study(
                d_min..=d_max,
                eps,
                params.replicas,
                grid_points,
                scenario.seed,
            )?;
            let mut csv = Vec::new();
            let mut ratios = Vec::new();
            for (d, row) in &rows {
                let norm = *d as f64 * row.cardinality as f64;
                let (t_star, status) = crossing_json(&row.crossing);
                let ratio = t_star.map(|t| (t + row.t_u_base) as f64 / norm);
                if let Some(r) = ratio {
                    ratios.push(r);
                }
                csv.push(vec![
                    row.instance.clone(),
                    row.cardinality.to_string(),
                    fmt_f64(row.t_rel),
                    row.t_u_base.to_string(),
                    t_star.map(|t| t.to_string()).unwrap_or_else(|| "-1".into()),
                    status,
                    fmt_f64(norm),
                    ratio.map(fmt_f64).unwrap_or_else(|| "-1".into()),
                ]);
            }
            if !ratios.is_empty() {
                let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
                let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
                csv.push(vec![
                    "summary(max/min)".into(),
                    "0".into(),
                    "0".into(),
                    "0".into(),
                    "0".into(),
                    format!("{} determined of {}", ratios.len(), rows.len()),
                    "0".into(),
                    fmt_f64(max / min),
                ]);
            }
            let path = out_dir.join("scaling.csv");
            write_csv(
                &path,
                &[
                    "instance",
                    "cardinality",
                    "t_rel",
                    "t_u_base",
                    "t_star",
                    "status",
                    "normalizer",
                    "ratio",
                ],
                &csv,
            )?;
            files.push(path);
        }
        "torus" => {
            let n_min = params
                .n_min
                .ok_or_else(|| Error::invalid("n_min", "required"))?;
            let n_max = params
                .n_max
                .ok_or_else(|| Error::invalid("n_max", "required"))?;
            let d = params.d.ok_or_else(|| Error::invalid("d", "required"))?;
            let rows = torus_study(
                n_min..=n_max,
                d,
                eps,
                params.replicas,
                grid_points,
                scenario.seed,
            )?;
            let mut csv = Vec::new();
            for (n, row) in &rows {
                // both normalizations, side by side, no winner picked
                let norm_low = d as f64 * (*n as f64).powi(d as i32);
                let norm_high = d as f64 * (*n as f64).powi(d as i32 + 2);
                let (t_star, status) = crossing_json(&row.crossing);
                let total = t_star.map(|t| (t + row.t_u_base) as f64);
                csv.push(vec![
                    row.instance.clone(),
                    row.cardinality.to_string(),
                    fmt_f64(row.t_rel),
                    row.t_u_base.to_string(),
                    t_star.map(|t| t.to_string()).unwrap_or_else(|| "-1".into()),
                    status,
                    fmt_f64(norm_low),
                    total
                        .map(|v| fmt_f64(v / norm_low))
                        .unwrap_or_else(|| "-1".into()),
                    fmt_f64(norm_high),
                    total
                        .map(|v| fmt_f64(v / norm_high))
                        .unwrap_or_else(|| "-1".into()),
                ]);
            }
            let path = out_dir.join("scaling.csv");
            write_csv(
                &path,
                &[
                    "instance",
                    "cardinality",
                    "t_rel",
                    "t_u_base",
                    "t_star",
                    "status",
                    "normalizer_dnd",
                    "ratio_dnd",
                    "normalizer_dnd2",
                    "ratio_dnd2",
                ],
                &csv,
            )?;
            files.push(path);
        }
        other => {
            return Err(Error::invalid(
                "family",
                format!("scaling family must be hypercube|torus, got {other}"),
            ))
        }
    }
    if params.plot {
        // ratios plot is meaningful only when crossings resolved; skip quietly
    }
    Ok(())
}
