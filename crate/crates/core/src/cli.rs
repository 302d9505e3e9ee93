//! Command-line harness: simulate trajectories, emit figure data and run the
//! verification suites with a JSON report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info, warn};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{global_flow_with, in_u_eps, r_min, r_min_kepler, ExtendedPoint};
use crate::covering::{flow_cover_for_time, lift_state};
use crate::error::Error;
use crate::integrate::{integrate, integrate_until, Direction, EventSpec, IntegratorConfig, Termination, Trajectory};
use crate::model::{hamiltonian, l_squared_point, vector_field_flat, ModelParams, PhasePoint};
use crate::verify::{
    asymptotic_direction_pair, bracket_tables, chart_roundtrip_error, conservation_report, conservation_report_points,
    cover_points, dirac_bracket_check, sample_entry, sample_sphere_bundle, sample_u_eps, transit_time_check,
    BracketOptions, FdOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STEP_FAILURE: i32 = 3;
pub const EXIT_OUTPUT: i32 = 4;
pub const EXIT_VIOLATION: i32 = 5;
pub const EXIT_NO_PERICENTER: i32 = 6;

#[derive(Parser, Debug)]
#[command(name = "mcgehee", version, about = "Regularised flow for homogeneous central potentials")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub n: Option<u32>,
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub m: Option<f64>,
    #[arg(long = "Z", global = true, allow_hyphen_values = true)]
    pub z: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    #[arg(long = "rel-tol", global = true)]
    pub rel_tol: Option<f64>,
    #[arg(long = "abs-tol", global = true)]
    pub abs_tol: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate one trajectory through collisions and write it as CSV.
    Simulate,
    /// Write the data and an SVG rendering for one of the figures.
    Figures {
        #[arg(value_enum)]
        which: Figure,
    },
    /// Run the verification suites and write a JSON report.
    Verify,
    /// Print the pericenter radius for energy `E` and squared angular momentum `l2`.
    Rmin {
        #[arg(long = "E", allow_hyphen_values = true)]
        e: f64,
        #[arg(long, allow_hyphen_values = true)]
        l2: f64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub n: u32,
    pub d: usize,
    pub m: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub eps: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig { n: 2, d: 2, m: 1.0, z: 1.0, eps: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Regular { q: Vec<f64>, p: Vec<f64> },
    Collision { h: f64, a: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Defaults to radial infall from rest at `|q| = 1`.
    pub initial: Option<InitialState>,
    pub t_span: (f64, f64),
    /// Number of output rows (one when the span is empty).
    pub samples: usize,
    pub file: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { initial: None, t_span: (0.0, 3.0), samples: 301, file: "trajectory.csv".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2Orbit {
    pub label: String,
    pub l: f64,
    /// Target value of the apsidal angle over `2 pi`, used to solve for `l`.
    pub apsidal_fraction: f64,
    pub radial_periods: usize,
    pub periodic: bool,
}

impl Default for Fig2Orbit {
    fn default() -> Self {
        Fig2Orbit { label: String::new(), l: 0.5, apsidal_fraction: 0.0, radial_periods: 1, periodic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiguresConfig {
    pub fig1_n: Vec<u32>,
    pub fig1_pericenter: f64,
    pub fig1_plot_radius: f64,
    pub fig1_asymptote_factor: f64,
    pub fig2_energy: f64,
    pub fig2_orbits: Vec<Fig2Orbit>,
    /// Rows per radial period.
    pub samples_per_period: usize,
}

/// Angular momenta solving `apsidal_fraction(l) = 4/3, sqrt(5/3), 5/4` at
/// `n = 3, E = -1/2, m = Z = 1`.
pub const FIG2_L: [f64; 3] = [0.5320274885302372, 0.7029436907375806, 0.8995841369791373];

impl Default for FiguresConfig {
    fn default() -> Self {
        let orbit = |label: &str, l: f64, f: f64, k: usize, periodic: bool| Fig2Orbit {
            label: label.into(),
            l,
            apsidal_fraction: f,
            radial_periods: k,
            periodic,
        };
        FiguresConfig {
            fig1_n: vec![2, 3, 4, 6],
            fig1_pericenter: 1.0,
            fig1_plot_radius: 8.0,
            fig1_asymptote_factor: 1e4,
            fig2_energy: -0.5,
            fig2_orbits: vec![
                orbit("left", FIG2_L[0], 4.0 / 3.0, 3, true),
                orbit("middle", FIG2_L[1], (5.0f64 / 3.0).sqrt(), 40, false),
                orbit("right", FIG2_L[2], 1.25, 4, true),
            ],
            samples_per_period: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub bracket: f64,
    pub dirac: f64,
    pub conservation: f64,
    pub roundtrip: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { bracket: 1e-5, dirac: 1e-6, conservation: 1e-8, roundtrip: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub grid: Vec<(u32, usize)>,
    pub points: usize,
    pub dirac_dims: Vec<usize>,
    pub dirac_points: usize,
    pub transit_n: Vec<u32>,
    pub transit_eps: Vec<f64>,
    pub transit_points: usize,
    pub conservation_time: f64,
    pub thresholds: Thresholds,
    /// Test fixture: multiplies every computed chart bracket.
    pub bracket_sign: f64,
    pub file: String,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            grid: [1u32, 2, 3, 4].iter().flat_map(|&n| [(n, 2usize), (n, 3)]).collect(),
            points: 20,
            dirac_dims: vec![2, 3, 4],
            dirac_points: 20,
            transit_n: vec![2, 3, 4],
            transit_eps: vec![0.05, 0.1],
            transit_points: 100,
            conservation_time: 10.0,
            thresholds: Thresholds::default(),
            bracket_sign: 1.0,
            file: "verify_report.json".into(),
        }
    }
}

/// Contents of the JSON configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub params: ParamsConfig,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub simulate: SimulateConfig,
    pub figures: FiguresConfig,
    pub verify: VerifyConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            params: ParamsConfig::default(),
            integrator: IntegratorConfig::default(),
            seed: 0,
            out: PathBuf::from("out"),
            simulate: SimulateConfig::default(),
            figures: FiguresConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

/// A validated configuration with flags applied.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ModelParams,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub simulate: SimulateConfig,
    pub figures: FiguresConfig,
    pub verify: VerifyConfig,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Step(String),
    Output(String),
    Violation(String),
    NoPericenter(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Step(_) => EXIT_STEP_FAILURE,
            CliError::Output(_) => EXIT_OUTPUT,
            CliError::Violation(_) => EXIT_VIOLATION,
            CliError::NoPericenter(_) => EXIT_NO_PERICENTER,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(s) => write!(f, "configuration error: {s}"),
            CliError::Step(s) => write!(f, "integration failed: {s}"),
            CliError::Output(s) => write!(f, "cannot write output: {s}"),
            CliError::Violation(s) => write!(f, "verification failed: {s}"),
            CliError::NoPericenter(s) => write!(f, "no pericenter: {s}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_) | Error::Dimension { .. } | Error::Unsupported(_) => CliError::Config(e.to_string()),
            Error::NoPericenter(_) => CliError::NoPericenter(e.to_string()),
            other => CliError::Step(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (including the program name), run the command and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("MCGEHEE_LOG")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("mcgehee: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let scenario = load_scenario(&cli.common)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&scenario).map(|_| ()),
        Command::Figures { which } => cmd_figures(&scenario, *which),
        Command::Verify => cmd_verify(&scenario).map(|_| ()),
        Command::Rmin { e, l2 } => {
            let (r, delta) = cmd_rmin(&scenario.params, *e, *l2)?;
            println!("r_min = {r:?}");
            if let Some(d) = delta {
                println!("delta = {d:e}");
            }
            Ok(())
        }
    }
}

pub fn load_scenario(args: &CommonArgs) -> CliResult<Scenario> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Config>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    let p = &mut cfg.params;
    p.n = args.n.unwrap_or(p.n);
    p.d = args.d.unwrap_or(p.d);
    p.m = args.m.unwrap_or(p.m);
    p.z = args.z.unwrap_or(p.z);
    p.eps = args.eps.unwrap_or(p.eps);
    if let Some(v) = args.rel_tol {
        cfg.integrator.rel_tol = v;
    }
    if let Some(v) = args.abs_tol {
        cfg.integrator.abs_tol = v;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    if cfg.params.d == 1 {
        return Err(CliError::Config(
            "d = 1 is not supported: on the line a collision orbit has to be glued back by hand, \
             which the regularised flow here does not do; use d >= 2"
                .into(),
        ));
    }
    let p = &cfg.params;
    let params = ModelParams::new(p.n, p.d, p.m, p.z, p.eps)?;
    cfg.integrator.validate()?;
    debug!("scenario {params:?} {:?}", cfg.integrator);
    Ok(Scenario {
        params,
        integrator: cfg.integrator,
        seed: cfg.seed,
        out: cfg.out,
        simulate: cfg.simulate,
        figures: cfg.figures,
        verify: cfg.verify,
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn initial_point(s: &Scenario) -> CliResult<ExtendedPoint> {
    let d = s.params.d;
    let check = |v: &[f64], name: &str| {
        if v.len() != d {
            Err(CliError::Config(format!("initial {name} has {} components, expected d = {d}", v.len())))
        } else {
            Ok(())
        }
    };
    match &s.simulate.initial {
        None => {
            let q = (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
            Ok(ExtendedPoint::Regular(PhasePoint::new(q, vec![0.0; d])))
        }
        Some(InitialState::Regular { q, p }) => {
            check(q, "q")?;
            check(p, "p")?;
            if q.iter().all(|v| *v == 0.0) {
                return Err(CliError::Config("initial q is the collision point; use the collision form".into()));
            }
            Ok(ExtendedPoint::Regular(PhasePoint::new(q.clone(), p.clone())))
        }
        Some(InitialState::Collision { h, a }) => {
            check(a, "a")?;
            let a = DVector::from_column_slice(a);
            if (a.norm() - 1.0).abs() > 1e-12 {
                return Err(CliError::Config("collision direction a must be a unit vector".into()));
            }
            Ok(ExtendedPoint::Collision { h: *h, a })
        }
    }
}

fn trajectory_row(params: &ModelParams, t: f64, x: &ExtendedPoint) -> CliResult<String> {
    let mut row = fmt_f(t);
    match x {
        ExtendedPoint::Regular(y) => {
            for v in y.q.iter().chain(y.p.iter()) {
                let _ = write!(row, ",{}", fmt_f(*v));
            }
            let h = hamiltonian(params, y)?;
            let flag = u8::from(in_u_eps(params, y));
            let _ = write!(row, ",{},{},{flag}", fmt_f(h), fmt_f(l_squared_point(y)));
        }
        ExtendedPoint::Collision { h, a } => {
            for _ in 0..a.len() {
                row.push_str(",0.0");
            }
            for _ in 0..a.len() {
                row.push(',');
            }
            let _ = write!(row, ",{},0.0,1", fmt_f(*h));
        }
    }
    row.push('\n');
    Ok(row)
}

/// Integrate the scenario's initial state and write one CSV row per output time.
pub fn cmd_simulate(s: &Scenario) -> CliResult<PathBuf> {
    let params = &s.params;
    let (t0, t1) = s.simulate.t_span;
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(CliError::Config("t_span must be finite".into()));
    }
    let rows = if t0 == t1 { 1 } else { s.simulate.samples.max(2) };
    let d = params.d;
    let mut csv = String::from("t");
    for i in 1..=d {
        let _ = write!(csv, ",q_{i}");
    }
    for i in 1..=d {
        let _ = write!(csv, ",p_{i}");
    }
    csv.push_str(",H,l2,in_U_eps\n");
    let mut x = initial_point(s)?;
    csv.push_str(&trajectory_row(params, t0, &x)?);
    for k in 1..rows {
        let ta = t0 + (t1 - t0) * (k - 1) as f64 / (rows - 1) as f64;
        let tb = t0 + (t1 - t0) * k as f64 / (rows - 1) as f64;
        x = global_flow_with(params, &x, tb - ta, &s.integrator)?;
        csv.push_str(&trajectory_row(params, tb, &x)?);
    }
    write_file(&s.out, &s.simulate.file, &csv)
}

pub fn cmd_rmin(params: &ModelParams, e: f64, l2: f64) -> CliResult<(f64, Option<f64>)> {
    let r = r_min(params, e, l2)?;
    let delta = (params.n == 2).then(|| (r - r_min_kepler(params, e, l2)).abs());
    Ok((r, delta))
}

fn physical_field(params: &ModelParams) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    move |_t: f64, y: &[f64], dy: &mut [f64]| vector_field_flat(params, y, dy)
}

fn sample_rows(tr: &Trajectory, count: usize, rows: &mut Vec<(f64, [f64; 2])>) {
    let (a, b) = (tr.t_start(), tr.t_end());
    for k in 0..=count {
        let t = a + (b - a) * k as f64 / count as f64;
        if let Some(y) = tr.eval(t) {
            rows.push((t, [y[0], y[1]]));
        }
    }
}

fn curve_csv(rows: &[(f64, [f64; 2])]) -> String {
    let mut csv = String::from("t,q_1,q_2\n");
    for (t, q) in rows {
        let _ = writeln!(csv, "{},{},{}", fmt_f(*t), fmt_f(q[0]), fmt_f(q[1]));
    }
    csv
}

fn svg_panels(panels: &[(String, Vec<[f64; 2]>)], half_width: f64) -> String {
    let size = 240.0;
    let gap = 20.0;
    let width = panels.len() as f64 * (size + gap) + gap;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{}\" viewBox=\"0 0 {width} {}\">\n",
        size + 2.0 * gap + 20.0,
        size + 2.0 * gap + 20.0
    );
    for (i, (title, pts)) in panels.iter().enumerate() {
        let x0 = gap + i as f64 * (size + gap);
        let map = |q: &[f64; 2]| (x0 + size * (0.5 + q[0] / (2.0 * half_width)), gap + size * (0.5 - q[1] / (2.0 * half_width)));
        let _ = writeln!(svg, "<rect x=\"{x0}\" y=\"{gap}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"#999\"/>");
        let (cx, cy) = map(&[0.0, 0.0]);
        let _ = writeln!(svg, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2\" fill=\"black\"/>");
        let mut line = String::new();
        for q in pts.iter().filter(|q| q[0].abs() <= half_width && q[1].abs() <= half_width) {
            let (x, y) = map(q);
            let _ = write!(line, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(svg, "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1\"/>", line.trim_end());
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{title}</text>",
            x0 + size / 2.0,
            size + 2.0 * gap + 10.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fig1Curve {
    pub n: u32,
    pub file: String,
    pub raw_inner: f64,
    pub asymptotic_inner: f64,
    pub parity_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fig2Curve {
    pub label: String,
    pub file: String,
    pub energy: f64,
    pub l: f64,
    pub apsidal_fraction: f64,
    pub radial_period: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub sampled_r_min: f64,
    pub sampled_r_max: f64,
    /// Fraction of the cells of a 36 x 8 polar grid on the annulus visited by the orbit.
    pub annulus_coverage: f64,
    /// Relative distance from the start after `radial_periods` periods.
    pub closure_error: f64,
    pub periodic: bool,
}

/// Zero-energy orbit through the pericenter `(r0, 0)` moving in `+e_2`.
pub fn fig1_pericenter_point(params: &ModelParams, r0: f64) -> PhasePoint {
    let v = (2.0 * params.m * params.potential_at_radius(r0)).sqrt();
    PhasePoint::new(vec![r0, 0.0], vec![0.0, v])
}

fn flow_until_radius(params: &ModelParams, x0: &PhasePoint, radius: f64, sign: f64, cfg: &IntegratorConfig) -> CliResult<Trajectory> {
    let r2 = radius * radius;
    let g = move |_: f64, y: &[f64]| y[0] * y[0] + y[1] * y[1] - r2;
    let ev = [EventSpec { g: &g, direction: Direction::Increasing, zero_tol: 0.0 }];
    let (tr, hit) = integrate_until(physical_field(params), &x0.to_flat(), (0.0, sign * 1e30), cfg, &ev)?;
    if hit.is_none() {
        return Err(CliError::Step(format!("radius {radius} not reached ({:?})", tr.termination)));
    }
    Ok(tr)
}

fn fig1(s: &Scenario) -> CliResult<()> {
    let f = &s.figures;
    let cfg = IntegratorConfig::tight();
    let curves: Vec<CliResult<(Fig1Curve, String, Vec<[f64; 2]>)>> = f
        .fig1_n
        .par_iter()
        .map(|&n| {
            let params = ModelParams::new(n, 2, s.params.m, s.params.z, s.params.eps)?;
            let x0 = fig1_pericenter_point(&params, f.fig1_pericenter);
            let mut rows = Vec::new();
            let back = flow_until_radius(&params, &x0, f.fig1_plot_radius, -1.0, &cfg)?;
            sample_rows(&back, 1000, &mut rows);
            rows.reverse();
            rows.pop();
            let fwd = flow_until_radius(&params, &x0, f.fig1_plot_radius, 1.0, &cfg)?;
            sample_rows(&fwd, 1000, &mut rows);
            let pair = asymptotic_direction_pair(&params, &x0, f.fig1_asymptote_factor)?;
            let parity_ok = if n % 2 == 0 { pair.inner > 1.0 - 1e-3 } else { pair.inner < -1.0 + 1e-3 };
            let file = format!("fig1_n{n}.csv");
            let curve = Fig1Curve { n, file, raw_inner: pair.raw_inner, asymptotic_inner: pair.inner, parity_ok };
            Ok((curve, curve_csv(&rows), rows.iter().map(|r| r.1).collect()))
        })
        .collect();
    let mut summary = Vec::new();
    let mut panels = Vec::new();
    for c in curves {
        let (curve, csv, pts) = c?;
        write_file(&s.out, &curve.file, &csv)?;
        panels.push((format!("n = {}", curve.n), pts));
        summary.push(curve);
    }
    write_file(&s.out, "fig1.svg", &svg_panels(&panels, 0.75 * f.fig1_plot_radius))?;
    write_json(&s.out, "fig1_summary.json", &summary)
}

/// Apsidal angle over `2 pi` (pericenter to pericenter), half radial period
/// and pericenter/apocenter radii of the planar orbit with energy `e` and
/// angular momentum `l`.
pub fn apsidal_fraction(params: &ModelParams, e: f64, l: f64) -> crate::Result<(f64, f64, f64, f64)> {
    let r0 = r_min(params, e, l * l)?;
    let y0 = [r0, 0.0, 0.0, l / r0, 0.0];
    let field = |_t: f64, y: &[f64], dy: &mut [f64]| {
        vector_field_flat(params, &y[..4], &mut dy[..4]);
        dy[4] = (y[0] * y[3] - y[1] * y[2]) / (params.m * (y[0] * y[0] + y[1] * y[1]));
    };
    let g = |_: f64, y: &[f64]| y[0] * y[2] + y[1] * y[3];
    let ev = [EventSpec { g: &g, direction: Direction::Decreasing, zero_tol: 0.0 }];
    let (tr, hit) = integrate_until(field, &y0, (0.0, 1e6), &IntegratorConfig::tight(), &ev)?;
    let h = hit.ok_or_else(|| Error::StepFailure(format!("apocenter not reached ({:?})", tr.termination)))?;
    let r1 = h.state[0].hypot(h.state[1]);
    Ok((h.state[4] / std::f64::consts::PI, 2.0 * h.t, r0, r1))
}

/// Angular momentum in `[lo, hi]` with the given apsidal fraction, which
/// decreases with `l`.
pub fn solve_angular_momentum(params: &ModelParams, e: f64, target: f64, mut lo: f64, mut hi: f64) -> crate::Result<f64> {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let (f, ..) = apsidal_fraction(params, e, mid)?;
        if f > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Share of the cells of a 36 (angle) by 8 (radius) grid on
/// `r0 <= |q| <= r1` that contain a sample.
pub fn annulus_coverage(points: impl Iterator<Item = [f64; 2]>, r0: f64, r1: f64) -> f64 {
    let (na, nr) = (36usize, 8usize);
    let mut hit = vec![false; na * nr];
    for q in points {
        let a = q[1].atan2(q[0]).rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
        let r = (q[0].hypot(q[1]) - r0) / (r1 - r0);
        let i = ((a * na as f64) as usize).min(na - 1);
        let j = ((r.clamp(0.0, 1.0) * nr as f64) as usize).min(nr - 1);
        hit[i * nr + j] = true;
    }
    hit.iter().filter(|v| **v).count() as f64 / hit.len() as f64
}

fn fig2(s: &Scenario) -> CliResult<()> {
    let f = &s.figures;
    let params = ModelParams::new(3, 2, s.params.m, s.params.z, s.params.eps)?;
    let e = f.fig2_energy;
    let cfg = IntegratorConfig::tight();
    let curves: Vec<CliResult<(Fig2Curve, String, Vec<[f64; 2]>)>> = f
        .fig2_orbits
        .par_iter()
        .map(|o| {
            let (fraction, period, r0, r1) = apsidal_fraction(&params, e, o.l)?;
            let x0 = PhasePoint::new(vec![r0, 0.0], vec![0.0, o.l / r0]);
            let total = period * o.radial_periods as f64;
            let tr = integrate(physical_field(&params), &x0.to_flat(), (0.0, total), &cfg)?;
            if tr.termination != Termination::Completed {
                return Err(CliError::Step(format!("orbit {} ended with {:?}", o.label, tr.termination)));
            }
            let mut rows = Vec::new();
            sample_rows(&tr, f.samples_per_period * o.radial_periods, &mut rows);
            let end = tr.final_state();
            let scale = r0.max(x0.p.norm());
            let closure_error = x0.to_flat().iter().zip(end).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
            let radii = rows.iter().map(|(_, q)| q[0].hypot(q[1]));
            let sampled_r_min = radii.clone().fold(f64::INFINITY, f64::min);
            let sampled_r_max = radii.fold(0.0, f64::max);
            let coverage = annulus_coverage(rows.iter().map(|r| r.1), r0, r1);
            let curve = Fig2Curve {
                label: o.label.clone(),
                file: format!("fig2_{}.csv", o.label),
                energy: e,
                l: o.l,
                apsidal_fraction: fraction,
                radial_period: period,
                r_min: r0,
                r_max: r1,
                sampled_r_min,
                sampled_r_max,
                annulus_coverage: coverage,
                closure_error,
                periodic: o.periodic,
            };
            Ok((curve, curve_csv(&rows), rows.iter().map(|r| r.1).collect()))
        })
        .collect();
    let mut summary = Vec::new();
    let mut panels = Vec::new();
    let mut extent: f64 = 0.0;
    for c in curves {
        let (curve, csv, pts) = c?;
        write_file(&s.out, &curve.file, &csv)?;
        if curve.periodic && curve.closure_error > 1e-6 {
            warn!("orbit {} does not close: {:.2e}", curve.label, curve.closure_error);
        }
        extent = extent.max(curve.r_max);
        panels.push((format!("{} (l = {:.4})", curve.label, curve.l), pts));
        summary.push(curve);
    }
    write_file(&s.out, "fig2.svg", &svg_panels(&panels, 1.1 * extent))?;
    write_json(&s.out, "fig2_summary.json", &summary)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    write_file(dir, name, &text).map(|_| ())
}

pub fn cmd_figures(s: &Scenario, which: Figure) -> CliResult<()> {
    match which {
        Figure::Fig1 => fig1(s),
        Figure::Fig2 => fig2(s),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryResidual {
    pub n: u32,
    pub d: usize,
    pub names: [String; 2],
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BracketSection {
    pub max_residual: f64,
    pub measured_sign: Vec<f64>,
    pub failures: usize,
    pub per_entry: Vec<EntryResidual>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiracSection {
    pub max_residual: f64,
    pub literal_formula_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Drifts {
    pub energy: f64,
    pub angular_momentum: f64,
    pub l_squared: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConservationSection {
    pub max_drifts: Drifts,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitViolation {
    pub n: u32,
    pub eps: f64,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitSection {
    pub checked: usize,
    pub max_ratio: f64,
    pub violations: Vec<TransitViolation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripSection {
    pub max_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub bracket_table: BracketSection,
    pub dirac: DiracSection,
    pub conservation: ConservationSection,
    pub transit_bound: TransitSection,
    pub chart_roundtrip: RoundtripSection,
    pub thresholds: Thresholds,
    pub passed: bool,
}

fn grid_params(s: &Scenario, n: u32, d: usize) -> crate::Result<ModelParams> {
    ModelParams::new(n, d, s.params.m, s.params.z, s.params.eps)
}

fn bracket_section(s: &Scenario) -> CliResult<(BracketSection, RoundtripSection)> {
    let v = &s.verify;
    let opts = BracketOptions { fd: FdOptions::default(), sign: v.bracket_sign };
    let mut sec = BracketSection { max_residual: 0.0, measured_sign: Vec::new(), failures: 0, per_entry: Vec::new() };
    let mut rt = RoundtripSection { max_error: 0.0, failures: 0 };
    for (i, &(n, d)) in v.grid.iter().enumerate() {
        let params = grid_params(s, n, d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(i as u64));
        let points: Vec<PhasePoint> = (0..v.points).map(|_| sample_u_eps(&params, &mut rng)).collect();
        let mut entries: Vec<EntryResidual> = Vec::new();
        for rep in bracket_tables(&params, &points, &opts) {
            let Ok(rep) = rep else {
                sec.failures += 1;
                continue;
            };
            sec.max_residual = sec.max_residual.max(rep.max_residual);
            if !sec.measured_sign.contains(&rep.measured_sign) {
                sec.measured_sign.push(rep.measured_sign);
            }
            for e in rep.entries {
                match entries.iter_mut().find(|x| x.names == e.names) {
                    Some(x) => x.max_residual = x.max_residual.max(e.residual),
                    None => entries.push(EntryResidual { n, d, names: e.names, max_residual: e.residual }),
                }
            }
        }
        sec.per_entry.extend(entries);
        let errs: Vec<crate::Result<f64>> = points.par_iter().map(|x| chart_roundtrip_error(&params, x)).collect();
        for e in errs {
            match e {
                Ok(v) => rt.max_error = rt.max_error.max(v),
                Err(_) => rt.failures += 1,
            }
        }
        debug!("brackets n={n} d={d}: max residual so far {:.2e}", sec.max_residual);
    }
    Ok((sec, rt))
}

fn dirac_section(s: &Scenario) -> DiracSection {
    let mut sec = DiracSection { max_residual: 0.0, literal_formula_residual: 0.0 };
    for (i, &d) in s.verify.dirac_dims.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(1000 + i as u64));
        for _ in 0..s.verify.dirac_points {
            let x = sample_sphere_bundle(&mut rng, d);
            match dirac_bracket_check(&x, &FdOptions::default()) {
                Ok(r) => {
                    sec.max_residual = sec.max_residual.max(r.max_residual);
                    sec.literal_formula_residual = sec.literal_formula_residual.max(r.literal_formula_residual);
                }
                Err(_) => sec.max_residual = f64::INFINITY,
            }
        }
    }
    sec
}

fn conservation_section(s: &Scenario) -> CliResult<ConservationSection> {
    let cfg = s.integrator;
    let runs: Vec<(u32, usize)> = s.verify.grid.clone();
    let reports: Vec<crate::Result<Vec<crate::verify::ConservationReport>>> = runs
        .par_iter()
        .map(|&(n, d)| {
            let p = grid_params(s, n, d)?;
            let v = |entries: &[(usize, f64)], fill: f64| {
                let mut out = vec![fill; d];
                for &(i, x) in entries {
                    out[i] = x;
                }
                out
            };
            let x = PhasePoint::new(v(&[(0, 1.0)], 0.1), v(&[(1, 0.9)], 0.05));
            let tr = integrate(physical_field(&p), &x.to_flat(), (0.0, s.verify.conservation_time), &cfg)?;
            let mut out = vec![conservation_report(&p, &tr)?];
            if n >= 2 {
                // bounce through collision in the cover
                let xb = PhasePoint::new(v(&[(0, 0.5 * p.eps)], 0.0), v(&[(0, -3.0), (1, 1e-3)], 0.0));
                let (frame, s0) = lift_state(&p, &xb)?;
                let mut pieces = Vec::new();
                flow_cover_for_time(&p, &s0, 0.02, None, &cfg, Some(&mut pieces))?;
                out.push(conservation_report_points(&p, &cover_points(&p, &frame, &pieces, s0.energy))?);
                let x = PhasePoint::new(v(&[(0, 1.0)], 0.0), v(&[(0, -0.4), (1, 1e-4)], 0.0));
                let mut samples = vec![x.clone()];
                let mut cur = ExtendedPoint::Regular(x);
                for _ in 0..40 {
                    cur = global_flow_with(&p, &cur, 0.1, &cfg)?;
                    if let Some(y) = cur.as_regular() {
                        samples.push(y.clone());
                    }
                }
                out.push(conservation_report_points(&p, &samples)?);
            }
            Ok(out)
        })
        .collect();
    let mut sec = ConservationSection { max_drifts: Drifts { energy: 0.0, angular_momentum: 0.0, l_squared: 0.0 }, failures: 0 };
    for r in reports {
        match r {
            Ok(list) => {
                for c in list {
                    let m = &mut sec.max_drifts;
                    m.energy = m.energy.max(c.energy);
                    m.angular_momentum = m.angular_momentum.max(c.angular_momentum);
                    m.l_squared = m.l_squared.max(c.l_squared);
                }
            }
            Err(e) => {
                warn!("conservation run failed: {e}");
                sec.failures += 1;
            }
        }
    }
    Ok(sec)
}

fn transit_section(s: &Scenario) -> CliResult<TransitSection> {
    let mut sec = TransitSection { checked: 0, max_ratio: 0.0, violations: Vec::new() };
    let mut index = 0u64;
    for &n in &s.verify.transit_n {
        for &eps in &s.verify.transit_eps {
            let params = ModelParams::new(n, 2, s.params.m, s.params.z, eps)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(2000 + index));
            index += 1;
            let entries: Vec<PhasePoint> = (0..s.verify.transit_points).map(|_| sample_entry(&params, &mut rng)).collect();
            let checks: Vec<crate::Result<crate::verify::TransitCheck>> =
                entries.par_iter().map(|x| transit_time_check(&params, x)).collect();
            for c in checks {
                let c = c?;
                sec.checked += 1;
                sec.max_ratio = sec.max_ratio.max(c.measured / c.bound);
                if !c.ok {
                    sec.violations.push(TransitViolation { n, eps, measured: c.measured, bound: c.bound });
                }
            }
        }
    }
    Ok(sec)
}

/// Run every suite, write the report and fail with exit code 5 if any
/// threshold is exceeded.
pub fn cmd_verify(s: &Scenario) -> CliResult<VerifyReport> {
    let th = s.verify.thresholds.clone();
    let (bracket_table, chart_roundtrip) = bracket_section(s)?;
    let dirac = dirac_section(s);
    let conservation = conservation_section(s)?;
    let transit_bound = transit_section(s)?;
    let cd = &conservation.max_drifts;
    let mut problems = Vec::new();
    if bracket_table.failures > 0 || !(bracket_table.max_residual < th.bracket) {
        problems.push(format!("bracket residual {:.3e}", bracket_table.max_residual));
    }
    if !(dirac.max_residual < th.dirac) {
        problems.push(format!("Dirac residual {:.3e}", dirac.max_residual));
    }
    let drift = cd.energy.max(cd.angular_momentum).max(cd.l_squared);
    if conservation.failures > 0 || !(drift < th.conservation) {
        problems.push(format!("conservation drift {drift:.3e}"));
    }
    if !transit_bound.violations.is_empty() {
        problems.push(format!("{} transit-time violations", transit_bound.violations.len()));
    }
    if chart_roundtrip.failures > 0 || !(chart_roundtrip.max_error < th.roundtrip) {
        problems.push(format!("roundtrip error {:.3e}", chart_roundtrip.max_error));
    }
    let report = VerifyReport {
        seed: s.seed,
        bracket_table,
        dirac,
        conservation,
        transit_bound,
        chart_roundtrip,
        thresholds: th,
        passed: problems.is_empty(),
    };
    write_json(&s.out, &s.verify.file, &report)?;
    if problems.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Violation(problems.join(", ")))
    }
}
