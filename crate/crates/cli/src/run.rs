//! Subcommand drivers. Every table is written by one writer after the
//! (possibly parallel) eps sweep has been collected in input order, so
//! outputs do not depend on the thread count.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use conical_core::{flow_map, ConicalPotential, Error as CoreError, FlowOptions, InitialStateSpec, PhasePoint, Symbol};
use conical_wave::egorov::{egorov_gap, fit_loglog_slope, EgorovConfig, EgorovTable, Realization};
use conical_wave::microlocal::{mass_near_s, split_observable, TwoMicrolocalSymbol, YProfile};
use conical_wave::solver::{dt_max, potential_on_grid, Evolution};
use conical_wave::{evolve, make_initial_state, pair_symbol, wigner_transform, Axis, Grid, WavefunctionGrid, WaveError};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ConfigError, ProfileSpec, RealizationSpec, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Trajectory,
    Evolve,
    /// Reads the array manifest written by `evolve` (`<out>/manifest_evolve.json` by default).
    Wigner { input: Option<PathBuf> },
    /// `check`: a failed criterion is an error (exit status 4).
    EgorovCheck { check: bool },
    TwoMicrolocal,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Trajectory => "trajectory",
            Command::Evolve => "evolve",
            Command::Wigner { .. } => "wigner",
            Command::EgorovCheck { .. } => "egorov-check",
            Command::TwoMicrolocal => "two-microlocal",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("acceptance check failed: {0}")]
    Acceptance(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Acceptance(_) => 4,
            RunError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(ConfigError::Parse(_)) => "ParseError",
            RunError::Config(ConfigError::Invalid(_)) => "ConfigInvalid",
            RunError::Numerical(_) => "NumericalFailure",
            RunError::Acceptance(_) => "AcceptanceFailure",
            RunError::Io(_) => "IoError",
        }
    }
}

impl From<WaveError> for RunError {
    fn from(e: WaveError) -> Self {
        RunError::Numerical(format!("{e:?}: {e}"))
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        RunError::Numerical(format!("{e:?}: {e}"))
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// What a subcommand produced: file names relative to the output directory
/// plus subcommand-specific manifest fields.
#[derive(Debug, Default)]
pub struct Report {
    pub outputs: Vec<String>,
    pub details: serde_json::Map<String, Value>,
    /// Set by `egorov-check --check` when a criterion failed; files are still written.
    pub failed_check: Option<String>,
}

/// One binary array on disk.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArrayEntry {
    pub file: String,
    /// `complex64` (little-endian f32 re, im) or `float32` (little-endian).
    pub dtype: String,
    /// Row-major shape, last axis fastest.
    pub shape: Vec<usize>,
    /// Position box, one interval per axis (periodic, right end excluded).
    #[serde(rename = "box")]
    pub bbox: Vec<[f64; 2]>,
    /// Momentum range per axis (phase-space arrays only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_range: Option<Vec<[f64; 2]>>,
    pub eps: f64,
    pub eps_index: usize,
    pub t: f64,
    pub snapshot_index: usize,
}

pub fn run(cfg: &RunConfig, cmd: &Command, out: &Path) -> Result<Report, RunError> {
    fs::create_dir_all(out)?;
    match cmd {
        Command::Trajectory => trajectory(cfg, out),
        Command::Evolve => evolve_cmd(cfg, out),
        Command::Wigner { input } => wigner_cmd(cfg, out, input.clone().unwrap_or_else(|| out.join("manifest_evolve.json"))),
        Command::EgorovCheck { check } => egorov_check(cfg, out, *check),
        Command::TwoMicrolocal => two_microlocal(cfg, out),
    }
}

/// Shortest round-trip text; scientific outside `[1e-4, 1e6)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, RunError> {
    Ok(csv::Writer::from_path(path)?)
}

fn write_json(path: &Path, v: &Value) -> Result<(), RunError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, v)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn trajectory(cfg: &RunConfig, out: &Path) -> Result<Report, RunError> {
    let pot = cfg.build_potential();
    let start = match (&cfg.classical_start, &cfg.initial_state) {
        (Some(s), _) => PhasePoint::new(s.x.clone(), s.xi.clone()),
        (None, InitialStateSpec::Coherent { q, p }) => PhasePoint::new(q.clone(), p.clone()),
        (None, _) => {
            return Err(ConfigError::Invalid(vec![crate::config::Violation {
                kind: crate::config::ViolationKind::Schema,
                path: "/classical_start".into(),
                message: "required for trajectory when the initial state is not coherent".into(),
            }])
            .into())
        }
    };
    let (_, traj) = flow_map(&pot, &start, cfg.time.t_final, &FlowOptions::default())?;
    let d = pot.dim();
    let mut w = csv_writer(&out.join("trajectory.csv"))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    header.extend((1..=d).map(|k| format!("xi{k}")));
    header.extend(["g_norm".to_string(), "H".to_string()]);
    w.write_record(&header)?;
    // regular samples plus one row at each crossing (|g| = 0 there)
    let mut rows = traj.sample(cfg.time.sample_dt);
    rows.extend(traj.crossings.iter().map(|c| (c.t_cross, c.point.clone())));
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, p) in rows {
        let mut row = vec![num(t)];
        row.extend(p.x.iter().chain(&p.xi).map(|v| num(*v)));
        row.push(num(pot.g_norm(&p.x)));
        row.push(num(pot.energy(&p.x, &p.xi)));
        w.write_record(&row)?;
    }
    w.flush()?;
    let events: Vec<Value> = traj
        .crossings
        .iter()
        .map(|c| json!({"t_cross": c.t_cross, "x": c.point.x, "xi": c.point.xi, "omega0": c.omega0, "generic": c.generic}))
        .collect();
    write_json(&out.join("crossings.json"), &json!({ "crossings": events }))?;
    let mut r = Report { outputs: vec!["trajectory.csv".into(), "crossings.json".into()], ..Default::default() };
    r.details.insert("crossings".into(), json!(traj.crossings.len()));
    Ok(r)
}

fn step_for(cfg: &RunConfig, pot: &ConicalPotential, grid: &Grid, eps: f64) -> Result<f64, RunError> {
    if let Some(dt) = cfg.time.dt {
        return Ok(dt);
    }
    let v = potential_on_grid(pot, grid)?;
    Ok(dt_max(eps, v.iter().fold(0.0f64, |m, x| m.max(x.abs()))))
}

fn snapshot_times(cfg: &RunConfig) -> Vec<f64> {
    let mut times = if cfg.time.snapshot_times.is_empty() { vec![cfg.time.t_final] } else { cfg.time.snapshot_times.clone() };
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn run_eps(cfg: &RunConfig, pot: &ConicalPotential, eps: f64, times: &[f64]) -> Result<Evolution, RunError> {
    let grid = cfg.grid_for(eps, pot)?;
    let psi0 = make_initial_state(&cfg.initial_state, &grid, eps)?;
    let dt = step_for(cfg, pot, &grid, eps)?;
    let t_final = times.iter().copied().fold(0.0, f64::max);
    Ok(evolve(pot, &psi0, t_final, dt, times)?)
}

/// Runs every eps (in parallel) and returns the evolutions in `eps_list` order.
fn sweep(cfg: &RunConfig, pot: &ConicalPotential, times: &[f64]) -> Result<Vec<Evolution>, RunError> {
    let results: Vec<Result<Evolution, RunError>> = cfg.eps_list.par_iter().map(|&eps| run_eps(cfg, pot, eps, times)).collect();
    results.into_iter().collect()
}

fn write_complex64(path: &Path, values: &[Complex64]) -> Result<(), RunError> {
    let mut f = BufWriter::new(File::create(path)?);
    for z in values {
        f.write_all(&(z.re as f32).to_le_bytes())?;
        f.write_all(&(z.im as f32).to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

fn write_float32(path: &Path, values: &[f64]) -> Result<(), RunError> {
    let mut f = BufWriter::new(File::create(path)?);
    for v in values {
        f.write_all(&(*v as f32).to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a `complex64` array written by `evolve`.
pub fn read_complex64(path: &Path) -> Result<Vec<Complex64>, RunError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(RunError::Io(format!("{}: length {} is not a multiple of 8", path.display(), bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

fn evolve_cmd(cfg: &RunConfig, out: &Path) -> Result<Report, RunError> {
    let pot = cfg.build_potential();
    let times = snapshot_times(cfg);
    let runs = sweep(cfg, &pot, &times)?;
    fs::create_dir_all(out.join("evolve"))?;
    let mut arrays = Vec::new();
    let mut report = Report::default();
    let mut diagnostics = Vec::new();
    for (i, (ev, &eps)) in runs.iter().zip(&cfg.eps_list).enumerate() {
        for (k, snap) in ev.snapshots.iter().enumerate() {
            let file = format!("evolve/psi_e{i}_s{k}.bin");
            write_complex64(&out.join(&file), &snap.psi.values)?;
            arrays.push(ArrayEntry {
                file: file.clone(),
                dtype: "complex64".into(),
                shape: snap.psi.grid.shape(),
                bbox: snap.psi.grid.bounds(),
                xi_range: None,
                eps,
                eps_index: i,
                t: snap.t,
                snapshot_index: k,
            });
            report.outputs.push(file);
        }
        diagnostics.push(json!({"eps": eps, "dt": ev.dt_used, "norm_drift": ev.norm_drift, "energy_drift": ev.energy_drift}));
    }
    report.details.insert("arrays".into(), serde_json::to_value(&arrays)?);
    report.details.insert("runs".into(), json!(diagnostics));
    Ok(report)
}

fn wigner_cmd(cfg: &RunConfig, out: &Path, input: PathBuf) -> Result<Report, RunError> {
    let text = fs::read_to_string(&input).map_err(|e| RunError::Io(format!("{}: {e}", input.display())))?;
    let manifest: Value = serde_json::from_str(&text)?;
    let arrays: Vec<ArrayEntry> = serde_json::from_value(manifest.get("arrays").cloned().unwrap_or(Value::Null))
        .map_err(|e| RunError::Io(format!("{}: no usable \"arrays\" list ({e})", input.display())))?;
    let base = input.parent().unwrap_or(Path::new("."));
    let symbols = cfg.build_symbols();
    fs::create_dir_all(out.join("wigner"))?;
    let mut w = csv_writer(&out.join("wigner_pairings.csv"))?;
    w.write_record(["eps", "t", "symbol", "value"])?;
    let mut report = Report::default();
    let mut written = Vec::new();
    for a in &arrays {
        let axes = a.shape.iter().zip(&a.bbox).map(|(&n, [lo, hi])| Axis::new(*lo, *hi, n)).collect::<conical_wave::Result<Vec<_>>>()?;
        let psi = WavefunctionGrid::new(Grid::new(axes)?, a.eps, read_complex64(&base.join(&a.file))?)?;
        let field = wigner_transform(&psi)?;
        let file = format!("wigner/W_e{}_s{}.bin", a.eps_index, a.snapshot_index);
        write_float32(&out.join(&file), &field.values)?;
        let mut shape = a.shape.clone();
        shape.extend(field.xi_axes.iter().map(|x| x.n));
        written.push(ArrayEntry {
            file: file.clone(),
            dtype: "float32".into(),
            shape,
            bbox: a.bbox.clone(),
            xi_range: Some(field.xi_axes.iter().map(|x| x.bounds()).collect()),
            ..a.clone()
        });
        report.outputs.push(file);
        for (id, s) in symbols.iter().enumerate() {
            let v = pair_symbol(s, &field)?;
            w.write_record([num(a.eps), num(a.t), id.to_string(), num(v)])?;
        }
    }
    w.flush()?;
    report.outputs.push("wigner_pairings.csv".into());
    report.details.insert("input".into(), json!(input.display().to_string()));
    report.details.insert("arrays".into(), serde_json::to_value(&written)?);
    Ok(report)
}

/// Pass/fail of the Egorov criteria that apply to this potential.
pub fn egorov_criteria(smooth: bool, gaps: &[(f64, f64)], slope: Option<f64>) -> Vec<(String, bool, String)> {
    let d: Vec<f64> = gaps.iter().map(|g| g.1).collect();
    if smooth {
        let ok = slope.map_or(false, |s| s >= 1.5);
        vec![("smooth_rate".into(), ok, format!("log-log slope {slope:?} >= 1.5"))]
    } else {
        let decreasing = d.len() >= 2 && d.windows(2).all(|w| w[1] < w[0]);
        let halved = d.len() >= 2 && d[d.len() - 1] <= 0.5 * d[0];
        vec![
            ("strictly_decreasing".into(), decreasing, "D(eps) strictly decreasing as eps shrinks".into()),
            ("halved".into(), halved, "D(smallest eps) <= 0.5 D(largest eps)".into()),
        ]
    }
}

fn egorov_check(cfg: &RunConfig, out: &Path, check: bool) -> Result<Report, RunError> {
    let pot = cfg.build_potential();
    let symbols = cfg.build_symbols();
    let bbox = cfg.grid_box(&pot);
    // largest eps first so the table reads in the refinement direction
    let mut eps_list = cfg.eps_list.clone();
    eps_list.sort_by(|a, b| b.total_cmp(a));
    let mut table = EgorovTable { rows: Vec::new(), gaps: Vec::new(), slope: None, particles: Vec::new() };
    for &eps in &eps_list {
        let mut ec = EgorovConfig::new(cfg.time.t_final, vec![eps], bbox.clone(), cfg.grid.xi_max);
        ec.n_points = cfg.points_for(eps, &bbox).into_iter().max();
        ec.dt = cfg.time.dt;
        ec.exclusion_radius = cfg.diagnostics.exclusion_radius;
        ec.realization = match cfg.diagnostics.realization {
            RealizationSpec::WignerQuadrature { threshold } => Realization::WignerQuadrature { threshold },
            RealizationSpec::HusimiSampling { samples } => Realization::HusimiSampling { samples, seed: cfg.seed },
        };
        let t = egorov_gap(&pot, &cfg.initial_state, &symbols, &ec)?;
        table.rows.extend(t.rows);
        table.gaps.extend(t.gaps);
        table.particles.extend(t.particles);
    }
    table.slope = fit_loglog_slope(&table.gaps);
    let mut w = csv_writer(&out.join("egorov.csv"))?;
    w.write_record(["eps", "symbol", "quantum", "classical", "gap"])?;
    for r in &table.rows {
        w.write_record([num(r.eps), r.symbol.to_string(), num(r.quantum), num(r.classical), num(r.gap)])?;
    }
    w.flush()?;
    let criteria = egorov_criteria(pot.is_smooth(), &table.gaps, table.slope);
    let summary = json!({
        "t": cfg.time.t_final,
        "eps": table.gaps.iter().map(|g| g.0).collect::<Vec<_>>(),
        "D": table.gaps.iter().map(|g| g.1).collect::<Vec<_>>(),
        "particles": table.particles,
        "slope": table.slope,
        "criteria": criteria.iter().map(|(n, ok, what)| json!({"name": n, "pass": ok, "test": what})).collect::<Vec<_>>(),
    });
    write_json(&out.join("egorov_summary.json"), &summary)?;
    let mut report = Report { outputs: vec!["egorov.csv".into(), "egorov_summary.json".into()], ..Default::default() };
    report.details.insert("slope".into(), json!(table.slope));
    let failed: Vec<&str> = criteria.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
    if check && !failed.is_empty() {
        report.failed_check = Some(failed.join(", "));
    }
    Ok(report)
}

fn two_scale_symbol(cfg: &RunConfig, pot: &ConicalPotential) -> Result<TwoMicrolocalSymbol, RunError> {
    let base = match cfg.diagnostics.base_symbol {
        Some(i) => cfg.build_symbols().swap_remove(i),
        None => Symbol::constant(pot.dim(), 1.0),
    };
    let profile = match &cfg.diagnostics.profile {
        ProfileSpec::One => YProfile::One,
        ProfileSpec::Compact { radius } => YProfile::Compact { radius: *radius },
        ProfileSpec::Directional { r0, direction } => YProfile::Directional { r0: *r0, direction: direction.clone() },
    };
    Ok(TwoMicrolocalSymbol::new(base, profile, pot.codim())?)
}

fn two_microlocal(cfg: &RunConfig, out: &Path) -> Result<Report, RunError> {
    let pot = cfg.build_potential();
    let b = two_scale_symbol(cfg, &pot)?;
    let times = snapshot_times(cfg);
    let last = times.len() - 1;
    let tables: Vec<Result<(Vec<[f64; 6]>, Vec<[f64; 4]>), RunError>> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let ev = run_eps(cfg, &pot, eps, &times)?;
            let psi = &ev.snapshots[last].psi;
            let mut split = Vec::new();
            for &r in &cfg.diagnostics.r {
                for &delta in &cfg.diagnostics.delta {
                    let s = split_observable(&b, psi, r, delta)?;
                    split.push([eps, r, delta, s.inner, s.outer, s.bulk]);
                }
            }
            let mut tube = Vec::new();
            if !cfg.diagnostics.tube_radii.is_empty() {
                for snap in &ev.snapshots {
                    let field = wigner_transform(&snap.psi)?;
                    for &r in &cfg.diagnostics.tube_radii {
                        tube.push([eps, snap.t, r, mass_near_s(&pot, &field, r, None)]);
                    }
                }
            }
            Ok((split, tube))
        })
        .collect();
    let mut w = csv_writer(&out.join("two_microlocal.csv"))?;
    w.write_record(["eps", "R", "delta", "inner", "outer", "bulk"])?;
    let mut tubes = Vec::new();
    for t in tables {
        let (split, tube) = t?;
        for row in split {
            w.write_record(row.iter().map(|v| num(*v)))?;
        }
        tubes.extend(tube);
    }
    w.flush()?;
    let mut report = Report { outputs: vec!["two_microlocal.csv".into()], ..Default::default() };
    if !tubes.is_empty() {
        let mut w = csv_writer(&out.join("mass_near_s.csv"))?;
        w.write_record(["eps", "t", "r", "mass"])?;
        for row in tubes {
            w.write_record(row.iter().map(|v| num(*v)))?;
        }
        w.flush()?;
        report.outputs.push("mass_near_s.csv".into());
    }
    report.details.insert("t".into(), json!(times[last]));
    Ok(report)
}
