//! Run configuration: JSON schema checks and the grid/time resolution rules,
//! all collected before anything runs.

use std::fmt;
use std::path::{Path, PathBuf};

use conical_core::{ConicalPotential, InitialStateSpec, PotentialSpec, Symbol, SymbolSpec};
use conical_wave::grid::{resolution_points, Axis, Grid};
use conical_wave::solver::{dt_max, potential_on_grid};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

/// Largest grid per axis we will run (dense 1D / 2D budgets).
pub const MAX_POINTS_1D: usize = 2048;
pub const MAX_POINTS_2D: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Schema,
    ResolutionRule,
}

/// One problem found in a config, located by a JSON pointer.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ViolationKind::Schema => "schema violation",
            ViolationKind::ResolutionRule => "resolution rule violated",
        };
        write!(f, "{tag} at {}: {}", if self.path.is_empty() { "/" } else { &self.path }, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{} config violation(s):\n{}", .0.len(), .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            ConfigError::Parse(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Computational box; the potential box when absent.
    #[serde(rename = "box", default)]
    pub bbox: Option<Vec<[f64; 2]>>,
    /// Points per axis; chosen per eps by the resolution rule when absent.
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    pub xi_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub t_final: f64,
    /// Time step; `dt_max(eps)` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Output spacing of `trajectory`.
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
}

fn default_sample_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize, Default, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    #[default]
    One,
    Compact {
        radius: f64,
    },
    Directional {
        r0: f64,
        direction: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RealizationSpec {
    WignerQuadrature {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    HusimiSampling {
        samples: usize,
    },
}

fn default_threshold() -> f64 {
    1e-12
}

impl Default for RealizationSpec {
    fn default() -> Self {
        RealizationSpec::WignerQuadrature { threshold: default_threshold() }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsBlock {
    #[serde(rename = "R", default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub tube_radii: Vec<f64>,
    /// y-profile of the two-scale symbol.
    #[serde(default)]
    pub profile: ProfileSpec,
    /// Index into `symbols` for the two-scale base symbol (constant 1 when absent).
    #[serde(default)]
    pub base_symbol: Option<usize>,
    #[serde(default)]
    pub realization: RealizationSpec,
    #[serde(default)]
    pub exclusion_radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StartPoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    pub grid: GridBlock,
    pub initial_state: InitialStateSpec,
    pub time: TimeBlock,
    pub eps_list: Vec<f64>,
    pub symbols: Vec<SymbolSpec>,
    pub diagnostics: DiagnosticsBlock,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Classical start for `trajectory`; the coherent centre when absent.
    pub classical_start: Option<StartPoint>,
    /// Declares that trajectories will cross `S`: `w > 0` and full-rank `dg`
    /// are then checked on the box at load.
    pub expect_crossings: bool,
    /// SHA-256 of the config file bytes.
    pub sha256: String,
}

const REQUIRED: [&str; 6] = ["potential", "grid", "initial_state", "time", "eps_list", "seed"];
const OPTIONAL: [&str; 5] = ["symbols", "diagnostics", "output", "classical_start", "expect_crossings"];

/// Lattice points per axis for the weight and rank checks.
const CHECK_LATTICE: usize = 17;

fn schema(path: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { kind: ViolationKind::Schema, path: path.into(), message: message.into() }
}

fn rule(path: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { kind: ViolationKind::ResolutionRule, path: path.into(), message: message.into() }
}

fn field<T: DeserializeOwned>(root: &serde_json::Map<String, Value>, key: &str, out: &mut Vec<Violation>) -> Option<T> {
    let v = root.get(key)?;
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            out.push(schema(format!("/{key}"), e.to_string()));
            None
        }
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    parse_config(&bytes)
}

/// Validates config bytes; every violation found is reported.
pub fn parse_config(bytes: &[u8]) -> Result<RunConfig, ConfigError> {
    use sha2::{Digest, Sha256};
    let sha256 = format!("{:x}", Sha256::digest(bytes));
    let value: Value = serde_json::from_slice(bytes).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let Some(root) = value.as_object() else {
        return Err(ConfigError::Invalid(vec![schema("", "config must be a JSON object")]));
    };
    let mut v = Vec::new();
    for key in REQUIRED {
        if !root.contains_key(key) {
            v.push(schema(format!("/{key}"), "required field is missing"));
        }
    }
    for key in root.keys() {
        if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
            v.push(schema(format!("/{key}"), "unknown field"));
        }
    }
    let potential: Option<PotentialSpec> = field(root, "potential", &mut v);
    let grid: Option<GridBlock> = field(root, "grid", &mut v);
    let initial_state: Option<InitialStateSpec> = field(root, "initial_state", &mut v);
    let time: Option<TimeBlock> = field(root, "time", &mut v);
    let eps_list: Option<Vec<f64>> = field(root, "eps_list", &mut v);
    let seed: Option<u64> = field(root, "seed", &mut v);
    let diagnostics: DiagnosticsBlock = field(root, "diagnostics", &mut v).unwrap_or_default();
    let output: Option<PathBuf> = field(root, "output", &mut v);
    let classical_start: Option<StartPoint> = field(root, "classical_start", &mut v);
    let expect_crossings: bool = field(root, "expect_crossings", &mut v).unwrap_or(false);
    let mut symbols = Vec::new();
    match root.get("symbols") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                match serde_json::from_value::<SymbolSpec>(item.clone()) {
                    Ok(s) => symbols.push(s),
                    Err(e) => v.push(schema(format!("/symbols/{i}"), e.to_string())),
                }
            }
        }
        Some(_) => v.push(schema("/symbols", "expected an array of symbols")),
    }

    // field-level checks that need no other block
    if let Some(eps) = &eps_list {
        if eps.is_empty() {
            v.push(schema("/eps_list", "at least one eps is required"));
        }
        for (i, e) in eps.iter().enumerate() {
            if !(*e > 0.0 && *e <= 1.0) {
                v.push(schema(format!("/eps_list/{i}"), format!("eps must lie in (0, 1], got {e}")));
            }
        }
    }
    if let Some(t) = &time {
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            v.push(schema("/time/t_final", "must be finite and >= 0"));
        }
        if let Some(dt) = t.dt {
            if !(dt > 0.0) {
                v.push(schema("/time/dt", "must be > 0"));
            }
        }
        if !(t.sample_dt > 0.0) {
            v.push(schema("/time/sample_dt", "must be > 0"));
        }
        for (i, s) in t.snapshot_times.iter().enumerate() {
            if !(*s >= 0.0 && *s <= t.t_final) {
                v.push(schema(format!("/time/snapshot_times/{i}"), format!("{s} is outside [0, t_final]")));
            }
        }
    }
    if let Some(g) = &grid {
        if !(g.xi_max > 0.0) {
            v.push(schema("/grid/xi_max", "must be > 0"));
        }
    }
    for (key, list) in [("R", &diagnostics.r), ("delta", &diagnostics.delta), ("tube_radii", &diagnostics.tube_radii)] {
        for (i, x) in list.iter().enumerate() {
            if !(*x > 0.0) {
                v.push(schema(format!("/diagnostics/{key}/{i}"), "must be > 0"));
            }
        }
    }
    if let Some(b) = diagnostics.base_symbol {
        if b >= symbols.len() {
            v.push(schema("/diagnostics/base_symbol", format!("index {b} but only {} symbols", symbols.len())));
        }
    }

    // cross-block checks
    let pot = potential.as_ref().and_then(|spec| match ConicalPotential::new(spec) {
        Ok(p) => Some(p),
        Err(e) => {
            v.push(schema("/potential", e.to_string()));
            None
        }
    });
    if let Some(p) = &pot {
        let d = p.dim();
        if expect_crossings {
            if let Err(e) = p.check_positive_weight(CHECK_LATTICE) {
                v.push(schema("/potential/w", format!("runs that expect crossings need w > 0 on the box: {e}")));
            }
            if let Err(e) = p.check_full_rank(CHECK_LATTICE) {
                v.push(schema("/potential/g", e.to_string()));
            }
        }
        for (i, s) in symbols.iter().enumerate() {
            if let Err(e) = Symbol::from_spec(s, d) {
                v.push(schema(format!("/symbols/{i}"), e.to_string()));
            }
        }
        if let InitialStateSpec::Coherent { q, p: mom } = initial_state.as_ref().unwrap_or(&InitialStateSpec::Coherent { q: vec![0.0; d], p: vec![0.0; d] }) {
            if q.len() != d || mom.len() != d {
                v.push(schema("/initial_state", format!("coherent centre must have {d} components")));
            }
        }
        if let Some(s) = &classical_start {
            if s.x.len() != d || s.xi.len() != d {
                v.push(schema("/classical_start", format!("start point must have {d} components")));
            }
        }
        if let ProfileSpec::Directional { direction, .. } = &diagnostics.profile {
            if direction.len() != p.codim() {
                v.push(schema("/diagnostics/profile/direction", format!("must have {} components", p.codim())));
            }
        }
        if let Some(g) = &grid {
            if let Some(b) = &g.bbox {
                if b.len() != d {
                    v.push(schema("/grid/box", format!("expected {d} intervals")));
                }
                for (k, [lo, hi]) in b.iter().enumerate() {
                    if !(lo < hi) {
                        v.push(schema(format!("/grid/box/{k}"), "empty interval"));
                    }
                }
            }
            if let Some(n) = &g.n {
                if n.len() != d {
                    v.push(schema("/grid/n", format!("expected {d} entries")));
                }
            }
        }
    }

    if !v.is_empty() {
        return Err(ConfigError::Invalid(v));
    }
    let cfg = RunConfig {
        potential: potential.expect("checked"),
        grid: grid.expect("checked"),
        initial_state: initial_state.expect("checked"),
        time: time.expect("checked"),
        eps_list: eps_list.expect("checked"),
        symbols,
        diagnostics,
        seed: seed.expect("checked"),
        output,
        classical_start,
        expect_crossings,
        sha256,
    };
    let pot = pot.expect("checked");
    let rules = resolution_violations(&cfg, &pot);
    if !rules.is_empty() {
        return Err(ConfigError::Invalid(rules));
    }
    Ok(cfg)
}

/// The solver's resolution rules, checked for every eps.
fn resolution_violations(cfg: &RunConfig, pot: &ConicalPotential) -> Vec<Violation> {
    let mut v = Vec::new();
    let d = pot.dim();
    let cap = if d == 1 { MAX_POINTS_1D } else { MAX_POINTS_2D };
    let bbox = cfg.grid_box(pot);
    for (i, &eps) in cfg.eps_list.iter().enumerate() {
        let ns = cfg.points_for(eps, &bbox);
        for (k, (&n, [lo, hi])) in ns.iter().zip(&bbox).enumerate() {
            let len = hi - lo;
            let need = 1.5 * len * cfg.grid.xi_max / (std::f64::consts::PI * eps);
            let at = if cfg.grid.n.is_some() { format!("/grid/n/{k}") } else { format!("/eps_list/{i}") };
            if (n as f64) < need {
                v.push(rule(
                    at.clone(),
                    format!("grid resolution rule n >= 1.5 L xi_max / (pi eps): eps = {eps} needs n >= {} on axis {k}, have {n}", need.ceil()),
                ));
            }
            let dx = len / n as f64;
            if dx > eps.sqrt() / 4.0 {
                v.push(rule(at.clone(), format!("initial-state sampling rule dx <= sqrt(eps)/4: eps = {eps} gives dx = {dx:.4e} on axis {k}")));
            }
            if n > cap {
                v.push(rule(at, format!("grid size cap n <= {cap} per axis in {d}D: eps = {eps} needs n = {n} on axis {k}")));
            }
        }
        if let Some(dt) = cfg.time.dt {
            if let Ok(grid) = cfg.grid_for(eps, pot) {
                if let Ok(vals) = potential_on_grid(pot, &grid) {
                    let vmax = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    let limit = dt_max(eps, vmax);
                    if dt > limit * (1.0 + 1e-12) {
                        v.push(rule("/time/dt", format!("time-step rule dt <= min(0.01, pi eps / (4 V_max)): eps = {eps} allows dt <= {limit:.4e}")));
                    }
                }
            }
        }
        for &r in &cfg.diagnostics.r {
            for &delta in &cfg.diagnostics.delta {
                if r * eps >= delta / 2.0 {
                    v.push(rule("/diagnostics", format!("scale ordering rule R eps < delta/2: eps = {eps}, R = {r}, delta = {delta}")));
                }
            }
        }
    }
    v
}

impl RunConfig {
    pub fn build_potential(&self) -> ConicalPotential {
        ConicalPotential::new(&self.potential).expect("validated at load")
    }

    pub fn build_symbols(&self) -> Vec<Symbol> {
        let d = self.potential.dim;
        self.symbols.iter().map(|s| Symbol::from_spec(s, d).expect("validated at load")).collect()
    }

    pub fn grid_box(&self, pot: &ConicalPotential) -> Vec<[f64; 2]> {
        self.grid.bbox.clone().unwrap_or_else(|| pot.bbox().to_vec())
    }

    /// Points per axis at `eps`: the configured `n`, or the smallest power of
    /// two meeting both the momentum and the sampling rule.
    pub fn points_for(&self, eps: f64, bbox: &[[f64; 2]]) -> Vec<usize> {
        match &self.grid.n {
            Some(n) => n.clone(),
            None => bbox
                .iter()
                .map(|[lo, hi]| {
                    let sampling = ((hi - lo) / (eps.sqrt() / 4.0)).ceil() as usize;
                    resolution_points(hi - lo, self.grid.xi_max, eps).max(sampling.next_power_of_two())
                })
                .collect(),
        }
    }

    pub fn grid_for(&self, eps: f64, pot: &ConicalPotential) -> conical_wave::Result<Grid> {
        let bbox = self.grid_box(pot);
        let axes = self
            .points_for(eps, &bbox)
            .iter()
            .zip(&bbox)
            .map(|(&n, [lo, hi])| Axis::new(*lo, *hi, n))
            .collect::<conical_wave::Result<Vec<_>>>()?;
        Grid::new(axes)
    }
}
