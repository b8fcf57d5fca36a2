//! Run configuration in a flat `key = value` format with `[section]` headers.
//!
//! ```text
//! [grid]
//! n = 16
//! active_axes = 0, 3
//!
//! [initial]
//! kind = balanced_psi
//! amplitude = 0.01
//! axes = 0, 3
//!
//! [flow]
//! t_max = 0.1
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Unknown
//! sections or keys, repeated keys and malformed values are errors carrying
//! the 1-based line number. [`render`] writes every field, defaults included.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, PhiSource, RhsMode};
use crate::init::{self, Profile};
use crate::lattice::{GridSpec, REAL_AXES};
use crate::monitor::MonitorConfig;
use crate::tensor::MetricField;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    pub active_axes: Vec<usize>,
    pub periods: [f64; REAL_AXES],
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 16,
            active_axes: vec![0],
            periods: [1.0; REAL_AXES],
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, &self.active_axes)?.with_periods(self.periods)
    }
}

/// Where the starting metric (or the Φ reference metric) comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Flat,
    Conformal(Profile),
    KahlerPotential(Profile),
    BalancedPsi(Profile),
    Snapshot(PathBuf),
}

impl InitialData {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialData::Flat => "flat",
            InitialData::Conformal(_) => "conformal",
            InitialData::KahlerPotential(_) => "kahler_potential",
            InitialData::BalancedPsi(_) => "balanced_psi",
            InitialData::Snapshot(_) => "snapshot",
        }
    }

    pub fn profile(&self) -> Option<&Profile> {
        match self {
            InitialData::Conformal(p) | InitialData::KahlerPotential(p) | InitialData::BalancedPsi(p) => Some(p),
            _ => None,
        }
    }

    /// Built-in generator with the audit defaults: amplitude 0.01, decay
    /// 0.05 along the first active axis of each of the first two complex
    /// directions present in `grid`.
    pub fn generator(name: &str, grid: &GridSpec) -> Result<Self> {
        let mut axes: Vec<usize> = Vec::new();
        for a in grid.active_axes() {
            if axes.len() < 2 && axes.iter().all(|b| b / 2 != a / 2) {
                axes.push(a);
            }
        }
        let p = Profile::new(0.01, &axes).with_decay(0.05);
        match name {
            "flat" => Ok(InitialData::Flat),
            "conformal" => Ok(InitialData::Conformal(p)),
            "kahler_potential" | "kahler" => Ok(InitialData::KahlerPotential(p)),
            "balanced_psi" | "balanced" => Ok(InitialData::BalancedPsi(p)),
            _ => Err(Error::InvalidInput(format!(
                "unknown generator '{name}' (expected flat, conformal, kahler_potential or balanced_psi)"
            ))),
        }
    }

    /// Metric on `grid`. Snapshots are loaded and must live on the same grid.
    pub fn build(&self, grid: &GridSpec) -> Result<MetricField> {
        match self {
            InitialData::Flat => Ok(MetricField::identity(grid)),
            InitialData::Conformal(p) => init::conformal(grid, p),
            InitialData::KahlerPotential(p) => init::kahler_potential(grid, p),
            InitialData::BalancedPsi(p) => init::balanced_psi(grid, p),
            InitialData::Snapshot(path) => {
                let s = crate::snapshot::load_snapshot(path)?;
                if s.g.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                Ok(s.g)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub emit_snapshots: bool,
    pub emit_plot_data: bool,
    /// Worker threads; 0 lets the runtime choose, 1 forces serial execution.
    pub threads: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("aflow_out"),
            emit_snapshots: true,
            emit_plot_data: true,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub initial: InitialData,
    /// `phi_source = chern_weil_background` uses this metric, or the initial
    /// metric when absent.
    pub phi_reference: Option<InitialData>,
    pub flow: FlowConfig,
    pub monitor: MonitorConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridConfig::default(),
            initial: InitialData::Flat,
            phi_reference: None,
            flow: FlowConfig::default(),
            monitor: MonitorConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Flow configuration with the Φ reference metric built on `grid`.
    pub fn flow_config(&self, grid: &GridSpec) -> Result<FlowConfig> {
        let mut fc = self.flow.clone();
        if let (PhiSource::ChernWeilBackground(_), Some(r)) = (&fc.phi_source, &self.phi_reference) {
            fc.phi_source = PhiSource::ChernWeilBackground(Some(r.build(grid)?));
        }
        Ok(fc)
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

#[derive(Default)]
struct ProfileKeys {
    kind: Option<(usize, String)>,
    amplitude: Option<f64>,
    axes: Option<Vec<usize>>,
    decay: Option<f64>,
    path: Option<PathBuf>,
    first_line: usize,
}

impl ProfileKeys {
    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<bool> {
        match key {
            "kind" => self.kind = Some((line, value.to_string())),
            "amplitude" => self.amplitude = Some(parse_f64(value, line, key)?),
            "axes" | "axis" => self.axes = Some(parse_list(value, line, key)?),
            "decay" => {
                let d = parse_f64(value, line, key)?;
                if !(0.0..1.0).contains(&d) {
                    return Err(err(line, "decay must lie in [0, 1)"));
                }
                self.decay = Some(d);
            }
            "path" => self.path = Some(PathBuf::from(value)),
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn build(self, section: &str, allow_initial: bool) -> Result<Option<InitialData>> {
        let (line, kind) = match self.kind {
            Some(k) => k,
            None if self.first_line == 0 => return Ok(None),
            None => return Err(err(self.first_line, format!("[{section}] needs a kind"))),
        };
        let profile = || {
            Profile::new(self.amplitude.unwrap_or(0.01), &self.axes.clone().unwrap_or_else(|| vec![0]))
                .with_decay(self.decay.unwrap_or(0.0))
        };
        let unused_profile = self.amplitude.is_some() || self.axes.is_some() || self.decay.is_some();
        let d = match kind.as_str() {
            "initial" if allow_initial => return Ok(None),
            "flat" => InitialData::Flat,
            "conformal" => InitialData::Conformal(profile()),
            "kahler_potential" => InitialData::KahlerPotential(profile()),
            "balanced_psi" => InitialData::BalancedPsi(profile()),
            "snapshot" => {
                let path = self.path.clone().ok_or_else(|| err(line, "snapshot needs a path"))?;
                InitialData::Snapshot(path)
            }
            other => {
                return Err(err(
                    line,
                    format!("unknown kind '{other}' (expected flat, conformal, kahler_potential, balanced_psi or snapshot)"),
                ))
            }
        };
        if d.profile().is_none() && unused_profile {
            return Err(err(line, format!("kind '{kind}' takes no amplitude, axes or decay")));
        }
        if !matches!(d, InitialData::Snapshot(_)) && self.path.is_some() {
            return Err(err(line, format!("kind '{kind}' takes no path")));
        }
        Ok(Some(d))
    }
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(err(line, format!("{key}: expected a finite real number, got '{v}'"))),
    }
}

fn parse_usize(v: &str, line: usize, key: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| err(line, format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_bool(v: &str, line: usize, key: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_list<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| err(line, format!("{key}: bad list element '{}'", s.trim()))))
        .collect()
}

fn parse_reals(v: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    let xs: Vec<f64> = parse_list(v, line, key)?;
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(err(line, format!("{key}: values must be finite")));
    }
    Ok(xs)
}

/// Parses and validates a configuration.
/// Drops a trailing `# ...` or `; ...` comment. The marker must follow
/// whitespace, so paths containing `#` survive.
fn strip_comment(raw: &str) -> &str {
    let b = raw.as_bytes();
    for i in 1..b.len() {
        if (b[i] == b'#' || b[i] == b';') && b[i - 1].is_ascii_whitespace() {
            return &raw[..i];
        }
    }
    raw
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut seen: Vec<(String, String)> = Vec::new();
    let mut initial = ProfileKeys::default();
    let mut reference = ProfileKeys::default();
    let mut phi_kind: Option<(usize, String)> = None;
    let mut phi_coeffs: Option<(usize, Vec<f64>)> = None;
    let mut axes_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = strip_comment(raw).trim();
        if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, "section header must end with ']'"))?
                .trim();
            if !["grid", "initial", "phi_reference", "flow", "monitor", "output"].contains(&name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            section = name.to_string();
            match name {
                "initial" if initial.first_line == 0 => initial.first_line = line,
                "phi_reference" if reference.first_line == 0 => reference.first_line = line,
                _ => {}
            }
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{s}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if section.is_empty() {
            return Err(err(line, format!("key '{key}' appears before any section")));
        }
        if seen.iter().any(|(sec, k)| *sec == section && k == key) {
            return Err(err(line, format!("duplicate key '{key}' in [{section}]")));
        }
        seen.push((section.clone(), key.to_string()));
        let unknown = || err(line, format!("unknown key '{key}' in [{section}]"));
        match section.as_str() {
            "grid" => match key {
                "n" => {
                    let n = parse_usize(value, line, key)?;
                    if n < 2 || n % 2 != 0 {
                        return Err(err(line, "n must be an even integer ≥ 2"));
                    }
                    cfg.grid.n = n;
                }
                "active_axes" => {
                    let axes: Vec<usize> = parse_list(value, line, key)?;
                    if axes.iter().any(|&a| a >= REAL_AXES) {
                        return Err(err(line, "active_axes entries must lie in 0..=5"));
                    }
                    cfg.grid.active_axes = axes;
                    axes_line = line;
                }
                "periods" => {
                    let p = parse_reals(value, line, key)?;
                    if p.len() != REAL_AXES || p.iter().any(|&x| x <= 0.0) {
                        return Err(err(line, "periods needs 6 positive values"));
                    }
                    cfg.grid.periods.copy_from_slice(&p);
                }
                _ => return Err(unknown()),
            },
            "initial" => {
                if !initial.set(key, value, line)? {
                    return Err(unknown());
                }
            }
            "phi_reference" => {
                if !reference.set(key, value, line)? {
                    return Err(unknown());
                }
            }
            "flow" => {
                let f = &mut cfg.flow;
                match key {
                    "alpha_prime" => {
                        f.alpha_prime = parse_f64(value, line, key)?;
                        if f.alpha_prime < 0.0 {
                            return Err(err(line, "alpha_prime must be ≥ 0"));
                        }
                    }
                    "phi_source" => phi_kind = Some((line, value.to_string())),
                    "phi_coefficients" => phi_coeffs = Some((line, parse_reals(value, line, key)?)),
                    "dt_initial" => {
                        f.dt_initial = parse_f64(value, line, key)?;
                        if f.dt_initial <= 0.0 {
                            return Err(err(line, "dt_initial must be > 0"));
                        }
                    }
                    "dt_safety" => {
                        f.dt_safety = parse_f64(value, line, key)?;
                        if !(f.dt_safety > 0.0 && f.dt_safety <= 1.0) {
                            return Err(err(line, "dt_safety must lie in (0, 1]"));
                        }
                    }
                    "t_max" => {
                        f.t_max = parse_f64(value, line, key)?;
                        if f.t_max <= 0.0 {
                            return Err(err(line, "t_max must be > 0"));
                        }
                    }
                    "rhs_mode" => {
                        f.rhs_mode = RhsMode::parse(value).ok_or_else(|| {
                            err(line, format!("rhs_mode: expected psi_evolution, metric_evolution or cross_check, got '{value}'"))
                        })?
                    }
                    "cross_check_tolerance" => {
                        f.cross_check_tolerance = parse_f64(value, line, key)?;
                        if f.cross_check_tolerance <= 0.0 {
                            return Err(err(line, "cross_check_tolerance must be > 0"));
                        }
                    }
                    "max_retries" => f.max_retries = parse_usize(value, line, key)?,
                    _ => return Err(unknown()),
                }
            }
            "monitor" => {
                let m = &mut cfg.monitor;
                match key {
                    "p" => m.p = parse_f64(value, line, key)?,
                    "a0" => m.a0 = parse_f64(value, line, key)?,
                    "cadence" => m.cadence = parse_usize(value, line, key)?,
                    "max_order" => m.max_order = parse_usize(value, line, key)?,
                    _ => return Err(unknown()),
                }
                m.validate().map_err(|e| err(line, e.to_string()))?;
            }
            "output" => {
                let o = &mut cfg.output;
                match key {
                    "directory" => o.directory = PathBuf::from(value),
                    "emit_snapshots" => o.emit_snapshots = parse_bool(value, line, key)?,
                    "emit_plot_data" => o.emit_plot_data = parse_bool(value, line, key)?,
                    "threads" => o.threads = parse_usize(value, line, key)?,
                    _ => return Err(unknown()),
                }
            }
            _ => unreachable!(),
        }
    }

    if let Some((line, kind)) = &phi_kind {
        cfg.flow.phi_source = match kind.as_str() {
            "zero" => PhiSource::Zero,
            "constant_form" => {
                let (_, c) = phi_coeffs
                    .clone()
                    .ok_or_else(|| err(*line, "constant_form needs phi_coefficients"))?;
                if c.len() != 3 && c.len() != 18 {
                    return Err(err(*line, "phi_coefficients needs 3 diagonal or 18 re/im values"));
                }
                PhiSource::ConstantForm(c)
            }
            "chern_weil_background" => PhiSource::ChernWeilBackground(None),
            other => {
                return Err(err(
                    *line,
                    format!("phi_source: expected zero, constant_form or chern_weil_background, got '{other}'"),
                ))
            }
        };
    }
    if let Some((line, _)) = &phi_coeffs {
        if !matches!(cfg.flow.phi_source, PhiSource::ConstantForm(_)) {
            return Err(err(*line, "phi_coefficients is only valid with phi_source = constant_form"));
        }
    }

    let init_line = initial.first_line;
    cfg.initial = initial.build("initial", false)?.unwrap_or(InitialData::Flat);
    let ref_line = reference.first_line;
    cfg.phi_reference = reference.build("phi_reference", true)?;
    if cfg.phi_reference.is_some() && !matches!(cfg.flow.phi_source, PhiSource::ChernWeilBackground(_)) {
        return Err(err(ref_line, "[phi_reference] requires phi_source = chern_weil_background"));
    }

    let grid = cfg.grid.build().map_err(|e| err(axes_line, e.to_string()))?;
    for (d, line) in [(Some(&cfg.initial), init_line), (cfg.phi_reference.as_ref(), ref_line)] {
        if let Some(p) = d.and_then(InitialData::profile) {
            if p.axes.is_empty() {
                return Err(err(line, "profile axes must not be empty"));
            }
            if let Some(a) = p.axes.iter().find(|a| !grid.is_active(**a)) {
                return Err(err(line, format!("profile axis {a} is not an active grid axis")));
            }
        }
    }
    cfg.flow.validate().map_err(|e| err(0, e.to_string()))?;
    cfg.monitor.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn render_initial(out: &mut String, d: &InitialData) {
    let _ = writeln!(out, "kind = {}", d.kind());
    if let Some(p) = d.profile() {
        let _ = writeln!(out, "amplitude = {:?}", p.amplitude);
        let _ = writeln!(out, "axes = {}", join(&p.axes));
        let _ = writeln!(out, "decay = {:?}", p.decay);
    }
    if let InitialData::Snapshot(path) = d {
        let _ = writeln!(out, "path = {}", path.display());
    }
}

/// Writes every field, so the output documents all defaults in effect.
pub fn render(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let f = &cfg.flow;
    let periods: Vec<String> = cfg.grid.periods.iter().map(|p| format!("{p:?}")).collect();
    let _ = writeln!(s, "[grid]\nn = {}\nactive_axes = {}\nperiods = {}\n", cfg.grid.n, join(&cfg.grid.active_axes), periods.join(", "));
    s.push_str("[initial]\n");
    render_initial(&mut s, &cfg.initial);
    s.push('\n');
    if let Some(r) = &cfg.phi_reference {
        s.push_str("[phi_reference]\n");
        render_initial(&mut s, r);
        s.push('\n');
    }
    let (phi, coeffs) = match &f.phi_source {
        PhiSource::Zero => ("zero", None),
        PhiSource::ConstantForm(c) => ("constant_form", Some(c)),
        PhiSource::ChernWeilBackground(_) => ("chern_weil_background", None),
    };
    let _ = writeln!(s, "[flow]\nalpha_prime = {:?}\nphi_source = {phi}", f.alpha_prime);
    if let Some(c) = coeffs {
        let c: Vec<String> = c.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "phi_coefficients = {}", c.join(", "));
    }
    let _ = writeln!(
        s,
        "dt_initial = {:?}\ndt_safety = {:?}\nt_max = {:?}\nrhs_mode = {}\ncross_check_tolerance = {:?}\nmax_retries = {}\n",
        f.dt_initial,
        f.dt_safety,
        f.t_max,
        f.rhs_mode.name(),
        f.cross_check_tolerance,
        f.max_retries
    );
    let m = &cfg.monitor;
    let _ = writeln!(s, "[monitor]\np = {:?}\na0 = {:?}\ncadence = {}\nmax_order = {}\n", m.p, m.a0, m.cadence, m.max_order);
    let o = &cfg.output;
    let _ = write!(
        s,
        "[output]\ndirectory = {}\nemit_snapshots = {}\nemit_plot_data = {}\nthreads = {}\n",
        o.directory.display(),
        o.emit_snapshots,
        o.emit_plot_data,
        o.threads
    );
    s
}
