//! `key=value` experiment configuration.
//!
//! Parsing collects every problem with its line number instead of stopping at
//! the first. `serialize` writes all keys in a fixed order with shortest
//! round-trip floats, so a canonical file parses and re-serializes to the same
//! bytes.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use ferro_core::solver::{FerroParams, Forcing, Integrator, SolverConfig};
use ferro_core::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based; 0 for problems not tied to one line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldName {
    U1,
    U2,
    Omega,
    M1,
    M2,
}

impl FieldName {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "u1" => FieldName::U1,
            "u2" => FieldName::U2,
            "omega" => FieldName::Omega,
            "m1" => FieldName::M1,
            "m2" => FieldName::M2,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldName::U1 => "u1",
            FieldName::U2 => "u2",
            FieldName::Omega => "omega",
            FieldName::M1 => "m1",
            FieldName::M2 => "m2",
        }
    }
}

/// `cos_amp·cos(ξ·x) + sin_amp·sin(ξ·x)` added to one component, with
/// `ξ = 2π/L·(k1, k2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub field: FieldName,
    pub k: (i64, i64),
    pub cos_amp: f64,
    pub sin_amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Zero,
    Modes(Vec<ModeSpec>),
    Random { seed: u64, band: f64, amplitude: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingSpec {
    None,
    DecayingMode {
        k_amp: f64,
        eta_decay: f64,
        mode: (i64, i64),
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n1: usize,
    pub n2: usize,
    pub length: f64,
    pub params: FerroParams,
    pub dt: f64,
    pub t_end: f64,
    pub galerkin_n: Option<f64>,
    pub integrator: Integrator,
    pub forcing: ForcingSpec,
    pub init: InitSpec,
    pub output_dir: PathBuf,
    pub output_stride: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n1: 64,
            n2: 64,
            length: 2.0 * PI,
            params: FerroParams::default(),
            dt: 1e-3,
            t_end: 1.0,
            galerkin_n: None,
            integrator: Integrator::Etdrk2,
            forcing: ForcingSpec::None,
            init: InitSpec::Zero,
            output_dir: PathBuf::from("out"),
            output_stride: 100,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "grid.n1",
    "grid.n2",
    "grid.length",
    "params.rho0",
    "params.k",
    "params.eta",
    "params.zeta",
    "params.eta_prime",
    "params.mu0",
    "params.sigma",
    "params.tau",
    "params.chi0",
    "solver.dt",
    "solver.t_end",
    "solver.galerkin_n",
    "solver.integrator",
    "forcing.kind",
    "forcing.K",
    "forcing.eta_decay",
    "forcing.mode",
    "init.kind",
    "output.dir",
    "output.stride",
];

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("`{v}` is not a finite number"))
}

/// A number, optionally followed by `pi`.
fn parse_length(v: &str) -> Result<f64, String> {
    match v.strip_suffix("pi") {
        Some(k) => parse_f64(k).map(|k| k * PI),
        None => parse_f64(v),
    }
}

fn format_length(v: f64) -> String {
    let k = v / PI;
    if k * PI == v && k.fract() == 0.0 {
        format!("{k}pi")
    } else {
        format!("{v}")
    }
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse::<usize>()
        .map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn parse_mode(v: &str) -> Result<(i64, i64), String> {
    let parts: Vec<&str> = v.split(',').collect();
    match parts.as_slice() {
        [a, b] => match (a.trim().parse(), b.trim().parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(format!("`{v}` is not an integer pair k1,k2")),
        },
        _ => Err(format!("`{v}` is not an integer pair k1,k2")),
    }
}

fn parse_modes(list: &str) -> Result<Vec<ModeSpec>, String> {
    list.split(';')
        .map(|entry| {
            let f: Vec<&str> = entry.split(':').collect();
            if f.len() != 5 {
                return Err(format!("mode `{entry}` must read field:k1:k2:cos_amp:sin_amp"));
            }
            let field =
                FieldName::parse(f[0]).ok_or_else(|| format!("unknown field `{}` (u1, u2, omega, m1, m2)", f[0]))?;
            let k1 = f[1].parse().map_err(|_| format!("`{}` is not an integer", f[1]))?;
            let k2 = f[2].parse().map_err(|_| format!("`{}` is not an integer", f[2]))?;
            Ok(ModeSpec {
                field,
                k: (k1, k2),
                cos_amp: parse_f64(f[3])?,
                sin_amp: parse_f64(f[4])?,
            })
        })
        .collect()
}

fn parse_init(v: &str) -> Result<InitSpec, String> {
    if v == "zero" {
        return Ok(InitSpec::Zero);
    }
    if let Some(list) = v.strip_prefix("modes:") {
        return parse_modes(list).map(InitSpec::Modes);
    }
    if let Some(args) = v.strip_prefix("random:") {
        let a: Vec<&str> = args.split(',').collect();
        if a.len() != 3 {
            return Err("random init reads random:<seed>,<band>,<amplitude>".into());
        }
        let seed = a[0].parse().map_err(|_| format!("`{}` is not a seed", a[0]))?;
        let band = parse_f64(a[1])?;
        let amplitude = parse_f64(a[2])?;
        if band < 1.0 || amplitude < 0.0 {
            return Err("random init needs band >= 1 and amplitude >= 0".into());
        }
        return Ok(InitSpec::Random { seed, band, amplitude });
    }
    if let Some(path) = v.strip_prefix("file:") {
        return Ok(InitSpec::File(PathBuf::from(path)));
    }
    Err(format!("init.kind `{v}` is not one of zero, modes:, random:, file:"))
}

fn format_init(init: &InitSpec) -> String {
    match init {
        InitSpec::Zero => "zero".into(),
        InitSpec::Modes(list) => {
            let items: Vec<String> = list
                .iter()
                .map(|m| format!("{}:{}:{}:{}:{}", m.field.name(), m.k.0, m.k.1, m.cos_amp, m.sin_amp))
                .collect();
            format!("modes:{}", items.join(";"))
        }
        InitSpec::Random { seed, band, amplitude } => format!("random:{seed},{band},{amplitude}"),
        InitSpec::File(p) => format!("file:{}", p.display()),
    }
}

#[derive(Default)]
struct Raw {
    forcing_kind: Option<(usize, String)>,
    k_amp: Option<(usize, f64)>,
    eta_decay: Option<(usize, f64)>,
    mode: Option<(usize, (i64, i64))>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut cfg = ExperimentConfig::default();
    let mut raw = Raw::default();
    let mut errors = Vec::new();
    let mut seen: Vec<(&str, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError {
                line: lineno,
                message: format!("expected key=value, found `{line}`"),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            errors.push(ConfigError {
                line: lineno,
                message: format!("unknown key `{key}`"),
            });
            continue;
        };
        if let Some((_, first)) = seen.iter().find(|(k, _)| *k == known) {
            errors.push(ConfigError {
                line: lineno,
                message: format!("duplicate key `{key}` (first set on line {first})"),
            });
            continue;
        }
        seen.push((known, lineno));
        if let Err(message) = apply(&mut cfg, &mut raw, known, value, lineno) {
            errors.push(ConfigError { line: lineno, message });
        }
    }
    resolve_forcing(&mut cfg, &raw, &mut errors);
    validate(&cfg, &seen, &mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

fn apply(cfg: &mut ExperimentConfig, raw: &mut Raw, key: &str, v: &str, line: usize) -> Result<(), String> {
    let param = |name: &str, x: f64| -> Result<f64, String> {
        if x > 0.0 {
            Ok(x)
        } else {
            Err(format!("{name} must be > 0"))
        }
    };
    match key {
        "grid.n1" => cfg.n1 = parse_usize(v)?,
        "grid.n2" => cfg.n2 = parse_usize(v)?,
        "grid.length" => cfg.length = parse_length(v)?,
        "params.rho0" => cfg.params.rho0 = param("rho0", parse_f64(v)?)?,
        "params.k" => cfg.params.k = param("k", parse_f64(v)?)?,
        "params.eta" => cfg.params.eta = param("eta", parse_f64(v)?)?,
        "params.zeta" => cfg.params.zeta = param("zeta", parse_f64(v)?)?,
        "params.eta_prime" => cfg.params.eta_prime = param("eta_prime", parse_f64(v)?)?,
        "params.mu0" => cfg.params.mu0 = param("mu0", parse_f64(v)?)?,
        "params.sigma" => cfg.params.sigma = param("sigma", parse_f64(v)?)?,
        "params.tau" => cfg.params.tau = param("tau", parse_f64(v)?)?,
        "params.chi0" => cfg.params.chi0 = param("chi0", parse_f64(v)?)?,
        "solver.dt" => cfg.dt = param("dt", parse_f64(v)?)?,
        "solver.t_end" => {
            let t = parse_f64(v)?;
            if t < 0.0 {
                return Err("t_end must be >= 0".into());
            }
            cfg.t_end = t;
        }
        "solver.galerkin_n" => {
            cfg.galerkin_n = if v == "none" {
                None
            } else {
                Some(param("galerkin_n", parse_f64(v)?)?)
            }
        }
        "solver.integrator" => cfg.integrator = v.parse().map_err(|e: ferro_core::FerroError| e.to_string())?,
        "forcing.kind" => raw.forcing_kind = Some((line, v.to_string())),
        "forcing.K" => {
            let k = parse_f64(v)?;
            if k < 0.0 {
                return Err("K must be >= 0".into());
            }
            raw.k_amp = Some((line, k));
        }
        "forcing.eta_decay" => {
            let e = parse_f64(v)?;
            if !(e > 0.0 && e < 1.0) {
                return Err("eta_decay must lie in (0, 1)".into());
            }
            raw.eta_decay = Some((line, e));
        }
        "forcing.mode" => raw.mode = Some((line, parse_mode(v)?)),
        "init.kind" => cfg.init = parse_init(v)?,
        "output.dir" => {
            if v.is_empty() {
                return Err("output.dir must not be empty".into());
            }
            cfg.output_dir = PathBuf::from(v)
        }
        "output.stride" => {
            let s = parse_usize(v)?;
            if s == 0 {
                return Err("stride must be >= 1".into());
            }
            cfg.output_stride = s;
        }
        _ => unreachable!("keys are checked against KEYS"),
    }
    Ok(())
}

fn resolve_forcing(cfg: &mut ExperimentConfig, raw: &Raw, errors: &mut Vec<ConfigError>) {
    let kind = raw.forcing_kind.clone().unwrap_or((0, "none".into()));
    let detail_lines = [
        raw.k_amp.map(|x| x.0),
        raw.eta_decay.map(|x| x.0),
        raw.mode.map(|x| x.0),
    ];
    match kind.1.as_str() {
        "decaying_mode" => {
            let mode = raw.mode.map_or((1, 0), |m| m.1);
            if mode == (0, 0) {
                errors.push(ConfigError {
                    line: raw.mode.map_or(kind.0, |m| m.0),
                    message: "forcing mode 0,0 has nonzero mean (incompatible with div(H+M) = F)".into(),
                });
            }
            cfg.forcing = ForcingSpec::DecayingMode {
                k_amp: raw.k_amp.map_or(1.0, |x| x.1),
                eta_decay: raw.eta_decay.map_or(0.5, |x| x.1),
                mode,
            };
        }
        other => {
            cfg.forcing = if other == "none" {
                ForcingSpec::None
            } else if let Some(path) = other.strip_prefix("file:") {
                ForcingSpec::File(PathBuf::from(path))
            } else {
                errors.push(ConfigError {
                    line: kind.0,
                    message: format!("forcing.kind `{other}` is not one of none, decaying_mode, file:"),
                });
                ForcingSpec::None
            };
            for line in detail_lines.into_iter().flatten() {
                errors.push(ConfigError {
                    line,
                    message: "forcing.K, forcing.eta_decay and forcing.mode need forcing.kind=decaying_mode".into(),
                });
            }
        }
    }
}

fn validate(cfg: &ExperimentConfig, seen: &[(&str, usize)], errors: &mut Vec<ConfigError>) {
    let line_of = |key: &str| seen.iter().find(|(k, _)| *k == key).map_or(0, |(_, l)| *l);
    for (key, n) in [("grid.n1", cfg.n1), ("grid.n2", cfg.n2)] {
        if n < 8 || n % 2 == 1 {
            errors.push(ConfigError {
                line: line_of(key),
                message: format!("{key} = {n} must be even and >= 8"),
            });
        }
    }
    if cfg.length.is_nan() || cfg.length <= 0.0 {
        errors.push(ConfigError {
            line: line_of("grid.length"),
            message: "grid.length must be > 0".into(),
        });
    }
    let steps = (cfg.t_end / cfg.dt).round();
    if (steps * cfg.dt - cfg.t_end).abs() > 1e-9 * cfg.t_end.max(cfg.dt) {
        errors.push(ConfigError {
            line: line_of("solver.t_end"),
            message: format!("t_end = {} is not a whole number of steps dt = {}", cfg.t_end, cfg.dt),
        });
    }
}

/// Canonical text: every key, fixed order, one per line.
pub fn serialize(cfg: &ExperimentConfig) -> String {
    let p = &cfg.params;
    let (kind, k_amp, eta_decay, mode) = match &cfg.forcing {
        ForcingSpec::None => ("none".to_string(), None, None, None),
        ForcingSpec::DecayingMode { k_amp, eta_decay, mode } => {
            ("decaying_mode".to_string(), Some(*k_amp), Some(*eta_decay), Some(*mode))
        }
        ForcingSpec::File(path) => (format!("file:{}", path.display()), None, None, None),
    };
    let mut lines = vec![
        format!("grid.n1={}", cfg.n1),
        format!("grid.n2={}", cfg.n2),
        format!("grid.length={}", format_length(cfg.length)),
        format!("params.rho0={}", p.rho0),
        format!("params.k={}", p.k),
        format!("params.eta={}", p.eta),
        format!("params.zeta={}", p.zeta),
        format!("params.eta_prime={}", p.eta_prime),
        format!("params.mu0={}", p.mu0),
        format!("params.sigma={}", p.sigma),
        format!("params.tau={}", p.tau),
        format!("params.chi0={}", p.chi0),
        format!("solver.dt={}", cfg.dt),
        format!("solver.t_end={}", cfg.t_end),
        format!(
            "solver.galerkin_n={}",
            cfg.galerkin_n.map_or("none".to_string(), |n| n.to_string())
        ),
        format!("solver.integrator={}", cfg.integrator.name()),
        format!("forcing.kind={kind}"),
    ];
    if let (Some(k), Some(e), Some(m)) = (k_amp, eta_decay, mode) {
        lines.push(format!("forcing.K={k}"));
        lines.push(format!("forcing.eta_decay={e}"));
        lines.push(format!("forcing.mode={},{}", m.0, m.1));
    }
    lines.push(format!("init.kind={}", format_init(&cfg.init)));
    lines.push(format!("output.dir={}", cfg.output_dir.display()));
    lines.push(format!("output.stride={}", cfg.output_stride));
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

impl ExperimentConfig {
    pub fn grid(&self) -> ferro_core::Result<Grid> {
        Grid::new(self.n1, self.n2, self.length)
    }

    pub fn solver_config(&self) -> ferro_core::Result<SolverConfig> {
        let mut c = SolverConfig::new(self.grid()?, self.params, self.dt, self.t_end);
        c.galerkin_n = self.galerkin_n;
        c.integrator = self.integrator;
        c.snapshot_stride = self.output_stride;
        Ok(c)
    }

    /// Forcing for the core; a file forcing is read as the `F` field of a dump.
    pub fn forcing(&self) -> Result<Forcing, crate::CliError> {
        Ok(match &self.forcing {
            ForcingSpec::None => Forcing::None,
            ForcingSpec::DecayingMode { k_amp, eta_decay, mode } => Forcing::DecayingMode {
                k_amp: *k_amp,
                eta_decay: *eta_decay,
                mode: *mode,
            },
            ForcingSpec::File(path) => {
                let dump = crate::dump::read_dump(path)?;
                Forcing::Field(dump.spectral_field("F", &self.grid()?)?)
            }
        })
    }
}
