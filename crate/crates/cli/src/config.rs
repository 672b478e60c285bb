//! Experiment configuration: a small sectioned key-value format.
//!
//! The parser validates the whole file and reports *every* violation with
//! its line number, instead of bailing at the first.  A parsed config can
//! be re-emitted in canonical form; parsing that emission reproduces the
//! config exactly (floats are printed in shortest round-trip form).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rotor::kernel::EXPANSION_T_MIN;
use rotor::lattice::ModelParams;

/// The experiment families the runner knows how to execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    KernelTable,
    GroundStateSweep,
    Window,
    McScan,
    Probe,
    OracleCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::KernelTable,
        ExperimentKind::GroundStateSweep,
        ExperimentKind::Window,
        ExperimentKind::McScan,
        ExperimentKind::Probe,
        ExperimentKind::OracleCheck,
    ];
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::KernelTable => "kernel-table",
            ExperimentKind::GroundStateSweep => "ground-state-sweep",
            ExperimentKind::Window => "window",
            ExperimentKind::McScan => "mc-scan",
            ExperimentKind::Probe => "probe",
            ExperimentKind::OracleCheck => "oracle-check",
        };
        f.write_str(s)
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| {
                format!(
                    "unknown experiment kind {s:?}; expected one of kernel-table, \
                     ground-state-sweep, window, mc-scan, probe, oracle-check"
                )
            })
    }
}

/// Markov chain settings shared by the sampling experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainSettings {
    pub sweeps: usize,
    pub burn_in: usize,
    pub proposal_width: f64,
    pub record_stride: usize,
}

/// Sweep/scan ranges consumed by the individual experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRanges {
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub t_list: Vec<f64>,
    pub sides: Vec<usize>,
    pub r_in: Vec<usize>,
    pub bins: usize,
}

/// A fully validated experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub model: ModelParams,
    pub chain: ChainSettings,
    pub scan: ScanRanges,
}

/// One validation failure, tagged with the source line (0 = default value
/// or a cross-key constraint with no single source line).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        kind: ExperimentKind::KernelTable,
        seed: 0,
        model: ModelParams {
            beta: 1.0,
            j: 1.0,
            h: 0.2,
            t: 10f64.ln(),
            dim: 1,
            side: 3,
        },
        chain: ChainSettings {
            sweeps: 20_000,
            burn_in: 2_000,
            proposal_width: 1.0,
            record_stride: 1,
        },
        scan: ScanRanges {
            t_min: 1.0,
            t_max: 5.0,
            t_step: 0.01,
            t_list: vec![3.0, 5.0, 10.0],
            sides: vec![4, 6, 8],
            r_in: vec![2, 4],
            bins: 64,
        },
    }
}

struct Parser {
    cfg: ExperimentConfig,
    seen: HashMap<String, usize>,
    errors: Vec<ConfigError>,
    seed_set: bool,
}

impl Parser {
    fn err(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ConfigError { line, message: message.into() });
    }

    fn line_of(&self, key: &str) -> usize {
        self.seen.get(key).copied().unwrap_or(0)
    }

    fn record(&mut self, section: &str, key: &str, line: usize) -> bool {
        let full = format!("{section}.{key}");
        if let Some(prev) = self.seen.insert(full.clone(), line) {
            self.err(line, format!("duplicate key {full} (first set on line {prev})"));
            return false;
        }
        true
    }

    fn parse_f64(&mut self, key: &str, value: &str, line: usize) -> Option<f64> {
        match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.err(line, format!("{key}: expected a finite number, got {value:?}"));
                None
            }
        }
    }

    fn parse_usize(&mut self, key: &str, value: &str, line: usize) -> Option<usize> {
        match value.parse::<usize>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.err(line, format!("{key}: expected a non-negative integer, got {value:?}"));
                None
            }
        }
    }

    fn parse_list<T: FromStr>(&mut self, key: &str, value: &str, line: usize) -> Option<Vec<T>> {
        let items: Result<Vec<T>, _> = value
            .split(',')
            .map(|s| s.trim().parse::<T>())
            .collect();
        match items {
            Ok(v) if !v.is_empty() => Some(v),
            _ => {
                self.err(
                    line,
                    format!("{key}: expected a non-empty comma-separated list, got {value:?}"),
                );
                None
            }
        }
    }

    fn apply(&mut self, section: &str, key: &str, value: &str, line: usize) {
        if !self.record(section, key, line) {
            return;
        }
        match (section, key) {
            ("experiment", "kind") => match value.parse::<ExperimentKind>() {
                Ok(k) => self.cfg.kind = k,
                Err(e) => self.err(line, e),
            },
            ("experiment", "seed") => {
                match value.parse::<u64>() {
                    Ok(v) => {
                        self.cfg.seed = v;
                        self.seed_set = true;
                    }
                    Err(_) => self.err(line, format!("seed: expected an unsigned integer, got {value:?}")),
                }
            }
            ("model", "beta") => {
                if let Some(v) = self.parse_f64(key, value, line) {
                    self.cfg.model.beta = v;
                }
            }
            ("model", "j") => {
                if let Some(v) = self.parse_f64(key, value, line) {
                    self.cfg.model.j = v;
                }
            }
            ("model", "h") => {
                if let Some(v) = self.parse_f64(key, value, line) {
                    self.cfg.model.h = v;
                }
            }
            ("model", "t") => {
                if let Some(v) = self.parse_f64(key, value, line) {
                    self.cfg.model.t = v;
                }
            }
            ("model", "dim") => {
                if let Some(v) = self.parse_usize(key, value, line) {
                    self.cfg.model.dim = v;
                }
            }
            ("model", "side") => {
                if let Some(v) = self.parse_usize(key, value, line) {
                    self.cfg.model.side = v;
                }
            }
            ("chain", "sweeps") => {
                if let Some(v) = self.parse_usize(key, value, line) {
                    self.cfg.chain.sweeps = v;
                }
            }
            ("chain", "burn_in") => {
                if let Some(v) = self.parse_usize(key, value, line) {
                    self.cfg.chain.burn_in = v;
                }
            }
            ("chain", "proposal_width") => {
                if let Some(v) = self.parse_f64(key, value, line) {
                    self.cfg.chain.proposal_width = v;
                }
            }
            ("chain", "record_stride") => {
                if let Some(v) = self.parse_usize(key, value, line) {
                    self.cfg.chain.record_stride = v;
                }
            }
            ("scan", "t_min") => {
                if let Some(v) = self.parse_f64(key, value, line) {
                    self.cfg.scan.t_min = v;
                }
            }
            ("scan", "t_max") => {
                if let Some(v) = self.parse_f64(key, value, line) {
                    self.cfg.scan.t_max = v;
                }
            }
            ("scan", "t_step") => {
                if let Some(v) = self.parse_f64(key, value, line) {
                    self.cfg.scan.t_step = v;
                }
            }
            ("scan", "t_list") => {
                if let Some(v) = self.parse_list::<f64>(key, value, line) {
                    self.cfg.scan.t_list = v;
                }
            }
            ("scan", "sides") => {
                if let Some(v) = self.parse_list::<usize>(key, value, line) {
                    self.cfg.scan.sides = v;
                }
            }
            ("scan", "r_in") => {
                if let Some(v) = self.parse_list::<usize>(key, value, line) {
                    self.cfg.scan.r_in = v;
                }
            }
            ("scan", "bins") => {
                if let Some(v) = self.parse_usize(key, value, line) {
                    self.cfg.scan.bins = v;
                }
            }
            _ => self.err(line, format!("unknown key {key:?} in section [{section}]")),
        }
    }

    fn validate(&mut self) {
        if !self.seed_set {
            self.err(0, "experiment.seed is mandatory (wall-clock seeding is not supported)");
        }
        let m = self.cfg.model;
        if m.beta <= 0.0 {
            self.err(
                self.line_of("model.beta"),
                format!("model.beta: inverse temperature must satisfy beta > 0, got {}", m.beta),
            );
        }
        if m.j < 0.0 {
            self.err(
                self.line_of("model.j"),
                format!("model.j: ferromagnetic coupling must satisfy j >= 0, got {}", m.j),
            );
        }
        if m.h < 0.0 {
            self.err(
                self.line_of("model.h"),
                format!("model.h: field must satisfy h >= 0, got {}", m.h),
            );
        }
        if m.t <= 0.0 {
            self.err(
                self.line_of("model.t"),
                format!("model.t: evolution time must satisfy t > 0, got {}", m.t),
            );
        }
        if !(1..=3).contains(&m.dim) {
            self.err(
                self.line_of("model.dim"),
                format!("model.dim: dimension must be 1, 2 or 3, got {}", m.dim),
            );
        }
        if m.side < 2 {
            self.err(
                self.line_of("model.side"),
                format!("model.side: lattice side must be >= 2, got {}", m.side),
            );
        }
        let c = self.cfg.chain;
        if c.sweeps == 0 {
            self.err(self.line_of("chain.sweeps"), "chain.sweeps: must be >= 1");
        }
        if c.burn_in >= c.sweeps {
            self.err(
                self.line_of("chain.burn_in"),
                format!("chain.burn_in: must be < chain.sweeps, got {} >= {}", c.burn_in, c.sweeps),
            );
        }
        if !(c.proposal_width > 0.0 && c.proposal_width <= PI) {
            self.err(
                self.line_of("chain.proposal_width"),
                format!("chain.proposal_width: must lie in (0, pi], got {}", c.proposal_width),
            );
        }
        if c.record_stride == 0 {
            self.err(self.line_of("chain.record_stride"), "chain.record_stride: must be >= 1");
        }
        let s = &self.cfg.scan;
        let mut range_errs = Vec::new();
        if !(s.t_min > 0.0) {
            range_errs.push((self.line_of("scan.t_min"), format!("scan.t_min: must be > 0, got {}", s.t_min)));
        }
        if s.t_max <= s.t_min {
            range_errs.push((
                self.line_of("scan.t_max"),
                format!("scan.t_max: must exceed scan.t_min, got {} <= {}", s.t_max, s.t_min),
            ));
        }
        if !(s.t_step > 0.0) {
            range_errs.push((self.line_of("scan.t_step"), format!("scan.t_step: must be > 0, got {}", s.t_step)));
        }
        if s.t_list.iter().any(|&t| !(t > 0.0)) {
            range_errs.push((self.line_of("scan.t_list"), "scan.t_list: every time must be > 0".into()));
        }
        if s.sides.iter().any(|&l| l < 2) {
            range_errs.push((self.line_of("scan.sides"), "scan.sides: every side must be >= 2".into()));
        }
        if s.r_in.iter().any(|&r| r < 1) {
            range_errs.push((self.line_of("scan.r_in"), "scan.r_in: every radius must be >= 1".into()));
        }
        if !s.bins.is_power_of_two() || !(8..=8192).contains(&s.bins) {
            range_errs.push((
                self.line_of("scan.bins"),
                format!("scan.bins: must be a power of two in [8, 8192], got {}", s.bins),
            ));
        }
        if matches!(self.cfg.kind, ExperimentKind::GroundStateSweep | ExperimentKind::Window)
            && s.t_min < EXPANSION_T_MIN
        {
            range_errs.push((
                self.line_of("scan.t_min"),
                format!(
                    "scan.t_min: the three-term site potential requires t >= {EXPANSION_T_MIN}, got {}",
                    s.t_min
                ),
            ));
        }
        for (line, message) in range_errs {
            self.err(line, message);
        }
    }
}

/// Parse and fully validate a config; on failure, return every violation.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    parse_config_with_overrides(text, None, None)
}

/// Like [`parse_config`], but with the command line's subcommand and
/// `--seed` taking precedence over the file (applied before validation).
pub fn parse_config_with_overrides(
    text: &str,
    kind: Option<ExperimentKind>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let mut p = Parser {
        cfg: default_config(),
        seen: HashMap::new(),
        errors: Vec::new(),
        seed_set: false,
    };
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if ["experiment", "model", "chain", "scan"].contains(&name) {
                section = name.to_string();
            } else {
                p.err(line, format!("unknown section [{name}]"));
                section.clear();
            }
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            p.err(line, format!("expected `key = value` or `[section]`, got {trimmed:?}"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if section.is_empty() {
            p.err(line, format!("key {key:?} appears before any valid [section] header"));
            continue;
        }
        let section = section.clone();
        p.apply(&section, key, value, line);
    }
    if let Some(k) = kind {
        p.cfg.kind = k;
    }
    if let Some(s) = seed {
        p.cfg.seed = s;
        p.seed_set = true;
    }
    p.validate();
    if p.errors.is_empty() {
        Ok(p.cfg)
    } else {
        p.errors.sort_by_key(|e| e.line);
        Err(p.errors)
    }
}

fn fmt_list_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

fn fmt_list_usize(xs: &[usize]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

/// Emit the canonical text form; `parse_config(emit_canonical(c)) == c`.
pub fn emit_canonical(cfg: &ExperimentConfig) -> String {
    let m = cfg.model;
    let c = cfg.chain;
    let s = &cfg.scan;
    format!(
        "[experiment]\n\
         kind = {}\n\
         seed = {}\n\
         \n\
         [model]\n\
         beta = {}\n\
         j = {}\n\
         h = {}\n\
         t = {}\n\
         dim = {}\n\
         side = {}\n\
         \n\
         [chain]\n\
         sweeps = {}\n\
         burn_in = {}\n\
         proposal_width = {}\n\
         record_stride = {}\n\
         \n\
         [scan]\n\
         t_min = {}\n\
         t_max = {}\n\
         t_step = {}\n\
         t_list = {}\n\
         sides = {}\n\
         r_in = {}\n\
         bins = {}\n",
        cfg.kind,
        cfg.seed,
        m.beta,
        m.j,
        m.h,
        m.t,
        m.dim,
        m.side,
        c.sweeps,
        c.burn_in,
        c.proposal_width,
        c.record_stride,
        s.t_min,
        s.t_max,
        s.t_step,
        fmt_list_f64(&s.t_list),
        fmt_list_usize(&s.sides),
        fmt_list_usize(&s.r_in),
        s.bins,
    )
}
