//! Experiment execution: turns a validated [`ExperimentConfig`] into CSV
//! artifacts plus a manifest tying every file to the config hash and seed.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! rerun with the same config and seed reproduces every data CSV byte for
//! byte (the manifest differs only in its wall-time column).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use rotor::angle::Angle;
use rotor::ground_state::{transition_window, window_closed_form, find_maximizers, SitePotential};
use rotor::kernel;
use rotor::lattice::{Boundary, LatticeConfig, ModelParams};
use rotor::mc::{self, ChainMode, ChainSpec, ScanSettings, HIST_BINS};
use rotor::probe::{self, ProbeMcParams};

use crate::config::{emit_canonical, ExperimentConfig, ExperimentKind};

/// Outcome of a successful run.
pub struct RunReport {
    pub artifacts: Vec<PathBuf>,
    /// True when any sampling cell failed its equilibration diagnostic.
    pub unequilibrated: bool,
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

struct CsvWriter {
    text: String,
}

impl CsvWriter {
    fn new(header: &str) -> Self {
        CsvWriter { text: format!("{header}\n") }
    }

    fn row(&mut self, fields: &[String]) {
        let quoted: Vec<String> = fields
            .iter()
            .map(|f| {
                if f.contains(',') || f.contains('"') || f.contains('\n') {
                    format!("\"{}\"", f.replace('"', "\"\""))
                } else {
                    f.clone()
                }
            })
            .collect();
        let _ = writeln!(self.text, "{}", quoted.join(","));
    }
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(emit_canonical(cfg).as_bytes());
    let mut hex = String::new();
    for b in &digest[..8] {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

/// Artifact file names an experiment will produce, for `--dry-run` plans.
pub fn planned_artifacts(kind: ExperimentKind) -> Vec<&'static str> {
    match kind {
        ExperimentKind::KernelTable => vec!["kernel_table.csv"],
        ExperimentKind::GroundStateSweep => vec!["ground_state_sweep.csv"],
        ExperimentKind::Window => vec!["window_scan.csv", "window_summary.csv"],
        ExperimentKind::McScan => vec!["mc_scan.csv", "mc_gap.csv"],
        ExperimentKind::Probe => vec!["probe.csv"],
        ExperimentKind::OracleCheck => vec!["oracle_check.csv", "oracle_summary.csv"],
    }
}

fn kernel_table(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>, String> {
    let mut w = CsvWriter::new("t,bin,delta,p,log_p,trunc_error");
    let mut times = cfg.scan.t_list.clone();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &t in &times {
        for bin in 0..cfg.scan.bins {
            let delta = probe::bin_center(bin, cfg.scan.bins);
            let k = kernel::kernel_delta(delta, t, 1e-12).map_err(|e| e.to_string())?;
            let lk = kernel::log_kernel_delta(delta, t, 1e-12).map_err(|e| e.to_string())?;
            w.row(&[
                fmt_f(t),
                bin.to_string(),
                fmt_f(delta),
                fmt_f(k.value),
                fmt_f(lk.value),
                fmt_f(k.trunc_error),
            ]);
        }
    }
    Ok(vec![("kernel_table.csv".into(), w.text)])
}

fn time_grid(t_min: f64, t_max: f64, t_step: f64) -> Vec<f64> {
    let n = ((t_max - t_min) / t_step).floor() as usize;
    (0..=n).map(|k| t_min + k as f64 * t_step).collect()
}

fn ground_state_sweep(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>, String> {
    let mut w = CsvWriter::new("t,h_t,delta,degenerate,n_maximizers,theta_star,epsilon_t,g_max");
    let beta_h = cfg.model.beta * cfg.model.h;
    for t in time_grid(cfg.scan.t_min, cfg.scan.t_max, cfg.scan.t_step) {
        let sp = SitePotential::three_term(beta_h, t).map_err(|e| e.to_string())?;
        let rep = find_maximizers(&sp, 1024, 1e-10).map_err(|e| e.to_string())?;
        let h_t = (-t).exp();
        w.row(&[
            fmt_f(t),
            fmt_f(h_t),
            fmt_f(beta_h - 2.0 * h_t),
            rep.degenerate.to_string(),
            rep.maximizers.len().to_string(),
            fmt_f(rep.maximizers[0].radians()),
            fmt_f(rep.epsilon_t),
            fmt_f(rep.g_at_max),
        ]);
    }
    Ok(vec![("ground_state_sweep.csv".into(), w.text)])
}

fn window(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>, String> {
    let beta_h = cfg.model.beta * cfg.model.h;
    let mut scan = CsvWriter::new("t,delta,degenerate");
    for t in time_grid(cfg.scan.t_min, cfg.scan.t_max, cfg.scan.t_step) {
        let sp = SitePotential::three_term(beta_h, t).map_err(|e| e.to_string())?;
        let rep = find_maximizers(&sp, 1024, 1e-10).map_err(|e| e.to_string())?;
        scan.row(&[
            fmt_f(t),
            fmt_f(beta_h - 2.0 * (-t).exp()),
            rep.degenerate.to_string(),
        ]);
    }
    let mut summary = CsvWriter::new("beta_h,t0_scan,t1_scan,t0_closed,t1_closed");
    let scanned = transition_window(cfg.model.beta, cfg.model.h, cfg.scan.t_min, cfg.scan.t_max)
        .map_err(|e| e.to_string())?;
    let closed = window_closed_form(beta_h, cfg.scan.t_min, cfg.scan.t_max);
    let opt = |v: Option<f64>| v.map(fmt_f).unwrap_or_else(|| "none".into());
    summary.row(&[
        fmt_f(beta_h),
        opt(scanned.map(|w| w.0)),
        opt(scanned.map(|w| w.1)),
        opt(closed.map(|w| w.0)),
        opt(closed.map(|w| w.1)),
    ]);
    Ok(vec![
        ("window_scan.csv".into(), scan.text),
        ("window_summary.csv".into(), summary.text),
    ])
}

fn mc_scan(cfg: &ExperimentConfig) -> Result<(Vec<(String, String)>, bool), String> {
    let settings = ScanSettings {
        sweeps: cfg.chain.sweeps,
        burn_in: cfg.chain.burn_in,
        proposal_width: cfg.chain.proposal_width,
        seed: cfg.seed,
    };
    let mut rows = mc::symmetry_breaking_scan(&cfg.model, &cfg.scan.sides, &settings)
        .map_err(|e| e.to_string())?;
    rows.sort_by(|a, b| {
        (a.side, a.boundary_angle)
            .partial_cmp(&(b.side, b.boundary_angle))
            .unwrap()
    });
    let mut w = CsvWriter::new(
        "beta,h,t,side,boundary_angle,m_sin_mean,m_sin_err,equilibrated,acceptance",
    );
    for r in &rows {
        w.row(&[
            fmt_f(r.beta),
            fmt_f(r.h),
            fmt_f(r.t),
            r.side.to_string(),
            fmt_f(r.boundary_angle),
            fmt_f(r.m_sin_mean),
            fmt_f(r.m_sin_err),
            r.equilibrated.to_string(),
            fmt_f(r.acceptance),
        ]);
    }
    let mut gaps = CsvWriter::new("side,gap,gap_err,sigmas,equilibrated");
    let mut unequilibrated = false;
    let mut sides: Vec<usize> = rows.iter().map(|r| r.side).collect();
    sides.dedup();
    for side in sides {
        let cell: Vec<_> = rows.iter().filter(|r| r.side == side).collect();
        if cell.len() != 2 {
            return Err(format!("expected 2 boundary rows for side {side}, got {}", cell.len()));
        }
        let gap = (cell[0].m_sin_mean - cell[1].m_sin_mean).abs();
        let err = (cell[0].m_sin_err.powi(2) + cell[1].m_sin_err.powi(2)).sqrt();
        let ok = cell[0].equilibrated && cell[1].equilibrated;
        unequilibrated |= !ok;
        gaps.row(&[
            side.to_string(),
            fmt_f(gap),
            fmt_f(err),
            fmt_f(if err > 0.0 { gap / err } else { f64::INFINITY }),
            ok.to_string(),
        ]);
    }
    Ok((
        vec![("mc_scan.csv".into(), w.text), ("mc_gap.csv".into(), gaps.text)],
        unequilibrated,
    ))
}

fn probe_scan(cfg: &ExperimentConfig) -> Result<(Vec<(String, String)>, bool), String> {
    let mc = ProbeMcParams {
        sweeps: cfg.chain.sweeps,
        burn_in: cfg.chain.burn_in,
        record_stride: cfg.chain.record_stride,
        proposal_width: cfg.chain.proposal_width,
        seed: cfg.seed,
    };
    let mut rows = probe::badness_scan(&cfg.model, &cfg.scan.r_in, &mc).map_err(|e| e.to_string())?;
    rows.sort_by_key(|r| r.r_in);
    let mut w = CsvWriter::new("r_in,r_out,gap,gap_err,witness_bins,equilibrated");
    let mut unequilibrated = false;
    for r in &rows {
        unequilibrated |= !r.equilibrated;
        w.row(&[
            r.r_in.to_string(),
            r.r_out.to_string(),
            fmt_f(r.gap),
            fmt_f(r.gap_err),
            r.witness_bins.to_string(),
            r.equilibrated.to_string(),
        ]);
    }
    Ok((vec![("probe.csv".into(), w.text)], unequilibrated))
}

fn oracle_check(cfg: &ExperimentConfig) -> Result<(Vec<(String, String)>, bool), String> {
    let p = cfg.model;
    let y = LatticeConfig::y_spec(p.dim, p.side);
    let spec = ChainSpec::new(
        p,
        ChainMode::Conditioned { y, exclude_site: None },
        Boundary::Periodic,
        cfg.chain.sweeps,
        cfg.chain.burn_in,
        cfg.seed,
    );
    let trace = mc::run_chain(spec).map_err(|e| e.to_string())?;
    let total: u64 = trace.center_hist.iter().sum();
    let mc_density: Vec<f64> = trace
        .center_hist
        .iter()
        .map(|&c| c as f64 / total as f64 * HIST_BINS as f64)
        .collect();
    let fine = probe::oracle_ring_marginal(&p, 256).map_err(|e| e.to_string())?;
    let oracle_density: Vec<f64> = probe::aggregate_bins(&fine, HIST_BINS)
        .iter()
        .map(|&q| q * HIST_BINS as f64)
        .collect();
    let mut w = CsvWriter::new("bin,theta,mc_density,oracle_density");
    for b in 0..HIST_BINS {
        w.row(&[
            b.to_string(),
            fmt_f(probe::bin_center(b, HIST_BINS)),
            fmt_f(mc_density[b]),
            fmt_f(oracle_density[b]),
        ]);
    }
    let tv = probe::tv_distance(&mc_density, &oracle_density);
    let ok = mc::equilibrated(&trace.m_cos);
    let mut s = CsvWriter::new("tv_distance,sweeps,equilibrated");
    s.row(&[fmt_f(tv), cfg.chain.sweeps.to_string(), ok.to_string()]);
    Ok((
        vec![("oracle_check.csv".into(), w.text), ("oracle_summary.csv".into(), s.text)],
        !ok,
    ))
}

/// Execute the experiment and write artifacts + `manifest.csv` under `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, String> {
    fs::create_dir_all(out).map_err(|e| format!("cannot create output dir: {e}"))?;
    let start = Instant::now();
    let result: Result<(Vec<(String, String)>, bool), String> = match cfg.kind {
        ExperimentKind::KernelTable => kernel_table(cfg).map(|a| (a, false)),
        ExperimentKind::GroundStateSweep => ground_state_sweep(cfg).map(|a| (a, false)),
        ExperimentKind::Window => window(cfg).map(|a| (a, false)),
        ExperimentKind::McScan => mc_scan(cfg),
        ExperimentKind::Probe => probe_scan(cfg),
        ExperimentKind::OracleCheck => oracle_check(cfg),
    };
    let hash = config_hash(cfg);
    let version = env!("CARGO_PKG_VERSION");
    let wall_ms = start.elapsed().as_millis();
    let mut manifest = CsvWriter::new("artifact,config_hash,seed,version,wall_ms,status");
    match result {
        Ok((artifacts, unequilibrated)) => {
            let mut paths = Vec::new();
            for (name, text) in &artifacts {
                let path = out.join(name);
                fs::write(&path, text).map_err(|e| format!("cannot write {name}: {e}"))?;
                manifest.row(&[
                    name.clone(),
                    hash.clone(),
                    cfg.seed.to_string(),
                    version.to_string(),
                    wall_ms.to_string(),
                    "complete".into(),
                ]);
                paths.push(path);
            }
            fs::write(out.join("manifest.csv"), manifest.text)
                .map_err(|e| format!("cannot write manifest: {e}"))?;
            // keep the reproduction recipe alongside the data
            fs::write(out.join("config.ini"), emit_canonical(cfg))
                .map_err(|e| format!("cannot write config snapshot: {e}"))?;
            Ok(RunReport { artifacts: paths, unequilibrated })
        }
        Err(e) => {
            for name in planned_artifacts(cfg.kind) {
                manifest.row(&[
                    name.to_string(),
                    hash.clone(),
                    cfg.seed.to_string(),
                    version.to_string(),
                    wall_ms.to_string(),
                    "incomplete".into(),
                ]);
            }
            let _ = fs::write(out.join("manifest.csv"), manifest.text);
            Err(e)
        }
    }
}

/// Sanity helper for tests: boundary pair used by the mc-scan cells.
pub fn scan_boundary_pair(params: &ModelParams) -> Result<(Angle, Angle), String> {
    mc::boundary_pair(params).map_err(|e| e.to_string())
}
