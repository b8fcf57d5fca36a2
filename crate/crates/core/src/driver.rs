//! Batch execution of a [`RunConfig`]: flow, monitoring and output files.

use std::path::{Path, PathBuf};

use crate::config::{InitialData, RunConfig};
use crate::diagnostics::{write_identity_csv, DiagnosticsWriter};
use crate::error::{Error, Result};
use crate::flow::{AnomalyFlow, FlowState};
use crate::identities::{audit, check_chern_weil_preservation, IdentityReport};
use crate::monitor::{Monitor, MonitorReport};
use crate::snapshot::save_snapshot;
use crate::tensor::MetricField;

/// Seed of the random vector fields used by the identity audit.
pub const AUDIT_SEED: u64 = 0x5eed;

#[derive(Debug)]
pub struct RunOutcome {
    pub state: FlowState,
    pub reports: Vec<MonitorReport>,
    /// Set when the flow stopped before `t_max`.
    pub breakdown: Option<Error>,
    pub identities: IdentityReport,
    pub output_dir: Option<PathBuf>,
}

impl RunOutcome {
    pub fn reached_t_max(&self, t_max: f64) -> bool {
        self.breakdown.is_none() && self.state.t == t_max
    }
}

/// Runs the configured flow. With `write_output`, diagnostics, identity
/// results, plot series and snapshots go to `cfg.output.directory`.
/// Errors before the first step (bad input) are returned as `Err`; failures
/// during the flow are reported in [`RunOutcome::breakdown`].
pub fn execute(cfg: &RunConfig, write_output: bool) -> Result<RunOutcome> {
    let threads = cfg.output.threads;
    if threads == 0 {
        return execute_inner(cfg, write_output);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    pool.install(|| execute_inner(cfg, write_output))
}

fn execute_inner(cfg: &RunConfig, write_output: bool) -> Result<RunOutcome> {
    let grid = cfg.grid.build()?;
    let (g0, t0) = match &cfg.initial {
        InitialData::Snapshot(path) => {
            let s = crate::snapshot::load_snapshot(path)?;
            if s.g.grid() != &grid {
                return Err(Error::GridMismatch);
            }
            (s.g, s.t)
        }
        other => (other.build(&grid)?, 0.0),
    };
    let flow = AnomalyFlow::new(cfg.flow_config(&grid)?, &g0)?;
    let monitor = Monitor::new(cfg.monitor.clone())?;
    let alpha = cfg.flow.alpha_prime;
    let dir = write_output.then(|| cfg.output.directory.clone());
    let mut writer = match &dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            std::fs::write(d.join("config.ini"), crate::config::render(cfg))?;
            Some(DiagnosticsWriter::create(d, cfg.output.emit_plot_data)?)
        }
        None => None,
    };
    let snapshots = dir.as_ref().filter(|_| cfg.output.emit_snapshots);
    let mut reports = Vec::new();
    let start = FlowState::new(g0, t0)?;
    let res = flow.run_from(start, cfg.monitor.cadence, |s| {
        let r = monitor.report(s, alpha)?;
        if let Some(w) = &mut writer {
            w.write(&r)?;
        }
        if let Some(d) = snapshots {
            save_snapshot(s, alpha, &snapshot_path(d, s.step_count))?;
        }
        reports.push(r);
        Ok(())
    });
    let (state, breakdown) = match res {
        Ok(s) => (s, None),
        Err(e) => (*e.state, Some(e.error)),
    };

    let mut identities = match audit(&state.g, "final", AUDIT_SEED) {
        Ok(r) => r,
        // a broken-down state may not support the audit; the breakdown is the result
        Err(_) if breakdown.is_some() => IdentityReport::default(),
        Err(e) => return Err(e),
    };
    let series: Vec<(f64, f64)> = reports.iter().map(|r| (r.time, r.balanced_residual)).collect();
    if !series.is_empty() {
        identities
            .entries
            .push(check_chern_weil_preservation(&series, state.step_count, "trajectory")?);
    }
    if let Some(d) = &dir {
        write_identity_csv(&d.join("identities.csv"), &identities.entries)?;
        if cfg.output.emit_snapshots {
            save_snapshot(&state, alpha, &d.join("final.aflow"))?;
        }
    }
    Ok(RunOutcome {
        state,
        reports,
        breakdown,
        identities,
        output_dir: dir,
    })
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snapshot_{step:08}.aflow"))
}

/// Identity audit of a single metric.
pub fn audit_metric(g: &MetricField, descriptor: &str) -> Result<IdentityReport> {
    audit(g, descriptor, AUDIT_SEED)
}
