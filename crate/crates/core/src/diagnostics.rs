//! CSV and plot-data output. Every writer flushes after each row, so an
//! interrupted run leaves a readable prefix.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::identities::{IdentityEntry, Verdict};
use crate::monitor::{MonitorReport, ENTRY_EXTENSION, ENTRY_K2_SUP, ENTRY_SHI_LP};

pub const DIAGNOSTIC_COLUMNS: [&str; 15] = [
    "time",
    "B",
    "C0",
    "C1",
    "C2",
    "int_G0_p",
    "int_G1_p",
    "int_G2_p",
    "int_G_p",
    "int_Gprime_p",
    "balanced_residual",
    "threshold_thm3_2",
    "threshold_cor4_1",
    "threshold_thm5_1",
    "certificate",
];

pub const IDENTITY_COLUMNS: [&str; 7] = ["name", "metric", "residual", "tolerance", "passed", "verdict", "note"];

/// Columns that get a two-column plot file.
pub const PLOT_SERIES: [&str; 11] = [
    "B",
    "C0",
    "C1",
    "C2",
    "int_G0_p",
    "int_G1_p",
    "int_G2_p",
    "int_G_p",
    "int_Gprime_p",
    "balanced_residual",
    "threshold_thm5_1",
];

/// Shortest round-trip form; empty for quantities that were not measured.
fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:e}")
    }
}

/// Diagnostic row in column order.
pub fn diagnostic_row(r: &MonitorReport) -> Vec<String> {
    let thr = |name| r.thresholds.entry(name).map_or(f64::NAN, |e| e.bound_f64());
    let cq = |i: usize| r.bounds.cq.get(i).copied().unwrap_or(f64::NAN);
    vec![
        num(r.time),
        num(r.bounds.b),
        num(r.bounds.c0),
        num(cq(0)),
        num(cq(1)),
        num(r.integral("G0")),
        num(r.integral("G1")),
        num(r.integral("G2")),
        num(r.integral("G")),
        num(r.integral("Gprime")),
        num(r.balanced_residual),
        num(thr(ENTRY_SHI_LP)),
        num(thr(ENTRY_K2_SUP)),
        num(thr(ENTRY_EXTENSION)),
        r.certificate.verdict.to_string(),
    ]
}

pub fn identity_row(e: &IdentityEntry) -> Vec<String> {
    vec![
        e.name.clone(),
        e.metric.clone(),
        num(e.residual),
        num(e.tolerance),
        (e.verdict == Verdict::Pass).to_string(),
        e.verdict.to_string(),
        e.note.clone(),
    ]
}

pub struct CsvSink {
    w: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        w.flush()?;
        Ok(CsvSink { w })
    }

    pub fn write(&mut self, row: &[String]) -> Result<()> {
        self.w.write_record(row)?;
        self.w.flush()?;
        Ok(())
    }
}

/// `diagnostics.csv` plus optional `plot_<column>.dat` series.
pub struct DiagnosticsWriter {
    csv: CsvSink,
    plots: Vec<(usize, BufWriter<File>)>,
}

impl DiagnosticsWriter {
    pub fn create(dir: &Path, plot_data: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let csv = CsvSink::create(&dir.join("diagnostics.csv"), &DIAGNOSTIC_COLUMNS)?;
        let mut plots = Vec::new();
        if plot_data {
            for name in PLOT_SERIES {
                let col = DIAGNOSTIC_COLUMNS.iter().position(|c| *c == name).expect("plot column");
                let mut f = BufWriter::new(File::create(plot_path(dir, name))?);
                writeln!(f, "# t {name}")?;
                f.flush()?;
                plots.push((col, f));
            }
        }
        Ok(DiagnosticsWriter { csv, plots })
    }

    pub fn write(&mut self, r: &MonitorReport) -> Result<()> {
        let row = diagnostic_row(r);
        self.csv.write(&row)?;
        for (col, f) in &mut self.plots {
            if !row[*col].is_empty() {
                writeln!(f, "{} {}", row[0], row[*col])?;
                f.flush()?;
            }
        }
        Ok(())
    }
}

pub fn plot_path(dir: &Path, column: &str) -> PathBuf {
    dir.join(format!("plot_{column}.dat"))
}

/// Writes a whole identity report to `path`.
pub fn write_identity_csv(path: &Path, entries: &[IdentityEntry]) -> Result<()> {
    let mut sink = CsvSink::create(path, &IDENTITY_COLUMNS)?;
    for e in entries {
        sink.write(&identity_row(e))?;
    }
    Ok(())
}
