use std::path::Path;
use std::process::Command;

use aflow::config::parse_config;
use aflow::diagnostics::{DIAGNOSTIC_COLUMNS, IDENTITY_COLUMNS};
use aflow::driver::execute;
use aflow::flow::{AnomalyFlow, FlowConfig};
use aflow::init::{balanced_psi, Profile};
use aflow::lattice::GridSpec;

const GOLDEN_HEADER: &str = "time,B,C0,C1,C2,int_G0_p,int_G1_p,int_G2_p,int_G_p,int_Gprime_p,balanced_residual,\
threshold_thm3_2,threshold_cor4_1,threshold_thm5_1,certificate";

fn aflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aflow"))
}

fn config_text(dir: &Path) -> String {
    format!(
        "# small balanced run\n[grid]\nn = 8\nactive_axes = 0, 3\n\n[initial]\nkind = balanced_psi\namplitude = 0.01\naxes = 0, 3\ndecay = 0.05\n\n\
         [flow]\nalpha_prime = 0.01\nphi_source = chern_weil_background\ndt_initial = 1e-4\nt_max = 5e-4\n\n\
         [monitor]\ncadence = 2\n\n[output]\ndirectory = {}\n",
        dir.display()
    )
}

#[test]
fn csv_headers_are_stable() {
    assert_eq!(DIAGNOSTIC_COLUMNS.join(","), GOLDEN_HEADER);
    assert_eq!(IDENTITY_COLUMNS.join(","), "name,metric,residual,tolerance,passed,verdict,note");
}

#[test]
fn flow_lands_exactly_on_t_max() {
    let grid = GridSpec::new(8, &[0, 3]).unwrap();
    let g0 = balanced_psi(&grid, &Profile::new(0.01, &[0, 3])).unwrap();
    for (dt, t_max, steps) in [(1e-4, 1e-2, 100), (7e-4, 2.1e-3, 3), (3e-4, 1e-3, 4)] {
        let fc = FlowConfig {
            dt_initial: dt,
            t_max,
            ..FlowConfig::default()
        };
        let s = AnomalyFlow::new(fc, &g0).unwrap().run(&g0).unwrap();
        assert_eq!(s.t, t_max);
        assert_eq!(s.step_count, steps, "dt {dt}");
    }
}

#[test]
fn run_writes_outputs_and_restarts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("first");
    let cfg = parse_config(&config_text(&out)).unwrap();
    let first = execute(&cfg, true).unwrap();
    assert!(first.reached_t_max(5e-4));
    let csv = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(GOLDEN_HEADER));
    // initial, every second step, final
    assert_eq!(lines.count(), 4);
    for f in ["config.ini", "identities.csv", "final.aflow", "snapshot_00000002.aflow", "plot_B.dat"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let plot = std::fs::read_to_string(out.join("plot_B.dat")).unwrap();
    assert!(plot.starts_with("# t B\n"));
    // the written config reproduces the run
    let again = parse_config(&std::fs::read_to_string(out.join("config.ini")).unwrap()).unwrap();
    assert_eq!(again, cfg);

    // continue from the mid-run snapshot to the same end time
    let resumed = tmp.path().join("resumed");
    let text = config_text(&resumed).replace(
        "kind = balanced_psi\namplitude = 0.01\naxes = 0, 3\ndecay = 0.05",
        &format!("kind = snapshot\npath = {}", out.join("snapshot_00000002.aflow").display()),
    );
    let second = execute(&parse_config(&text).unwrap(), true).unwrap();
    assert_eq!(second.state.t, 5e-4);
    let diff = second.state.g.max_abs_diff(&first.state.g);
    assert!(diff < 1e-12, "{diff:e}");
}

#[test]
fn cli_run_then_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.ini");
    std::fs::write(&cfg, config_text(&tmp.path().join("ignored"))).unwrap();
    let run = aflow().arg("run").arg(&cfg).arg("--output").arg(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    // α′ = 0.01 is far above the extension bound for this metric
    assert!(stdout.contains("certificate = NOT_CERTIFIED"), "{stdout}");
    assert!(!tmp.path().join("ignored").exists());

    let insp = aflow().arg("inspect").arg(out.join("final.aflow")).output().unwrap();
    assert!(insp.status.success());
    let text = String::from_utf8_lossy(&insp.stdout);
    assert!(text.contains("t = 0.0005"), "{text}");
    assert!(text.contains("alpha_prime = 0.01"));
}

#[test]
fn cli_thresholds_print_exact_values() {
    let o = aflow().args(["thresholds", "--a0", "1", "--B", "1", "--C0", "1"]).output().unwrap();
    assert!(o.status.success());
    let s = String::from_utf8_lossy(&o.stdout);
    for want in ["1/14", "1/26", "1/300", "1/30000000"] {
        assert!(s.contains(want), "{want} missing from\n{s}");
    }
    let o = aflow()
        .args(["thresholds", "--a0", "1", "--B", "1", "--C0", "1", "--alpha-prime", "1e-6"])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("NOT_CERTIFIED"));
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.ini");
    std::fs::write(&bad, "[flow]\nalpha_prime = -1\n").unwrap();
    let o = aflow().arg("run").arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = aflow().args(["thresholds", "--a0", "0", "--B", "1", "--C0", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let junk = tmp.path().join("junk.aflow");
    std::fs::write(&junk, b"not a snapshot").unwrap();
    let o = aflow().arg("inspect").arg(&junk).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    // under-resolved at n = 16, within tolerance at n = 32
    let o = aflow().args(["audit", "--generator", "balanced_psi", "--n", "16"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let csv = tmp.path().join("audit.csv");
    let o = aflow().args(["audit", "--generator", "balanced_psi", "--n", "32", "--csv"]).arg(&csv).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() == 7);
}
