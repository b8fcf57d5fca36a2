use std::path::PathBuf;
use std::process::ExitCode;

use aflow::config::{parse_config, InitialData};
use aflow::diagnostics::write_identity_csv;
use aflow::driver::{audit_metric, execute};
use aflow::forms::balanced_residual;
use aflow::identities::{IdentityReport, Verdict as IdVerdict};
use aflow::lattice::GridSpec;
use aflow::monitor::{alpha_thresholds, extension_certificate, measure_bounds, mu_exact, AssumptionBounds};
use aflow::snapshot::read_snapshot;
use aflow::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aflow", version, about = "Anomaly flow of Hermitian metrics on flat complex 3-tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow described by a config file.
    Run {
        config: PathBuf,
        /// Overrides [output] directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the connection identities on a snapshot or generated metric.
    Audit(AuditArgs),
    /// Evaluate the α′ smallness thresholds exactly.
    Thresholds {
        #[arg(long)]
        a0: f64,
        #[arg(long = "B")]
        b: f64,
        #[arg(long = "C0")]
        c0: f64,
        #[arg(long, default_value_t = 3.0)]
        p: f64,
        #[arg(long = "alpha-prime")]
        alpha_prime: Option<f64>,
    },
    /// Summarize a snapshot file.
    Inspect { snapshot: PathBuf },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// flat, conformal, kahler_potential or balanced_psi
    #[arg(long)]
    generator: Option<String>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    source: Source,
    /// Grid size for generated metrics.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Active real axes for generated metrics.
    #[arg(long, value_delimiter = ',', default_value = "0,3")]
    axes: Vec<usize>,
    /// Also write the results as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Breakdown(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_breakdown() {
            Failure::Breakdown(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, output } => run(config, output),
        Command::Audit(a) => audit(a),
        Command::Thresholds {
            a0,
            b,
            c0,
            p,
            alpha_prime,
        } => thresholds(a0, b, c0, p, alpha_prime),
        Command::Inspect { snapshot } => inspect(snapshot),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Breakdown(m)) => {
            eprintln!("aflow: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("aflow: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(config: PathBuf, output: Option<PathBuf>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&config).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    if let Some(o) = output {
        cfg.output.directory = o;
    }
    let out = execute(&cfg, true)?;
    let s = &out.state;
    println!("t = {} after {} steps", s.t, s.step_count);
    if let Some(r) = out.reports.last() {
        println!(
            "B = {:e}  C0 = {:e}  balanced_residual = {:e}  certificate = {}",
            r.bounds.b, r.bounds.c0, r.balanced_residual, r.certificate.verdict
        );
        println!("  {}", r.certificate.explanation);
    }
    print_identities(&out.identities);
    println!("output in {}", cfg.output.directory.display());
    if let Some(e) = out.breakdown {
        return Err(Failure::Breakdown(format!("flow stopped at t = {}: {e}", s.t)));
    }
    Ok(())
}

fn print_identities(r: &IdentityReport) {
    for e in &r.entries {
        println!(
            "{:<24} {:<15} residual {:<12.3e} tolerance {:<10.1e} {}",
            e.name, e.verdict, e.residual, e.tolerance, e.note
        );
    }
}

fn audit(a: AuditArgs) -> Result<(), Failure> {
    let (g, descriptor) = match (&a.source.snapshot, &a.source.generator) {
        (Some(path), _) => {
            let (_, s) = read_snapshot(path)?;
            (s.g, format!("snapshot:{}", path.display()))
        }
        (None, Some(name)) => {
            let grid = GridSpec::new(a.n, &a.axes)?;
            let d = InitialData::generator(name, &grid)?;
            (d.build(&grid)?, format!("{}(n={})", d.kind(), a.n))
        }
        (None, None) => return Err(Failure::Usage("audit needs --snapshot or --generator".into())),
    };
    let report = audit_metric(&g, &descriptor)?;
    println!("audit of {descriptor}");
    print_identities(&report);
    if let Some(path) = &a.csv {
        write_identity_csv(path, &report.entries)?;
    }
    if report.entries.iter().any(|e| e.verdict == IdVerdict::Fail) {
        return Err(Failure::Breakdown("identity audit failed".into()));
    }
    Ok(())
}

fn thresholds(a0: f64, b: f64, c0: f64, p: f64, alpha_prime: Option<f64>) -> Result<(), Failure> {
    let finite = |x: f64| x.is_finite();
    if !(finite(a0) && a0 > 0.0 && finite(b) && b > 0.0 && finite(c0) && c0 >= 0.0 && finite(p) && p >= 1.0) {
        return Err(Failure::Usage("need a0 > 0, B > 0, C0 ≥ 0 and p ≥ 1".into()));
    }
    if alpha_prime.is_some_and(|a| !(a >= 0.0 && a.is_finite())) {
        return Err(Failure::Usage("alpha_prime must be ≥ 0".into()));
    }
    let bounds = AssumptionBounds {
        b,
        c0,
        cq: Vec::new(),
        a0,
        measured_at: 0.0,
    };
    let alpha = alpha_prime.unwrap_or(0.0);
    let rep = alpha_thresholds(&bounds, p, alpha);
    println!("a0 = {a0}, B = {b}, C0 = {c0}, p = {p} (effective p = {})", rep.p);
    for e in &rep.entries {
        let status = match alpha_prime {
            Some(_) if e.satisfied => "  ok",
            Some(_) => "  VIOLATED",
            None => "",
        };
        println!("{:<20} {:<34} = {:<16} ({:e}){status}", e.name, e.formula, e.bound_string(), e.bound_f64());
    }
    let mu = mu_exact(a0, b, p);
    println!("{:<20} {:<34} = {:<16} ({:e})", "mu", "1/(100 a0 B^2 p), p>=3", mu.to_string(), num_traits::ToPrimitive::to_f64(&mu).unwrap_or(f64::NAN));
    println!("{:<20} {:<34} = {}", "pi1", "1/(3*10^7 a0 B^6)", rep.pi1);
    println!("{:<20} {:<34} = {}", "pi2", "1/(26 a0 B^2)", rep.pi2);
    if let Some(a) = alpha_prime {
        let cert = extension_certificate(&bounds, a);
        println!("certificate          {}", cert.verdict);
        println!("  {}", cert.explanation);
    }
    Ok(())
}

fn inspect(path: PathBuf) -> Result<(), Failure> {
    let (h, s) = read_snapshot(&path)?;
    let grid = s.g.grid();
    println!("snapshot {}", path.display());
    println!("format version {}", h.version);
    println!("t = {}", h.t);
    println!("alpha_prime = {}", h.alpha_prime);
    println!("n = {}, active axes = {:?} (mask {:#08b}), points = {}", h.n, grid.active_axes(), h.mask, grid.num_points());
    println!("periods = {:?}", h.periods);
    let dets: Vec<f64> = (0..grid.num_points()).map(|pt| s.g.det_at(pt)).collect();
    let (lo, hi) = dets.iter().fold((f64::INFINITY, 0.0f64), |(l, u), &d| (l.min(d), u.max(d)));
    println!("min eigenvalue = {:e}", s.g.min_eigenvalue());
    println!("det g in [{lo:e}, {hi:e}]");
    println!("balanced_residual = {:e}", balanced_residual(&s.g)?);
    let b = measure_bounds(&s, 1.0, 0)?;
    println!("B = {:e}, C0 = {:e}", b.b, b.c0);
    Ok(())
}
