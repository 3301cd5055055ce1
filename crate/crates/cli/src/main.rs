use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bellcert::error::{Error, Result};
use bellcert::pipeline::config::{parse_list, RunConfig, RunMode};
use bellcert::pipeline::files::{read_json, read_text, write_json, write_text};
use bellcert::pipeline::reference::{parse_reference, reference_aggregate, REFERENCE_FIDELITIES};
use bellcert::pipeline::report::{curves_csv, CertificationReport};
use bellcert::pipeline::run::{
    curves_only, run_to_dir, simulate_to_dir, tomography_csv, tomography_only, REPORT_JSON, ROBUST_CURVES_CSV,
    TOMOGRAPHY_CSV,
};
use bellcert::pipeline::verify::verify_dir;
use bellcert::tomography::miscalibration_demo;

#[derive(Parser)]
#[command(
    name = "bellcert",
    version,
    about = "Tomography and self-testing certification of two-qubit sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample counts files for every angle into <out>/counts
    Simulate(RunArgs),
    /// Run tomography and self-testing, write the report and plot data
    Certify(RunArgs),
    /// Tomography fidelities only
    Tomo(RunArgs),
    /// Fidelity bounds against the deviation from maximal violation
    Curve(RunArgs),
    /// Summarize a written report, or the published reference table
    Report(ReportArgs),
    /// Tomography false positive caused by rotated analyzers
    DemoMiscalibration(DemoArgs),
    /// Re-derive every row of a written report from its intermediates
    Verify(VerifyArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated angles in degrees
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// simulate | ingest
    #[arg(long)]
    mode: Option<String>,
    /// Use exact Born probabilities instead of sampled counts
    #[arg(long)]
    infinite_sample: bool,
    /// Comma-separated deviations for the robustness curves
    #[arg(long)]
    eps_grid: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory with counts_<theta>.json files (ingest mode)
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Aggregate a fidelity table instead of a run; without a path the
    /// bundled published table is used
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    reference: Option<String>,
    /// Smallest angle entering the mean ratio
    #[arg(long, default_value_t = 35.0)]
    min_theta: f64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    /// Weight of the pure state in the mixture
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Analyzer rotation in degrees
    #[arg(long, default_value_t = 45.0)]
    xi: f64,
    /// Also write the result as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.theta {
            cfg.theta_deg = parse_list("--theta", v)?;
        }
        if let Some(v) = self.trials {
            cfg.trials_per_setting = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.mode {
            cfg.mode = v.parse::<RunMode>()?;
        }
        if self.infinite_sample {
            cfg.infinite_sample = true;
        }
        if let Some(v) = &self.eps_grid {
            cfg.eps_grid = parse_list("--eps-grid", v)?;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &self.input {
            cfg.input_dir = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_report(report: &CertificationReport) {
    println!(
        "{:>7} {:>9} {:>9} {:>7} {:>9} {:>9} {:>10} {:>10}",
        "theta", "f_t", "f_s", "ratio", "I", "eps", "sig_raw", "nqa2_s"
    );
    for r in &report.rows {
        println!(
            "{:>7} {:>9.5} {:>9.5} {:>7.4} {:>9.5} {:>9.2e} {:>10.2e} {:>10.2e}",
            r.theta_deg, r.f_t, r.f_s, r.ratio, r.tilted_chsh, r.epsilon, r.signaling_before, r.nqa2_distance
        );
    }
    match report.aggregate.mean_ratio {
        Some(m) => println!(
            "mean f_s/f_t over theta >= {}: {m:.4} ({} rows)",
            report.aggregate.min_theta_deg, report.aggregate.rows
        ),
        None => println!("no rows with theta >= {}", report.aggregate.min_theta_deg),
    }
}

fn certify(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let output = run_to_dir(&cfg)?;
    print_report(&output.report);
    for c in &output.report.robust_curves {
        println!("curve theta {} eps {}: f_s >= {:.5}", c.theta_deg, c.epsilon, c.f_s);
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn simulate(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    for path in simulate_to_dir(&cfg)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn tomo(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let rows = tomography_only(&cfg)?;
    for (deg, t) in &rows {
        println!("theta {deg:>5}: f_t = {:.6}", t.f_t);
    }
    let path = cfg.out_dir.join(TOMOGRAPHY_CSV);
    write_text(&path, &tomography_csv(&rows))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn curve(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let rows = curves_only(&cfg)?;
    for r in &rows {
        println!("theta {:>5} eps {:<6}: f_s >= {:.5}", r.theta_deg, r.epsilon, r.f_s);
    }
    let path = cfg.out_dir.join(ROBUST_CURVES_CSV);
    write_text(&path, &curves_csv(&rows))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    match &args.reference {
        Some(path) => {
            let text = if path.is_empty() {
                REFERENCE_FIDELITIES.to_string()
            } else {
                read_text(Path::new(path))?
            };
            let rows = parse_reference(&text)?;
            for r in &rows {
                println!(
                    "theta {:>5}: f_t {:.3} f_s {:.3} ratio {:.3}",
                    r.theta_deg(),
                    r.f_t as f64 / 1000.0,
                    r.f_s as f64 / 1000.0,
                    r.ratio as f64 / 1000.0
                );
            }
            let agg = reference_aggregate(&rows, args.min_theta)?;
            println!(
                "mean ratio over theta >= {}: {:.3} ({}/{} exactly; recomputed from fidelities {:.5})",
                agg.min_theta_deg,
                agg.mean_ratio,
                agg.ratio_sum_milli,
                1000 * agg.rows,
                agg.mean_recomputed_ratio
            );
        }
        None => {
            let report: CertificationReport = read_json(&args.out.join(REPORT_JSON))?;
            print_report(&report);
        }
    }
    Ok(())
}

fn demo(args: &DemoArgs) -> Result<()> {
    let d = miscalibration_demo(args.p, args.xi.to_radians())?;
    println!("p = {}, xi = {} deg", d.p, args.xi);
    println!("F_true     = {:.10}", d.f_true);
    println!("F_reported = {:.10}", d.f_reported);
    println!("absurd (F_reported > 1): {}", d.is_absurd());
    if let Some(path) = &args.json {
        write_json(path, &d)?;
    }
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<()> {
    let v = verify_dir(&args.out)?;
    for m in &v.mismatches {
        println!("MISMATCH {m}");
    }
    if !v.ok() {
        return Err(Error::Validation(format!(
            "{} mismatches in {}",
            v.mismatches.len(),
            args.out.display()
        )));
    }
    println!("verified {} rows in {}", v.rows_checked, args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Certify(a) => certify(a),
        Command::Tomo(a) => tomo(a),
        Command::Curve(a) => curve(a),
        Command::Report(a) => report(a),
        Command::DemoMiscalibration(a) => demo(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
