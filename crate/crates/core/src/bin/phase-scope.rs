use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phase_scope::cli::{self, pipeline, ScanConfig};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "phase-scope", version, about = "Phase-transition scans of the ANNNI chain with noisy VQE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize every grid point and archive the parameters.
    Optimize(RunArgs),
    /// Execute circuits, archive records and write results.csv.
    Scan(RunArgs),
    /// Re-derive the scan from its records and write report.json.
    Analyze(RunArgs),
    /// Dump exact-diagonalization references for the grid.
    Ed(RunArgs),
    /// Run the built-in invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Config overrides as `--<dotted.path> <value>`, e.g. `--noise.p2 0.01 --workers 4`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<ScanConfig, ExitCode> {
    cli::parse_overrides(&args.overrides)
        .and_then(|ov| ScanConfig::load(&args.config, &ov))
        .map_err(|e| {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        })
}

fn fail(e: phase_scope::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_PARTIAL)
}

fn run(command: Command) -> ExitCode {
    match command {
        Command::Optimize(args) => {
            let cfg = match load(&args) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match pipeline::cmd_optimize(&cfg) {
                Ok(out) => {
                    for (i, p) in out.points.iter().enumerate() {
                        match &p.report {
                            Ok(r) => println!(
                                "point {i} j2={} cost={:.10} converged={} start={}",
                                p.model.j2, r.final_cost, r.converged, p.start
                            ),
                            Err(e) => println!("point {i} j2={} failed: {e}", p.model.j2),
                        }
                    }
                    println!("{}", out.run_dir.display());
                    if out.total_failure() {
                        ExitCode::from(EXIT_PARTIAL)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Scan(args) => {
            let cfg = match load(&args) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match pipeline::cmd_scan(&cfg) {
                Ok(out) => {
                    for r in out.scan.iter().filter(|r| !r.flags.is_empty()) {
                        println!("j2={} flags: {}", r.model.j2, r.flags.join("; "));
                    }
                    println!("{}", out.run_dir.join("results.csv").display());
                    if out.failed_points() > 0 {
                        ExitCode::from(EXIT_PARTIAL)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Analyze(args) => {
            let cfg = match load(&args) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match pipeline::cmd_analyze(&cfg) {
                Ok(out) => {
                    for iv in &out.report.intervals {
                        println!("transition in ({}, {}) evidence {:?}", iv.lo, iv.hi, iv.evidence);
                    }
                    for n in &out.report.notes {
                        println!("note ({}, {}): {}", n.lo, n.hi, n.message);
                    }
                    println!("{}", out.run_dir.join("report.json").display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Ed(args) => {
            let cfg = match load(&args) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match pipeline::cmd_ed(&cfg) {
                Ok(out) => {
                    for r in &out.rows {
                        println!("j2={} E0={:.12} degeneracy={}", r.j2, r.e0, r.ground_degeneracy);
                    }
                    println!("{}", out.run_dir.join("ed").display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Selftest(_) => {
            let checks = cli::selftest::run();
            let mut failed = 0;
            for c in &checks {
                match &c.outcome {
                    Ok(()) => println!("PASS {}", c.name),
                    Err(msg) => {
                        failed += 1;
                        println!("FAIL {}: {msg}", c.name);
                    }
                }
            }
            println!("{}/{} checks passed", checks.len() - failed, checks.len());
            if failed > 0 {
                ExitCode::from(EXIT_PARTIAL)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}

fn main() -> ExitCode {
    run(Cli::parse().command)
}
