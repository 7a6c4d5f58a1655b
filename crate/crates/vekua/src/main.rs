use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

use vekua::cli::{error_exit_code, run, write_outputs, Mode, RunConfig};

/// Batch solver for the Carleman-Vekua equation with a singular point and for the
/// Riemann-Hilbert problem on a disk.
#[derive(Parser)]
#[command(name = "vekua", version)]
struct Args {
    /// Workflow to run; must agree with `mode` in the configuration if both are given.
    #[arg(value_enum)]
    mode: Mode,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the report and data files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match &args.config {
        Some(p) => RunConfig::load(p),
        None if args.mode == Mode::Verify => RunConfig::from_json("{}"),
        None => {
            eprintln!("error: --config is required for mode {:?}", args.mode);
            return ExitCode::from(1);
        }
    };
    let result = config
        .and_then(|c| c.resolve_mode(Some(args.mode)).map(|m| (c, m)))
        .and_then(|(c, m)| run(&c, m));
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(error_exit_code(&e) as u8);
        }
    };
    if let Some(v) = &out.report.verify {
        print!("{}", v.summary());
    }
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }
    match write_outputs(&out, &args.out) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    if let Some(rh) = &out.report.rh {
        if !rh.solvable {
            println!("unsolvable: max defect {:.3e} exceeds {:.1e} x {:.3e}", rh.defects.max, rh.defects.tolerance, rh.defects.scale);
        }
    }
    ExitCode::from(out.exit_code() as u8)
}
