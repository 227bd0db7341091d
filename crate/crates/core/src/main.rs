use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use plate_homog::app::{self, Command, Overrides};
use plate_homog::Error;

/// Effective bending stiffness of thin composite plates.
#[derive(Parser, Debug)]
#[command(name = "plate-homog", version)]
struct Cli {
    command: Command,

    /// Input spec (JSON, see docs/formats.md).
    #[arg(long)]
    spec: PathBuf,

    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,

    /// Relative residual for the corrector solves.
    #[arg(long)]
    tol: Option<f64>,

    /// Target grid, a refinement of the material grid. Cells are
    /// `y1,y2,y3`; slabs are `x3,y1,y2`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 3]>,

    /// Number of x3 samples in the regime-1 dense oracle.
    #[arg(long)]
    quadrature: Option<usize>,
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| "expected three comma-separated sizes".to_string())
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("{}", app::error_json(err));
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            let message = first.strip_prefix("error: ").unwrap_or(first).to_string();
            let err = Error::Parse { path: PathBuf::from("<command line>"), field: "arguments".into(), message };
            return fail(&err);
        }
    };
    let overrides = Overrides { tol: cli.tol, grid: cli.grid, quadrature: cli.quadrature };
    match app::run(cli.command, &cli.spec, &cli.out, &overrides) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
