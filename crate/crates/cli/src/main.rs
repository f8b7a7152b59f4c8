//! Command-line front end for the range-lateration solvers.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toalift::Strategy;

#[derive(Debug, Parser)]
#[command(
    name = "toalift",
    version,
    about = "Range lateration with dimension lifting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run plain and lifted LM on the three-station demo and write both traces.
    Demo2d(DemoArgs),
    /// Evaluate the lambda-curvature indicator at a point.
    Curvature(CurvatureArgs),
    /// Run a Monte Carlo comparison of strategies.
    Montecarlo(MonteCarloArgs),
    /// Compare analytic and finite-difference Jacobians.
    CheckGradients(GradientArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "toalift-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[command(flatten)]
    out: OutArgs,
    /// Initial position.
    #[arg(long, value_name = "X,Y", default_value = "2,-1", value_parser = parse_xy, allow_hyphen_values = true)]
    x0: [f64; 2],
    /// Initial value of the lifting variable.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda0: f64,
}

#[derive(Debug, Args)]
struct CurvatureArgs {
    /// JSON file with `scenario`, `point` and `range_offset`; defaults to the demo.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; when given, the report and config are written there.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Evaluation point.
    #[arg(long, value_name = "X,Y[,Z]", value_parser = parse_coords, allow_hyphen_values = true)]
    point: Option<Coords>,
    /// Added to every measured range.
    #[arg(long, allow_negative_numbers = true)]
    range_offset: Option<f64>,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    out: OutArgs,
    /// JSON experiment config; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "M")]
    trials: Option<usize>,
    #[arg(long, value_name = "S")]
    sigma: Option<f64>,
    #[arg(long, value_name = "N")]
    stations: Option<usize>,
    #[arg(long, value_name = "D")]
    dim: Option<usize>,
    /// plain | lifted:k=1,lambda0=1 | restart:k=1,lambda0=1 (repeatable).
    #[arg(long = "strategy", value_name = "NAME")]
    strategies: Vec<Strategy>,
    /// Worker threads; 0 or absent uses all cores.
    #[arg(long, value_name = "W")]
    workers: Option<usize>,
    #[arg(long)]
    no_geometry_filter: bool,
}

#[derive(Debug, Args)]
struct GradientArgs {
    /// JSON gradient-check config; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; when given, the report and config are written there.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Points per objective kind.
    #[arg(long, value_name = "N")]
    points: Option<usize>,
    /// Scale one analytic Jacobian entry by 1.01 (negative control).
    #[arg(long, hide = true)]
    corrupt_jacobian: bool,
}

/// Comma-separated coordinates.
#[derive(Debug, Clone)]
struct Coords(Vec<f64>);

fn parse_coords(s: &str) -> Result<Coords, String> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad coordinate {v:?}: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Coords)
}

fn parse_xy(s: &str) -> Result<[f64; 2], String> {
    match parse_coords(s)?.0[..] {
        [x, y] => Ok([x, y]),
        ref c => Err(format!("expected two coordinates, got {}", c.len())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Demo2d(a) => commands::demo2d(&a.out.out, a.x0, a.lambda0),
        Command::Curvature(a) => commands::curvature(commands::CurvatureRequest {
            config: a.config,
            out: a.out,
            point: a.point.map(|c| c.0),
            range_offset: a.range_offset,
        }),
        Command::Montecarlo(a) => commands::montecarlo(commands::MonteCarloRequest {
            out: a.out.out,
            config: a.config,
            seed: a.seed,
            trials: a.trials,
            sigma: a.sigma,
            stations: a.stations,
            dim: a.dim,
            strategies: a.strategies,
            workers: a.workers,
            no_geometry_filter: a.no_geometry_filter,
        }),
        Command::CheckGradients(a) => commands::check_gradients(commands::GradientRequest {
            config: a.config,
            out: a.out,
            seed: a.seed,
            points: a.points,
            corrupt_jacobian: a.corrupt_jacobian,
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
