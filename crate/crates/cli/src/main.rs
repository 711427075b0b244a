use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cadrecon::sampling::Strategy;

mod commands;

/// Reconstruct deformed spline CAD models from mesh point correspondences.
#[derive(Parser, Debug)]
#[command(name = "cadrecon", version)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refit every spline entity against the deformed mesh points lying on it.
    Fit(FitArgs),
    /// Fit one trivariate deformation volume and compose it with every entity.
    Compose(ComposeArgs),
    /// Reduce the degrees of every entity of a model.
    Reduce(ReduceArgs),
    /// Generate a synthetic test case.
    Generate(GenerateArgs),
    /// Summarize a model, optionally with errors against a mesh pair.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = true)]
struct MeshArgs {
    /// Combined six-column mesh file (`x y z x' y' z'`).
    #[arg(long, conflicts_with_all = ["mesh_initial", "mesh_deformed"])]
    mesh_pair: Option<PathBuf>,
    /// Mesh points before deformation.
    #[arg(long, requires = "mesh_deformed")]
    mesh_initial: Option<PathBuf>,
    /// Mesh points after deformation, index-aligned with --mesh-initial.
    #[arg(long, requires = "mesh_initial")]
    mesh_deformed: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// JSON report path (default: OUT/report.json).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Input model (IGES).
    #[arg(long)]
    iges: PathBuf,
    #[command(flatten)]
    mesh: MeshArgs,
    /// Target max pointwise error per entity (default: 1e-4 of each entity's extent).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Where curves take extra targets from when their own points are too few.
    #[arg(long, value_enum, default_value_t = StrategyArg::Surface)]
    strategy: StrategyArg,
    /// Highest degree the refinement may elevate to.
    #[arg(long, default_value_t = 4)]
    max_degree: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ReductionArgs {
    /// Reduce every composed entity to this degree.
    #[arg(long)]
    reduce_to: Option<usize>,
    /// Per-step reduction tolerance (model units).
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Per-span control polygon growth that triggers a smoothing knot.
    #[arg(long, default_value_t = 1.05)]
    delta: f64,
}

#[derive(Args, Debug)]
struct ComposeArgs {
    #[arg(long)]
    iges: PathBuf,
    #[command(flatten)]
    mesh: MeshArgs,
    /// Degrees of the deformation volume, e.g. 3,2,1.
    #[arg(long, value_delimiter = ',', required = true)]
    degrees: Vec<usize>,
    #[command(flatten)]
    reduction: ReductionArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    /// Input model (IGES).
    #[arg(long)]
    iges: PathBuf,
    /// Target degree in every parametric direction.
    #[arg(long)]
    reduce_to: usize,
    /// Per-step reduction tolerance (model units).
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.05)]
    delta: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(value_enum)]
    case: Case,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Deformation applied to produce the deformed mesh.
    #[arg(long, value_enum, default_value_t = DeformationArg::Prescribed)]
    deformation: DeformationArg,
    /// Strength of the radial deformation.
    #[arg(long, default_value_t = 0.15)]
    c: f64,
    /// Largest vertical deflection of the bending preset.
    #[arg(long, default_value_t = 18.88)]
    deflection: f64,
    /// Affine map as twelve values: the 3x3 matrix row by row, then the translation.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    affine: Option<Vec<f64>>,
    /// Plate length, width, thickness.
    #[arg(long, value_delimiter = ',', default_values_t = [200.0, 100.0, 1.5])]
    size: Vec<f64>,
    #[arg(long, default_value_t = 50.0)]
    hole_diameter: f64,
    /// Mesh samples per hole piece (plate) or grid counts nx,ny,nz (grid).
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    /// Mesh samples from the hole to the outer boundary (plate).
    #[arg(long, default_value_t = 14)]
    radial_samples: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Model to summarize.
    #[arg(long)]
    iges: PathBuf,
    /// Undeformed model the mesh points were assigned on; enables error statistics.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["mesh_initial", "mesh_deformed"])]
    mesh_pair: Option<PathBuf>,
    #[arg(long, requires = "mesh_deformed")]
    mesh_initial: Option<PathBuf>,
    #[arg(long, requires = "mesh_initial")]
    mesh_deformed: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Surface,
    Mesh,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Surface => Strategy::Surface,
            StrategyArg::Mesh => Strategy::Mesh,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Case {
    Plate,
    Grid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DeformationArg {
    Identity,
    Prescribed,
    Bending,
    Affine,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Compose(a) => commands::compose(a),
        Command::Reduce(a) => commands::reduce(a),
        Command::Generate(a) => commands::generate(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
