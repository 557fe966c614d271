use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use coulomb_ellipse::el_system::{solve, ElError, Ellipse, Solution, SolveOptions};
use coulomb_ellipse::io::{self, CsvCell, IoError, SolutionRecord};
use coulomb_ellipse::kernel::{FourierKernel2D, KernelError, KernelSpec, PresetRegistry};
use coulomb_ellipse::nd::{solve_nd, KernelNdRegistry, NdError, NdSolveOptions};
use coulomb_ellipse::particle::{self, MinimizeOptions, ParticleError};
use coulomb_ellipse::potential::{self, PotentialError, PotentialField, VerifyOptions};
use coulomb_ellipse::spectral::certify;

#[derive(Parser, Debug)]
#[command(
    name = "coulomb-ellipse",
    version,
    about = "Minimizing ellipses of perturbed Coulomb energies"
)]
struct Cli {
    /// Run every reduction on one thread for bitwise-reproducible artifacts.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the Euler-Lagrange system for the minimizing ellipse.
    Solve(SolveArgs),
    /// Audit a solution against both Euler-Lagrange conditions.
    Verify(VerifyArgs),
    /// Minimize the N-particle energy and fit an ellipse to the cloud.
    Simulate(SimulateArgs),
    /// Certify positivity of the interaction's Fourier symbol.
    Spectrum(SpectrumArgs),
    /// Solve for the axis-aligned ellipsoid in dimension d >= 3.
    SolveNd(SolveNdArgs),
    /// Tabulate the total potential on a grid.
    Field(FieldArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long, default_value_t = 2048)]
    quad_nodes: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// Output JSON path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    /// Exterior rings of the audit grid.
    #[arg(long, default_value_t = 100)]
    radial: usize,
    /// Angles per exterior ring.
    #[arg(long, default_value_t = 100)]
    angular: usize,
    #[arg(long, default_value_t = 64)]
    interior_samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 50_000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol_g: f64,
    /// Final positions as an `x,y` CSV.
    #[arg(long)]
    positions: Option<PathBuf>,
    /// Solution JSON to compare the fitted ellipse against.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveNdArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    kernel: PathBuf,
    /// Polynomial exactness of the sphere rule; 30 for d = 3 and 20 above by default.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FieldArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    /// Output CSV with columns x, y, P, region.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 81)]
    nx: usize,
    #[arg(long, default_value_t = 81)]
    ny: usize,
    /// Half-width of the square grid; twice the major semi-axis by default.
    #[arg(long)]
    extent: Option<f64>,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
enum Failure {
    /// Solver or descent did not converge: exit 2.
    Convergence(String),
    /// Malformed input or options: exit 3.
    Validation(String),
    /// Anything else, typically I/O on outputs: exit 1.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Convergence(_) => 2,
            Failure::Validation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Convergence(m) | Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<KernelError> for Failure {
    fn from(e: KernelError) -> Self {
        Failure::Validation(format!("kernel: {e}"))
    }
}

impl From<ElError> for Failure {
    fn from(e: ElError) -> Self {
        match e {
            ElError::NoConvergence { .. } | ElError::LeftDomain { .. } => {
                Failure::Convergence(e.to_string())
            }
            ElError::Domain { .. } | ElError::InvalidOptions(_) => {
                Failure::Validation(e.to_string())
            }
        }
    }
}

impl From<PotentialError> for Failure {
    fn from(e: PotentialError) -> Self {
        match e {
            PotentialError::System(inner) => inner.into(),
            PotentialError::QuadratureBudgetExceeded { .. }
            | PotentialError::ExtrapolationUnstable { .. } => Failure::Convergence(e.to_string()),
            PotentialError::OutsideDomain { .. } | PotentialError::InvalidInput(_) => {
                Failure::Validation(e.to_string())
            }
        }
    }
}

impl From<ParticleError> for Failure {
    fn from(e: ParticleError) -> Self {
        match e {
            ParticleError::Stall { .. } => Failure::Convergence(e.to_string()),
            ParticleError::CoincidentParticles { .. } | ParticleError::DegenerateCloud(_) => {
                Failure::Runtime(e.to_string())
            }
            ParticleError::TooFewParticles { .. } => Failure::Validation(e.to_string()),
        }
    }
}

impl From<NdError> for Failure {
    fn from(e: NdError) -> Self {
        match e {
            NdError::NoConvergence { .. } | NdError::LeftDomain { .. } => {
                Failure::Convergence(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))
}

fn load_kernel(path: &Path) -> Result<FourierKernel2D, Failure> {
    let spec = KernelSpec::from_json(&read_input(path)?)?;
    Ok(spec.build(&PresetRegistry::builtin())?)
}

fn load_solution(path: &Path) -> Result<SolutionRecord, Failure> {
    SolutionRecord::from_json(&read_input(path)?)
        .map_err(|e| Failure::Validation(format!("solution {}: {e}", path.display())))
}

fn record_ellipse(rec: &SolutionRecord) -> Result<Ellipse, Failure> {
    rec.ellipse()
        .map_err(|e| Failure::Validation(e.to_string()))
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Validation(format!(
            "--{name} must be positive (got {v})"
        )))
    }
}

fn io_failure(e: IoError) -> Failure {
    Failure::Runtime(e.to_string())
}

fn emit_json(out: Option<&Path>, value: &Value) -> Result<(), Failure> {
    match out {
        Some(path) => io::write_json(path, value).map_err(io_failure),
        None => {
            print!("{}", io::to_json_string(value).map_err(io_failure)?);
            Ok(())
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::Runtime(e.to_string()))
}

fn run_solve(args: &SolveArgs) -> Result<(), Failure> {
    positive("tol", args.tol)?;
    let k = load_kernel(&args.kernel)?;
    let opts = SolveOptions {
        quad_nodes: args.quad_nodes,
        tol: args.tol,
        max_iter: args.max_iter,
        ..SolveOptions::default()
    };
    let sol = solve(&k, &opts)?;
    emit_json(
        args.out.as_deref(),
        &to_value(&SolutionRecord::from_solution(&sol))?,
    )
}

fn run_verify(args: &VerifyArgs, deterministic: bool) -> Result<(), Failure> {
    let k = load_kernel(&args.kernel)?;
    let rec = load_solution(&args.solution)?;
    if args.radial == 0 || args.angular == 0 || args.interior_samples == 0 {
        return Err(Failure::Validation("grid sizes must be positive".into()));
    }
    let sol = Solution::candidate(record_ellipse(&rec)?, &k, &SolveOptions::default())?;
    let opts = VerifyOptions {
        radial: args.radial,
        angular: args.angular,
        interior_samples: args.interior_samples,
        parallel: !deterministic,
        ..VerifyOptions::default()
    };
    let report = potential::verify(&sol, &k, &opts)?;
    emit_json(args.out.as_deref(), &to_value(&report)?)
}

/// Smallest angle between two axis directions, in degrees.
fn axis_angle_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d).to_degrees()
}

fn run_simulate(args: &SimulateArgs, deterministic: bool) -> Result<(), Failure> {
    positive("tol-g", args.tol_g)?;
    let k = load_kernel(&args.kernel)?;
    let reference = args.compare.as_deref().map(load_solution).transpose()?;
    let mut opts = MinimizeOptions {
        tol_g: args.tol_g,
        max_steps: args.steps,
        ..MinimizeOptions::default()
    };
    opts.eval.parallel = !deterministic;
    let report = particle::minimize(args.n, &k, args.seed, &opts)?;
    let fit = particle::fit_ellipse(&report.state)?;
    let mut out = json!({
        "n": args.n,
        "seed": args.seed,
        "steps": report.steps,
        "converged": report.converged,
        "energy": report.energy,
        "grad_norm": report.grad_norm,
        "fit": {"a": fit.a, "b": fit.b, "phi": fit.phi},
    });
    if let Some(rec) = reference {
        let e = record_ellipse(&rec)?;
        out["comparison"] = json!({
            "a_rel_error": (fit.a - e.a).abs() / e.a,
            "b_rel_error": (fit.b - e.b).abs() / e.b,
            "angle_error_deg": axis_angle_deg(fit.phi, e.phi),
        });
    }
    if let Some(path) = &args.positions {
        let rows: Vec<Vec<CsvCell>> = report
            .state
            .positions
            .iter()
            .map(|p| vec![CsvCell::Float(p[0]), CsvCell::Float(p[1])])
            .collect();
        io::write_csv(path, &["x", "y"], &rows).map_err(io_failure)?;
    }
    emit_json(args.out.as_deref(), &out)
}

fn run_spectrum(args: &SpectrumArgs) -> Result<(), Failure> {
    let k = load_kernel(&args.kernel)?;
    emit_json(args.out.as_deref(), &to_value(&certify(&k))?)
}

fn run_solve_nd(args: &SolveNdArgs) -> Result<(), Failure> {
    positive("tol", args.tol)?;
    let text = read_input(&args.kernel)?;
    let k = KernelNdRegistry::builtin().build_json(args.dim, &text)?;
    let opts = NdSolveOptions {
        degree: args.degree,
        tol: args.tol,
        max_iter: args.max_iter,
        ..NdSolveOptions::default()
    };
    let sol = solve_nd(&k, &opts)?;
    eprintln!(
        "note: positivity of the interaction's Fourier transform is not certified in d >= 3; \
         uniqueness of the minimizer is assumed"
    );
    emit_json(args.out.as_deref(), &to_value(&sol)?)
}

fn run_field(args: &FieldArgs, deterministic: bool) -> Result<(), Failure> {
    let k = load_kernel(&args.kernel)?;
    let e = record_ellipse(&load_solution(&args.solution)?)?;
    if args.nx < 2 || args.ny < 2 {
        return Err(Failure::Validation(
            "--nx and --ny must be at least 2".into(),
        ));
    }
    let extent = args.extent.unwrap_or(2.0 * e.a.max(e.b));
    positive("extent", extent)?;
    let field = PotentialField::new(e, &k, Default::default());
    let mut points = Vec::with_capacity(args.nx * args.ny);
    for j in 0..args.ny {
        for i in 0..args.nx {
            let x = -extent + 2.0 * extent * i as f64 / (args.nx - 1) as f64;
            let y = -extent + 2.0 * extent * j as f64 / (args.ny - 1) as f64;
            points.push((x, y));
        }
    }
    let values = potential::evaluate_many(&field, &points, !deterministic)?;
    let rows: Vec<Vec<CsvCell>> = points
        .iter()
        .zip(values)
        .map(|(&(x, y), p)| {
            let region = if e.level(x, y) <= 1.0 { "in" } else { "out" };
            vec![
                CsvCell::Float(x),
                CsvCell::Float(y),
                CsvCell::Float(p),
                CsvCell::Text(region.into()),
            ]
        })
        .collect();
    io::write_csv(&args.out, &["x", "y", "P", "region"], &rows).map_err(io_failure)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let det = cli.deterministic;
    match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Verify(a) => run_verify(a, det),
        Command::Simulate(a) => run_simulate(a, det),
        Command::Spectrum(a) => run_spectrum(a),
        Command::SolveNd(a) => run_solve_nd(a),
        Command::Field(a) => run_field(a, det),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
