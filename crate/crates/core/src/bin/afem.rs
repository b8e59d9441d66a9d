use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fracafem::afem::{extrapolate_energy, run, write_csv, AfemConfig, Rhs, Strategy};
use fracafem::diagnostics::{equivalence_report, write_diag_csv};
use fracafem::mesh::{build_initial_mesh, uniform_refine, DomainSpec, DEFAULT_CIRCLE_SEGMENTS};
use fracafem::AfemError;

#[derive(Parser)]
#[command(
    name = "afem",
    about = "Adaptive FEM for the integral fractional Laplacian"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Circle,
    Lshape,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Adaptive,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop and write one CSV row per level.
    Run {
        #[arg(long, value_enum)]
        domain: Domain,
        #[arg(long)]
        s: f64,
        /// Boundary vertices of the initial circle polygon.
        #[arg(long, default_value_t = DEFAULT_CIRCLE_SEGMENTS)]
        circle_segments: usize,
        #[arg(long, default_value_t = 0.3)]
        theta: f64,
        #[arg(long, value_enum, default_value = "adaptive")]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 3000)]
        max_dofs: usize,
        #[arg(long, default_value_t = 7)]
        quad_order: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dump_mesh: Option<PathBuf>,
        /// `disc-exact` or `constant:<c>`
        #[arg(long, default_value = "disc-exact")]
        rhs: String,
        /// Squared energy norm of the exact solution, used for the error column.
        #[arg(long)]
        reference_energy: Option<f64>,
        #[arg(long, default_value_t = 1e-10)]
        solver_tol: f64,
    },
    /// Equivalence report of the interpolation operators on uniform meshes.
    Diag {
        #[arg(long, value_enum)]
        domain: Domain,
        #[arg(long)]
        s: f64,
        /// Boundary vertices of the initial circle polygon.
        #[arg(long, default_value_t = DEFAULT_CIRCLE_SEGMENTS)]
        circle_segments: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        max_level: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn domain_spec(d: Domain, segments: usize) -> DomainSpec {
    match d {
        Domain::Circle => DomainSpec::unit_circle(segments),
        Domain::Lshape => DomainSpec::l_shape(),
    }
}

fn parse_rhs(text: &str) -> Result<Rhs, AfemError> {
    if text == "disc-exact" {
        return Ok(Rhs::DiscExact);
    }
    match text.strip_prefix("constant:").map(str::parse::<f64>) {
        Some(Ok(c)) if c.is_finite() => Ok(Rhs::Constant(c)),
        _ => Err(AfemError::InvalidInput(format!("unknown rhs {text:?}"))),
    }
}

fn execute(cli: Cli) -> Result<(), AfemError> {
    match cli.command {
        Command::Run {
            domain,
            circle_segments,
            s,
            theta,
            strategy,
            max_dofs,
            quad_order,
            out,
            dump_mesh,
            rhs,
            reference_energy,
            solver_tol,
        } => {
            let mut cfg = AfemConfig::new(domain_spec(domain, circle_segments), s);
            cfg.theta = theta;
            cfg.strategy = match strategy {
                StrategyArg::Adaptive => Strategy::Adaptive,
                StrategyArg::Uniform => Strategy::Uniform,
            };
            cfg.max_dofs = max_dofs;
            cfg.quad_order = quad_order;
            cfg.solver_tol = solver_tol;
            cfg.rhs = parse_rhs(&rhs)?;
            cfg.reference_energy = reference_energy;
            cfg.dump_mesh = dump_mesh;
            let result = run(&cfg)?;
            write_csv(&result.records, &out)?;
            if cfg.strategy == Strategy::Uniform && result.records.len() >= 3 {
                let energies: Vec<f64> = result.records.iter().map(|r| r.energy_sq).collect();
                let (limit, uncertainty) = extrapolate_energy(&energies)?;
                let mut side = out.clone().into_os_string();
                side.push(".energy");
                std::fs::write(
                    side,
                    format!("energy_sq,uncertainty\n{limit},{uncertainty}\n"),
                )?;
            }
            for r in &result.records {
                println!(
                    "level {:>2}  N {:>5}  energy {:.10}  est {}  err {}",
                    r.level,
                    r.dofs,
                    r.energy_sq,
                    r.estimator.map_or("-".into(), |v| format!("{v:.4e}")),
                    r.error.map_or("-".into(), |v| format!("{v:.4e}")),
                );
            }
        }
        Command::Diag {
            domain,
            circle_segments,
            s,
            samples,
            max_level,
            out,
        } => {
            let mut mesh = build_initial_mesh(&domain_spec(domain, circle_segments))?;
            let mut reports = Vec::new();
            for level in 0..=max_level {
                let rep = equivalence_report(&mesh, s, samples)?;
                println!(
                    "level {level}  r in [{:.4}, {:.4}]  q in [{:.4}, {:.4}]",
                    rep.r_min, rep.r_max, rep.q_min, rep.q_max
                );
                reports.push(rep);
                if level < max_level {
                    mesh = uniform_refine(&mesh)?.mesh;
                }
            }
            write_diag_csv(&reports, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
