use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use minlp_bench::bench::{parse_configs, run_bench, write_records, RunSettings, Runner};
use minlp_bench::error::BenchError;
use minlp_bench::instance::InstanceKind;
use minlp_bench::profile::{Metric, ProfileTable};
use minlp_bench::suite::{generate, read_manifest, write_suite};
use minlp_core::json::parse_model;
use minlp_core::oa::{solve, Algorithm, SolveResult, SolveStatus, SolverOptions, SubproblemScale};
use minlp_core::FeasibilityNorm;

#[derive(Parser)]
#[command(name = "minlp", version, about = "Outer-approximation solvers for mixed-integer nonlinear programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one model file.
    Solve(SolveArgs),
    /// Run every configuration on every instance of a manifest.
    Bench(BenchArgs),
    /// Performance profile of a bench CSV.
    Profile(ProfileArgs),
    /// Write random instances with oracle values.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Oa,
    Lpnlp,
    Goa,
    Glpnlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    R,
    C,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    Linf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Convex,
    Nonconvex,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Time,
    Iterations,
}

#[derive(clap::Args)]
struct SolveArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value = "oa")]
    alg: AlgArg,
    /// Presolve with bound tightening and add convexification cuts.
    #[arg(long)]
    convexify: bool,
    /// Subproblem scale with --convexify: reduced or complete.
    #[arg(long, value_enum, default_value = "r")]
    scale: ScaleArg,
    #[arg(long, default_value_t = 1e-5)]
    eps_abs: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps_rel: f64,
    /// Seconds.
    #[arg(long, default_value_t = 900.0)]
    time_limit: f64,
    /// Norm of the feasibility subproblem.
    #[arg(long, value_enum, default_value = "l1")]
    norm: NormArg,
    /// Write the iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the cut pool as JSON lines.
    #[arg(long)]
    cuts: Option<PathBuf>,
    /// Print the full result as JSON instead of the summary.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct BenchArgs {
    manifest: PathBuf,
    /// Comma-separated configurations, e.g. `oa,c-oa(r),lpnlp,c-lpnlp(c)`.
    #[arg(long)]
    configs: String,
    #[arg(long)]
    out: PathBuf,
    /// Seconds per run.
    #[arg(long, default_value_t = 900.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps_abs: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps_rel: f64,
    /// Parallel workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Solve in this process instead of one child process per run.
    #[arg(long)]
    in_process: bool,
}

#[derive(clap::Args)]
struct ProfileArgs {
    csv: PathBuf,
    #[arg(long, value_enum)]
    metric: MetricArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>, BenchError> {
    File::create(path).map(BufWriter::new).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn print_summary(r: &SolveResult, label: &str) {
    let objective = if r.objective.is_finite() { r.objective.to_string() } else { "-".into() };
    println!("{} {}", r.status, objective);
    println!("algorithm   {label}");
    println!("bounds      [{}, {}]  gap {}", r.bounds.lb, r.bounds.ub, r.bounds.gap());
    println!("iterations  {}", r.nlp_solves);
    println!("certified   {}", r.certified);
    println!("time        {:.3} s", r.time_s);
}

fn cmd_solve(a: SolveArgs) -> Result<ExitCode, BenchError> {
    let text = std::fs::read_to_string(&a.file).map_err(|source| BenchError::Io {
        path: a.file.display().to_string(),
        source,
    })?;
    let model = parse_model(&text)?;
    let algorithm = match a.alg {
        AlgArg::Oa => Algorithm::OA,
        AlgArg::Lpnlp => Algorithm::LpNlpBB,
        AlgArg::Goa => Algorithm::GOA,
        AlgArg::Glpnlp => Algorithm::GLpNlpBB,
    };
    let opts = SolverOptions {
        convexify: a.convexify,
        subproblem_scale: match a.scale {
            ScaleArg::R => SubproblemScale::Reduced,
            ScaleArg::C => SubproblemScale::Complete,
        },
        eps_abs: a.eps_abs,
        eps_rel: a.eps_rel,
        time_limit: Some(Duration::from_secs_f64(a.time_limit.max(0.0))),
        feasibility_norm: match a.norm {
            NormArg::L1 => FeasibilityNorm::L1,
            NormArg::Linf => FeasibilityNorm::Linf,
        },
        ..SolverOptions::new(algorithm)
    };
    let r = solve(&model, &opts)?;
    if let Some(p) = &a.trace {
        r.write_trace(create(p)?)?;
    }
    if let Some(p) = &a.cuts {
        r.write_cuts(create(p)?)?;
    }
    if a.json {
        println!("{}", serde_json::to_string(&r)?);
    } else {
        print_summary(&r, &opts.label());
    }
    Ok(ExitCode::from(match r.status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::TimeLimit | SolveStatus::IterationLimit => 3,
    }))
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode, BenchError> {
    let configs = parse_configs(&a.configs)?;
    let instances = read_manifest(&a.manifest)?;
    let settings = RunSettings {
        time_limit: Some(a.time_limit),
        eps_abs: a.eps_abs,
        eps_rel: a.eps_rel,
    };
    let runner = if a.in_process {
        Runner::InProcess
    } else {
        let exe = std::env::current_exe().map_err(|source| BenchError::Io {
            path: "current executable".into(),
            source,
        })?;
        Runner::Isolated(exe)
    };
    let records = run_bench(&instances, &configs, &settings, &runner, a.jobs);
    write_records(create(&a.out)?, &records)?;
    let solved = records.iter().filter(|r| r.solved()).count();
    eprintln!("{} runs, {} optimal", records.len(), solved);
    Ok(ExitCode::SUCCESS)
}

fn cmd_profile(a: ProfileArgs) -> Result<ExitCode, BenchError> {
    let file = File::open(&a.csv).map_err(|source| BenchError::Io {
        path: a.csv.display().to_string(),
        source,
    })?;
    let records = minlp_bench::bench::read_records(file)?;
    let metric = match a.metric {
        MetricArg::Time => Metric::Time,
        MetricArg::Iterations => Metric::Iterations,
    };
    ProfileTable::from_records(&records, metric).write_csv(create(&a.out)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(a: GenerateArgs) -> Result<ExitCode, BenchError> {
    if a.n == 0 {
        return Err(BenchError::Config("--n must be at least 1".into()));
    }
    let kind = match a.kind {
        KindArg::Convex => InstanceKind::Convex,
        KindArg::Nonconvex => InstanceKind::Nonconvex,
    };
    let suite = generate(kind, a.n, a.seed)?;
    write_suite(&a.out, &suite)?;
    eprintln!("wrote {} instances to {}", suite.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Profile(a) => cmd_profile(a),
        Cmd::Generate(a) => cmd_generate(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
