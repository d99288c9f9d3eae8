use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use discate::bounds::{bound_table, format_bound_table, BoundQuery};
use discate::estimators::Truncation;
use discate::harness::{overlay_curve, run_grid, ExperimentConfig};
use discate::pipeline::{run_estimator, EstimationRequest, NuisanceMode, NuisancePlan};
use discate::sampling::{draw_dataset, uniform_sim_model};
use discate::verify::{run_verify, VerifyOptions};
use discate::{Dataset, EstimatorId, ModelClassParams, ModelSpec, NuisanceEstimates, SeedSpec};

#[derive(Parser)]
#[command(name = "discate", version, about = "Treatment effects with a high-dimensional discrete covariate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate from a dataset file and print a key=value block.
    Estimate(EstimateArgs),
    /// Draw a dataset from a model file or the uniform simulation model.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo grid over (n, gamma) and write the result table.
    Phase(PhaseArgs),
    /// Print the closed-form bounds at (epsilon, n, d).
    Bounds(BoundsArgs),
    /// Check estimator equivalences and pair sums on random datasets.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NuisanceArg {
    Empirical,
    Split,
    Zero,
    File,
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset file with header `x,a,y` and 1-based x.
    #[arg(long)]
    data: PathBuf,
    /// Number of categories; inferred from the largest x when omitted.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value = "plugin")]
    estimator: EstimatorId,
    #[arg(long, value_enum, default_value = "empirical")]
    nuisance: NuisanceArg,
    /// Nuisance file (keys d, p_hat, pi_hat, mu1_hat, mu0_hat) for `--nuisance file`.
    #[arg(long, required_if_eq("nuisance", "file"))]
    nuisance_file: Option<PathBuf>,
    /// Model file supplying the covariate masses for `--nuisance zero`.
    #[arg(long, required_if_eq("nuisance", "zero"))]
    model: Option<PathBuf>,
    /// Seed of the sample split for `--nuisance split`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attach a Wald interval at this level (plugin, reg, ipw, dr).
    #[arg(long)]
    level: Option<f64>,
    /// Floor the wate2 denominator at eps (1 - eps).
    #[arg(long)]
    clamp_epsilon: Option<f64>,
    /// Clamp propensities to [eps, 1 - eps] in ipw and dr.
    #[arg(long)]
    truncate: Option<f64>,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["model", "uniform"])))]
struct SimulateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Uniform simulation model with this many categories.
    #[arg(long)]
    uniform: Option<usize>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PhaseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Add `bound = C n^{gamma/2 - 1}` and `ratio` columns (overrides the config).
    #[arg(long)]
    overlay: Option<f64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Also write one series file per n into this directory.
    #[arg(long)]
    plotdata: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    sigma_n: Option<f64>,
    /// Constant of the rate templates.
    #[arg(long, default_value_t = 1.0)]
    constant: f64,
    #[arg(long)]
    gamma: Option<f64>,
    /// Relative error of the covariate masses for the second-order template.
    #[arg(long, default_value_t = 0.0)]
    xi: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clamp propensities in ipw and dr; makes the equivalence check fail.
    #[arg(long)]
    debug_truncate_propensity: Option<f64>,
}

enum Failure {
    Usage(String),
    Data(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Verify(_) => 3,
        }
    }
}

fn data_err(e: discate::Error) -> Failure {
    Failure::Data(e.to_string())
}

fn file_err(path: &Path) -> impl Fn(discate::Error) -> Failure + '_ {
    move |e| match e {
        discate::Error::Io(io) => Failure::Data(format!("{}: {io}", path.display())),
        other => Failure::Data(other.to_string()),
    }
}

fn usage_err(e: discate::Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Phase(a) => phase(a),
        Command::Bounds(a) => bounds(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Data(m) | Failure::Verify(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    if a.nuisance_file.is_some() && !matches!(a.nuisance, NuisanceArg::File) {
        return Err(Failure::Usage("--nuisance-file requires --nuisance file".into()));
    }
    if a.model.is_some() && !matches!(a.nuisance, NuisanceArg::Zero) {
        return Err(Failure::Usage("--model requires --nuisance zero".into()));
    }
    let mode = match a.nuisance {
        NuisanceArg::Empirical => NuisanceMode::Empirical,
        NuisanceArg::Split => NuisanceMode::Split,
        NuisanceArg::Zero => NuisanceMode::Zero,
        NuisanceArg::File => NuisanceMode::Truth,
    };
    if !mode.supports(a.estimator) {
        return Err(Failure::Usage(format!("estimator {} does not accept nuisance mode {mode}", a.estimator)));
    }
    let clamp = a.clamp_epsilon.map(ModelClassParams::new).transpose().map_err(usage_err)?;
    let data = Dataset::read(&a.data, a.d).map_err(file_err(&a.data))?;
    let fixed = match a.nuisance {
        NuisanceArg::File => {
            let path = a.nuisance_file.as_ref().expect("required by clap");
            Some(NuisanceEstimates::read(path).map_err(file_err(path))?)
        }
        NuisanceArg::Zero => {
            let path = a.model.as_ref().expect("required by clap");
            let model = ModelSpec::read(path).map_err(file_err(path))?;
            Some(NuisanceEstimates::zeroed(model.p).map_err(data_err)?)
        }
        NuisanceArg::Empirical | NuisanceArg::Split => None,
    };
    let plan = match (a.nuisance, &fixed) {
        (_, Some(nu)) => NuisancePlan::Fixed(nu),
        (NuisanceArg::Split, None) => NuisancePlan::Split(SeedSpec::new(a.seed, 0)),
        _ => NuisancePlan::Empirical,
    };
    let mut req = EstimationRequest::new(a.estimator, plan);
    req.level = a.level;
    req.wate_clamp = clamp;
    req.truncation = a.truncate.map_or(Truncation::None, Truncation::At);
    let result = run_estimator(&data, &req).map_err(data_err)?;
    print!("{}", result.to_key_value());
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let model = match (&a.model, a.uniform) {
        (Some(path), _) => ModelSpec::read(path).map_err(file_err(path))?,
        (None, Some(d)) => uniform_sim_model(d).map_err(usage_err)?,
        (None, None) => unreachable!("clap requires a model source"),
    };
    let data = draw_dataset(&model, a.n, SeedSpec::new(a.seed, a.stream)).map_err(usage_err)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf).map_err(data_err)?;
    write_atomic(&a.out, &buf)
}

fn phase(a: PhaseArgs) -> Result<(), Failure> {
    let config = ExperimentConfig::read(&a.config).map_err(|e| match e {
        discate::Error::Io(io) => Failure::Usage(format!("{}: {io}", a.config.display())),
        other => Failure::Usage(other.to_string()),
    })?;
    if a.workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let mut table = run_grid(&config, a.workers).map_err(data_err)?;
    if let Some(c) = a.overlay {
        table = overlay_curve(&table, c).map_err(usage_err)?;
    }
    write_atomic(&a.out, table.to_csv().as_bytes())?;
    if let Some(dir) = &a.plotdata {
        table.write_plot_series(dir).map_err(data_err)?;
    }
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<(), Failure> {
    let query = BoundQuery {
        epsilon: a.epsilon,
        n: a.n,
        d: a.d,
        sigma_n: a.sigma_n,
        constant: a.constant,
        gamma: a.gamma,
        xi: a.xi,
    };
    let reports = bound_table(&query).map_err(usage_err)?;
    print!("{}", format_bound_table(&reports));
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let opts = VerifyOptions {
        cases: a.cases,
        seed: a.seed,
        truncate_propensity: a.debug_truncate_propensity,
        ..VerifyOptions::default()
    };
    let report = run_verify(&opts).map_err(data_err)?;
    print!("{}", report.summary());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("{} check(s) failed", report.failures.len())))
    }
}

/// Writes through a temporary sibling so a failed run never leaves a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let file_name = path.file_name().ok_or_else(|| Failure::Usage(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).map_err(|e| Failure::Data(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Failure::Data(format!("{}: {e}", path.display()))
    })
}
