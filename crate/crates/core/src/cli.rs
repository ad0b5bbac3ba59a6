//! Command-line front end. Data goes to stdout (JSON or CSV), diagnostics to
//! stderr. Exit status: 0 success, 1 failure inside the library, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::arx::{asymptotic_fisher, fisher_exact, mle_estimate, simulate_arx, ArxSpec, NoiseSampler, StateTrajectory};
use crate::design::{optimal_input, InputDesign, SignProfile};
use crate::error::Error;
use crate::gaussian_sim::write_path_csv;
use crate::innovations::{InnovationCoefficients, InnovationSystem};
use crate::io::Table;
use crate::laplace::{
    laplace_exact, laplace_limit, laplace_mc, laplace_trace, phi_chain_laplace_closed,
    phi_chain_laplace_eigen, spectral_gap, DENSE_CHAIN_LIMIT,
};
use crate::mc::{run_experiment, run_experiment_with_jobs, ExperimentConfig};
use crate::noise::NoiseModel;
use crate::rng;

#[derive(Debug, Parser)]
#[command(name = "arxid", version, about = "Drift estimation and input design for ARX(1) models with Gaussian noise")]
pub struct Cli {
    /// Pretty-print JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample one noise path with the circulant embedding sampler.
    SimulateNoise {
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Partial correlations and innovation standard deviations.
    Innovations {
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Asymptotically optimal input for the given drift sign.
    DesignInput {
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        theta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one ARX(1) trajectory.
    Simulate {
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "optimal")]
        input: InputArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form MLE for a trajectory CSV with `x` and `v` columns.
    Estimate {
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        true_theta: Option<f64>,
    },
    /// Exact Fisher information.
    Fisher {
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "optimal")]
        input: InputArg,
    },
    /// Exact, Monte Carlo and limiting Laplace transform of the observed information.
    LaplaceCheck {
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        mu: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "optimal")]
        input: InputArg,
        /// Riccati trace CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest eigenvalue of the backward-chain covariance, and the chain transform for `--a`.
    SpectralGap {
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        a: Option<f64>,
    },
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseKind {
    Fgn,
    Ar1,
    Ma1,
    White,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value = "fgn")]
    noise: NoiseKind,
    /// Hurst index for fGn.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.6)]
    hurst: f64,
    /// AR(1) coefficient.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// MA(1) coefficient.
    #[arg(long, allow_hyphen_values = true)]
    psi: Option<f64>,
}

impl NoiseArgs {
    fn model(&self) -> Result<NoiseModel, CliError> {
        let model = match self.noise {
            NoiseKind::Fgn => NoiseModel::fgn(self.hurst)?,
            NoiseKind::Ar1 => NoiseModel::ar1(self.phi.ok_or(CliError::Usage("--noise ar1 requires --phi"))?)?,
            NoiseKind::Ma1 => NoiseModel::ma1(self.psi.ok_or(CliError::Usage("--noise ma1 requires --psi"))?)?,
            NoiseKind::White => NoiseModel::White,
        };
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum InputArg {
    Optimal,
    Zero,
    File(PathBuf),
}

impl FromStr for InputArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(InputArg::Optimal),
            "zero" => Ok(InputArg::Zero),
            _ => s
                .strip_prefix("file:")
                .filter(|p| !p.is_empty())
                .map(|p| InputArg::File(PathBuf::from(p)))
                .ok_or_else(|| format!("expected optimal, zero or file:PATH, got `{s}`")),
        }
    }
}

impl InputArg {
    fn resolve(&self, system: &InnovationSystem, n: usize, theta: f64) -> crate::Result<InputDesign> {
        match self {
            InputArg::Optimal => optimal_input(system, n, SignProfile::for_theta(theta)),
            InputArg::Zero => InputDesign::zero(system, n),
            InputArg::File(path) => {
                let table = Table::read(path)?;
                let u = table.require(path, "u")?;
                crate::error::check_len("input file length", n, u.len())?;
                InputDesign::admit(u.to_vec(), system)
            }
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(&'static str),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn emit<T: Serialize>(value: &T, pretty: bool) -> Result<(), CliError> {
    let text = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }
    .map_err(Error::from)?;
    println!("{text}");
    Ok(())
}

fn write_csv_or_stdout(
    out: Option<&Path>,
    to_file: impl FnOnce(&Path) -> crate::Result<()>,
    to_writer: impl FnOnce(&mut dyn Write) -> csv::Result<()>,
) -> Result<(), CliError> {
    match out {
        Some(path) => to_file(path)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            to_writer(&mut lock).map_err(|e| Error::csv("<stdout>", e))?;
        }
    }
    Ok(())
}

fn check_horizon(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1"));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let pretty = cli.pretty;
    match &cli.command {
        Command::SimulateNoise { noise, n, seed, out } => {
            let model = noise.model()?;
            check_horizon(*n)?;
            let sampler = NoiseSampler::new(model, *n)?;
            let path = sampler.sample(&mut rng::stream(*seed, 0))?;
            write_csv_or_stdout(
                out.as_deref(),
                |p| crate::gaussian_sim::write_path_csv_file(p, &path),
                |w| write_path_csv(w, &path),
            )?;
            if let Some(p) = out {
                emit(&json!({ "path": p, "n": n, "noise": model }), pretty)?;
            }
        }
        Command::Innovations { noise, n, out } => {
            let model = noise.model()?;
            check_horizon(*n)?;
            let coeffs = InnovationCoefficients::from_model(model, *n)?;
            write_csv_or_stdout(out.as_deref(), |p| coeffs.write_csv_file(p), |w| coeffs.write_csv(w))?;
            if let Some(p) = out {
                emit(&json!({ "path": p, "horizon": coeffs.horizon(), "noise": model }), pretty)?;
            }
        }
        Command::DesignInput { noise, n, theta, out } => {
            let model = noise.model()?;
            check_horizon(*n)?;
            let system = InnovationSystem::build(model, *n)?;
            let design = optimal_input(&system, *n, SignProfile::for_theta(*theta))?;
            write_csv_or_stdout(out.as_deref(), |p| design.write_csv_file(p), |w| design.write_csv(w))?;
            if let Some(p) = out {
                emit(
                    &json!({ "path": p, "n": n, "energy": design.energy, "sign_profile": design.sign_profile }),
                    pretty,
                )?;
            }
        }
        Command::Simulate { noise, theta, n, seed, input, out } => {
            let model = noise.model()?;
            check_horizon(*n)?;
            let system = InnovationSystem::build(model, *n)?;
            let design = input.resolve(&system, *n, *theta)?;
            let spec = ArxSpec::new(*theta, model, design.u)?;
            let xi = NoiseSampler::new(model, *n)?.sample(&mut rng::stream(*seed, 0))?;
            let traj = simulate_arx(&spec, &xi, &system)?;
            write_csv_or_stdout(out.as_deref(), |p| traj.write_csv_file(p), |w| traj.write_csv(w))?;
            if let Some(p) = out {
                emit(&json!({ "path": p, "n": n, "theta": theta, "noise": model }), pretty)?;
            }
        }
        Command::Estimate { noise, input, true_theta } => {
            let model = noise.model()?;
            let table = Table::read(input)?;
            let n = table.require(input, "x")?.len();
            if n == 0 {
                return Err(Error::InvalidArgument(format!("{}: no observations", input.display())).into());
            }
            let system = InnovationSystem::build(model, n)?;
            let traj = StateTrajectory::read_csv_file(input, &system)?;
            let est = mle_estimate(&traj, system.coefficients(), *true_theta)?;
            emit(
                &json!({
                    "n": n,
                    "theta_hat": est.theta_hat,
                    "observed_info": est.observed_info,
                    "phi": est.phi,
                    "score": est.score,
                    "loglik_at_hat": est.loglik_at_hat,
                    "outside_unit_interval": est.outside_unit_interval,
                }),
                pretty,
            )?;
        }
        Command::Fisher { noise, theta, n, input } => {
            let model = noise.model()?;
            check_horizon(*n)?;
            let v = transformed_input(model, *n, *theta, input)?;
            let coeffs = InnovationCoefficients::from_model(model, *n)?;
            let info = fisher_exact(*theta, &v, &coeffs)?;
            let total = info.total();
            emit(
                &json!({
                    "n": n,
                    "theta": theta,
                    "fisher": total,
                    "fisher_per_step": total / *n as f64,
                    "noise_part": info.noise_part,
                    "input_part": info.input_part,
                    "asymptotic_fisher": asymptotic_fisher(*theta)?,
                }),
                pretty,
            )?;
        }
        Command::LaplaceCheck { noise, theta, mu, n, reps, seed, input, out } => {
            let model = noise.model()?;
            check_horizon(*n)?;
            let system = InnovationSystem::build(model, *n)?;
            let design = input.resolve(&system, *n, *theta)?;
            let coeffs = system.coefficients();
            let exact = laplace_exact(*theta, *mu, coeffs, &design.v)?;
            if let Some(p) = out {
                laplace_trace(*theta, *mu, coeffs, &design.v)?.write_csv_file(p)?;
            }
            let started = Instant::now();
            let mc = laplace_mc(*theta, *mu, &system, &design.v, *reps, *seed)?;
            eprintln!("monte carlo: {reps} replications in {:.2?}", started.elapsed());
            emit(
                &json!({
                    "exact": exact,
                    "monte_carlo": mc.mean,
                    "monte_carlo_std_error": mc.std_error,
                    "replications": mc.replications,
                    "limit": laplace_limit(*theta, *mu)?,
                }),
                pretty,
            )?;
        }
        Command::SpectralGap { theta, n, a } => {
            if *n > DENSE_CHAIN_LIMIT {
                return Err(Error::HorizonTooLarge { requested: *n, limit: DENSE_CHAIN_LIMIT }.into());
            }
            let nu = spectral_gap(*theta, *n)?;
            let bound = if *theta > 0.0 { Some((1.0 - theta).powi(2).recip()) } else { None };
            let chain = match a {
                Some(a) => Some(json!({
                    "a": a,
                    "closed": phi_chain_laplace_closed(*theta, *a, *n)?,
                    "eigen": phi_chain_laplace_eigen(*theta, *a, *n)?,
                })),
                None => None,
            };
            emit(&json!({ "n": n, "theta": theta, "nu1": nu, "bound": bound, "chain": chain }), pretty)?;
        }
        Command::Experiment { config, jobs } => {
            let cfg = ExperimentConfig::from_json_file(config)?;
            let started = Instant::now();
            let report = match jobs {
                Some(0) => return Err(CliError::Usage("--jobs must be positive")),
                Some(j) => run_experiment_with_jobs(&cfg, *j)?,
                None => run_experiment(&cfg)?,
            };
            eprintln!("experiment finished in {:.2?}", started.elapsed());
            emit(&report, pretty)?;
        }
    }
    Ok(())
}

/// Transformed input `v = k u`. Only the resolved design needs the dense
/// kernel, so the optimal and zero inputs are built from the coefficients alone.
fn transformed_input(model: NoiseModel, n: usize, theta: f64, input: &InputArg) -> crate::Result<Vec<f64>> {
    match input {
        InputArg::Zero => Ok(vec![0.0; n]),
        InputArg::Optimal => {
            let coeffs = InnovationCoefficients::from_model(model, n)?;
            let profile = SignProfile::for_theta(theta);
            Ok((1..=n).map(|i| profile.sign(i) * coeffs.sigma(i + 1)).collect())
        }
        InputArg::File(_) => {
            let system = InnovationSystem::build(model, n)?;
            Ok(input.resolve(&system, n, theta)?.v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_argument_forms() {
        assert_eq!("optimal".parse::<InputArg>().unwrap(), InputArg::Optimal);
        assert_eq!("zero".parse::<InputArg>().unwrap(), InputArg::Zero);
        assert_eq!(
            "file:a/b.csv".parse::<InputArg>().unwrap(),
            InputArg::File(PathBuf::from("a/b.csv"))
        );
        assert!("file:".parse::<InputArg>().is_err());
        assert!("ones".parse::<InputArg>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["arxid", "fisher", "--theta", "0.7", "--noise", "white", "--n", "1", "--input", "zero"]), 0);
        assert_eq!(run(["arxid", "fisher", "--theta", "0.7", "--n", "5", "--bogus"]), 2);
        assert_eq!(run(["arxid", "simulate", "--theta", "0.5", "--n", "5"]), 2);
        assert_eq!(run(["arxid", "fisher", "--theta", "0.5", "--n", "5", "--noise", "ar1"]), 2);
        assert_eq!(run(["arxid", "fisher", "--theta", "1.5", "--n", "5"]), 1);
        assert_eq!(run(["arxid", "fisher", "--theta", "0.5", "--n", "5", "--hurst", "1.5"]), 1);
    }

    #[test]
    fn optimal_transformed_input_matches_design() {
        let model = NoiseModel::Fgn { hurst: 0.7 };
        let system = InnovationSystem::build(model, 60).unwrap();
        let design = optimal_input(&system, 60, SignProfile::Alternating).unwrap();
        let v = transformed_input(model, 60, -0.3, &InputArg::Optimal).unwrap();
        for (a, b) in v.iter().zip(&design.v) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
