//! Monte Carlo harness for the normalized estimation error
//! `Phi = sqrt(N) (theta_hat - theta)`.
//!
//! Replication `r` of drift cell `c` draws from stream
//! [`replication_stream(c, r)`](crate::rng::replication_stream) of the master
//! seed, so any replication can be replayed alone and the report does not
//! depend on the number of worker threads.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::arx::{asymptotic_fisher, check_theta, mle_estimate, simulate_observations, NoiseSampler, StateTrajectory};
use crate::design::{optimal_input, InputDesign, SignProfile};
use crate::error::{Error, Result};
use crate::innovations::InnovationSystem;
use crate::io::{self, Cell, Table};
use crate::noise::NoiseModel;
use crate::rng;

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILURE_RATE: f64 = 1e-3;

const MAX_BINS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSpec {
    Optimal,
    Zero,
    /// CSV file with a `u` column of length `n`.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub thetas: Vec<f64>,
    pub n: usize,
    pub replications: usize,
    pub noise: NoiseModel,
    #[serde(default = "default_input")]
    pub input: InputSpec,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Histogram bin count; Freedman-Diaconis when absent.
    #[serde(default)]
    pub bins: Option<usize>,
}

fn default_input() -> InputSpec {
    InputSpec::Optimal
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() {
            return Err(Error::InvalidArgument("thetas must not be empty".into()));
        }
        for &theta in &self.thetas {
            check_theta(theta)?;
        }
        if self.replications < 2 {
            return Err(Error::InvalidArgument(format!(
                "replications must be at least 2, got {}",
                self.replications
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "horizon must be at least 2, got {}",
                self.n
            )));
        }
        if self.bins == Some(0) {
            return Err(Error::InvalidArgument("bins must be positive".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width histogram over the sample range; a degenerate range gets a
    /// single unit-width bin centred on the common value.
    pub fn build(values: &[f64], bins: Option<usize>) -> Self {
        if values.is_empty() {
            return Histogram {
                edges: vec![-0.5, 0.5],
                counts: vec![0],
            };
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Histogram {
                edges: vec![lo - 0.5, lo + 0.5],
                counts: vec![values.len()],
            };
        }
        let bins = bins.unwrap_or_else(|| freedman_diaconis_bins(values, hi - lo));
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + i as f64 * width })
            .collect();
        let mut counts = vec![0; bins];
        for &x in values {
            let idx = (((x - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Count divided by `total * width` for every bin.
    pub fn densities(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| c as f64 / (total * (e[1] - e[0])))
            .collect()
    }
}

fn freedman_diaconis_bins(values: &[f64], range: f64) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr / (values.len() as f64).cbrt();
    if !(width > 0.0) {
        return 1;
    }
    ((range / width).ceil() as usize).clamp(1, MAX_BINS)
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// Kolmogorov-Smirnov p-value of `phis` against `N(0, 1 / I(theta))`.
pub fn normality_check(phis: &[f64], theta: f64) -> Result<f64> {
    if phis.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "normality check needs at least 100 samples, got {}",
            phis.len()
        )));
    }
    let target = target_normal(theta)?;
    Ok(ks_test(phis, &target))
}

fn target_normal(theta: f64) -> Result<Normal> {
    let sd = asymptotic_fisher(theta)?.recip().sqrt();
    Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn ks_test(values: &[f64], dist: &Normal) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Writes `bin_left, bin_right, count, density, normal_density`, the last
/// column being the `N(0, 1 / I(theta))` density at the bin midpoint.
pub fn export_histogram(phis: &[f64], bins: Option<usize>, theta: f64, path: &Path) -> Result<Histogram> {
    let hist = Histogram::build(phis, bins);
    write_histogram(&hist, theta, path)?;
    Ok(hist)
}

fn write_histogram(hist: &Histogram, theta: f64, path: &Path) -> Result<()> {
    let target = target_normal(theta)?;
    let densities = hist.densities();
    let rows = hist.edges.windows(2).enumerate().map(|(i, e)| {
        [
            Cell::Real(e[0]),
            Cell::Real(e[1]),
            Cell::Index(hist.counts[i]),
            Cell::Real(densities[i]),
            Cell::Real(target.pdf(0.5 * (e[0] + e[1]))),
        ]
    });
    io::write_rows_to_path(
        path,
        &["bin_left", "bin_right", "count", "density", "normal_density"],
        rows,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub stream: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub theta: f64,
    pub theoretical_variance: f64,
    pub empirical_variance: f64,
    pub mean_phi: f64,
    pub normality_p_value: Option<f64>,
    pub replications: usize,
    pub failures: Vec<FailureRecord>,
    pub histogram: Histogram,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub n: usize,
    pub noise: NoiseModel,
    pub input: InputSpec,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
}

/// Raw `Phi` values of one drift cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSamples {
    pub theta: f64,
    pub phis: Vec<f64>,
    pub failures: Vec<FailureRecord>,
}

/// Raw `Phi` samples of every drift cell.
pub fn simulate_cells(config: &ExperimentConfig) -> Result<Vec<CellSamples>> {
    config.validate()?;
    let system = InnovationSystem::build(config.noise, config.n)?;
    simulate_cells_with_system(config, &system)
}

/// As [`simulate_cells`], reusing an innovation system built for the
/// configured noise and a horizon of at least `n + 1`.
pub fn simulate_cells_with_system(
    config: &ExperimentConfig,
    system: &InnovationSystem,
) -> Result<Vec<CellSamples>> {
    config.validate()?;
    if system.model() != config.noise {
        return Err(Error::InvalidArgument(format!(
            "innovation system was built for {} but the experiment uses {}",
            system.model(),
            config.noise
        )));
    }
    let n = config.n;
    let sampler = NoiseSampler::new(config.noise, n)?;
    let custom = match &config.input {
        InputSpec::File(path) => {
            let table = Table::read(path)?;
            let u = table.require(path, "u")?;
            crate::error::check_len("input file length", n, u.len())?;
            Some(InputDesign::admit(u.to_vec(), system)?)
        }
        _ => None,
    };

    let mut cells = Vec::with_capacity(config.thetas.len());
    for (cell, &theta) in config.thetas.iter().enumerate() {
        let design = match &config.input {
            InputSpec::Optimal => optimal_input(system, n, SignProfile::for_theta(theta))?,
            InputSpec::Zero => InputDesign::zero(system, n)?,
            InputSpec::File(_) => custom.clone().expect("loaded above"),
        };
        let outcomes: Vec<std::result::Result<f64, String>> = (0..config.replications)
            .into_par_iter()
            .map(|r| {
                let mut stream = rng::stream(config.seed, rng::replication_stream(cell, r));
                let mut run = || -> Result<f64> {
                    let xi = sampler.sample(&mut stream)?;
                    let x = simulate_observations(theta, &design.u, &xi);
                    let traj = StateTrajectory::from_observations(x, design.v.clone(), system)?;
                    let est = mle_estimate(&traj, system.coefficients(), Some(theta))?;
                    match est.phi {
                        Some(phi) if phi.is_finite() => Ok(phi),
                        _ => Err(Error::NonIdentifiable),
                    }
                };
                run().map_err(|e| e.to_string())
            })
            .collect();

        let mut phis = Vec::with_capacity(outcomes.len());
        let mut failures = Vec::new();
        for (r, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(phi) => phis.push(phi),
                Err(message) => failures.push(FailureRecord {
                    replication: r,
                    stream: rng::replication_stream(cell, r),
                    message,
                }),
            }
        }
        if failures.len() as f64 > MAX_FAILURE_RATE * config.replications as f64 {
            return Err(Error::TooManyFailures {
                failed: failures.len(),
                total: config.replications,
                first: failures[0].message.clone(),
            });
        }
        cells.push(CellSamples {
            theta,
            phis,
            failures,
        });
    }
    Ok(cells)
}

pub fn summarize(config: &ExperimentConfig, samples: &[CellSamples]) -> Result<SummaryReport> {
    let cells = samples
        .iter()
        .map(|s| {
            let count = s.phis.len() as f64;
            let mean = s.phis.iter().sum::<f64>() / count;
            let var = s.phis.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (count - 1.0);
            let normality_p_value = if s.phis.len() >= 100 {
                Some(normality_check(&s.phis, s.theta)?)
            } else {
                None
            };
            Ok(CellSummary {
                theta: s.theta,
                theoretical_variance: asymptotic_fisher(s.theta)?.recip(),
                empirical_variance: var,
                mean_phi: mean,
                normality_p_value,
                replications: s.phis.len(),
                failures: s.failures.clone(),
                histogram: Histogram::build(&s.phis, config.bins),
                seed: config.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SummaryReport {
        n: config.n,
        noise: config.noise,
        input: config.input.clone(),
        seed: config.seed,
        cells,
    })
}

/// Runs the experiment and writes `report.json`, `report.csv` and one
/// `histogram_<k>.csv` per drift into the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SummaryReport> {
    let samples = simulate_cells(config)?;
    let report = summarize(config, &samples)?;
    write_report(&report, &config.output_dir)?;
    Ok(report)
}

/// As [`run_experiment`], on a dedicated pool of `jobs` worker threads.
pub fn run_experiment_with_jobs(config: &ExperimentConfig, jobs: usize) -> Result<SummaryReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_experiment(config))
}

pub fn write_report(report: &SummaryReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report)?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

    let rows = report.cells.iter().map(|c| {
        [
            Cell::Real(c.theta),
            Cell::Real(c.theoretical_variance),
            Cell::Real(c.empirical_variance),
            Cell::Real(c.mean_phi),
            c.normality_p_value.map_or(Cell::Empty, Cell::Real),
            Cell::Index(c.replications),
            Cell::Index(c.failures.len()),
        ]
    });
    io::write_rows_to_path(
        &dir.join("report.csv"),
        &[
            "theta",
            "theoretical_variance",
            "empirical_variance",
            "mean_phi",
            "normality_p_value",
            "replications",
            "failures",
        ],
        rows,
    )?;
    for (k, cell) in report.cells.iter().enumerate() {
        write_histogram(&cell.histogram, cell.theta, &dir.join(format!("histogram_{k}.csv")))?;
    }
    Ok(())
}
