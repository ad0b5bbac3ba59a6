//! ARX(1) model `X_n = theta X_{n-1} + u(n) + xi_n`, `X_0 = 0`.
//!
//! Whitening the observations with the innovation kernel turns the model
//! into a two-dimensional Gauss-Markov chain
//!
//! ```text
//! zeta_n = A_{n-1} zeta_{n-1} + b v(n) + b sigma_n eps_n,   zeta_0 = 0
//! zeta_n = (Z_n, sum_{r<n} beta_r Z_r),   A_n = [[theta, theta beta_n], [beta_n, 1]]
//! ```
//!
//! with `Z = k X`, `v = k u` and `b = (1, 0)`. The likelihood, the closed-form
//! MLE and the Fisher information are all expressed on this chain, where
//! `a_n = (1, beta_n)` and `bᵀ A_n zeta = theta a_nᵀ zeta`.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::gaussian_sim::CirculantEmbedding;
use crate::innovations::{InnovationCoefficients, InnovationSystem};
use crate::io::{self, Cell, Table};
use crate::noise::NoiseModel;
use crate::rng;

const B: Vector2<f64> = Vector2::new(1.0, 0.0);

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if !(theta > -1.0 && theta < 1.0) {
        return Err(Error::Domain {
            field: "theta",
            range: "(-1,1)",
            value: theta,
        });
    }
    Ok(())
}

/// `A_n` for the given drift.
pub fn transition(theta: f64, beta: f64) -> Matrix2<f64> {
    Matrix2::new(theta, theta * beta, beta, 1.0)
}

/// `a_n = (1, beta_n)`.
pub fn loading(beta: f64) -> Vector2<f64> {
    Vector2::new(1.0, beta)
}

/// Limit of `I_N(theta, v_opt) / N`.
pub fn asymptotic_fisher(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let input_part = if theta >= 0.0 {
        (1.0 - theta).powi(2).recip()
    } else {
        (1.0 + theta).powi(2).recip()
    };
    Ok((1.0 - theta * theta).recip() + input_part)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArxSpec {
    pub theta: f64,
    pub noise: NoiseModel,
    /// `u(1..N)`; its length is the horizon.
    pub input_u: Vec<f64>,
}

impl ArxSpec {
    pub fn new(theta: f64, noise: NoiseModel, input_u: Vec<f64>) -> Result<Self> {
        check_theta(theta)?;
        noise.validate()?;
        Ok(ArxSpec {
            theta,
            noise,
            input_u,
        })
    }

    pub fn horizon(&self) -> usize {
        self.input_u.len()
    }
}

/// `X_n = theta X_{n-1} + u(n) + xi_n` from `X_0 = 0`.
pub fn simulate_observations(theta: f64, u: &[f64], xi: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    u.iter()
        .zip(xi)
        .map(|(&un, &xn)| {
            prev = theta * prev + un + xn;
            prev
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// `zeta_1 .. zeta_N`
    pub zeta: Vec<Vector2<f64>>,
    pub v: Vec<f64>,
    /// `eps_1 .. eps_N`, known only for simulated trajectories.
    pub innovations: Option<Vec<f64>>,
}

impl StateTrajectory {
    /// Rebuilds the whitened state from observations and the transformed input.
    pub fn from_observations(x: Vec<f64>, v: Vec<f64>, system: &InnovationSystem) -> Result<Self> {
        system.require_len("input v vs observations", v.len(), x.len())?;
        let z = system.whiten(&x)?;
        let zeta = stack_state(&z, system.coefficients());
        Ok(StateTrajectory {
            x,
            z,
            zeta,
            v,
            innovations: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Largest violation of the state recursion at drift `theta`; requires
    /// known innovations.
    pub fn recursion_residual(&self, theta: f64, coeffs: &InnovationCoefficients) -> Option<f64> {
        let eps = self.innovations.as_ref()?;
        let mut prev = Vector2::zeros();
        let mut worst: f64 = 0.0;
        for n in 1..=self.len() {
            let predicted = transition(theta, coeffs.beta(n - 1)) * prev
                + B * (self.v[n - 1] + coeffs.sigma(n) * eps[n - 1]);
            worst = worst.max((predicted - self.zeta[n - 1]).amax());
            prev = self.zeta[n - 1];
        }
        Some(worst)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        io::write_rows(writer, &TRAJECTORY_HEADER, self.csv_rows())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        io::write_rows_to_path(path, &TRAJECTORY_HEADER, self.csv_rows())
    }

    fn csv_rows(&self) -> impl Iterator<Item = [Cell; 7]> + '_ {
        (0..self.len()).map(move |i| {
            let eps = self
                .innovations
                .as_ref()
                .map_or(Cell::Empty, |e| Cell::Real(e[i]));
            [
                Cell::Index(i + 1),
                Cell::Real(self.x[i]),
                Cell::Real(self.z[i]),
                Cell::Real(self.zeta[i][0]),
                Cell::Real(self.zeta[i][1]),
                Cell::Real(self.v[i]),
                eps,
            ]
        })
    }

    /// Reads the `x` and `v` columns of a trajectory CSV and rebuilds the state.
    pub fn read_csv_file(path: &Path, system: &InnovationSystem) -> Result<Self> {
        let table = Table::read(path)?;
        let x = table.require(path, "x")?.to_vec();
        let v = table.require(path, "v")?.to_vec();
        Self::from_observations(x, v, system)
    }
}

const TRAJECTORY_HEADER: [&str; 7] = ["n", "x", "z", "zeta1", "zeta2", "v", "eps"];

fn stack_state(z: &[f64], coeffs: &InnovationCoefficients) -> Vec<Vector2<f64>> {
    let mut acc = 0.0;
    z.iter()
        .enumerate()
        .map(|(i, &zn)| {
            let state = Vector2::new(zn, acc);
            acc += coeffs.beta(i + 1) * zn;
            state
        })
        .collect()
}

pub fn simulate_arx(
    spec: &ArxSpec,
    noise_path: &[f64],
    system: &InnovationSystem,
) -> Result<StateTrajectory> {
    check_theta(spec.theta)?;
    if system.model() != spec.noise {
        return Err(Error::InvalidArgument(format!(
            "innovation system was built for {} but the model uses {}",
            system.model(),
            spec.noise
        )));
    }
    let n = spec.horizon();
    check_len("noise path", n, noise_path.len())?;
    if system.horizon() < n + 1 {
        return Err(Error::Dimension {
            context: "innovation horizon (needs N + 1)",
            expected: n + 1,
            actual: system.horizon(),
        });
    }
    let x = simulate_observations(spec.theta, &spec.input_u, noise_path);
    let v = system.whiten(&spec.input_u)?;
    let mut traj = StateTrajectory::from_observations(x, v, system)?;
    traj.innovations = Some(system.innovations(noise_path)?);
    Ok(traj)
}

/// Gaussian log-likelihood of the whitened observations at drift `theta`.
pub fn log_likelihood(theta: f64, traj: &StateTrajectory, coeffs: &InnovationCoefficients) -> Result<f64> {
    let n = traj.len();
    if coeffs.horizon() < n {
        return Err(Error::Dimension {
            context: "innovation horizon",
            expected: n,
            actual: coeffs.horizon(),
        });
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    let mut prev = Vector2::zeros();
    for i in 1..=n {
        let sigma = coeffs.sigma(i);
        let mean = (transition(theta, coeffs.beta(i - 1)) * prev)[0] + traj.v[i - 1];
        let r = (traj.zeta[i - 1][0] - mean) / sigma;
        total += -0.5 * (ln_2pi + 2.0 * sigma.ln()) - 0.5 * r * r;
        prev = traj.zeta[i - 1];
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationResult {
    pub theta_hat: f64,
    /// Score martingale `M_N`; available when the innovations or the true drift are known.
    pub score: Option<f64>,
    /// `<M>_N = sum_{n<N} (a_nᵀ zeta_n / sigma_{n+1})^2`
    pub observed_info: f64,
    /// `sqrt(N) (theta_hat - theta)` when the true drift is supplied.
    pub phi: Option<f64>,
    pub loglik_at_hat: f64,
    /// Set when the unclamped estimate left (-1, 1).
    pub outside_unit_interval: bool,
}

/// Sums for the closed-form estimator over `n = 1..N-1`.
struct Moments {
    cross: f64,
    info: f64,
}

fn moments(traj: &StateTrajectory, coeffs: &InnovationCoefficients) -> Moments {
    let mut cross = 0.0;
    let mut info = 0.0;
    for n in 1..traj.len() {
        let s2 = coeffs.sigma(n + 1).powi(2);
        let regressor = loading(coeffs.beta(n)).dot(&traj.zeta[n - 1]);
        cross += regressor * (traj.zeta[n][0] - traj.v[n]) / s2;
        info += regressor * regressor / s2;
    }
    Moments { cross, info }
}

/// `<M>_N` for a trajectory.
pub fn observed_information(traj: &StateTrajectory, coeffs: &InnovationCoefficients) -> f64 {
    moments(traj, coeffs).info
}

pub fn mle_estimate(
    traj: &StateTrajectory,
    coeffs: &InnovationCoefficients,
    theta_true: Option<f64>,
) -> Result<EstimationResult> {
    let n = traj.len();
    if coeffs.horizon() < n {
        return Err(Error::Dimension {
            context: "innovation horizon",
            expected: n,
            actual: coeffs.horizon(),
        });
    }
    let Moments { cross, info } = moments(traj, coeffs);
    if !(info > 0.0) {
        return Err(Error::NonIdentifiable);
    }
    let theta_hat = cross / info;

    let score = match (&traj.innovations, theta_true) {
        (Some(eps), _) => Some(
            (1..n)
                .map(|i| {
                    loading(coeffs.beta(i)).dot(&traj.zeta[i - 1]) / coeffs.sigma(i + 1) * eps[i]
                })
                .sum(),
        ),
        (None, Some(theta)) => Some(cross - theta * info),
        (None, None) => None,
    };

    Ok(EstimationResult {
        theta_hat,
        score,
        observed_info: info,
        phi: theta_true.map(|t| (n as f64).sqrt() * (theta_hat - t)),
        loglik_at_hat: log_likelihood(theta_hat, traj, coeffs)?,
        outside_unit_interval: !(theta_hat > -1.0 && theta_hat < 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherInformation {
    /// `I_{1,N}`: contribution of the noise, independent of the input.
    pub noise_part: f64,
    /// `I_{2,N}`: contribution of the deterministic input.
    pub input_part: f64,
}

impl FisherInformation {
    pub fn total(&self) -> f64 {
        self.noise_part + self.input_part
    }
}

/// Exact `I_N(theta, v)` from the second-moment and mean recursions of the state.
pub fn fisher_exact(theta: f64, v: &[f64], coeffs: &InnovationCoefficients) -> Result<FisherInformation> {
    check_theta(theta)?;
    let n = v.len();
    if coeffs.horizon() < n {
        return Err(Error::Dimension {
            context: "innovation horizon",
            expected: n,
            actual: coeffs.horizon(),
        });
    }
    let bbt = B * B.transpose();
    let mut q = Matrix2::zeros();
    let mut s = Vector2::zeros();
    let mut noise_part = 0.0;
    let mut input_part = 0.0;
    for i in 1..n {
        let a = transition(theta, coeffs.beta(i - 1));
        let sigma = coeffs.sigma(i);
        let sigma_next = coeffs.sigma(i + 1);
        q = a * q * a.transpose() + bbt * (sigma * sigma);
        s = a * s * (sigma / sigma_next) + B * (v[i - 1] / sigma_next);
        let load = loading(coeffs.beta(i));
        noise_part += load.dot(&(q * load)) / (sigma_next * sigma_next);
        input_part += load.dot(&s).powi(2);
    }
    Ok(FisherInformation {
        noise_part,
        input_part,
    })
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replications: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let reps = samples.len();
        let mean = samples.iter().sum::<f64>() / reps as f64;
        let var = if reps > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_error: (var / reps as f64).sqrt(),
            replications: reps,
        }
    }
}

/// Draws `reps` independent trajectories driven by the transformed input `v`
/// and applies `stat` to each. Replication `r` uses stream `r` of `seed`.
pub(crate) fn replicate<F>(
    theta: f64,
    v: &[f64],
    system: &InnovationSystem,
    reps: usize,
    seed: u64,
    stat: F,
) -> Result<Vec<f64>>
where
    F: Fn(&StateTrajectory) -> f64 + Sync,
{
    check_theta(theta)?;
    let n = v.len();
    let u = system.unwhiten(v)?;
    let sampler = NoiseSampler::new(system.model(), n)?;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let xi = sampler.sample(&mut rng)?;
            let x = simulate_observations(theta, &u, &xi);
            let traj = StateTrajectory::from_observations(x, v.to_vec(), system)?;
            Ok(stat(&traj))
        })
        .collect()
}

/// Monte Carlo estimate of `E <M>_N`.
pub fn fisher_empirical(
    theta: f64,
    v: &[f64],
    system: &InnovationSystem,
    reps: usize,
    seed: u64,
) -> Result<McEstimate> {
    if reps < 100 {
        return Err(Error::InvalidArgument(format!(
            "fisher_empirical needs at least 100 replications, got {reps}"
        )));
    }
    let coeffs = system.coefficients();
    let samples = replicate(theta, v, system, reps, seed, |t| observed_information(t, coeffs))?;
    Ok(McEstimate::from_samples(&samples))
}

/// Circulant sampler with a fallback for single-step paths.
pub(crate) enum NoiseSampler {
    Circulant(CirculantEmbedding),
    Single,
}

impl NoiseSampler {
    pub(crate) fn new(model: NoiseModel, n: usize) -> Result<Self> {
        if n >= 2 {
            Ok(NoiseSampler::Circulant(CirculantEmbedding::build(model, n)?))
        } else {
            model.validate()?;
            Ok(NoiseSampler::Single)
        }
    }

    pub(crate) fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            NoiseSampler::Circulant(e) => e.sample_path(rng),
            NoiseSampler::Single => Ok(vec![rng.sample(rand_distr::StandardNormal)]),
        }
    }
}
