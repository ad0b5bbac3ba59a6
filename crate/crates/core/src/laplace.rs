//! Laplace transforms of quadratic functionals of the state chain.
//!
//! [`laplace_exact`] evaluates `E exp(-(mu / 2N) <M>_N)` without sampling.
//! Each weight `exp(-zetaᵀ W_n zeta / 2)` with
//! `W_n = mu / (N sigma_{n+1}^2) a_n a_nᵀ` is absorbed into a Gaussian
//! prediction `N(z_n, gamma_n)` of the state, which is then pushed through
//! the dynamics:
//!
//! ```text
//! G_n         = Id + gamma_n W_n
//! factor_n    = det(G_n)^{-1/2} exp(-z_nᵀ W_n G_n^{-1} z_n / 2)
//! gamma_{n+1} = A_n G_n^{-1} gamma_n A_nᵀ + sigma_{n+1}^2 b bᵀ
//! z_{n+1}     = A_n G_n^{-1} z_n + b v(n+1)
//! ```
//!
//! The second half of the module handles the scalar backward chain
//! `phi_{i-1} = theta phi_i + eps_{i-1}`, `phi_n = 0`, whose covariance
//! operator bounds the gain achievable by any input.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::Serialize;

use crate::arx::{check_theta, loading, observed_information, replicate, transition, McEstimate};
use crate::error::{Error, Result};
use crate::innovations::{InnovationCoefficients, InnovationSystem};
use crate::io::{self, Cell};

const B: Vector2<f64> = Vector2::new(1.0, 0.0);

/// Largest chain length accepted by the dense eigen routines.
pub const DENSE_CHAIN_LIMIT: usize = 400;

/// Per-step record of the Riccati recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiTrace {
    pub mu: f64,
    /// `gamma(n,n)` for `n = 1..N-1`
    pub gamma_diag: Vec<Matrix2<f64>>,
    /// Tilted prediction means `z_n`.
    pub z: Vec<Vector2<f64>>,
    /// Untilted means `m_n = E zeta_n`.
    pub m: Vec<Vector2<f64>>,
    /// Weights `W_n`.
    pub scale: Vec<Matrix2<f64>>,
    /// `sum_{r<=n} log det(Id + gamma_r W_r)`
    pub running_log_det: Vec<f64>,
    /// Logarithm of the transform.
    pub log_value: f64,
}

impl RiccatiTrace {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        io::write_rows(writer, &TRACE_HEADER, self.csv_rows())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        io::write_rows_to_path(path, &TRACE_HEADER, self.csv_rows())
    }

    fn csv_rows(&self) -> impl Iterator<Item = [Cell; 7]> + '_ {
        (0..self.gamma_diag.len()).map(move |i| {
            let g = &self.gamma_diag[i];
            [
                Cell::Index(i + 1),
                Cell::Real(g[(0, 0)]),
                Cell::Real(g[(0, 1)]),
                Cell::Real(g[(1, 1)]),
                Cell::Real(self.z[i][0]),
                Cell::Real(self.z[i][1]),
                Cell::Real(self.running_log_det[i]),
            ]
        })
    }
}

const TRACE_HEADER: [&str; 7] = ["n", "gamma11", "gamma12", "gamma22", "z1", "z2", "log_det"];

/// Runs the Riccati recursion for `E exp(-(mu / 2N) <M>_N)` with input `v(1..N)`.
#[allow(clippy::needless_range_loop)]
pub fn laplace_trace(
    theta: f64,
    mu: f64,
    coeffs: &InnovationCoefficients,
    v: &[f64],
) -> Result<RiccatiTrace> {
    check_theta(theta)?;
    if !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("mu must be finite, got {mu}")));
    }
    let n = v.len();
    if coeffs.horizon() < n {
        return Err(Error::Dimension {
            context: "innovation horizon",
            expected: n,
            actual: coeffs.horizon(),
        });
    }
    let steps = n.saturating_sub(1);
    let mut trace = RiccatiTrace {
        mu,
        gamma_diag: Vec::with_capacity(steps),
        z: Vec::with_capacity(steps),
        m: Vec::with_capacity(steps),
        scale: Vec::with_capacity(steps),
        running_log_det: Vec::with_capacity(steps),
        log_value: 0.0,
    };
    if steps == 0 {
        return Ok(trace);
    }

    let bbt = B * B.transpose();
    let mut gamma = bbt * coeffs.sigma(1).powi(2);
    let mut z = B * v[0];
    let mut m = z;
    let mut log_det = 0.0;
    let mut quad = 0.0;
    for i in 1..=steps {
        let sigma_next = coeffs.sigma(i + 1);
        let a = loading(coeffs.beta(i));
        let weight = a * a.transpose() * (mu / (n as f64 * sigma_next * sigma_next));
        let g = Matrix2::identity() + gamma * weight;
        let det = g.determinant();
        if !(det > 0.0) {
            return Err(Error::LaplaceInadmissible { mu, step: i });
        }
        let g_inv = g
            .try_inverse()
            .ok_or(Error::LaplaceInadmissible { mu, step: i })?;
        log_det += det.ln();
        quad += z.dot(&(weight * g_inv * z));

        trace.gamma_diag.push(gamma);
        trace.z.push(z);
        trace.m.push(m);
        trace.scale.push(weight);
        trace.running_log_det.push(log_det);

        if i < steps {
            let dynamics = transition(theta, coeffs.beta(i));
            let drive = B * v[i];
            gamma = dynamics * g_inv * gamma * dynamics.transpose() + bbt * sigma_next.powi(2);
            gamma = 0.5 * (gamma + gamma.transpose());
            z = dynamics * g_inv * z + drive;
            m = dynamics * m + drive;
        }
    }
    trace.log_value = -0.5 * log_det - 0.5 * quad;
    Ok(trace)
}

/// `E exp(-(mu / 2N) <M>_N)` for transformed input `v`.
pub fn laplace_exact(theta: f64, mu: f64, coeffs: &InnovationCoefficients, v: &[f64]) -> Result<f64> {
    if mu == 0.0 {
        check_theta(theta)?;
        return Ok(1.0);
    }
    Ok(laplace_trace(theta, mu, coeffs, v)?.value())
}

/// Monte Carlo estimate of `E exp(-(mu / 2N) <M>_N)`.
pub fn laplace_mc(
    theta: f64,
    mu: f64,
    system: &InnovationSystem,
    v: &[f64],
    reps: usize,
    seed: u64,
) -> Result<McEstimate> {
    if reps < 1000 {
        return Err(Error::InvalidArgument(format!(
            "laplace_mc needs at least 1000 replications, got {reps}"
        )));
    }
    let n = v.len() as f64;
    let coeffs = system.coefficients();
    let samples = replicate(theta, v, system, reps, seed, |traj| {
        (-mu / (2.0 * n) * observed_information(traj, coeffs)).exp()
    })?;
    Ok(McEstimate::from_samples(&samples))
}

/// Limit `exp(-mu I(theta) / 2)` of the transform under the optimal input.
pub fn laplace_limit(theta: f64, mu: f64) -> Result<f64> {
    Ok((-0.5 * mu * crate::arx::asymptotic_fisher(theta)?).exp())
}

fn check_chain(theta: f64, n: usize) -> Result<()> {
    check_theta(theta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("chain length must be at least 1".into()));
    }
    Ok(())
}

/// Transform `E exp(-(a/2) sum phi_i^2)` of the backward chain of length `n`
/// (`n - 1` active coordinates), via the 2x2 transfer matrix
/// `T = [[1, 1], [a, a + theta^2]]`: the determinant `det(Id + a F)` equals
/// `[T^n]_{11}`.
pub fn phi_chain_laplace_closed(theta: f64, a: f64, n: usize) -> Result<f64> {
    check_chain(theta, n)?;
    check_chain_admissible(theta, a, n)?;
    let t = Matrix2::new(1.0, 1.0, a, a + theta * theta);
    let (power, log_scale) = scaled_power(t, n);
    let entry = power[(0, 0)];
    if !(entry > 0.0) {
        return Err(Error::ChainInadmissible { theta, a, n });
    }
    Ok((-0.5 * (entry.ln() + log_scale)).exp())
}

/// Every trailing principal minor `det(Id + a F_k)`, `k < n`, must be positive;
/// they obey `D_k = (1 + a + theta^2) D_{k-1} - theta^2 D_{k-2}`, `D_0 = D_{-1} = 1`.
fn check_chain_admissible(theta: f64, a: f64, n: usize) -> Result<()> {
    let t2 = theta * theta;
    let trace = 1.0 + a + t2;
    let mut ratio = 1.0;
    for _ in 1..n {
        ratio = trace - t2 / ratio;
        if !(ratio > 0.0) {
            return Err(Error::ChainInadmissible { theta, a, n });
        }
    }
    Ok(())
}

/// `T^p` by repeated squaring, returned as `(P, s)` with `T^p = e^s P`.
/// Rescaling is by powers of two so that exact products stay exact.
fn scaled_power(t: Matrix2<f64>, mut p: usize) -> (Matrix2<f64>, f64) {
    let mut result = Matrix2::identity();
    let mut result_exp = 0i64;
    let mut base = t;
    let mut base_exp = 0i64;
    let renormalize = |m: &mut Matrix2<f64>, e: &mut i64| {
        let big = m.amax();
        if big > 0.0 && big.is_finite() {
            let k = big.log2().floor() as i32;
            *m *= 2f64.powi(-k);
            *e += i64::from(k);
        }
    };
    while p > 0 {
        if p & 1 == 1 {
            result *= base;
            result_exp += base_exp;
            renormalize(&mut result, &mut result_exp);
        }
        p >>= 1;
        if p > 0 {
            base = base * base;
            base_exp *= 2;
            renormalize(&mut base, &mut base_exp);
        }
    }
    (result, result_exp as f64 * std::f64::consts::LN_2)
}

/// Covariance `F(i,j) = sum_{l >= max(i,j)}^{n-1} theta^{2l-i-j}` of the
/// backward chain, on its `n - 1` active coordinates.
pub fn chain_covariance(theta: f64, n: usize) -> DMatrix<f64> {
    let dim = n.saturating_sub(1);
    let t2 = theta * theta;
    // tail[j] = sum_{k=0}^{dim-1-j} theta^{2k}
    let mut tail = vec![0.0; dim];
    let mut acc = 0.0;
    for j in (0..dim).rev() {
        acc = 1.0 + t2 * acc;
        tail[j] = acc;
    }
    DMatrix::from_fn(dim, dim, |i, j| {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        theta.powi((hi - lo) as i32) * tail[hi]
    })
}

fn chain_eigenvalues(theta: f64, n: usize) -> Result<Vec<f64>> {
    check_chain(theta, n)?;
    if n > DENSE_CHAIN_LIMIT {
        return Err(Error::HorizonTooLarge {
            requested: n,
            limit: DENSE_CHAIN_LIMIT,
        });
    }
    Ok(chain_covariance(theta, n)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect())
}

/// Same transform as [`phi_chain_laplace_closed`], as `prod (1 + a nu_i)^{-1/2}`
/// over the eigenvalues of the chain covariance.
pub fn phi_chain_laplace_eigen(theta: f64, a: f64, n: usize) -> Result<f64> {
    let mut log_value = 0.0;
    for nu in chain_eigenvalues(theta, n)? {
        let factor = 1.0 + a * nu;
        if !(factor > 0.0) {
            return Err(Error::ChainInadmissible { theta, a, n });
        }
        log_value -= 0.5 * factor.ln();
    }
    Ok(log_value.exp())
}

/// Largest eigenvalue of the chain covariance.
pub fn spectral_gap(theta: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "spectral gap needs a chain of length at least 2".into(),
        ));
    }
    Ok(chain_eigenvalues(theta, n)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Summary of one exact/Monte Carlo/limit comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LaplaceCheck {
    pub exact: f64,
    pub monte_carlo: McEstimate,
    pub limit: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;

    /// Dense Gaussian oracle: zeta is affine in eps, so sum zetaᵀ W zeta is
    /// epsᵀ P eps + 2 qᵀ eps + r and
    /// E exp(-S/2) = det(Id + P)^{-1/2} exp(-(r - qᵀ (Id + P)^{-1} q) / 2).
    fn dense_oracle(theta: f64, mu: f64, coeffs: &InnovationCoefficients, v: &[f64]) -> f64 {
        let n = v.len();
        let mut gain = DMatrix::<f64>::zeros(2, n);
        let mut offset = Vector2::zeros();
        let mut p = DMatrix::<f64>::zeros(n, n);
        let mut q = nalgebra::DVector::<f64>::zeros(n);
        let mut r = 0.0;
        for i in 1..n {
            let a_mat = transition(theta, coeffs.beta(i - 1));
            let a_dyn = DMatrix::from_column_slice(2, 2, a_mat.as_slice());
            gain = &a_dyn * gain;
            offset = a_mat * offset;
            gain[(0, i - 1)] += coeffs.sigma(i);
            offset[0] += v[i - 1];
            let a = loading(coeffs.beta(i));
            let w = a * a.transpose() * (mu / (n as f64 * coeffs.sigma(i + 1).powi(2)));
            let w_dyn = DMatrix::from_column_slice(2, 2, w.as_slice());
            let off_dyn = nalgebra::DVector::from_column_slice(offset.as_slice());
            p += gain.transpose() * &w_dyn * &gain;
            q += gain.transpose() * (&w_dyn * &off_dyn);
            r += offset.dot(&(w * offset));
        }
        let lhs = DMatrix::<f64>::identity(n, n) + p;
        let det = lhs.determinant();
        let sol = lhs.lu().solve(&q).unwrap();
        det.powf(-0.5) * (-0.5 * (r - q.dot(&sol))).exp()
    }

    fn optimal_v(coeffs: &InnovationCoefficients, n: usize) -> Vec<f64> {
        (2..=n + 1).map(|i| coeffs.sigma(i)).collect()
    }

    #[test]
    fn zero_argument_is_one() {
        let coeffs = InnovationCoefficients::from_model(NoiseModel::Fgn { hurst: 0.6 }, 50).unwrap();
        let v = optimal_v(&coeffs, 50);
        assert_eq!(laplace_exact(0.4, 0.0, &coeffs, &v).unwrap(), 1.0);
        assert_eq!(laplace_trace(0.4, 0.0, &coeffs, &v).unwrap().value(), 1.0);
    }

    #[test]
    fn matches_dense_gaussian_oracle() {
        for (model, theta, mu, n) in [
            (NoiseModel::Fgn { hurst: 0.6 }, 0.5, 1.0, 30),
            (NoiseModel::Fgn { hurst: 0.8 }, 0.7, 5.0, 20),
            (NoiseModel::Ar1 { phi: -0.4 }, -0.6, 2.0, 25),
            (NoiseModel::White, 0.3, 1.0, 40),
            (NoiseModel::Fgn { hurst: 0.6 }, 0.4, -0.5, 30),
        ] {
            let coeffs = InnovationCoefficients::from_model(model, n).unwrap();
            for v in [optimal_v(&coeffs, n), vec![0.0; n]] {
                let exact = laplace_exact(theta, mu, &coeffs, &v).unwrap();
                let oracle = dense_oracle(theta, mu, &coeffs, &v);
                assert!(
                    (exact - oracle).abs() < 1e-12 * oracle.max(1e-300) + 1e-14,
                    "{model} theta={theta}: {exact} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn monotone_in_mu_and_bounded() {
        let coeffs = InnovationCoefficients::from_model(NoiseModel::Fgn { hurst: 0.6 }, 200).unwrap();
        let v = optimal_v(&coeffs, 200);
        let l1 = laplace_exact(0.5, 1.0, &coeffs, &v).unwrap();
        let l2 = laplace_exact(0.5, 2.0, &coeffs, &v).unwrap();
        assert!(0.0 < l2 && l2 < l1 && l1 < 1.0);
    }

    #[test]
    fn white_mc_agrees_with_exact() {
        let n = 200;
        let system = InnovationSystem::build(NoiseModel::White, n).unwrap();
        let v = optimal_v(system.coefficients(), n);
        let exact = laplace_exact(0.5, 1.0, system.coefficients(), &v).unwrap();
        let mc = laplace_mc(0.5, 1.0, &system, &v, 20_000, 3).unwrap();
        assert!((exact - mc.mean).abs() < 3.0 * mc.std_error, "{exact} vs {mc:?}");
        let mc0 = laplace_mc(0.5, 0.0, &system, &v, 1000, 3).unwrap();
        assert_eq!(mc0.mean, 1.0);
        assert_eq!(mc0.std_error, 0.0);
        let mc2 = laplace_mc(0.5, 2.0, &system, &v, 1000, 3).unwrap();
        let mc1 = laplace_mc(0.5, 1.0, &system, &v, 1000, 3).unwrap();
        assert!(mc2.mean < mc1.mean);
        assert!(laplace_mc(0.5, 1.0, &system, &v, 999, 3).is_err());
    }

    #[test]
    fn strongly_negative_mu_is_rejected() {
        let coeffs = InnovationCoefficients::from_model(NoiseModel::White, 100).unwrap();
        let v = optimal_v(&coeffs, 100);
        assert!(matches!(
            laplace_exact(0.9, -1e4, &coeffs, &v),
            Err(Error::LaplaceInadmissible { .. })
        ));
    }

    #[test]
    fn convergence_to_limit() {
        for theta in [0.4, 0.7] {
            let limit = laplace_limit(theta, 1.0).unwrap();
            let mut last = f64::INFINITY;
            for n in [500, 1000, 2000, 4000] {
                let coeffs =
                    InnovationCoefficients::from_model(NoiseModel::Fgn { hurst: 0.6 }, n).unwrap();
                let v = optimal_v(&coeffs, n);
                let gap = (laplace_exact(theta, 1.0, &coeffs, &v).unwrap() - limit).abs();
                assert!(gap < last, "theta={theta} N={n}: {gap}");
                last = gap;
            }
        }
        assert!((laplace_limit(0.4, 1.0).unwrap() - 0.137_500_601_941_740).abs() < 1e-14);
    }

    #[test]
    fn determinant_part_converges() {
        for theta in [0.4f64, 0.7] {
            let limit = (-0.5 / (1.0 - theta * theta)).exp();
            let mut last = f64::INFINITY;
            for n in [500, 1000, 2000, 4000] {
                let coeffs =
                    InnovationCoefficients::from_model(NoiseModel::Fgn { hurst: 0.6 }, n).unwrap();
                let value = laplace_exact(theta, 1.0, &coeffs, &vec![0.0; n]).unwrap();
                let gap = (value - limit).abs();
                assert!(gap < last, "theta={theta} N={n}: {value} vs {limit}");
                last = gap;
            }
        }
    }

    #[test]
    fn trace_csv() {
        let coeffs = InnovationCoefficients::from_model(NoiseModel::White, 4).unwrap();
        let trace = laplace_trace(0.5, 1.0, &coeffs, &[1.0; 4]).unwrap();
        assert_eq!(trace.gamma_diag.len(), 3);
        assert_eq!(trace.m[1], Vector2::new(1.5, 0.0));
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,gamma11,gamma12,gamma22,z1,z2,log_det\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn chain_trivial_cases() {
        for theta in [0.0, 0.3, -0.8] {
            assert_eq!(phi_chain_laplace_closed(theta, 0.0, 17).unwrap(), 1.0);
            assert!((phi_chain_laplace_eigen(theta, 0.0, 17).unwrap() - 1.0).abs() < 1e-15);
        }
        for a in [-0.5, 0.3, 2.0] {
            let expected = (1.0f64 + a).powf(-2.0);
            let eig = phi_chain_laplace_eigen(1e-8, a, 5).unwrap();
            assert!((eig - expected).abs() < 1e-12, "{eig} vs {expected}");
            let closed = phi_chain_laplace_closed(1e-8, a, 5).unwrap();
            assert!((closed - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_covariance_matches_definition() {
        let theta: f64 = 0.6;
        let n = 7;
        let f = chain_covariance(theta, n);
        for i in 1..n {
            for j in 1..n {
                let direct: f64 = (i.max(j)..n)
                    .map(|l| theta.powi((l - i) as i32) * theta.powi((l - j) as i32))
                    .sum();
                assert!((f[(i - 1, j - 1)] - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn closed_and_eigen_agree() {
        assert!(
            (phi_chain_laplace_closed(0.5, 0.2, 10).unwrap()
                - phi_chain_laplace_eigen(0.5, 0.2, 10).unwrap())
            .abs()
                < 1e-8
        );
        let inside = phi_chain_laplace_closed(0.5, -0.24, 50).unwrap();
        let eig = phi_chain_laplace_eigen(0.5, -0.24, 50).unwrap();
        assert!(inside.is_finite() && inside > 0.0);
        assert!((inside - eig).abs() < 1e-8 * eig.max(1.0));
        assert!(
            (phi_chain_laplace_closed(0.7, 0.1, 50).unwrap()
                - phi_chain_laplace_eigen(0.7, 0.1, 50).unwrap())
            .abs()
                < 1e-8
        );
    }

    #[test]
    fn chain_admissibility_is_consistent() {
        // for large n the threshold approaches -(1 - theta)^2
        let theta = 0.5;
        assert!(phi_chain_laplace_closed(theta, -0.26, 400).is_err());
        assert!(phi_chain_laplace_eigen(theta, -0.26, 400).is_err());
        assert!(phi_chain_laplace_closed(theta, -0.249, 400).is_ok());
        assert!(phi_chain_laplace_closed(theta, 5.0, 5000).unwrap() >= 0.0);
    }

    #[test]
    fn gap_sequence() {
        let mut last = 0.0;
        for n in [50, 100, 200, 400] {
            let nu = spectral_gap(0.5, n).unwrap();
            assert!(nu > last && nu < 4.0, "{nu}");
            last = nu;
        }
        assert!((spectral_gap(1e-9, 10).unwrap() - 1.0).abs() < 1e-8);
        assert!(spectral_gap(0.7, 400).unwrap() < 1.0 / 0.09);
        // negative drift has the same spectrum
        let a = spectral_gap(0.7, 120).unwrap();
        let b = spectral_gap(-0.7, 120).unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!(spectral_gap(0.5, 401).is_err());
    }
}
