//! Innovation representation of a stationary Gaussian sequence.
//!
//! For `xi_1, xi_2, ...` with autocorrelation `rho`, the one-step prediction
//! errors `sigma_n eps_n = xi_n - E(xi_n | xi_1..xi_{n-1})` are independent.
//! They are produced by a unit lower-triangular kernel `k`:
//!
//! ```text
//! sigma_n eps_n = sum_{m<=n} k(n,m) xi_m,      k(n,n) = 1
//! beta_n        = sum_{m<=n} k(n,m) rho(m) / sigma_n^2
//! k(n+1,n+1-m)  = k(n,n-m) - beta_n k(n,m),    k(n,0) = 0
//! sigma_n^2     = prod_{m<n} (1 - beta_m^2),   sigma_1 = 1
//! ```
//!
//! `K = k^{-1}` maps innovations back to the original sequence.
//!
//! All public accessors are 1-based to match the recursion above; `beta(0)`
//! is defined as zero so that the state matrices `A_0` are well formed.

use std::io::Write;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::io::{self, Cell};
use crate::noise::NoiseModel;

/// Largest horizon for which the dense kernels are materialized.
pub const MAX_KERNEL_HORIZON: usize = 8192;

/// Rolling Durbin-Levinson state: holds only the current kernel row.
#[derive(Debug, Clone)]
struct Recursion {
    rho: Vec<f64>,
    row: Vec<f64>,
    sigma_sq: f64,
}

impl Recursion {
    fn new(rho: Vec<f64>) -> Self {
        Recursion {
            rho,
            row: vec![1.0],
            sigma_sq: 1.0,
        }
    }

    /// Current row index `n` (length of `row`).
    fn n(&self) -> usize {
        self.row.len()
    }

    /// Computes `beta_n` from the current row and advances to row `n + 1`.
    fn advance(&mut self) -> Result<f64> {
        let n = self.n();
        let num: f64 = self
            .row
            .iter()
            .zip(&self.rho[1..=n])
            .map(|(k, r)| k * r)
            .sum();
        let beta = num / self.sigma_sq;
        if !(beta.abs() < 1.0) {
            return Err(Error::PartialCorrelation { n, beta });
        }

        let old = &self.row;
        let mut next = Vec::with_capacity(n + 1);
        for p in 1..=n + 1 {
            let shifted = if p >= 2 { old[p - 2] } else { 0.0 };
            let mirrored = if p <= n { old[n - p] } else { 0.0 };
            next.push(shifted - beta * mirrored);
        }
        self.row = next;
        self.sigma_sq *= 1.0 - beta * beta;
        Ok(beta)
    }
}

/// Partial correlations and innovation standard deviations up to a horizon.
///
/// Needs only `O(horizon)` memory, so it is usable far beyond the dense
/// kernel limit.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationCoefficients {
    /// `beta_1 .. beta_{h-1}`
    beta: Vec<f64>,
    /// `sigma_1 .. sigma_h`
    sigma: Vec<f64>,
}

impl InnovationCoefficients {
    /// Coefficients for a series of length `n`, built to horizon `n + 1`.
    pub fn from_model(model: NoiseModel, n: usize) -> Result<Self> {
        Self::build(model, n, |_| {})
    }

    fn build(model: NoiseModel, n: usize, mut on_row: impl FnMut(&[f64])) -> Result<Self> {
        model.validate()?;
        if n == 0 {
            return Err(Error::InvalidArgument(
                "innovation horizon must be at least 1".into(),
            ));
        }
        let mut rec = Recursion::new(model.autocovariances(n + 1));
        let mut beta = Vec::with_capacity(n);
        let mut sigma_sq = Vec::with_capacity(n + 1);
        sigma_sq.push(1.0);
        on_row(&rec.row);
        for _ in 0..n {
            let b = rec.advance()?;
            beta.push(b);
            on_row(&rec.row);
            // product formula sigma_{n+1}^2 = prod_{m<=n} (1 - beta_m^2)
            let s = sigma_sq.last().copied().unwrap_or(1.0) * (1.0 - b * b);
            if !(s > 0.0) {
                return Err(Error::Degenerate {
                    model: model.to_string(),
                    n: beta.len() + 1,
                });
            }
            sigma_sq.push(s);
        }
        Ok(InnovationCoefficients {
            beta,
            sigma: sigma_sq.into_iter().map(f64::sqrt).collect(),
        })
    }

    /// Number of innovation variances available (`N + 1` for a series of length `N`).
    pub fn horizon(&self) -> usize {
        self.sigma.len()
    }

    /// `beta_n`, with `beta_0 = 0`.
    pub fn beta(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.beta[n - 1]
        }
    }

    /// `sigma_n` for `1 <= n <= horizon`.
    pub fn sigma(&self, n: usize) -> f64 {
        self.sigma[n - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        io::write_rows(writer, &["n", "beta_n", "sigma_n"], self.csv_rows())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        io::write_rows_to_path(path, &["n", "beta_n", "sigma_n"], self.csv_rows())
    }

    fn csv_rows(&self) -> impl Iterator<Item = [Cell; 3]> + '_ {
        self.sigma.iter().enumerate().map(|(i, &s)| {
            let beta = self.beta.get(i).map_or(Cell::Empty, |&b| Cell::Real(b));
            [Cell::Index(i + 1), beta, Cell::Real(s)]
        })
    }
}

/// Unit lower-triangular matrix in packed row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    size: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    fn with_capacity(size: usize) -> Self {
        LowerTriangular {
            size: 0,
            data: Vec::with_capacity(size * (size + 1) / 2),
        }
    }

    fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.size + 1);
        self.data.extend_from_slice(row);
        self.size += 1;
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Entries `(n,1) .. (n,n)` of row `n` (1-based).
    pub fn row(&self, n: usize) -> &[f64] {
        let start = (n - 1) * n / 2;
        &self.data[start..start + n]
    }

    /// Entry `(n, m)`, zero above the diagonal (1-based).
    pub fn get(&self, n: usize, m: usize) -> f64 {
        if m == 0 || m > n {
            0.0
        } else {
            self.row(n)[m - 1]
        }
    }

    /// `y = L x` for `x` of length at most `size`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (1..=x.len())
            .map(|n| self.row(n).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Solves `L y = b` by forward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = Vec::with_capacity(b.len());
        for (i, &rhs) in b.iter().enumerate() {
            let row = self.row(i + 1);
            let acc: f64 = row[..i].iter().zip(&y).map(|(a, b)| a * b).sum();
            y.push((rhs - acc) / row[i]);
        }
        y
    }

    /// Inverse of a unit lower-triangular matrix, built row by row from
    /// `row_n(L^{-1}) = e_n - sum_{l<n} L(n,l) row_l(L^{-1})`.
    fn unit_inverse(&self) -> Self {
        let mut inv = LowerTriangular::with_capacity(self.size);
        let mut buf = Vec::with_capacity(self.size);
        for n in 1..=self.size {
            buf.clear();
            buf.resize(n, 0.0);
            buf[n - 1] = 1.0;
            let row = self.row(n);
            for l in 1..n {
                let c = row[l - 1];
                if c != 0.0 {
                    for (out, &v) in buf.iter_mut().zip(inv.row(l)) {
                        *out -= c * v;
                    }
                }
            }
            inv.push_row(&buf);
        }
        inv
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.size, self.size, |i, j| self.get(i + 1, j + 1))
    }
}

/// Coefficients together with the dense whitening kernel `k` and its inverse `K`.
#[derive(Debug, Clone)]
pub struct InnovationSystem {
    model: NoiseModel,
    coefficients: InnovationCoefficients,
    kernel: LowerTriangular,
    inverse: LowerTriangular,
}

impl InnovationSystem {
    /// Builds the system for a series of length `n`, i.e. to horizon `n + 1`.
    pub fn build(model: NoiseModel, n: usize) -> Result<Self> {
        if n + 1 > MAX_KERNEL_HORIZON {
            return Err(Error::HorizonTooLarge {
                requested: n + 1,
                limit: MAX_KERNEL_HORIZON,
            });
        }
        let mut kernel = LowerTriangular::with_capacity(n + 1);
        let coefficients = InnovationCoefficients::build(model, n, |row| kernel.push_row(row))?;
        let inverse = kernel.unit_inverse();
        Ok(InnovationSystem {
            model,
            coefficients,
            kernel,
            inverse,
        })
    }

    pub fn model(&self) -> NoiseModel {
        self.model
    }

    pub fn coefficients(&self) -> &InnovationCoefficients {
        &self.coefficients
    }

    pub fn horizon(&self) -> usize {
        self.coefficients.horizon()
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.coefficients.beta(n)
    }

    pub fn sigma(&self, n: usize) -> f64 {
        self.coefficients.sigma(n)
    }

    /// Whitening kernel `k(n, m)`.
    pub fn kernel(&self) -> &LowerTriangular {
        &self.kernel
    }

    /// Inverse kernel `K(n, m)`.
    pub fn inverse_kernel(&self) -> &LowerTriangular {
        &self.inverse
    }

    /// `Z_n = sum_{m<=n} k(n,m) x_m`.
    pub fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_length(x.len())?;
        Ok(self.kernel.apply(x))
    }

    /// `x_n = sum_{m<=n} K(n,m) z_m`.
    pub fn unwhiten(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_length(z.len())?;
        Ok(self.inverse.apply(z))
    }

    /// Normalized innovations `eps_n = (k xi)_n / sigma_n`.
    pub fn innovations(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.whiten(xi)?;
        for (n, e) in z.iter_mut().enumerate() {
            *e /= self.sigma(n + 1);
        }
        Ok(z)
    }

    fn check_length(&self, len: usize) -> Result<()> {
        if len > self.horizon() {
            return Err(Error::Dimension {
                context: "series longer than innovation horizon",
                expected: self.horizon(),
                actual: len,
            });
        }
        Ok(())
    }

    pub(crate) fn require_len(&self, context: &'static str, len: usize, n: usize) -> Result<()> {
        check_len(context, n, len)?;
        self.check_length(n)
    }
}

pub fn build_innovation_system(model: NoiseModel, n: usize) -> Result<InnovationSystem> {
    InnovationSystem::build(model, n)
}

pub fn whiten_series(x: &[f64], system: &InnovationSystem) -> Result<Vec<f64>> {
    system.whiten(x)
}

pub fn unwhiten_series(z: &[f64], system: &InnovationSystem) -> Result<Vec<f64>> {
    system.unwhiten(z)
}
