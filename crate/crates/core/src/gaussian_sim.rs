//! Exact sampling of stationary Gaussian paths.
//!
//! The fast sampler embeds the Toeplitz covariance into a symmetric circulant
//! matrix of even size `m >= 2(n - 1)`, diagonalizes it with one FFT, and
//! colours a Hermitian-symmetric complex Gaussian vector with the square
//! roots of the eigenvalues. A dense Cholesky sampler is kept alongside as a
//! statistical oracle.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::io::{self, Cell};
use crate::noise::NoiseModel;

/// Eigenvalues below this are treated as an embedding failure.
pub const EIGENVALUE_TOLERANCE: f64 = -1e-9;
/// Largest imaginary part tolerated in the FFT eigenvalues.
pub const EIGENVALUE_IMAG_TOLERANCE: f64 = 1e-9;
/// Largest imaginary part tolerated per reconstructed coordinate.
pub const PATH_IMAG_TOLERANCE: f64 = 1e-8;
/// Number of embedding doublings attempted after the minimal size.
pub const EMBEDDING_RETRIES: usize = 3;
pub const DENSE_SAMPLER_LIMIT: usize = 2048;

#[derive(Clone)]
pub struct CirculantEmbedding {
    model: NoiseModel,
    n: usize,
    m: usize,
    first_row: Vec<f64>,
    eigenvalues: Vec<f64>,
    sqrt_eigenvalues: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CirculantEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CirculantEmbedding")
            .field("model", &self.model)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish_non_exhaustive()
    }
}

impl CirculantEmbedding {
    /// Smallest power of two `>= 2(n - 1)` (at least 2).
    pub fn minimal_size(n: usize) -> usize {
        (2 * n.saturating_sub(1)).max(2).next_power_of_two()
    }

    pub fn build(model: NoiseModel, n: usize) -> Result<Self> {
        model.validate()?;
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "circulant embedding needs a path length of at least 2, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let mut m = Self::minimal_size(n);
        let mut attempt = 0;
        loop {
            match Self::try_size(model, n, m, &mut planner) {
                Ok(embedding) => return Ok(embedding),
                Err(Error::Embedding { .. }) if attempt < EMBEDDING_RETRIES => {
                    attempt += 1;
                    m *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn try_size(
        model: NoiseModel,
        n: usize,
        m: usize,
        planner: &mut FftPlanner<f64>,
    ) -> Result<Self> {
        let half = m / 2;
        let first_row: Vec<f64> = (0..m)
            .map(|j| {
                if j <= half {
                    model.autocovariance(j)
                } else {
                    model.autocovariance(m - j)
                }
            })
            .collect();

        let fft = planner.plan_fft_forward(m);
        let mut spectrum: Vec<Complex64> =
            first_row.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        fft.process(&mut spectrum);

        let mut eigenvalues = Vec::with_capacity(m);
        for (k, lambda) in spectrum.iter().enumerate() {
            if lambda.im.abs() > EIGENVALUE_IMAG_TOLERANCE {
                return Err(Error::ImaginaryResidue {
                    index: k,
                    residue: lambda.im.abs(),
                });
            }
            if lambda.re < EIGENVALUE_TOLERANCE {
                return Err(Error::Embedding {
                    m,
                    eigenvalue: lambda.re,
                });
            }
            eigenvalues.push(lambda.re);
        }
        let sqrt_eigenvalues = eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();

        Ok(CirculantEmbedding {
            model,
            n,
            m,
            first_row,
            eigenvalues,
            sqrt_eigenvalues,
            fft,
        })
    }

    pub fn model(&self) -> NoiseModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn embedding_size(&self) -> usize {
        self.m
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    /// Eigenvalues before truncation of tiny negatives.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Draws one path `xi_1..xi_n`, distributed as `N(0, C_n)`.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let m = self.m;
        let half = m / 2;
        let mut coloured = vec![Complex64::new(0.0, 0.0); m];

        coloured[0] = Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0);
        coloured[half] = Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0);
        for j in 1..half {
            let u: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            let f = Complex64::new(u, v) * std::f64::consts::FRAC_1_SQRT_2;
            coloured[j] = f;
            // mirrored coordinate is the conjugate at index m - j
            coloured[m - j] = f.conj();
        }
        for (c, s) in coloured.iter_mut().zip(&self.sqrt_eigenvalues) {
            *c *= *s;
        }

        self.fft.process(&mut coloured);

        let scale = (m as f64).sqrt().recip();
        let mut path = Vec::with_capacity(self.n);
        for (k, c) in coloured.iter().take(self.n).enumerate() {
            let residue = (c.im * scale).abs();
            if residue > PATH_IMAG_TOLERANCE {
                return Err(Error::ImaginaryResidue { index: k, residue });
            }
            path.push(c.re * scale);
        }
        Ok(path)
    }
}

pub fn build_embedding(model: NoiseModel, n: usize) -> Result<CirculantEmbedding> {
    CirculantEmbedding::build(model, n)
}

/// Draws `N(0, C_n)` through the dense lower Cholesky factor.
pub fn sample_path_dense<R: Rng + ?Sized>(
    model: NoiseModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(DenseSampler::new(model, n)?.sample(rng))
}

/// Reusable dense sampler; the factorization is computed once.
#[derive(Debug, Clone)]
pub struct DenseSampler {
    factor: nalgebra::DMatrix<f64>,
}

impl DenseSampler {
    pub fn new(model: NoiseModel, n: usize) -> Result<Self> {
        if n > DENSE_SAMPLER_LIMIT {
            return Err(Error::HorizonTooLarge {
                requested: n,
                limit: DENSE_SAMPLER_LIMIT,
            });
        }
        Ok(DenseSampler {
            factor: model.covariance_factor(n)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.factor.nrows();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.factor * z).as_slice().to_vec()
    }
}

pub fn write_path_csv<W: Write>(writer: W, path: &[f64]) -> csv::Result<()> {
    io::write_rows(writer, &["xi"], path.iter().map(|&x| [Cell::Real(x)]))
}

pub fn write_path_csv_file(file: &Path, path: &[f64]) -> Result<()> {
    io::write_rows_to_path(file, &["xi"], path.iter().map(|&x| [Cell::Real(x)]))
}
