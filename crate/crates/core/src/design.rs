//! Input design under the unit energy budget
//! `(1/N) sum_n ((k u)(n) / sigma_{n+1})^2 <= 1`.
//!
//! The asymptotically optimal input puts the whole budget on a constant
//! (or, for negative drift, sign-alternating) transformed input
//! `v(n) = ±sigma_{n+1}`, i.e. `u = K v`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::InnovationSystem;
use crate::io::{self, Cell};

/// Slack on the energy bound for admitted inputs.
pub const ENERGY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignProfile {
    /// `v(n) = sigma_{n+1}`
    AllPlus,
    /// `v(n) = (-1)^n sigma_{n+1}`
    Alternating,
    /// `v(n) = (-1)^{n+1} sigma_{n+1}`
    AlternatingShifted,
}

impl SignProfile {
    pub fn for_theta(theta: f64) -> Self {
        if theta < 0.0 {
            SignProfile::Alternating
        } else {
            SignProfile::AllPlus
        }
    }

    /// Sign applied at step `n` (1-based).
    pub fn sign(self, n: usize) -> f64 {
        let odd = n % 2 == 1;
        match self {
            SignProfile::AllPlus => 1.0,
            SignProfile::Alternating if odd => -1.0,
            SignProfile::Alternating => 1.0,
            SignProfile::AlternatingShifted if odd => 1.0,
            SignProfile::AlternatingShifted => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputDesign {
    /// `u(1..N)` in the original coordinates.
    pub u: Vec<f64>,
    /// `v = k u`
    pub v: Vec<f64>,
    /// `sigma_2 .. sigma_{N+1}`
    pub sigma_next: Vec<f64>,
    pub energy: f64,
    pub sign_profile: Option<SignProfile>,
}

impl InputDesign {
    /// Wraps an arbitrary input after checking it against the energy budget.
    pub fn admit(u: Vec<f64>, system: &InnovationSystem) -> Result<Self> {
        let n = u.len();
        check_horizon(system, n)?;
        let v = system.whiten(&u)?;
        let sigma_next = next_sigmas(system, n);
        let energy = energy_from_transformed(&v, &sigma_next);
        if energy > 1.0 + ENERGY_TOLERANCE {
            return Err(Error::EnergyExceeded { energy });
        }
        Ok(InputDesign {
            u,
            v,
            sigma_next,
            energy,
            sign_profile: None,
        })
    }

    /// The all-zero input of length `n`.
    pub fn zero(system: &InnovationSystem, n: usize) -> Result<Self> {
        Self::admit(vec![0.0; n], system)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        io::write_rows(writer, &DESIGN_HEADER, self.csv_rows())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        io::write_rows_to_path(path, &DESIGN_HEADER, self.csv_rows())
    }

    fn csv_rows(&self) -> impl Iterator<Item = [Cell; 4]> + '_ {
        (0..self.len()).map(move |i| {
            [
                Cell::Index(i + 1),
                Cell::Real(self.u[i]),
                Cell::Real(self.v[i]),
                Cell::Real(self.sigma_next[i]),
            ]
        })
    }
}

const DESIGN_HEADER: [&str; 4] = ["n", "u", "v", "sigma_next"];

fn check_horizon(system: &InnovationSystem, n: usize) -> Result<()> {
    if system.horizon() < n + 1 {
        return Err(Error::Dimension {
            context: "innovation horizon (input design needs sigma_{N+1})",
            expected: n + 1,
            actual: system.horizon(),
        });
    }
    Ok(())
}

fn next_sigmas(system: &InnovationSystem, n: usize) -> Vec<f64> {
    (2..=n + 1).map(|i| system.sigma(i)).collect()
}

fn energy_from_transformed(v: &[f64], sigma_next: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter()
        .zip(sigma_next)
        .map(|(v, s)| (v / s).powi(2))
        .sum::<f64>()
        / v.len() as f64
}

pub fn optimal_input(system: &InnovationSystem, n: usize, profile: SignProfile) -> Result<InputDesign> {
    check_horizon(system, n)?;
    let sigma_next = next_sigmas(system, n);
    let target: Vec<f64> = sigma_next
        .iter()
        .enumerate()
        .map(|(i, s)| profile.sign(i + 1) * s)
        .collect();
    let u = system.unwhiten(&target)?;
    let v = system.whiten(&u)?;
    let energy = energy_from_transformed(&v, &sigma_next);
    Ok(InputDesign {
        u,
        v,
        sigma_next,
        energy,
        sign_profile: Some(profile),
    })
}

/// `(1/N) sum_n ((k u)(n) / sigma_{n+1})^2`.
pub fn energy_of(u: &[f64], system: &InnovationSystem) -> Result<f64> {
    check_horizon(system, u.len())?;
    let v = system.whiten(u)?;
    Ok(energy_from_transformed(&v, &next_sigmas(system, u.len())))
}

/// `(1/N) sum alpha(n)^2` for `alpha(n) = theta alpha(n-1) + 1`, `alpha(0) = 0`;
/// tends to `1 / (1 - theta)^2`.
pub fn input_response_limit(theta: f64, n: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::Domain {
            field: "theta",
            range: "[0,1)",
            value: theta,
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut alpha = 0.0;
    let mut total = 0.0;
    for _ in 0..n {
        alpha = theta * alpha + 1.0;
        total += alpha * alpha;
    }
    Ok(total / n as f64)
}
