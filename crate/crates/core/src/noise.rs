//! Stationary Gaussian noise families with unit variance.
//!
//! Every model is normalized so that `rho(0) = 1` and the sampling step is
//! fixed to one. The AR(1) and MA(1) parametrizations are the conventional
//! ones (`rho(j) = phi^j`, `rho(1) = psi / (1 + psi^2)`).

use std::fmt;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNoiseModel", into = "RawNoiseModel")]
pub enum NoiseModel {
    /// Fractional Gaussian noise with Hurst index in (0, 1).
    Fgn { hurst: f64 },
    /// Autoregressive noise, `rho(j) = phi^j`, |phi| < 1.
    Ar1 { phi: f64 },
    /// Moving-average noise normalized to unit variance.
    Ma1 { psi: f64 },
    White,
}

impl NoiseModel {
    pub fn fgn(hurst: f64) -> Result<Self> {
        let model = NoiseModel::Fgn { hurst };
        model.validate()?;
        Ok(model)
    }

    pub fn ar1(phi: f64) -> Result<Self> {
        let model = NoiseModel::Ar1 { phi };
        model.validate()?;
        Ok(model)
    }

    pub fn ma1(psi: f64) -> Result<Self> {
        let model = NoiseModel::Ma1 { psi };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Fgn { hurst } => {
                if !(hurst > 0.0 && hurst < 1.0) {
                    return Err(Error::Domain {
                        field: "hurst",
                        range: "(0,1)",
                        value: hurst,
                    });
                }
            }
            NoiseModel::Ar1 { phi } => {
                if !(phi > -1.0 && phi < 1.0) {
                    return Err(Error::Domain {
                        field: "phi",
                        range: "(-1,1)",
                        value: phi,
                    });
                }
            }
            NoiseModel::Ma1 { psi } => {
                if !psi.is_finite() {
                    return Err(Error::Domain {
                        field: "psi",
                        range: "the finite reals",
                        value: psi,
                    });
                }
            }
            NoiseModel::White => {}
        }
        Ok(())
    }

    /// Autocorrelation at an integer lag.
    pub fn autocovariance(&self, lag: usize) -> f64 {
        match *self {
            NoiseModel::Fgn { hurst } => fgn_autocovariance(hurst, lag),
            NoiseModel::Ar1 { phi } => phi.powi(lag.min(i32::MAX as usize) as i32),
            NoiseModel::Ma1 { psi } => match lag {
                0 => 1.0,
                1 => psi / (1.0 + psi * psi),
                _ => 0.0,
            },
            NoiseModel::White => {
                if lag == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `rho(0..len)` as a vector.
    pub fn autocovariances(&self, len: usize) -> Vec<f64> {
        (0..len).map(|lag| self.autocovariance(lag)).collect()
    }

    /// Dense `n x n` Toeplitz covariance, checked for positive definiteness.
    pub fn covariance_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidArgument(
                "covariance matrix size must be at least 1".into(),
            ));
        }
        let row = self.autocovariances(n);
        let c = DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)]);
        if Cholesky::new(c.clone()).is_none() {
            return Err(Error::Degenerate {
                model: self.to_string(),
                n,
            });
        }
        Ok(c)
    }

    /// Lower Cholesky factor of the covariance matrix.
    pub fn covariance_factor(&self, n: usize) -> Result<DMatrix<f64>> {
        let c = self.covariance_matrix(n)?;
        Cholesky::new(c)
            .map(|ch| ch.l())
            .ok_or_else(|| Error::Degenerate {
                model: self.to_string(),
                n,
            })
    }
}

fn fgn_autocovariance(hurst: f64, lag: usize) -> f64 {
    let two_h = 2.0 * hurst;
    match lag {
        0 => 1.0,
        1 => 0.5 * (2f64.powf(two_h) - 2.0),
        _ => {
            // l^{2H} * ((1 - 1/l)^{2H} + (1 + 1/l)^{2H} - 2) / 2, written with
            // expm1/ln_1p so the second difference keeps its relative accuracy.
            let l = lag as f64;
            let x = l.recip();
            let lower = (two_h * (-x).ln_1p()).exp_m1();
            let upper = (two_h * x.ln_1p()).exp_m1();
            0.5 * l.powf(two_h) * (lower + upper)
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Fgn { hurst } => write!(f, "fGn(H={hurst})"),
            NoiseModel::Ar1 { phi } => write!(f, "AR(1)(phi={phi})"),
            NoiseModel::Ma1 { psi } => write!(f, "MA(1)(psi={psi})"),
            NoiseModel::White => write!(f, "white"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawNoiseModel {
    Fgn { hurst: f64 },
    Ar1 { phi: f64 },
    Ma1 { psi: f64 },
    White {},
}

impl TryFrom<RawNoiseModel> for NoiseModel {
    type Error = Error;

    fn try_from(raw: RawNoiseModel) -> Result<Self> {
        let model = match raw {
            RawNoiseModel::Fgn { hurst } => NoiseModel::Fgn { hurst },
            RawNoiseModel::Ar1 { phi } => NoiseModel::Ar1 { phi },
            RawNoiseModel::Ma1 { psi } => NoiseModel::Ma1 { psi },
            RawNoiseModel::White {} => NoiseModel::White,
        };
        model.validate()?;
        Ok(model)
    }
}

impl From<NoiseModel> for RawNoiseModel {
    fn from(model: NoiseModel) -> Self {
        match model {
            NoiseModel::Fgn { hurst } => RawNoiseModel::Fgn { hurst },
            NoiseModel::Ar1 { phi } => RawNoiseModel::Ar1 { phi },
            NoiseModel::Ma1 { psi } => RawNoiseModel::Ma1 { psi },
            NoiseModel::White => RawNoiseModel::White {},
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fgn_half_is_white() {
        let m = NoiseModel::fgn(0.5).unwrap();
        assert_eq!(m.autocovariance(1), 0.0);
        let c = m.covariance_matrix(40).unwrap();
        let diff = (&c - DMatrix::<f64>::identity(40, 40)).amax();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn fgn_lags_match_high_precision_values() {
        let m = NoiseModel::fgn(0.6).unwrap();
        assert_eq!(m.autocovariance(0), 1.0);
        // 30-digit evaluations of (|l-1|^1.2 + (l+1)^1.2 - 2 l^1.2) / 2
        assert!((m.autocovariance(1) - 0.148_698_354_997_035).abs() < 1e-15);
        assert!((m.autocovariance(2) - 0.071_199_699_429_205_98).abs() < 1e-15);
        let far = m.autocovariance(5000);
        assert!((far - 1.318_272_658_295_05e-4).abs() / 1.318e-4 < 1e-10);
    }

    #[test]
    fn small_matrices() {
        let white = NoiseModel::White.covariance_matrix(3).unwrap();
        assert_eq!(white, DMatrix::<f64>::identity(3, 3));

        let ar = NoiseModel::ar1(0.5).unwrap().covariance_matrix(2).unwrap();
        assert_eq!(ar, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));

        let fgn = NoiseModel::fgn(0.6).unwrap();
        let c = fgn.covariance_matrix(3).unwrap();
        assert_eq!(c[(0, 1)], fgn.autocovariance(1));
        assert_eq!(c[(0, 2)], fgn.autocovariance(2));
        assert_eq!(c[(2, 1)], c[(1, 2)]);
    }

    #[test]
    fn ma1_normalization() {
        let m = NoiseModel::ma1(0.5).unwrap();
        assert_eq!(m.autocovariance(0), 1.0);
        assert!((m.autocovariance(1) - 0.4).abs() < 1e-15);
        assert_eq!(m.autocovariance(2), 0.0);
    }

    #[test]
    fn out_of_range_names_the_field() {
        let err = NoiseModel::fgn(1.5).unwrap_err().to_string();
        assert!(err.contains("hurst must lie in (0,1)"), "{err}");
        let err = NoiseModel::ar1(-1.0).unwrap_err().to_string();
        assert!(err.starts_with("phi"), "{err}");
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let m: NoiseModel = serde_json::from_str(r#"{"kind":"fgn","hurst":0.6}"#).unwrap();
        assert_eq!(m, NoiseModel::Fgn { hurst: 0.6 });
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"kind":"fgn","hurst":0.6}"#
        );
        let w: NoiseModel = serde_json::from_str(r#"{"kind":"white"}"#).unwrap();
        assert_eq!(w, NoiseModel::White);
        assert!(serde_json::from_str::<NoiseModel>(r#"{"kind":"fgn","hurst":0.6,"h":1}"#).is_err());
        assert!(serde_json::from_str::<NoiseModel>(r#"{"kind":"fgn","hurst":1.2}"#).is_err());
        assert!(serde_json::from_str::<NoiseModel>(r#"{"kind":"white","phi":0.1}"#).is_err());
    }

    fn any_model() -> impl Strategy<Value = NoiseModel> {
        prop_oneof![
            (0.05f64..0.95).prop_map(|hurst| NoiseModel::Fgn { hurst }),
            (-0.95f64..0.95).prop_map(|phi| NoiseModel::Ar1 { phi }),
            (-3.0f64..3.0).prop_map(|psi| NoiseModel::Ma1 { psi }),
            Just(NoiseModel::White),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn covariance_is_exactly_symmetric_and_unit_diagonal(model in any_model(), n in 1usize..64) {
            let c = model.covariance_matrix(n).unwrap();
            prop_assert_eq!(c.clone(), c.transpose());
            for i in 0..n {
                prop_assert_eq!(c[(i, i)], 1.0);
            }
        }

        #[test]
        fn fgn_sign_follows_hurst(hurst in 0.05f64..0.95, lag in 1usize..2000) {
            prop_assume!((hurst - 0.5).abs() > 1e-3);
            let r = NoiseModel::Fgn { hurst }.autocovariance(lag);
            if hurst > 0.5 {
                prop_assert!(r > 0.0);
            } else {
                prop_assert!(r < 0.0);
            }
        }
    }

    #[test]
    fn positive_definite_up_to_512() {
        for model in [
            NoiseModel::Fgn { hurst: 0.3 },
            NoiseModel::Fgn { hurst: 0.9 },
            NoiseModel::Ar1 { phi: 0.9 },
            NoiseModel::Ma1 { psi: 0.5 },
        ] {
            model.covariance_matrix(512).unwrap();
        }
    }
}
