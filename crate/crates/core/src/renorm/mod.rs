//! Renormalisation constants `C1`, `C2`, the drift counterterms
//! `(c0, c1, c2)`, the correlator `Q^eps_0` and the integrals `I^Q_{00;nm}`.
//!
//! Continuum constants are whole-space quantities in `d = 3` with the time
//! integrals cut at `T_cut` (twice the cutoff horizon by default); lattice
//! constants are exact variances of the discrete scheme.

mod c1;
mod c2;
mod q0;
mod transform;

pub(crate) use c1::step_factors;
pub use c1::{c1_continuum, heat_square_tail, lattice_c1, lattice_c1_schedule, LatticeTime, ZeroMode};
pub use c2::{c2_constant, C2Options};
pub use q0::{iq00, iq00_direct, iq00_table, Q0Table};
pub use transform::MollifierTransform;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Coefficients of `F(u, v) = a1 u + a2 v + b1 u^2 + b2 uv + b3 v^2 + g1 u^3
/// + g2 u^2 v + g3 u v^2 + g4 v^3` together with the linear `v` equation
/// `dv/dt = a1 u + a2 v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Default for CubicCoefficients {
    fn default() -> Self {
        Self::standard_fhn()
    }
}

impl CubicCoefficients {
    pub fn zero() -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            beta3: 0.0,
            gamma1: 0.0,
            gamma2: 0.0,
            gamma3: 0.0,
            gamma4: 0.0,
            a1: 0.0,
            a2: 0.0,
        }
    }

    /// `F = u + v - u^3`, `dv/dt = u - v`.
    pub fn standard_fhn() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            gamma1: -1.0,
            a1: 1.0,
            a2: -1.0,
            ..Self::zero()
        }
    }

    #[inline]
    pub fn f(&self, u: f64, v: f64) -> f64 {
        let (u2, v2) = (u * u, v * v);
        self.alpha1 * u
            + self.alpha2 * v
            + self.beta1 * u2
            + self.beta2 * u * v
            + self.beta3 * v2
            + self.gamma1 * u2 * u
            + self.gamma2 * u2 * v
            + self.gamma3 * u * v2
            + self.gamma4 * v2 * v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantMode {
    Continuum,
    Lattice,
}

/// `C1`, `C2` and the resulting drift counterterms at one `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormConstants {
    pub eps: f64,
    pub mode: ConstantMode,
    #[serde(rename = "C1")]
    pub big_c1: f64,
    #[serde(rename = "C2")]
    pub big_c2: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl RenormConstants {
    pub fn new(eps: f64, mode: ConstantMode, coeffs: &CubicCoefficients, big_c1: f64, big_c2: f64) -> Self {
        let (c0, c1, c2) = drift_constants(coeffs, big_c1, big_c2);
        Self {
            eps,
            mode,
            big_c1,
            big_c2,
            c0,
            c1,
            c2,
        }
    }

    /// All counterterms switched off (the unrenormalised comparison run).
    pub fn off(eps: f64) -> Self {
        Self {
            eps,
            mode: ConstantMode::Lattice,
            big_c1: 0.0,
            big_c2: 0.0,
            c0: 0.0,
            c1: 0.0,
            c2: 0.0,
        }
    }
}

/// `c0 = -b1 B`, `c1 = -3 g1 B`, `c2 = -g2 B` with `B = C1 + 3 g1 C2`.
pub fn drift_constants(coeffs: &CubicCoefficients, big_c1: f64, big_c2: f64) -> (f64, f64, f64) {
    let bracket = big_c1 + 3.0 * coeffs.gamma1 * big_c2;
    (
        -coeffs.beta1 * bracket,
        -3.0 * coeffs.gamma1 * bracket,
        -coeffs.gamma2 * bracket,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// `v = A eps^p`, fitted in `(log eps, log v)`.
    Power,
    /// `v = a log(1/eps) + b`.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Exponent `p` for the power model, coefficient `a` for the log model.
    pub slope: f64,
    pub intercept: f64,
    pub max_rel_residual: f64,
}

/// Least-squares divergence fit over at least three `(eps, value)` pairs.
pub fn divergence_fit(pairs: &[(f64, f64)], model: FitModel) -> Result<FitResult> {
    if pairs.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "divergence fit needs at least 3 points, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|&(e, v)| !(e > 0.0) || (model == FitModel::Power && !(v > 0.0))) {
        return Err(Error::InvalidParameter("fit requires positive eps (and values for a power law)".into()));
    }
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(e, v)| match model {
            FitModel::Power => (e.ln(), v.ln()),
            FitModel::Log => ((1.0 / e).ln(), v),
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit requires distinct eps values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_rel_residual = pairs
        .iter()
        .zip(&pts)
        .map(|(&(_, v), p)| {
            let fitted = match model {
                FitModel::Power => (intercept + slope * p.0).exp(),
                FitModel::Log => intercept + slope * p.0,
            };
            ((fitted - v) / v.abs().max(f64::MIN_POSITIVE)).abs()
        })
        .fold(0.0, f64::max);
    Ok(FitResult {
        model,
        slope,
        intercept,
        max_rel_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterStream;

    #[test]
    fn drift_examples() {
        let zero = CubicCoefficients::zero();
        assert_eq!(drift_constants(&zero, 3.0, 2.0), (0.0, 0.0, 0.0));
        let fhn = CubicCoefficients::standard_fhn();
        let (c0, c1, c2) = drift_constants(&fhn, 5.0, 0.7);
        assert_eq!(c0, 0.0);
        assert_eq!(c2, 0.0);
        assert!((c1 - (3.0 * 5.0 - 9.0 * 0.7)).abs() < 1e-14);
        let g2 = CubicCoefficients {
            gamma2: 1.0,
            ..CubicCoefficients::zero()
        };
        let (c0, c1, c2) = drift_constants(&g2, 4.0, 9.0);
        assert_eq!((c0, c1, c2), (0.0, 0.0, -4.0));
    }

    #[test]
    fn drift_ratio_identities_and_linearity() {
        let mut rng = CounterStream::new(21, 0);
        for _ in 0..100 {
            let c = CubicCoefficients {
                beta1: rng.uniform_in(-2.0, 2.0),
                gamma1: rng.uniform_in(-2.0, 2.0),
                gamma2: rng.uniform_in(-2.0, 2.0),
                ..CubicCoefficients::zero()
            };
            let (k1, k2) = (rng.uniform_in(0.0, 50.0), rng.uniform_in(0.0, 5.0));
            let (c0, c1, c2) = drift_constants(&c, k1, k2);
            let scale = (k1 + 3.0 * c.gamma1.abs() * k2) * 10.0;
            assert!((c0 * 3.0 * c.gamma1 - c1 * c.beta1).abs() <= 1e-14 * scale * scale);
            assert!((c1 * c.gamma2 - c2 * 3.0 * c.gamma1).abs() <= 1e-14 * scale * scale);
            let (a0, a1, a2) = drift_constants(&c, 2.0 * k1, 2.0 * k2);
            assert!((a0 - 2.0 * c0).abs() <= 1e-13 * scale);
            assert!((a1 - 2.0 * c1).abs() <= 1e-13 * scale);
            assert!((a2 - 2.0 * c2).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn cubic_evaluation() {
        let fhn = CubicCoefficients::standard_fhn();
        assert_eq!(fhn.f(2.0, 1.0), 2.0 + 1.0 - 8.0);
        let c = CubicCoefficients {
            alpha1: 1.0,
            alpha2: 2.0,
            beta1: 3.0,
            beta2: 4.0,
            beta3: 5.0,
            gamma1: 6.0,
            gamma2: 7.0,
            gamma3: 8.0,
            gamma4: 9.0,
            ..CubicCoefficients::zero()
        };
        let (u, v) = (0.5f64, -2.0f64);
        let expect = u + 2.0 * v + 3.0 * u * u + 4.0 * u * v + 5.0 * v * v
            + 6.0 * u.powi(3) + 7.0 * u * u * v + 8.0 * u * v * v + 9.0 * v.powi(3);
        assert!((c.f(u, v) - expect).abs() < 1e-12);
    }

    #[test]
    fn fit_examples() {
        let eps: Vec<f64> = (2..=6).map(|k| 2f64.powi(-k)).collect();
        let power: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 7.0 / e)).collect();
        let fit = divergence_fit(&power, FitModel::Power).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-10);
        let log: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 3.0 * (1.0 / e).ln() + 1.0)).collect();
        let fit = divergence_fit(&log, FitModel::Log).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-10);
        assert!((fit.intercept - 1.0).abs() < 1e-10);
        let flat: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 4.2)).collect();
        assert!(divergence_fit(&flat, FitModel::Power).unwrap().slope.abs() < 1e-12);
        assert!(divergence_fit(&power[..2], FitModel::Power).is_err());
    }
}
