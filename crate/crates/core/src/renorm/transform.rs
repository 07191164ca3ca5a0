//! Fourier data of the unit mollifier in `d = 3`: the spatial transform
//! `rho^(tau, q)` on fixed time nodes and the space-time transform
//! `rho~(omega, q)`.

use crate::error::{Error, Result};
use crate::noise::{MollifierProfile, MollifierSpec};
use crate::quadrature::GaussLegendre;
use std::f64::consts::PI;

/// Beyond these frequencies the transforms are below `1e-5` (so their squares
/// are negligible) and treated as 0.
pub const Q_CUT: f64 = 40.0;
pub const OMEGA_CUT: f64 = 80.0;

#[derive(Debug, Clone)]
pub struct MollifierTransform {
    spec: MollifierSpec,
    tau: Vec<(f64, f64)>,
    r: Vec<(f64, f64)>,
    /// `4 pi r_j^2 w_j rho(tau_i, r_j)`, row-major in `i`.
    table: Vec<f64>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl MollifierTransform {
    pub fn new(profile: MollifierProfile) -> Result<Self> {
        let spec = MollifierSpec::new(profile, 1.0, 3)?;
        let gl = GaussLegendre::new(16);
        let grid = |panels: usize| -> Vec<(f64, f64)> {
            let breaks: Vec<f64> = (0..=panels).map(|i| i as f64 / panels as f64).collect();
            gl.composite_points(&breaks)
        };
        let tau = grid(8);
        let r = grid(8);
        let mut table = Vec::with_capacity(tau.len() * r.len());
        for &(t, _) in &tau {
            for &(x, w) in &r {
                table.push(4.0 * PI * x * x * w * spec.rho(t, x * x));
            }
        }
        Ok(Self { spec, tau, r, table })
    }

    pub fn profile(&self) -> MollifierProfile {
        self.spec.profile()
    }

    pub fn unit_spec(&self) -> &MollifierSpec {
        &self.spec
    }

    /// Time nodes and weights on `[0, 1]`; the profile is even in time.
    pub fn tau_nodes(&self) -> &[(f64, f64)] {
        &self.tau
    }

    /// `rho^(tau_i, q)` at every time node.
    pub fn spatial(&self, q: f64) -> Vec<f64> {
        let s: Vec<f64> = self.r.iter().map(|&(x, _)| sinc(q * x)).collect();
        self.table
            .chunks(self.r.len())
            .map(|row| row.iter().zip(&s).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `rho^(tau, q)` at an arbitrary time.
    pub fn rho_hat(&self, tau: f64, q: f64) -> f64 {
        if tau.abs() >= 1.0 {
            return 0.0;
        }
        self.r
            .iter()
            .map(|&(x, w)| 4.0 * PI * x * x * w * self.spec.rho(tau, x * x) * sinc(q * x))
            .sum()
    }

    /// `rho~(omega, q) = int e^{-i omega tau} rho^(tau, q) dtau` from a
    /// [`spatial`](Self::spatial) profile; real by time symmetry.
    pub fn full(&self, omega: f64, spatial: &[f64]) -> f64 {
        if omega.abs() > OMEGA_CUT {
            return 0.0;
        }
        2.0 * self
            .tau
            .iter()
            .zip(spatial)
            .map(|(&(t, w), p)| w * p * (omega * t).cos())
            .sum::<f64>()
    }

    /// `int_{-1}^{1} rho^(tau, q) e^{a tau} dtau`.
    pub fn laplace(&self, a: f64, spatial: &[f64]) -> f64 {
        2.0 * self
            .tau
            .iter()
            .zip(spatial)
            .map(|(&(t, w), p)| w * p * (a * t).cosh())
            .sum::<f64>()
    }

    /// `int_{-1}^{1} rho^(tau, q) e^{a (tau - 1)} dtau`, i.e. [`laplace`](Self::laplace)
    /// times `e^{-a}` without overflow.
    pub fn laplace_shifted(&self, a: f64, spatial: &[f64]) -> f64 {
        self.tau
            .iter()
            .zip(spatial)
            .map(|(&(t, w), p)| w * p * ((a * (t - 1.0)).exp() + (a * (-t - 1.0)).exp()))
            .sum::<f64>()
    }

    /// `rho^(tau, q)` on the uniform grid `tau = i / cells`, `i = 0..=cells`.
    pub fn uniform_profile(&self, cells: usize) -> UniformProfile {
        let mut matrix = Vec::with_capacity((cells + 1) * self.r.len());
        for i in 0..=cells {
            let t = i as f64 / cells as f64;
            for &(x, w) in &self.r {
                matrix.push(4.0 * PI * x * x * w * self.spec.rho(t, x * x));
            }
        }
        UniformProfile {
            cells,
            radii: self.r.iter().map(|p| p.0).collect(),
            matrix,
        }
    }

    /// `int_0^{pi/2} |rho~(q^2 tan theta, q)|^2 g(q^2 tan theta) dtheta`.
    pub fn angular<G: Fn(f64) -> f64>(&self, q: f64, spatial: &[f64], g: G) -> f64 {
        let mut total = 0.0;
        self.angular_nodes(q, |omega, w| {
            let v = self.full(omega, spatial);
            total += w * v * v * g(omega);
        });
        total
    }

    /// Visits `(omega, weight)` of the angular rule with `omega = q^2 tan theta`,
    /// so `dtheta = q^2 domega / (omega^2 + q^4)`. Panels are geometric up to
    /// `max(q^2, 4)` and of width 2 up to `OMEGA_CUT`, which
    /// resolves `cos(omega t)` for `|t| <= 2`.
    pub fn angular_nodes<F: FnMut(f64, f64)>(&self, q: f64, mut visit: F) {
        let q2 = q * q;
        if q2 == 0.0 {
            visit(0.0, 0.5 * PI);
            return;
        }
        let mut breaks = vec![0.0];
        let mut b = q2 * 2f64.powi(-30);
        while b < q2.max(4.0).min(OMEGA_CUT) {
            breaks.push(b);
            b *= 2.0;
        }
        let mut u = 0.0;
        while u < OMEGA_CUT {
            u += 2.0;
            if u > *breaks.last().unwrap_or(&0.0) {
                breaks.push(u.min(OMEGA_CUT));
            }
        }
        let gl = angular_rule();
        for pair in breaks.windows(2) {
            for (omega, w) in gl.on(pair[0], pair[1]) {
                visit(omega, w * q2 / (omega * omega + q2 * q2));
            }
        }
    }
}

/// Precomputed radial weights for `rho^` on a uniform time grid.
#[derive(Debug, Clone)]
pub struct UniformProfile {
    cells: usize,
    radii: Vec<f64>,
    matrix: Vec<f64>,
}

impl UniformProfile {
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Values at the grid times for wavenumber `q`.
    pub fn at(&self, q: f64) -> Vec<f64> {
        let s: Vec<f64> = self.radii.iter().map(|&x| sinc(q * x)).collect();
        self.matrix
            .chunks(self.radii.len())
            .map(|row| row.iter().zip(&s).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Four-point Lagrange interpolation of samples `v[i] = f(i h)` on `[0, cells h]`,
/// extended evenly through 0 and by 0 beyond the last sample.
pub(crate) fn interp_even(v: &[f64], h: f64, x: f64) -> f64 {
    let x = x.abs() / h;
    let last = v.len() - 1;
    if x >= last as f64 {
        return if x == last as f64 { v[last] } else { 0.0 };
    }
    let i = (x.floor() as i64).clamp(0, last as i64 - 2);
    let f = x - i as f64;
    let at = |k: i64| -> f64 {
        let k = k.unsigned_abs() as usize;
        if k > last { 0.0 } else { v[k] }
    };
    let (a, b, c, d) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let w0 = -f * (f - 1.0) * (f - 2.0) / 6.0;
    let w1 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
    let w2 = -(f + 1.0) * f * (f - 2.0) / 2.0;
    let w3 = (f + 1.0) * f * (f - 1.0) / 6.0;
    w0 * a + w1 * b + w2 * c + w3 * d
}

fn angular_rule() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(12))
}

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if d != 3 {
        return Err(Error::InvalidParameter(format!(
            "continuum constants are implemented for d = 3, got d = {d}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_mass_and_decay() {
        for p in [MollifierProfile::Radial, MollifierProfile::Tensor] {
            let tr = MollifierTransform::new(p).unwrap();
            assert_eq!(tr.profile(), p);
            let s0 = tr.spatial(0.0);
            assert!((tr.full(0.0, &s0) - 1.0).abs() < 1e-10);
            assert!((tr.laplace(0.0, &s0) - 1.0).abs() < 1e-10);
            let far = tr.spatial(Q_CUT);
            assert!(tr.full(0.0, &far).abs() < 1e-5, "{p:?} {}", tr.full(0.0, &far));
            assert!(tr.full(OMEGA_CUT * 0.999, &s0).abs() < 1e-5, "{p:?} {}", tr.full(OMEGA_CUT * 0.999, &s0));
        }
    }

    #[test]
    fn spatial_matches_direct_and_cartesian_oracle() {
        let tr = MollifierTransform::new(MollifierProfile::Radial).unwrap();
        let (tau, _) = tr.tau_nodes()[20];
        let q = 3.0;
        let table = tr.spatial(q)[20];
        assert!((table - tr.rho_hat(tau, q)).abs() < 1e-14);
        // 1-d oracle: FT of a radial function along e_3 as a triple integral
        // in cylindrical coordinates.
        let gl = GaussLegendre::new(40);
        let rho = tr.unit_spec();
        let oracle = gl.composite(-1.0, 1.0, 4, |z| {
            2.0 * PI * gl.composite(0.0, 1.0, 4, |s| s * rho.rho(tau, s * s + z * z)) * (q * z).cos()
        });
        assert!((oracle - table).abs() < 1e-10, "{oracle} vs {table}");
    }
}
