//! `C1(eps) = int G_eps^2` in the continuum and its exact lattice analogue.

use super::transform::{check_dim, MollifierTransform, Q_CUT};
use crate::error::Result;
use crate::kernel::heat_kernel;
use crate::noise::{MollifierSpec, MollifierWeights, SpaceTimeLattice};
use crate::quadrature::{integrate_checked, GaussLegendre, Tolerance};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// `int_{R^3} int_{-inf}^{T_cut} G_eps(t, x)^2 dt dx` in `d = 3`.
///
/// Parabolic scaling gives the untruncated integral as `A / eps` with an
/// `eps`-free constant `A`, evaluated in Fourier variables; the part beyond
/// `T_cut` is subtracted in closed form per wavenumber.
pub fn c1_continuum(tr: &MollifierTransform, eps: f64, t_cut: f64) -> Result<f64> {
    check_dim(3)?;
    Ok(c1_unit(tr) / eps - c1_tail(tr, eps, t_cut))
}

/// `(2 pi)^{-4} int |rho~|^2 / (omega^2 + |k|^4)` at `eps = 1`.
fn c1_unit(tr: &MollifierTransform) -> f64 {
    let gl = GaussLegendre::new(16);
    let nodes: Vec<(f64, f64)> = {
        let breaks: Vec<f64> = (0..=40).map(|i| Q_CUT * i as f64 / 40.0).collect();
        gl.composite_points(&breaks)
    };
    let s: f64 = nodes
        .par_iter()
        .map(|&(q, w)| w * tr.angular(q, &tr.spatial(q), |_| 1.0))
        .sum();
    8.0 * PI / (2.0 * PI).powi(4) * s
}

/// `(4 pi^2)^{-1} int_0^inf A(k)^2 e^{-2 k^2 T_cut} dk` with
/// `A(k) = int rho^_eps(s, k) e^{k^2 s} ds`.
fn c1_tail(tr: &MollifierTransform, eps: f64, t_cut: f64) -> f64 {
    let gl = GaussLegendre::new(16);
    let k_max = (20.0 / t_cut).sqrt();
    let e2 = eps * eps;
    let s = gl.composite(0.0, k_max, 16, |k| {
        let a = tr.laplace(k * k * e2, &tr.spatial(eps * k));
        a * a * (-2.0 * k * k * t_cut).exp()
    });
    s / (4.0 * PI * PI)
}

/// `int_delta^T int_{R^3} G(t, x)^2 dx dt` by quadrature in `(t, |x|)`.
pub fn heat_square_tail(delta: f64, t_end: f64) -> Result<f64> {
    let gl = GaussLegendre::new(48);
    let inner = |t: f64| {
        let r_max = 14.0 * t.sqrt();
        gl.integrate(0.0, r_max, |r| {
            let g = heat_kernel(t, r * r, 3);
            4.0 * PI * r * r * g * g
        })
    };
    integrate_checked(inner, delta, t_end, Tolerance::new(0.0, 1e-13), || {
        format!("heat square tail on [{delta}, {t_end}]")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeTime {
    /// Stationary variance, zero mode excluded.
    Stationary,
    /// Variance after `K` steps from `Psi = 0`, all modes.
    AtStep(usize),
}

struct ModeClass {
    count: usize,
    lambda: f64,
    /// Multiplier per lag, index `l + reach`.
    w: Vec<f64>,
}

/// Modes grouped by sorted absolute frequencies; the lattice mollifier and the
/// Laplacian are invariant under axis permutations and reflections.
fn mode_classes(weights: &MollifierWeights, lattice: &SpaceTimeLattice) -> (Vec<ModeClass>, i64) {
    let grid = lattice.grid();
    let lambda = grid.laplacian_symbol(lattice.side);
    let reach = weights.reach();
    let mut reps: BTreeMap<[i64; 3], (usize, usize)> = BTreeMap::new();
    for i in 0..grid.len() {
        let c = grid.coords(i);
        let mut key = [0i64; 3];
        for a in 0..lattice.d {
            key[a] = grid.signed_frequency(c[a]).abs();
        }
        key.sort_unstable();
        reps.entry(key).or_insert((0, i)).0 += 1;
    }
    let lags: Vec<(i64, &[f64])> = weights.lags().collect();
    let classes = reps
        .into_values()
        .map(|(count, i)| {
            let mut w = vec![0.0; (2 * reach + 1) as usize];
            for (l, m) in &lags {
                w[(l + reach) as usize] = m[i];
            }
            ModeClass {
                count,
                lambda: lambda[i],
                w,
            }
        })
        .collect();
    (classes, reach)
}

pub(crate) fn step_factors(lambda: f64, dt: f64) -> (f64, f64) {
    let r = (-lambda * dt).exp();
    let g = if lambda > 0.0 { -(-lambda * dt).exp_m1() / lambda } else { dt };
    (r, g)
}

/// Whether the spatially constant mode of the noise is kept. Its variance
/// grows linearly in time on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ZeroMode {
    Include,
    Exclude,
}

/// Exact one-point variance of the ETD1 field `Psi` driven by the lattice
/// mollified noise, after each of `steps` steps (entry 0 is the initial 0).
pub fn lattice_c1_schedule(
    spec: &MollifierSpec,
    lattice: &SpaceTimeLattice,
    steps: usize,
    zero: ZeroMode,
) -> Result<Vec<f64>> {
    let weights = MollifierWeights::new(spec, lattice)?;
    let (classes, reach) = mode_classes(&weights, lattice);
    let norm = lattice.sites() as f64 * lattice.cell_volume();
    let width = 2 * reach as usize + 1;
    let total = classes
        .par_iter()
        .filter(|cl| zero == ZeroMode::Include || cl.lambda > 0.0)
        .map(|cl| {
            let (r, g) = step_factors(cl.lambda, lattice.dt);
            let mut c = vec![0.0; steps + width];
            let mut sum_sq = 0.0;
            let mut out = vec![0.0; steps + 1];
            let mut rk = 1.0;
            for k in 0..steps {
                for (li, w) in cl.w.iter().enumerate() {
                    let add = rk * w;
                    let old = c[k + li];
                    sum_sq += add * (2.0 * old + add);
                    c[k + li] = old + add;
                }
                rk *= r;
                out[k + 1] = cl.count as f64 * g * g * sum_sq;
            }
            out
        })
        .reduce(
            || vec![0.0; steps + 1],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(total.into_iter().map(|v| v / norm).collect())
}

/// Lattice `C1`: the exact variance of the simulated `Psi_eps` at a node.
pub fn lattice_c1(spec: &MollifierSpec, lattice: &SpaceTimeLattice, at: LatticeTime) -> Result<f64> {
    match at {
        LatticeTime::AtStep(k) => {
            Ok(*lattice_c1_schedule(spec, lattice, k, ZeroMode::Include)?.last().unwrap_or(&0.0))
        }
        LatticeTime::Stationary => {
            let weights = MollifierWeights::new(spec, lattice)?;
            let (classes, _) = mode_classes(&weights, lattice);
            let norm = lattice.sites() as f64 * lattice.cell_volume();
            let total: f64 = classes
                .par_iter()
                .filter(|cl| cl.lambda > 0.0)
                .map(|cl| {
                    let (r, g) = step_factors(cl.lambda, lattice.dt);
                    // c(p) = sum_{l <= p} r^{p-l} W_l for |p| <= reach, then geometric
                    let mut c = 0.0;
                    let mut s = 0.0;
                    for w in &cl.w {
                        c = r * c + w;
                        s += c * c;
                    }
                    s += c * c * r * r / (1.0 - r * r);
                    cl.count as f64 * g * g * s
                })
                .sum();
            Ok(total / norm)
        }
    }
}
