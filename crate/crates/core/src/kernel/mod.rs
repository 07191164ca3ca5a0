//! Heat-kernel decomposition `G = K + R`, the dyadic pieces `K_n`, the
//! cutoff kernel `Q` and the time-smeared pieces `K^Q_{nm}`.
//!
//! All kernels here live on the whole space `R^{1+d}` with parabolic scaling.
//! The cutoff radius used inside `K` and `K_n` is the smooth homogeneous
//! radius `(t^2 + |x|^4)^{1/4}`, which dominates the max-form norm, so every
//! support statement phrased with the max-form norm carries over.

mod moments;
mod verify;

pub use moments::{sphere_monomial, MomentCorrection};
pub use verify::{
    piece_moments, piece_moments_direct, verify_derivative_bounds, verify_moment_bounds,
    joint_level_uniformity, level_uniformity, uniformity, verify_support, BoundRow, SupportReport, Uniformity,
};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, GaussLegendre, Tolerance};
use crate::scaling::{Scaling, SpacetimePoint};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Smooth even bump with `phi(0) = 1`, `phi = 0` outside `(-1, 1)` and
/// `sum_m phi(m + t) = 1` for every `t`.
pub fn bump_phi(theta: f64) -> f64 {
    let a = theta.abs();
    if a >= 1.0 {
        return 0.0;
    }
    if a == 0.0 {
        return 1.0;
    }
    let arg = 1.0 / a - 1.0 / (1.0 - a);
    (0.5 + 0.5 * arg.tanh()).clamp(0.0, 1.0)
}

/// Whole-space heat kernel `(4 pi t)^{-d/2} exp(-|x|^2 / 4t)`, zero for `t <= 0`.
pub fn heat_kernel(t: f64, r2: f64, d: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (4.0 * PI * t).powf(-0.5 * d as f64) * (-r2 / (4.0 * t)).exp()
}

pub fn heat_kernel_at(z: &SpacetimePoint, d: usize) -> f64 {
    let r2: f64 = z.x[..d].iter().map(|v| v * v).sum();
    heat_kernel(z.t, r2, d)
}

/// Heat kernel on the torus of side `side`, by image sum for small times
/// and Fourier series for large times. Truncation keeps the relative error
/// below `1e-12`.
pub fn heat_kernel_torus(t: f64, x: &[f64], side: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let d = x.len();
    let per_axis: Vec<f64> = if t < 0.1 * side * side {
        x.iter()
            .map(|&xi| {
                let xi = crate::scaling::minimal_image(xi, side);
                let norm = (4.0 * PI * t).sqrt();
                let mut s = 0.0;
                // images beyond |j| ~ 1 + sqrt(40 t)/side are below 1e-17
                let reach = 2 + (40.0 * t).sqrt().div_euclid(side) as i64;
                for j in -reach..=reach {
                    let y = xi + j as f64 * side;
                    s += (-y * y / (4.0 * t)).exp();
                }
                s / norm
            })
            .collect()
    } else {
        x.iter()
            .map(|&xi| {
                let mut s = 1.0 / side;
                let mut k = 1;
                loop {
                    let w = 2.0 * PI * k as f64 / side;
                    let term = (-w * w * t).exp();
                    s += 2.0 / side * term * (w * xi).cos();
                    if term < 1e-17 {
                        break;
                    }
                    k += 1;
                }
                s
            })
            .collect()
    };
    debug_assert_eq!(per_axis.len(), d);
    per_axis.iter().product()
}

/// Smooth homogeneous parabolic radius `(t^2 + r^4)^{1/4}`.
#[inline]
pub fn smooth_radius(t: f64, r2: f64) -> f64 {
    (t * t + r2 * r2).sqrt().sqrt()
}

/// `chi` in `Q(t) = a1 e^{a2 t} chi(t)`: equal to one on `[0, T]`, vanishing from `2T` on.
pub fn smooth_cutoff(t: f64, horizon: f64) -> f64 {
    if t < 0.0 || t >= 2.0 * horizon {
        0.0
    } else if t <= horizon {
        1.0
    } else {
        bump_phi((t - horizon) / horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CutoffKernel {
    pub a1: f64,
    pub a2: f64,
    pub horizon: f64,
}

impl CutoffKernel {
    pub fn new(a1: f64, a2: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon T must be positive, got {horizon}"
            )));
        }
        Ok(Self { a1, a2, horizon })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let c = smooth_cutoff(t, self.horizon);
        if c == 0.0 {
            0.0
        } else {
            self.a1 * (self.a2 * t).exp() * c
        }
    }

    pub fn sup_norm(&self) -> f64 {
        let end = 2.0 * self.horizon;
        self.a1.abs() * (self.a2 * 0.0).exp().max((self.a2 * end).exp())
    }
}

/// `Q(t) = a1 e^{t a2} chi(t)`.
pub fn q_kernel(t: f64, spec: &CutoffKernel) -> f64 {
    spec.eval(t)
}

/// All `(n, m)` with `0 <= n <= n_max` and `-1 <= m <= 1 + 2T 2^{s_0 n}`.
pub fn index_set(n_max: u32, horizon: f64, s: &Scaling) -> Result<Vec<(u32, i64)>> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon T must be positive, got {horizon}"
        )));
    }
    let mut out = Vec::new();
    for n in 0..=n_max {
        let top = (1.0 + 2.0 * horizon * 2f64.powi((s.time_exponent() * n) as i32)).floor() as i64;
        out.extend((-1..=top).map(|m| (n, m)));
    }
    Ok(out)
}

fn fixed_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(12))
}

#[derive(Debug, Clone)]
pub struct KernelDecomposition {
    d: usize,
    scaling: Scaling,
    beta: u32,
    n_max: u32,
    cutoff: CutoffKernel,
    rel_tol: f64,
    correction: Option<MomentCorrection>,
    ignore_shift: bool,
}

impl KernelDecomposition {
    pub fn new(d: usize, n_max: u32, cutoff: CutoffKernel) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 2 or 3, got {d}"
            )));
        }
        Ok(Self {
            d,
            scaling: Scaling::parabolic(d),
            beta: 2,
            n_max,
            cutoff,
            rel_tol: 1e-10,
            correction: None,
            ignore_shift: false,
        })
    }

    pub fn with_tolerance(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    /// Subtract smooth bumps from `K_0` so that the moments of `K` of scaled
    /// degree `<= max_degree` vanish (supported: 0 and 2).
    pub fn with_moment_correction(mut self, max_degree: u32) -> Result<Self> {
        self.correction = None;
        self.correction = Some(MomentCorrection::build(&self, max_degree)?);
        Ok(self)
    }

    /// Debug negative control: recentre every piece at the origin as if
    /// `h_{nm} = 0`. Support checks must then fail.
    pub fn with_corrupted_shift(mut self, on: bool) -> Self {
        self.ignore_shift = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }
    pub fn beta(&self) -> u32 {
        self.beta
    }
    pub fn n_max(&self) -> u32 {
        self.n_max
    }
    pub fn cutoff(&self) -> &CutoffKernel {
        &self.cutoff
    }
    pub fn correction(&self) -> Option<&MomentCorrection> {
        self.correction.as_ref()
    }

    pub fn index_set(&self) -> Vec<(u32, i64)> {
        index_set(self.n_max, self.cutoff.horizon, &self.scaling).expect("horizon validated")
    }

    fn level_time(&self, n: u32) -> f64 {
        2f64.powi(-((self.scaling.time_exponent() * n) as i32))
    }

    /// `h_{nm} = (m 2^{-s_0 n}, 0)`.
    pub fn shift(&self, n: u32, m: i64) -> SpacetimePoint {
        if self.ignore_shift {
            return SpacetimePoint::ORIGIN;
        }
        SpacetimePoint::new(m as f64 * self.level_time(n), &[0.0; 3][..self.d])
    }

    /// Radius `(1 + 2^{1/s_0}) 2^{-n}` of the support ball of `K^Q_{nm}`.
    pub fn support_radius(&self, n: u32) -> f64 {
        (1.0 + 2f64.powf(1.0 / self.scaling.time_exponent() as f64)) * 2f64.powi(-(n as i32))
    }

    fn r2(&self, z: &SpacetimePoint) -> f64 {
        z.x[..self.d].iter().map(|v| v * v).sum()
    }

    /// Singular part `K = G phi(rho)` (minus the optional moment correction).
    pub fn singular_part(&self, z: &SpacetimePoint) -> f64 {
        let r2 = self.r2(z);
        let mut k = self.singular_part_radial(z.t, r2);
        if let Some(c) = &self.correction {
            k -= c.eval(z.t, r2);
        }
        k
    }

    #[inline]
    fn singular_part_radial(&self, t: f64, r2: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let w = bump_phi(smooth_radius(t, r2));
        if w == 0.0 {
            0.0
        } else {
            heat_kernel(t, r2, self.d) * w
        }
    }

    /// Smooth remainder `R = G - K`.
    pub fn smooth_remainder(&self, z: &SpacetimePoint) -> f64 {
        heat_kernel_at(z, self.d) - self.singular_part(z)
    }

    /// `(K, R)` evaluated together.
    pub fn singular_smooth_split(&self, z: &SpacetimePoint) -> (f64, f64) {
        let k = self.singular_part(z);
        (k, heat_kernel_at(z, self.d) - k)
    }

    /// `K_n = K [phi(2^n rho) - phi(2^{n+1} rho)]` for `n >= 1`,
    /// `K_0 = K (1 - phi(2 rho))`.
    pub fn dyadic_piece(&self, n: u32, z: &SpacetimePoint) -> f64 {
        let r2 = self.r2(z);
        let mut v = self.dyadic_piece_radial(n, z.t, r2);
        if n == 0 {
            if let Some(c) = &self.correction {
                v -= c.eval(z.t, r2);
            }
        }
        v
    }

    #[inline]
    pub(crate) fn dyadic_piece_radial(&self, n: u32, t: f64, r2: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let rho = smooth_radius(t, r2);
        let scale = 2f64.powi(n as i32);
        let window = if n == 0 {
            1.0 - bump_phi(2.0 * rho)
        } else {
            bump_phi(scale * rho) - bump_phi(2.0 * scale * rho)
        };
        if window == 0.0 {
            return 0.0;
        }
        let w = bump_phi(rho);
        if w == 0.0 {
            return 0.0;
        }
        heat_kernel(t, r2, self.d) * w * window
    }

    /// `Q_{nm}(t) = Q(t) phi(2^{s_0 n} t - m)`.
    pub fn q_piece(&self, n: u32, m: i64, t: f64) -> f64 {
        let h = self.level_time(n);
        let w = bump_phi(t / h - m as f64);
        if w == 0.0 {
            0.0
        } else {
            self.cutoff.eval(t) * w
        }
    }

    /// `K^Q_{nm}(t, x) = int_0^{2T} Q_{nm}(u) K_n(t - u, x) du`.
    pub fn kq_piece(&self, n: u32, m: i64, z: &SpacetimePoint) -> Result<f64> {
        let r2 = self.r2(z);
        self.kq_piece_radial(n, m, z.t, r2).map_err(|e| match e {
            Error::Quadrature {
                estimate, error, ..
            } => Error::Quadrature {
                context: format!("K^Q_{{{n},{m}}} at t={}, x={:?}", z.t, &z.x[..self.d]),
                estimate,
                error,
            },
            other => other,
        })
    }

    pub(crate) fn kq_piece_radial(&self, n: u32, m: i64, t: f64, r2: f64) -> Result<f64> {
        let h = self.level_time(n);
        // Q_{nm} lives on [(m-1)h, (m+1)h] within [0, 2T]; K_n(s, .) lives on 0 < s <= h.
        let lo = ((m - 1) as f64 * h).max(0.0).max(t - h);
        let hi = ((m + 1) as f64 * h).min(2.0 * self.cutoff.horizon).min(t);
        if hi <= lo {
            return Ok(0.0);
        }
        let scale = 2f64.powi(((self.scaling.total_degree() - self.beta) * n) as i32)
            * h
            * self.cutoff.sup_norm().max(1e-300);
        let tol = Tolerance::new(1e-14 * scale, self.rel_tol);
        let correct_k0 = n == 0 && self.correction.is_some();
        let integrand = |u: f64| {
            let q = self.q_piece(n, m, u);
            if q == 0.0 {
                return 0.0;
            }
            let mut kn = self.dyadic_piece_radial(n, t - u, r2);
            if correct_k0 {
                kn -= self.correction.as_ref().unwrap().eval(t - u, r2);
            }
            q * kn
        };
        let res = integrate_adaptive(integrand, lo, hi, tol);
        if res.error > 10.0 * tol.abs.max(tol.rel * res.value.abs()) {
            return Err(Error::Quadrature {
                context: format!("K^Q_{{{n},{m}}}"),
                estimate: res.value,
                error: res.error,
            });
        }
        Ok(res.value)
    }

    /// Recentred piece `K^Q_{nm}(z + h_{nm})`.
    pub fn kq_shifted_piece(&self, n: u32, m: i64, z: &SpacetimePoint) -> Result<f64> {
        self.kq_piece(n, m, &z.add(&self.shift(n, m)))
    }

    /// `K^Q_{nm}` by a fixed composite Gauss-Legendre rule with panels graded
    /// towards `u = t`, where `K_n(t - u, .)` has its sharpest features. The
    /// integrand vanishes smoothly at every moving endpoint, so the result is
    /// smooth in `(t, x)` as finite differences require.
    pub fn kq_piece_fixed(&self, n: u32, m: i64, t: f64, r2: f64) -> f64 {
        let h = self.level_time(n);
        let lo = ((m - 1) as f64 * h).max(0.0).max(t - h);
        let hi = ((m + 1) as f64 * h).min(2.0 * self.cutoff.horizon).min(t);
        if hi <= lo {
            return 0.0;
        }
        let mut breaks: Vec<f64> = (0..=6).map(|i| lo + (hi - lo) * i as f64 / 6.0).collect();
        let mut g = h;
        while g > h * 1e-7 {
            let b = t - g;
            if b > lo && b < hi {
                breaks.push(b);
            }
            g *= 0.5;
        }
        breaks.sort_by(f64::total_cmp);
        let gl = fixed_rule();
        let correct_k0 = n == 0 && self.correction.is_some();
        let mut total = 0.0;
        for w in breaks.windows(2) {
            for (u, wu) in gl.on(w[0], w[1]) {
                let q = self.q_piece(n, m, u);
                if q == 0.0 {
                    continue;
                }
                let mut kn = self.dyadic_piece_radial(n, t - u, r2);
                if correct_k0 {
                    kn -= self.correction.as_ref().unwrap().eval(t - u, r2);
                }
                total += wu * q * kn;
            }
        }
        total
    }

    /// Direct evaluation of `int Q(u) (sum_{n <= n_top} K_n)(t - u, x) du`
    /// without splitting into pieces.
    pub fn kq_truncated_direct(&self, n_top: u32, z: &SpacetimePoint) -> Result<f64> {
        let r2 = self.r2(z);
        let hi = z.t.min(2.0 * self.cutoff.horizon);
        let lo = (z.t - 1.0).max(0.0);
        if hi <= lo {
            return Ok(0.0);
        }
        let top = 2f64.powi(n_top as i32 + 1);
        let f = |u: f64| {
            let s = z.t - u;
            if s <= 0.0 {
                return 0.0;
            }
            let rho = smooth_radius(s, r2);
            let window = 1.0 - bump_phi(top * rho);
            if window == 0.0 {
                return 0.0;
            }
            let mut k = self.singular_part_radial(s, r2) * window;
            if let Some(c) = &self.correction {
                k -= c.eval(s, r2);
            }
            self.cutoff.eval(u) * k
        };
        // split at the dyadic time scales below the evaluation time
        let mut breaks = vec![lo];
        let mut b = 2f64.powi(-2 * (n_top as i32 + 1));
        while b < hi - lo {
            if z.t - b > lo {
                breaks.push(z.t - b);
            }
            b *= 2.0;
        }
        breaks.push(hi);
        breaks.sort_by(f64::total_cmp);
        let tol = Tolerance::new(1e-16, 1e-12);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                total += integrate_adaptive(f, w[0], w[1], tol).value;
            }
        }
        Ok(total)
    }
}
