//! The correlator `Q^eps_0(z) = int K_eps(z1) K_eps(z1 - z) dz1` with
//! `K_eps = K * rho_eps`, and `I^Q_{00;nm}(eps) = int K^Q_{nm} (Q^eps_0)^2`.
//!
//! Per wavenumber `k`, `K^_eps(t, k)` is sampled on a uniform time grid of
//! step `eps^2 / 32`; it is smooth and compactly supported in time, so the
//! trapezoidal autocorrelation converges spectrally. The heat part of `K^`
//! is treated exactly and the smooth remainder `D = K^ - e^{-k^2 t}` is
//! tabulated for `k <= K_SPLIT` (beyond which it is below `1e-9`). A Hankel
//! transform then gives `Q^eps_0` on a graded `(t, |x|)` table.

use super::transform::{check_dim, interp_even, MollifierTransform, UniformProfile, Q_CUT};
use crate::error::{Error, Result};
use crate::kernel::{bump_phi, heat_kernel, smooth_radius, KernelDecomposition};
use crate::quadrature::GaussLegendre;
use crate::scaling::SpacetimePoint;
use rayon::prelude::*;
use std::f64::consts::PI;

const K_SPLIT: f64 = 100.0;
const D_CELLS: usize = 1024;
const RHO_CELLS: usize = 1024;
const STEPS_PER_EPS2: usize = 32;

/// `D(t_i, k) = K^(t_i, k) - e^{-k^2 t_i}` on `t_i = i / D_CELLS`.
fn remainder_table(ks: &[f64]) -> Vec<Vec<f64>> {
    let gl = GaussLegendre::new(16);
    // per time row: radial nodes and weights 4 pi r^2 w G phi
    let rows: Vec<Vec<(f64, f64)>> = (0..=D_CELLS)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / D_CELLS as f64;
            if i == 0 || i == D_CELLS {
                return Vec::new();
            }
            let r_max = (1.0 - t * t).powf(0.25).min(14.0 * t.sqrt());
            let breaks: Vec<f64> = (0..=8).map(|j| r_max * j as f64 / 8.0).collect();
            gl.composite_points(&breaks)
                .into_iter()
                .map(|(r, w)| {
                    let v = heat_kernel(t, r * r, 3) * bump_phi(smooth_radius(t, r * r));
                    (r, 4.0 * PI * r * r * w * v)
                })
                .collect()
        })
        .collect();
    ks.par_iter()
        .map(|&k| {
            rows.iter()
                .enumerate()
                .map(|(i, row)| {
                    let t = i as f64 / D_CELLS as f64;
                    if i == 0 {
                        return 0.0;
                    }
                    let heat = (-k * k * t).exp();
                    let khat: f64 = row.iter().map(|&(r, g)| g * super::c2::sinc(k * r)).sum();
                    khat - heat
                })
                .collect()
        })
        .collect()
}

/// `D` extended by `-e^{-k^2 t}` for `t >= 1` (where `K` vanishes).
fn remainder_at(table: &[f64], k: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        -(-k * k * t).exp()
    } else {
        interp_even(table, 1.0 / D_CELLS as f64, t)
    }
}

/// `K^_eps(t_j, k)` on `t_j = -eps^2 + j dt`, `j = 0..=m`.
fn smoothed_transform(
    tr: &MollifierTransform,
    profile: &UniformProfile,
    remainder: Option<&[f64]>,
    eps: f64,
    k: f64,
    m: usize,
) -> Vec<f64> {
    let e2 = eps * eps;
    let q = eps * k;
    let q2 = q * q;
    let dt = e2 / STEPS_PER_EPS2 as f64;
    let rho = profile.at(q);
    let h_rho = 1.0 / profile.cells() as f64;
    let rho_at = |sigma: f64| interp_even(&rho, h_rho, sigma);
    let b = tr.laplace_shifted(q2, &tr.spatial(q));
    let gl = GaussLegendre::new(8);
    let gl_d = GaussLegendre::new(24);
    (0..=m)
        .map(|j| {
            let t = -e2 + j as f64 * dt;
            let tp = t / e2;
            // heat part: int_{-1}^{tp} rho^(s, q) e^{-q^2 (tp - s)} ds
            let heat = if tp >= 1.0 {
                b * (-k * k * (t - e2)).exp()
            } else if tp <= -1.0 {
                0.0
            } else {
                // panels graded towards s = tp, where the exponential is sharpest
                let span = tp + 1.0;
                let floor = (1e-2 / q2.max(1e-300)).min(0.05 * span);
                let mut breaks = vec![-1.0];
                let mut g = 0.5 * span;
                while g > floor {
                    breaks.push(tp - g);
                    g *= 0.5;
                }
                breaks.push(tp);
                let mut total = 0.0;
                for w in breaks.windows(2) {
                    total += gl.integrate(w[0], w[1], |s| rho_at(s) * (-q2 * (tp - s)).exp());
                }
                total
            };
            let rem = match remainder {
                None => 0.0,
                Some(table) => {
                    let lo = -1.0f64;
                    let hi = (t / e2).min(1.0);
                    if hi <= lo {
                        0.0
                    } else {
                        gl_d.integrate(lo, hi, |s| rho_at(s) * remainder_at(table, k, t - e2 * s))
                    }
                }
            };
            heat + rem
        })
        .collect()
}

/// Lags (in grid steps) at which `Q^_0` is tabulated.
fn lag_grid(m: usize) -> Vec<usize> {
    let dense = 2 * STEPS_PER_EPS2;
    let mut lags: Vec<usize> = (0..=dense.min(m)).collect();
    let mut l = dense;
    while l < m {
        l = ((l as f64 * 1.04).ceil() as usize).min(m);
        lags.push(l);
    }
    lags
}

fn radius_grid(eps: f64, r_max: f64) -> Vec<f64> {
    let step = eps / 16.0;
    let mut out: Vec<f64> = (0..=64).map(|i| i as f64 * step).collect();
    let mut r = 64.0 * step;
    while r < r_max {
        r = (r * 1.04).min(r_max);
        out.push(r);
    }
    out
}

/// Lagrange weights of the four nodes around `x` in the ascending grid `g`,
/// mirrored through 0 (the table is even in both variables).
fn stencil(g: &[f64], x: f64) -> Option<([usize; 4], [f64; 4])> {
    let x = x.abs();
    let last = g.len() - 1;
    if x > g[last] {
        return None;
    }
    let i = match g.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => i,
        Err(i) => i - 1,
    }
    .min(last - 1);
    let lo = if i == 0 { 0 } else { (i - 1).min(last.saturating_sub(3)) };
    // node positions with mirroring at the left edge
    let (idx, pos): ([usize; 4], [f64; 4]) = if i == 0 {
        ([1, 0, 1, 2], [-g[1], g[0], g[1], g[2]])
    } else {
        let s = [lo, lo + 1, lo + 2, lo + 3];
        (s, [g[s[0]], g[s[1]], g[s[2]], g[s[3]]])
    };
    let mut w = [1.0; 4];
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                w[a] *= (x - pos[b]) / (pos[a] - pos[b]);
            }
        }
    }
    Some((idx, w))
}

/// `Q^eps_0` tabulated on a graded `(t, |x|)` grid (`d = 3`).
#[derive(Debug, Clone)]
pub struct Q0Table {
    eps: f64,
    taus: Vec<f64>,
    radii: Vec<f64>,
    /// Row-major in time.
    values: Vec<f64>,
}

impl Q0Table {
    pub fn new(tr: &MollifierTransform, eps: f64) -> Result<Self> {
        check_dim(3)?;
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("Q0 table needs eps in (0, 1], got {eps}")));
        }
        let e2 = eps * eps;
        let dt = e2 / STEPS_PER_EPS2 as f64;
        let m = ((1.0 + 2.0 * e2) / dt).ceil() as usize;
        let lags = lag_grid(m);
        let r_max = 2.0 + 2.0 * eps;
        let radii = radius_grid(eps, r_max);
        // wavenumber lattice: two oscillations of sinc(k r_max) per panel
        let k_max = Q_CUT / eps;
        let panels = (k_max * r_max / (4.0 * PI)).ceil() as usize;
        let gl = GaussLegendre::new(16);
        let mut breaks: Vec<f64> = (0..=panels).map(|i| k_max * i as f64 / panels as f64).collect();
        if !breaks.iter().any(|&b| (b - K_SPLIT).abs() < 1e-12) && K_SPLIT < k_max {
            breaks.push(K_SPLIT);
            breaks.sort_by(f64::total_cmp);
        }
        let ks = gl.composite_points(&breaks);
        let low: Vec<f64> = ks.iter().map(|p| p.0).filter(|&k| k <= K_SPLIT).collect();
        let table = remainder_table(&low);
        let profile = tr.uniform_profile(RHO_CELLS);
        // Q^_0(lag, k) k^2 w_k per wavenumber
        let spectra: Vec<Vec<f64>> = ks
            .par_iter()
            .enumerate()
            .map(|(i, &(k, wk))| {
                let rem = if k <= K_SPLIT { Some(table[i].as_slice()) } else { None };
                let f = smoothed_transform(tr, &profile, rem, eps, k, m);
                let peak = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let last = f.iter().rposition(|v| v.abs() > 1e-17 * peak).unwrap_or(0);
                lags.iter()
                    .map(|&l| {
                        if l > last {
                            return 0.0;
                        }
                        let s: f64 = f[l..=last].iter().zip(&f[..=last - l]).map(|(a, b)| a * b).sum();
                        wk * k * k * dt * s
                    })
                    .collect()
            })
            .collect();
        let taus: Vec<f64> = lags.iter().map(|&l| l as f64 * dt).collect();
        let values: Vec<f64> = (0..lags.len())
            .into_par_iter()
            .flat_map_iter(|li| {
                let spectra = &spectra;
                let ks = &ks;
                radii.iter().map(move |&r| {
                    ks.iter()
                        .zip(spectra)
                        .map(|(&(k, _), s)| s[li] * super::c2::sinc(k * r))
                        .sum::<f64>()
                        / (2.0 * PI * PI)
                })
            })
            .collect();
        Ok(Self {
            eps,
            taus,
            radii,
            values,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Time and radius beyond which `Q^eps_0` vanishes.
    pub fn support(&self) -> (f64, f64) {
        (1.0 + 2.0 * self.eps * self.eps, 2.0 + 2.0 * self.eps)
    }

    /// `Q^eps_0(t, x)` with `|x| = r`; even in `t`.
    pub fn eval(&self, t: f64, r: f64) -> f64 {
        let (ts, rs) = self.support();
        if t.abs() >= ts || r >= rs {
            return 0.0;
        }
        let (Some((ti, tw)), Some((ri, rw))) = (stencil(&self.taus, t), stencil(&self.radii, r)) else {
            return 0.0;
        };
        let nr = self.radii.len();
        let mut total = 0.0;
        for a in 0..4 {
            let row = &self.values[ti[a] * nr..(ti[a] + 1) * nr];
            let mut s = 0.0;
            for b in 0..4 {
                s += rw[b] * row[ri[b]];
            }
            total += tw[a] * s;
        }
        total
    }

    pub fn at(&self, z: &SpacetimePoint) -> f64 {
        let r = (z.x[0] * z.x[0] + z.x[1] * z.x[1] + z.x[2] * z.x[2]).sqrt();
        self.eval(z.t, r)
    }

    /// `Q^eps_0(0) = ||K_eps||_{L^2}^2`.
    pub fn at_origin(&self) -> f64 {
        self.values[0]
    }
}

fn check_kernel(kd: &KernelDecomposition) -> Result<()> {
    check_dim(kd.dim())?;
    if kd.scaling().time_exponent() != 2 {
        return Err(Error::InvalidParameter("I^Q_00 needs parabolic scaling".into()));
    }
    Ok(())
}

/// `F_n(u) = int K_n(s, x) Q0(s + u, x)^2 ds dx` on Gauss nodes of the time
/// panels `[j h, (j + 1) h]`.
struct LevelProfile {
    first_panel: i64,
    /// `(u, w, F_n(u))` per panel.
    panels: Vec<Vec<(f64, f64, f64)>>,
}

fn level_profile(kd: &KernelDecomposition, q0: &Q0Table, n: u32, m_max: i64) -> LevelProfile {
    let h = 4f64.powi(-(n as i32));
    let radius = 2f64.powi(-(n as i32));
    let gl = GaussLegendre::new(8);
    // (s, r) nodes over the support of K_n, graded at the Q0 scale eps
    let eps = q0.eps();
    let graded = |end: f64, scale: f64| -> Vec<f64> {
        let mut b = vec![0.0];
        let mut x = scale.min(end / 4.0);
        while x < end {
            b.push(x);
            x *= 2.0;
        }
        b.push(end);
        let mut out = b.clone();
        out.extend(b.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        out.sort_by(f64::total_cmp);
        out
    };
    let s_nodes = gl.composite_points(&graded(h, (eps * eps / 4.0).min(h / 4.0)));
    let r_nodes = gl.composite_points(&graded(radius, (eps / 4.0).min(radius / 4.0)));
    let mut weights = Vec::new();
    for &(s, ws) in &s_nodes {
        for &(r, wr) in &r_nodes {
            let z = SpacetimePoint::new(s, &[r, 0.0, 0.0]);
            let kn = kd.dyadic_piece(n, &z);
            if kn != 0.0 {
                weights.push((s, r, ws * wr * 4.0 * PI * r * r * kn));
            }
        }
    }
    let (ts, _) = q0.support();
    let first_panel = -2i64;
    let panels = (first_panel..=m_max)
        .into_par_iter()
        .map(|j| {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            // F_n varies on the scale h/16 near u = 0 and on the scale u beyond
            let cuts: Vec<f64> = match j {
                0 => [0.0, 1.0 / 32.0, 1.0 / 16.0, 0.125, 0.25, 0.5, 1.0].to_vec(),
                1..=3 => [0.0, 0.25, 0.5, 0.75, 1.0].to_vec(),
                _ => [0.0, 1.0].to_vec(),
            };
            let breaks: Vec<f64> = cuts.iter().map(|c| a + (b - a) * c).collect();
            gl.composite_points(&breaks)
                .into_iter()
                .map(|(u, wu)| {
                    if u > ts || u < 0.0 {
                        return (u, wu, 0.0);
                    }
                    let f: f64 = weights
                        .iter()
                        .map(|&(s, r, w)| {
                            let q = q0.eval(s + u, r);
                            w * q * q
                        })
                        .sum();
                    (u, wu, f)
                })
                .collect()
        })
        .collect();
    LevelProfile {
        first_panel,
        panels,
    }
}

fn iq00_from(kd: &KernelDecomposition, prof: &LevelProfile, n: u32, m: i64) -> f64 {
    let mut total = 0.0;
    for j in [m - 1, m] {
        let idx = j - prof.first_panel;
        if idx < 0 || idx as usize >= prof.panels.len() {
            continue;
        }
        for &(u, w, f) in &prof.panels[idx as usize] {
            if f != 0.0 {
                total += w * kd.q_piece(n, m, u) * f;
            }
        }
    }
    total
}

/// `I^Q_{00;nm}(eps)` through `int Q_{nm}(u) F_n(u) du`.
pub fn iq00(kd: &KernelDecomposition, q0: &Q0Table, n: u32, m: i64) -> Result<f64> {
    check_kernel(kd)?;
    let prof = level_profile(kd, q0, n, m.max(0));
    Ok(iq00_from(kd, &prof, n, m))
}

/// `I^Q_{00;nm}` for every `(n, m)` in the index set up to `n_max`.
pub fn iq00_table(kd: &KernelDecomposition, q0: &Q0Table, n_max: u32) -> Result<Vec<(u32, i64, f64)>> {
    check_kernel(kd)?;
    let index = kd.index_set();
    let mut out = Vec::with_capacity(index.len());
    for n in 0..=n_max.min(kd.n_max()) {
        let ms: Vec<i64> = index.iter().filter(|p| p.0 == n).map(|p| p.1).collect();
        let m_max = ms.iter().copied().max().unwrap_or(0);
        let prof = level_profile(kd, q0, n, m_max);
        out.extend(ms.into_iter().map(|m| (n, m, iq00_from(kd, &prof, n, m))));
    }
    Ok(out)
}

/// `I^Q_{00;nm}` by quadrature of `K^Q_{nm} Q0^2` over the support ball of
/// `K^Q_{nm}` (slow; used as a cross-check).
pub fn iq00_direct(kd: &KernelDecomposition, q0: &Q0Table, n: u32, m: i64) -> Result<f64> {
    check_kernel(kd)?;
    let h = 4f64.powi(-(n as i32));
    let radius = 2f64.powi(-(n as i32));
    let (t_lo, t_hi) = (((m - 1) as f64 * h).max(0.0), (m + 2) as f64 * h);
    if t_hi <= t_lo {
        return Ok(0.0);
    }
    let gl = GaussLegendre::new(16);
    let t_breaks: Vec<f64> = (0..=12).map(|i| t_lo + (t_hi - t_lo) * i as f64 / 12.0).collect();
    let r_breaks: Vec<f64> = (0..=8).map(|i| radius * i as f64 / 8.0).collect();
    let t_nodes = gl.composite_points(&t_breaks);
    let r_nodes = gl.composite_points(&r_breaks);
    Ok(t_nodes
        .par_iter()
        .map(|&(t, wt)| {
            r_nodes
                .iter()
                .map(|&(r, wr)| {
                    let kq = kd.kq_piece_fixed(n, m, t, r * r);
                    if kq == 0.0 {
                        return 0.0;
                    }
                    let q = q0.eval(t, r);
                    wr * 4.0 * PI * r * r * kq * q * q
                })
                .sum::<f64>()
                * wt
        })
        .sum())
}
