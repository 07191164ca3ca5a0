//! Optional polynomial correction removing low-degree moments of `K`.

use super::{bump_phi, heat_kernel, smooth_radius, KernelDecomposition};
use crate::error::{Error, Result};
use crate::quadrature::{geometric_breaks, GaussLegendre};
use statrs::function::gamma::gamma;

/// `sum_j c_j psi_j` with `psi_j = b * {1, t, |x|^2}_j` and a bump `b`
/// centred at `(1/2, 0)` of scaled radius `1/4`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCorrection {
    coefficients: Vec<f64>,
}

const CENTRE: f64 = 0.5;

fn basis(t: f64, r2: f64, j: usize) -> f64 {
    let b = bump_phi(4.0 * smooth_radius(t - CENTRE, r2));
    match j {
        0 => b,
        1 => b * t,
        _ => b * r2,
    }
}

/// Integral of `x^a` over the unit sphere in `R^d`.
pub fn sphere_monomial(a: &[u32]) -> f64 {
    if a.iter().any(|&k| k % 2 == 1) {
        return 0.0;
    }
    let d = a.len() as f64;
    let total: u32 = a.iter().sum();
    let num: f64 = a.iter().map(|&k| gamma((k as f64 + 1.0) / 2.0)).product();
    2.0 * num / gamma((total as f64 + d) / 2.0)
}

/// `int t^{p} |x|^{2q} f(t, |x|^2) dt dx` over `0 < t <= 1`, `|x| <= 1`,
/// for a radial integrand living in the unit parabolic ball.
pub(crate) fn radial_weighted_integral<F: Fn(f64, f64) -> f64>(d: usize, f: F, p: i32, q: i32) -> f64 {
    let gl = GaussLegendre::new(24);
    let area = sphere_monomial(&vec![0; d]);
    let mut tb = vec![0.0];
    tb.extend(geometric_breaks(1e-12, 1.0, 2.0));
    tb.extend([CENTRE - 1.0 / 16.0, CENTRE, CENTRE + 1.0 / 16.0]);
    tb.sort_by(f64::total_cmp);
    tb.dedup();
    let mut total = 0.0;
    for w in tb.windows(2) {
        for (t, wt) in gl.on(w[0], w[1]) {
            let reach = (14.0 * t.sqrt()).min(1.0);
            let mut rb = vec![0.0, reach / 4.0, reach / 2.0, reach];
            rb.extend([0.125, 0.25].iter().filter(|&&b| b < reach));
            rb.sort_by(f64::total_cmp);
            let mut inner = 0.0;
            for rw in rb.windows(2) {
                for (r, wr) in gl.on(rw[0], rw[1]) {
                    let r2 = r * r;
                    inner += wr * r.powi(d as i32 - 1) * r2.powi(q) * f(t, r2);
                }
            }
            total += wt * t.powi(p) * inner;
        }
    }
    total * area
}

impl MomentCorrection {
    pub(crate) fn build(kd: &KernelDecomposition, max_degree: u32) -> Result<Self> {
        let size = match max_degree {
            0 | 1 => 1,
            2 => 3,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "moment correction supports degree <= 2, got {max_degree}"
                )))
            }
        };
        let d = kd.dim();
        let weights = [(0, 0), (1, 0), (0, 1)];
        let k = |t: f64, r2: f64| {
            if t <= 0.0 {
                0.0
            } else {
                heat_kernel(t, r2, d) * bump_phi(smooth_radius(t, r2))
            }
        };
        let rhs: Vec<f64> = weights[..size]
            .iter()
            .map(|&(p, q)| radial_weighted_integral(d, k, p, q))
            .collect();
        let mut mat = vec![vec![0.0; size]; size];
        for (i, &(p, q)) in weights[..size].iter().enumerate() {
            for (j, entry) in mat[i].iter_mut().enumerate() {
                *entry = bump_integral(d, j, p, q);
            }
        }
        let coefficients = solve(mat, rhs)?;
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, t: f64, r2: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(j, c)| c * basis(t, r2, j))
            .sum()
    }
}

fn bump_integral(d: usize, j: usize, p: i32, q: i32) -> f64 {
    let gl = GaussLegendre::new(32);
    let area = sphere_monomial(&vec![0; d]);
    let half = 1.0 / 16.0;
    gl.composite(CENTRE - half, CENTRE + half, 4, |t| {
        t.powi(p)
            * gl.composite(0.0, 0.25, 4, |r| {
                let r2 = r * r;
                r.powi(d as i32 - 1) * r2.powi(q) * basis(t, r2, j)
            })
    }) * area
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidParameter("singular moment system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}
