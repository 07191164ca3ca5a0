//! Numerical sweeps for the support, derivative and moment bounds of the
//! pieces `K^Q_{nm}`.

use super::moments::sphere_monomial;
use super::KernelDecomposition;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::rng::CounterStream;
use crate::scaling::{multiindex_degree, parabolic_norm, Multiindex, SpacetimePoint};
use rayon::prelude::*;
use std::collections::HashMap;
use std::io::Write;

/// One line of a bound table: raw value and its dyadically normalised ratio.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundRow {
    pub n: u32,
    pub m: i64,
    pub label: String,
    pub raw: f64,
    pub normalised: f64,
}

impl BoundRow {
    pub fn write_csv<W: Write>(rows: &[BoundRow], mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,m,k_or_ell,raw_value,normalised_ratio")?;
        for r in rows {
            writeln!(out, "{},{},{},{:e},{:e}", r.n, r.m, r.label, r.raw, r.normalised)?;
        }
        Ok(())
    }
}

/// Largest value against the median of the strictly positive values.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Uniformity {
    pub label: String,
    pub count: usize,
    pub max: f64,
    pub median: f64,
    pub pass: bool,
}

/// `max <= factor * median` over the strictly positive entries; identically
/// vanishing entries (odd moments, `m = -1`) carry no information about the
/// constant.
pub fn uniformity(label: &str, values: impl IntoIterator<Item = f64>, factor: f64) -> Uniformity {
    let mut v: Vec<f64> = values.into_iter().filter(|x| *x > 0.0).collect();
    v.sort_by(f64::total_cmp);
    let (max, median) = match v.len() {
        0 => (0.0, 0.0),
        n if n % 2 == 1 => (v[n - 1], v[n / 2]),
        n => (v[n - 1], 0.5 * (v[n / 2 - 1] + v[n / 2])),
    };
    Uniformity {
        label: label.to_string(),
        count: v.len(),
        max,
        median,
        pass: max <= factor * median,
    }
}

/// Per label, the level constants `C_n = max_m ratio` and their `uniformity`
/// across `n`: a bound uniform in `(n, m)` needs exactly these constants.
pub fn level_uniformity(rows: &[BoundRow], factor: f64) -> Vec<Uniformity> {
    let mut labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    labels
        .into_iter()
        .map(|l| {
            let mut levels: Vec<u32> = rows.iter().filter(|r| r.label == l).map(|r| r.n).collect();
            levels.sort_unstable();
            levels.dedup();
            let constants = levels.into_iter().map(|n| {
                rows.iter()
                    .filter(|r| r.label == l && r.n == n)
                    .map(|r| r.normalised)
                    .fold(0.0, f64::max)
            });
            uniformity(l, constants, factor)
        })
        .collect()
}

/// One constant for all labels together: `C_n = max` over `m` and every
/// label at level `n`, and its `uniformity` across `n`.
pub fn joint_level_uniformity(label: &str, rows: &[BoundRow], factor: f64) -> Uniformity {
    let mut levels: Vec<u32> = rows.iter().map(|r| r.n).collect();
    levels.sort_unstable();
    levels.dedup();
    let constants = levels
        .into_iter()
        .map(|n| rows.iter().filter(|r| r.n == n).map(|r| r.normalised).fold(0.0, f64::max));
    uniformity(label, constants, factor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    pub n: u32,
    pub m: i64,
    pub samples: usize,
    pub violations: usize,
    pub max_violation: f64,
    pub witness: Option<SpacetimePoint>,
}

impl SupportReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

fn piece_seed(n: u32, m: i64) -> u64 {
    ((n as u64) << 40) ^ (m + 1) as u64
}

fn random_direction(rng: &mut CounterStream, d: usize) -> [f64; 3] {
    loop {
        let mut v = [0.0; 3];
        for vi in v.iter_mut().take(d) {
            *vi = rng.uniform_in(-1.0, 1.0);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            return v.map(|a| a / norm);
        }
    }
}

/// Sample points with `R' < ||z - h_{nm}||_s <= 2R'`, `R' = radius_factor * R`,
/// and count those where the piece is non-zero.
pub fn verify_support(
    kd: &KernelDecomposition,
    n: u32,
    m: i64,
    samples: usize,
    radius_factor: f64,
    seed: u64,
) -> Result<SupportReport> {
    let d = kd.dim();
    let s = kd.scaling();
    let radius = radius_factor * kd.support_radius(n);
    // the true centre, regardless of any corrupted shift used for evaluation
    let centre = SpacetimePoint::new(m as f64 * 2f64.powi(-2 * n as i32), &[0.0; 3][..d]);
    let mut rng = CounterStream::new(seed, piece_seed(n, m));
    let mut report = SupportReport {
        n,
        m,
        samples,
        violations: 0,
        max_violation: 0.0,
        witness: None,
    };
    let outer = 2.0 * radius;
    let mut drawn = 0;
    while drawn < samples {
        let mut x = [0.0; 3];
        for xi in x.iter_mut().take(d) {
            *xi = rng.uniform_in(-outer, outer);
        }
        let dt = rng.uniform_in(-outer * outer, outer * outer);
        let rel = SpacetimePoint::new(dt, &x[..d]);
        if parabolic_norm(&rel, s) <= radius {
            continue;
        }
        drawn += 1;
        let z = centre.add(&rel);
        let v = kd.kq_shifted_piece(n, m, &rel)?;
        if v != 0.0 {
            report.violations += 1;
            if v.abs() > report.max_violation {
                report.max_violation = v.abs();
                report.witness = Some(z);
            }
        }
    }
    Ok(report)
}

/// Offsets (in units of the spatial step and time step) of the shared
/// finite-difference stencil.
fn stencil_offsets(d: usize) -> Vec<(i32, [i32; 3])> {
    let mut pts = vec![(0, [0; 3])];
    for i in 0..d {
        for sgn in [-1, 1] {
            let mut e = [0; 3];
            e[i] = sgn;
            pts.push((0, e));
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            for (a, b) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let mut e = [0; 3];
                e[i] = a;
                e[j] = b;
                pts.push((0, e));
            }
        }
    }
    pts.push((1, [0; 3]));
    pts.push((-1, [0; 3]));
    pts
}

/// Central-difference approximation of `D^k f` from stencil values.
fn finite_difference(k: &Multiindex, vals: &HashMap<(i32, [i32; 3]), f64>, dx: f64, dt: f64) -> f64 {
    let at = |tt: i32, e: [i32; 3]| vals[&(tt, e)];
    let c = at(0, [0; 3]);
    if k.time == 1 {
        return (at(1, [0; 3]) - at(-1, [0; 3])) / (2.0 * dt);
    }
    let nz: Vec<(usize, u32)> = k
        .spatial
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0)
        .map(|(i, &p)| (i, p))
        .collect();
    let unit = |i: usize, s: i32| {
        let mut e = [0; 3];
        e[i] = s;
        e
    };
    match nz.as_slice() {
        [] => c,
        [(i, 1)] => (at(0, unit(*i, 1)) - at(0, unit(*i, -1))) / (2.0 * dx),
        [(i, 2)] => (at(0, unit(*i, 1)) - 2.0 * c + at(0, unit(*i, -1))) / (dx * dx),
        [(i, 1), (j, 1)] => {
            let e = |a: i32, b: i32| {
                let mut v = [0; 3];
                v[*i] = a;
                v[*j] = b;
                v
            };
            (at(0, e(1, 1)) - at(0, e(1, -1)) - at(0, e(-1, 1)) + at(0, e(-1, -1))) / (4.0 * dx * dx)
        }
        _ => unreachable!("only multiindices of scaled degree <= 2 are supported"),
    }
}

fn label(k: &Multiindex) -> String {
    let sp: Vec<String> = k.spatial.iter().map(|v| v.to_string()).collect();
    format!("k=({};{})", k.time, sp.join(" "))
}

/// For every piece with `n` in range and every `k`, estimate
/// `sup |D^k K^Q_{nm}|` by sampling and normalise by `2^{-(|s| - s_0 - beta + |k|_s) n}`.
pub fn verify_derivative_bounds(
    kd: &KernelDecomposition,
    n_range: std::ops::RangeInclusive<u32>,
    ks: &[Multiindex],
    samples: usize,
    seed: u64,
) -> Result<Vec<BoundRow>> {
    let d = kd.dim();
    let s = kd.scaling();
    if ks.iter().any(|k| multiindex_degree(k, s) > 2 || k.time > 1) {
        return Err(Error::InvalidParameter(
            "derivative sweep supports |k|_s <= 2 only".into(),
        ));
    }
    let offsets = stencil_offsets(d);
    let pieces: Vec<(u32, i64)> = kd
        .index_set()
        .into_iter()
        .filter(|(n, _)| n_range.contains(n))
        .collect();
    let base = (s.total_degree() - s.time_exponent()) as i32 - kd.beta() as i32;
    let per_piece: Vec<Result<Vec<BoundRow>>> = pieces
        .par_iter()
        .map(|&(n, m)| {
            let scale = 2f64.powi(-(n as i32));
            let h = scale * scale;
            let dx = scale / 64.0;
            let dt = dx * dx;
            let horizon = 2.0 * kd.cutoff().horizon + h;
            if dt < 64.0 * f64::EPSILON * horizon {
                return Err(Error::StepUnderflow { step: dt, level: n });
            }
            let mut rng = CounterStream::new(seed, piece_seed(n, m));
            let mut sup = vec![0.0f64; ks.len()];
            for _ in 0..samples {
                let t = m as f64 * h + rng.uniform_in(-1.0, 2.0) * h;
                let r = scale * rng.uniform();
                let dir = random_direction(&mut rng, d);
                let mut vals = HashMap::with_capacity(offsets.len());
                for &(tt, e) in &offsets {
                    let mut x = [0.0; 3];
                    for i in 0..d {
                        x[i] = r * dir[i] + e[i] as f64 * dx;
                    }
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    vals.insert((tt, e), kd.kq_piece_fixed(n, m, t + tt as f64 * dt, r2));
                }
                for (slot, k) in sup.iter_mut().zip(ks) {
                    *slot = slot.max(finite_difference(k, &vals, dx, dt).abs());
                }
            }
            Ok(ks
                .iter()
                .zip(sup)
                .map(|(k, raw)| {
                    let exponent = base + multiindex_degree(k, s) as i32;
                    BoundRow {
                        n,
                        m,
                        label: label(k),
                        raw,
                        normalised: raw * 2f64.powi(-exponent * n as i32),
                    }
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_piece {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Spatial multiindices `l'` and time powers `l_0` with `2 l_0 + |l'| <= max_degree`.
fn moment_indices(d: usize, max_degree: u32) -> Vec<Multiindex> {
    Multiindex::up_to_degree(&crate::scaling::Scaling::parabolic(d), max_degree)
}

/// `| int z^l K^Q_{nm}(z) dz | * 2^{(beta + s_0) n}` for every piece and every
/// `l` of scaled degree at most `max_degree`.
///
/// The space-time integral is evaluated in the time-swapped form
/// `int Q_{nm}(u) int (s + u)^{l_0} x^{l'} K_n(s, x) ds dx du`, i.e. a tensor
/// Gauss-Legendre rule over the box `(u, s, |x|)`. Each factor is computed at
/// two resolutions and the piece is rejected if they differ by more than
/// `rel_tol`.
pub fn verify_moment_bounds(
    kd: &KernelDecomposition,
    n_range: std::ops::RangeInclusive<u32>,
    max_degree: u32,
    rel_tol: f64,
) -> Result<Vec<BoundRow>> {
    let d = kd.dim();
    let ells = moment_indices(d, max_degree);
    let max_time = ells.iter().map(|l| l.time).max().unwrap_or(0);
    let norm_exp = (kd.beta() + kd.scaling().time_exponent()) as i32;
    let mut rows = Vec::new();
    for n in n_range {
        let coarse = kn_moments(kd, n, &ells, max_time, 16);
        let fine = kn_moments(kd, n, &ells, max_time, 24);
        check_refinement(&coarse, &fine, rel_tol, 0.0, &format!("moments of K_{n}"))?;
        let pieces: Vec<i64> = kd
            .index_set()
            .into_iter()
            .filter(|p| p.0 == n)
            .map(|p| p.1)
            .collect();
        let per_piece: Vec<Result<Vec<BoundRow>>> = pieces
            .par_iter()
            .map(|&m| {
                let qc = q_moments(kd, n, m, max_time, 8);
                let qf = q_moments(kd, n, m, max_time, 16);
                // pieces where the cutoff has nearly switched off are judged against a generic piece
                let floor = kd.cutoff().sup_norm() * 2.0 * 4f64.powi(-(n as i32));
                check_refinement(&[qc.clone()], &[qf.clone()], rel_tol, floor, &format!("Q_{{{n},{m}}}"))?;
                Ok(ells
                    .iter()
                    .enumerate()
                    .map(|(i, ell)| {
                        let raw = combine(&qf, &fine, i, ell.time).abs();
                        BoundRow {
                            n,
                            m,
                            label: label(ell).replacen("k=", "l=", 1),
                            raw,
                            normalised: raw * 2f64.powi(norm_exp * n as i32),
                        }
                    })
                    .collect())
            })
            .collect();
        for r in per_piece {
            rows.extend(r?);
        }
    }
    Ok(rows)
}

/// Reject when the two resolutions differ by more than `rel_tol` times the
/// larger of the largest entry and `floor`.
fn check_refinement(coarse: &[Vec<f64>], fine: &[Vec<f64>], rel_tol: f64, floor: f64, context: &str) -> Result<()> {
    let top = fine.iter().flatten().fold(floor, |a, v| a.max(v.abs()));
    for (c, f) in coarse.iter().flatten().zip(fine.iter().flatten()) {
        let err = (c - f).abs();
        if err > rel_tol * top {
            return Err(Error::Quadrature {
                context: context.to_string(),
                estimate: *f,
                error: err,
            });
        }
    }
    Ok(())
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `sum_i binom(l_0, i) A_{l_0 - i} M_{i, l}` with `A_j = int u^j Q_{nm}`.
fn combine(q: &[f64], kn: &[Vec<f64>], ell_index: usize, l0: u32) -> f64 {
    (0..=l0)
        .map(|i| binomial(l0, i) * q[(l0 - i) as usize] * kn[i as usize][ell_index])
        .sum()
}

/// `A_j = int u^j Q_{nm}(u) du` for `j <= max_time`.
fn q_moments(kd: &KernelDecomposition, n: u32, m: i64, max_time: u32, panels: usize) -> Vec<f64> {
    let h = 4f64.powi(-(n as i32));
    let lo = ((m - 1) as f64 * h).max(0.0);
    let hi = ((m + 1) as f64 * h).min(2.0 * kd.cutoff().horizon);
    let mut out = vec![0.0; max_time as usize + 1];
    if hi <= lo {
        return out;
    }
    let gl = GaussLegendre::new(16);
    let breaks: Vec<f64> = (0..=panels).map(|i| lo + (hi - lo) * i as f64 / panels as f64).collect();
    for (u, w) in gl.composite_points(&breaks) {
        let q = kd.q_piece(n, m, u);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot += w * q * u.powi(j as i32);
        }
    }
    out
}

/// `M_{i, l} = int s^i x^{l'} K_n(s, x) ds dx` for `i <= max_time` and the
/// spatial part of every `l`, with panels graded towards the origin.
fn kn_moments(kd: &KernelDecomposition, n: u32, ells: &[Multiindex], max_time: u32, nodes: usize) -> Vec<Vec<f64>> {
    let d = kd.dim();
    let scale = 2f64.powi(-(n as i32));
    let h = scale * scale;
    let gl = GaussLegendre::new(nodes);
    let angular: Vec<f64> = ells.iter().map(|l| sphere_monomial(&l.spatial)).collect();
    let powers: Vec<i32> = ells.iter().map(|l| l.spatial.iter().sum::<u32>() as i32).collect();
    let mut s_breaks: Vec<f64> = (0..=40).map(|k| h * 2f64.powi(-k)).collect();
    s_breaks.push(0.0);
    s_breaks.sort_by(f64::total_cmp);
    let mut out = vec![vec![0.0; ells.len()]; max_time as usize + 1];
    for (sv, ws) in gl.composite_points(&s_breaks) {
        let root = sv.sqrt();
        let mut r_breaks: Vec<f64> = (0..=4).map(|i| scale * i as f64 / 4.0).collect();
        r_breaks.extend([1.0, 2.0, 4.0, 8.0].iter().map(|c| c * root).filter(|&b| b < scale));
        r_breaks.sort_by(f64::total_cmp);
        for (r, wr) in gl.composite_points(&r_breaks) {
            let k = kd.dyadic_piece(n, &SpacetimePoint::new(sv, &[r]));
            if k == 0.0 {
                continue;
            }
            let base = ws * wr * k * r.powi(d as i32 - 1);
            for (i, row) in out.iter_mut().enumerate() {
                let si = sv.powi(i as i32);
                for (e, slot) in row.iter_mut().enumerate() {
                    if angular[e] != 0.0 {
                        *slot += base * si * r.powi(powers[e]) * angular[e];
                    }
                }
            }
        }
    }
    out
}

/// Signed moments `int t^{l_0} x^{l'} K^Q_{nm}(t, x) dt dx` by tensor
/// quadrature of the evaluated piece itself. Slower than the time-swapped
/// form and intended for cross-checks on a few pieces.
pub fn piece_moments_direct(kd: &KernelDecomposition, n: u32, m: i64, ells: &[Multiindex]) -> Vec<f64> {
    let d = kd.dim();
    let scale = 2f64.powi(-(n as i32));
    let h = scale * scale;
    let t_lo = ((m - 1) as f64 * h).max(0.0);
    let t_hi = ((m + 2) as f64 * h).min(2.0 * kd.cutoff().horizon + h);
    let mut out = vec![0.0; ells.len()];
    if t_hi <= t_lo {
        return out;
    }
    let gl = GaussLegendre::new(16);
    let mut t_breaks: Vec<f64> = (0..=12).map(|i| t_lo + (t_hi - t_lo) * i as f64 / 12.0).collect();
    if m <= 1 {
        t_breaks.extend((1..24).map(|k| t_lo + h * 2f64.powi(-k)));
        t_breaks.sort_by(f64::total_cmp);
    }
    let mut r_breaks: Vec<f64> = (0..=4).map(|i| scale * i as f64 / 4.0).collect();
    r_breaks.extend((3..12).map(|k| scale * 2f64.powi(-k)));
    r_breaks.sort_by(f64::total_cmp);
    let r_nodes = gl.composite_points(&r_breaks);
    let angular: Vec<f64> = ells.iter().map(|l| sphere_monomial(&l.spatial)).collect();
    for (t, wt) in gl.composite_points(&t_breaks) {
        for &(r, wr) in &r_nodes {
            let v = kd.kq_piece_fixed(n, m, t, r * r);
            if v == 0.0 {
                continue;
            }
            let base = wt * wr * r.powi(d as i32 - 1) * v;
            for (i, l) in ells.iter().enumerate() {
                if angular[i] != 0.0 {
                    let deg: u32 = l.spatial.iter().sum();
                    out[i] += base * t.powi(l.time as i32) * r.powi(deg as i32) * angular[i];
                }
            }
        }
    }
    out
}

/// Signed moments of one piece in the time-swapped form.
pub fn piece_moments(kd: &KernelDecomposition, n: u32, m: i64, ells: &[Multiindex]) -> Vec<f64> {
    let max_time = ells.iter().map(|l| l.time).max().unwrap_or(0);
    let kn = kn_moments(kd, n, ells, max_time, 24);
    let q = q_moments(kd, n, m, max_time, 16);
    ells.iter()
        .enumerate()
        .map(|(i, l)| combine(&q, &kn, i, l.time))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniformity_ignores_zeros() {
        let u = uniformity("x", [0.0, 1.0, 2.0, 3.0, 0.0, 25.0], 10.0);
        assert_eq!((u.count, u.max, u.median), (4, 25.0, 2.5));
        assert!(u.pass);
        assert!(!uniformity("x", [1.0, 1.0, 11.0], 10.0).pass);
        assert!(uniformity("x", [0.0], 10.0).pass);
    }

    #[test]
    fn level_uniformity_takes_max_over_m() {
        let row = |n: u32, m: i64, v: f64| BoundRow {
            n,
            m,
            label: "k".into(),
            raw: v,
            normalised: v,
        };
        // tiny tail pieces do not drag the constant down
        let rows = vec![row(0, 0, 1.0), row(0, 5, 1e-6), row(1, 0, 3.0), row(1, 9, 1e-7), row(2, 1, 2.0)];
        let u = &level_uniformity(&rows, 10.0)[0];
        assert_eq!((u.count, u.max, u.median), (3, 3.0, 2.0));
        assert!(u.pass);
        assert!(!level_uniformity(&[row(0, 0, 1.0), row(1, 0, 1.0), row(2, 0, 30.0)], 10.0)[0].pass);
        let mut mixed = rows.clone();
        mixed.push(BoundRow {
            label: "l".into(),
            ..row(2, 0, 2.5)
        });
        let j = joint_level_uniformity("all", &mixed, 10.0);
        assert_eq!((j.count, j.max, j.median), (3, 3.0, 2.5));
    }
    use crate::kernel::CutoffKernel;
    use crate::scaling::Scaling;

    fn kd() -> KernelDecomposition {
        KernelDecomposition::new(3, 6, CutoffKernel::new(1.0, -1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn support_holds_and_shrunk_radius_is_detected() {
        let k = kd();
        for &(n, m) in &[(0u32, 0i64), (1, 2), (2, -1), (3, 40)] {
            let rep = verify_support(&k, n, m, 2000, 1.0, 1).unwrap();
            assert!(rep.pass(), "{rep:?}");
        }
        let rep = verify_support(&k, 1, 3, 10_000, 0.5, 1).unwrap();
        assert!(!rep.pass());
        assert!(rep.witness.is_some());
    }

    #[test]
    fn corrupted_shift_is_caught() {
        let k = kd().with_corrupted_shift(true);
        let rep = verify_support(&k, 2, 12, 40_000, 1.0, 3).unwrap();
        assert!(!rep.pass());
    }

    #[test]
    fn derivative_rows_and_zero_pieces() {
        let k = kd();
        let ks = Multiindex::up_to_degree(&Scaling::parabolic(3), 2);
        let rows = verify_derivative_bounds(&k, 0..=1, &ks, 6, 7).unwrap();
        let count = k.index_set().iter().filter(|p| p.0 <= 1).count();
        assert_eq!(rows.len(), count * ks.len());
        for r in rows.iter().filter(|r| r.m == -1) {
            assert_eq!(r.raw, 0.0);
        }
        let first = rows.iter().find(|r| r.n == 1 && r.m == 4 && r.label == "k=(0;0 0 0)").unwrap();
        assert!(first.raw > 0.0);
        let mut buf = Vec::new();
        BoundRow::write_csv(&rows[..2], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,m,k_or_ell,raw_value,normalised_ratio\n"));
    }

    #[test]
    fn finite_differences_match_analytic_derivatives() {
        let offsets = stencil_offsets(3);
        assert_eq!(offsets.len(), 21);
        let f = |t: f64, x: [f64; 3]| (t * 2.0).sin() * (x[0] * 3.0).cos() * (x[1] + 0.5 * x[2]).exp();
        let (t0, x0) = (0.3, [0.1, -0.2, 0.4]);
        let (dx, dt) = (1e-4, 1e-6);
        let mut vals = HashMap::new();
        for &(tt, e) in &offsets {
            let mut x = x0;
            for i in 0..3 {
                x[i] += e[i] as f64 * dx;
            }
            vals.insert((tt, e), f(t0 + tt as f64 * dt, x));
        }
        let base = f(t0, x0);
        let cases = [
            (Multiindex::new(1, &[0, 0, 0]), 2.0 / (t0 * 2.0).tan() * base),
            (Multiindex::new(0, &[1, 0, 0]), -3.0 * (x0[0] * 3.0).tan() * base),
            (Multiindex::new(0, &[0, 2, 0]), base),
            (Multiindex::new(0, &[0, 1, 1]), 0.5 * base),
            (Multiindex::new(0, &[2, 0, 0]), -9.0 * base),
        ];
        for (k, exact) in cases {
            let fd = finite_difference(&k, &vals, dx, dt);
            assert!((fd - exact).abs() < 1e-5 * exact.abs().max(1.0), "{k}: {fd} vs {exact}");
        }
    }

    #[test]
    fn moments_match_fubini_form() {
        let k = kd();
        let ells = moment_indices(3, 2);
        for &(n, m) in &[(0u32, 1i64), (1, 0), (2, 9), (1, -1)] {
            let direct = piece_moments_direct(&k, n, m, &ells);
            let fub = piece_moments(&k, n, m, &ells);
            let top = fub.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in direct.iter().zip(&fub) {
                assert!((a - b).abs() <= 1e-6 * top.max(1e-300), "({n},{m}): {a} vs {b}");
            }
        }
        let rows = verify_moment_bounds(&k, 0..=1, 2, 1e-8).unwrap();
        assert!(rows.iter().filter(|r| r.m == -1).all(|r| r.raw == 0.0));
    }
}
