//! Lattice space-time white noise, the parabolic mollifier `rho_eps` and the
//! mollified noise `xi^eps`.
//!
//! White-noise cell values are generated from `(seed, time cell, spatial
//! index)` by a counter-based generator, so two mollifications of the same
//! seed share one underlying realisation regardless of `eps` or traversal
//! order.

use crate::error::{Error, Result};
use crate::fft::Grid;
use crate::kernel::{bump_phi, smooth_radius, sphere_monomial};
use crate::quadrature::GaussLegendre;
use crate::rng::gaussian_at;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpaceTimeLattice {
    pub d: usize,
    pub n: usize,
    pub side: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl SpaceTimeLattice {
    pub fn new(d: usize, n: usize, side: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!("dimension must be 1..=3, got {d}")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("N must be a power of two >= 2, got {n}")));
        }
        if !(side > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "side and dt must be positive, got L = {side}, dt = {dt}"
            )));
        }
        Ok(Self { d, n, side, dt, n_steps })
    }

    pub fn dx(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dt * self.dx().powi(self.d as i32)
    }

    /// Number of spatial sites `N^d`.
    pub fn sites(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.d, self.n)
    }

    /// Reject `eps` unless `eps >= 2 max(dt^{1/2}, L/N)` and `eps <= L/2`.
    pub fn check_resolves(&self, eps: f64) -> Result<()> {
        if !(eps > 0.0) || eps > 0.5 * self.side {
            return Err(Error::InvalidParameter(format!(
                "eps must lie in (0, L/2], got {eps}"
            )));
        }
        if eps < 2.0 * self.dt.sqrt().max(self.dx()) {
            let required_n = ((2.0 * self.side / eps).ceil() as usize).next_power_of_two();
            return Err(Error::UnderResolved {
                eps,
                required_n,
                required_dt: 0.25 * eps * eps,
            });
        }
        Ok(())
    }
}

/// Counter-based white noise on the cells of a lattice, defined for every
/// signed time cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteNoise {
    pub seed: u64,
    pub lattice: SpaceTimeLattice,
}

impl WhiteNoise {
    pub fn new(seed: u64, lattice: SpaceTimeLattice) -> Self {
        Self { seed, lattice }
    }

    /// Cell values of time cell `[i dt, (i + 1) dt)`, variance `1/(dt dx^d)`.
    pub fn slice(&self, i: i64) -> Vec<f64> {
        let scale = 1.0 / self.lattice.cell_volume().sqrt();
        let stream = i as u64;
        (0..self.lattice.sites() as u64)
            .map(|j| scale * gaussian_at(self.seed, stream, j))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub seed: u64,
    pub lattice: SpaceTimeLattice,
    /// Time-major cell values, `n_steps` slices of `N^d` sites.
    pub values: Vec<f64>,
}

impl NoiseRealization {
    pub fn slice(&self, i: usize) -> &[f64] {
        let len = self.lattice.sites();
        &self.values[i * len..(i + 1) * len]
    }
}

pub fn sample_white_noise(seed: u64, lattice: &SpaceTimeLattice) -> NoiseRealization {
    let white = WhiteNoise::new(seed, *lattice);
    let slices: Vec<Vec<f64>> = (0..lattice.n_steps as i64)
        .into_par_iter()
        .map(|i| white.slice(i))
        .collect();
    NoiseRealization {
        seed,
        lattice: *lattice,
        values: slices.concat(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MollifierProfile {
    /// `phi((t^2 + |x|^4)^{1/4})`.
    Radial,
    /// `phi(|t|) phi(|x|)`.
    Tensor,
}

impl std::str::FromStr for MollifierProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radial" => Ok(Self::Radial),
            "tensor" => Ok(Self::Tensor),
            other => Err(Error::Config(format!(
                "unknown mollifier profile `{other}` (expected radial or tensor)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    pub profile: MollifierProfile,
    pub eps: f64,
    d: usize,
    mass: f64,
}

fn unit_profile(profile: MollifierProfile, t: f64, r2: f64) -> f64 {
    match profile {
        MollifierProfile::Radial => bump_phi(smooth_radius(t, r2)),
        MollifierProfile::Tensor => bump_phi(t.abs()) * bump_phi(r2.sqrt()),
    }
}

/// `int t^0 |x|^0 f` over the unit parabolic box for a radial profile.
fn profile_integral<F: Fn(f64, f64) -> f64>(d: usize, f: F) -> f64 {
    let gl = GaussLegendre::new(24);
    let area = sphere_monomial(&vec![0; d]);
    2.0 * gl.composite(0.0, 1.0, 16, |t| {
        gl.composite(0.0, 1.0, 16, |r| r.powi(d as i32 - 1) * f(t, r * r))
    }) * area
}

impl MollifierSpec {
    pub fn new(profile: MollifierProfile, eps: f64, d: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!("dimension must be 1..=3, got {d}")));
        }
        let mass = profile_integral(d, |t, r2| unit_profile(profile, t, r2));
        Ok(Self { profile, eps, d, mass })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn profile(&self) -> MollifierProfile {
        self.profile
    }

    /// Unit-mass profile `rho(t, x)`.
    pub fn rho(&self, t: f64, r2: f64) -> f64 {
        unit_profile(self.profile, t, r2) / self.mass
    }

    /// `rho_eps(t, x) = eps^{-|s|} rho(eps^{-2} t, eps^{-1} x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.eval_radial(t, r2)
    }

    pub fn eval_radial(&self, t: f64, r2: f64) -> f64 {
        let e2 = self.eps * self.eps;
        self.eps.powi(-(2 + self.d as i32)) * self.rho(t / e2, r2 / e2)
    }

    /// `||rho_eps||_{L^2}^2 = eps^{-|s|} ||rho||_{L^2}^2`.
    pub fn l2_norm_squared(&self) -> f64 {
        let unit = profile_integral(self.d, |t, r2| self.rho(t, r2).powi(2));
        self.eps.powi(-(2 + self.d as i32)) * unit
    }
}

pub fn mollifier_eval(spec: &MollifierSpec, t: f64, x: &[f64]) -> f64 {
    spec.eval(t, x)
}

/// Discrete mollifier weights per time lag, normalised to unit total mass,
/// together with their spatial Fourier multipliers.
#[derive(Debug, Clone)]
pub struct MollifierWeights {
    /// `(lag, spatial weights, Fourier multiplier)`; lag `l` pairs output
    /// cell `k` with white-noise cell `k - l`.
    lags: Vec<(i64, Vec<f64>, Vec<f64>)>,
    cell_volume: f64,
}

impl MollifierWeights {
    pub fn new(spec: &MollifierSpec, lattice: &SpaceTimeLattice) -> Result<Self> {
        lattice.check_resolves(spec.eps)?;
        if spec.dim() != lattice.d {
            return Err(Error::InvalidParameter("mollifier and lattice dimensions differ".into()));
        }
        let grid = lattice.grid();
        let dx = lattice.dx();
        let reach = (spec.eps * spec.eps / lattice.dt).floor() as i64;
        let r2: Vec<f64> = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                c[..lattice.d]
                    .iter()
                    .map(|&j| {
                        let y = grid.signed_offset(j) as f64 * dx;
                        y * y
                    })
                    .sum()
            })
            .collect();
        let mut lags = Vec::new();
        let mut total = 0.0;
        for l in -reach..=reach {
            let t = l as f64 * lattice.dt;
            let w: Vec<f64> = r2
                .iter()
                .map(|&r| spec.eval_radial(t, r) * lattice.cell_volume())
                .collect();
            let s: f64 = w.iter().sum();
            if s > 0.0 {
                total += s;
                lags.push((l, w));
            }
        }
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("mollifier has no mass on the lattice".into()));
        }
        let lags = lags
            .into_iter()
            .map(|(l, mut w)| {
                w.iter_mut().for_each(|v| *v /= total);
                let mult = grid.forward_real(&w).iter().map(|c| c.re).collect();
                (l, w, mult)
            })
            .collect();
        Ok(Self {
            lags,
            cell_volume: lattice.cell_volume(),
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.lags.iter().map(|(_, w, _)| w.iter().sum::<f64>()).sum()
    }

    pub fn reach(&self) -> i64 {
        self.lags.iter().map(|(l, _, _)| l.abs()).max().unwrap_or(0)
    }

    /// Exact variance of the discrete mollified noise at a node.
    pub fn discrete_variance(&self) -> f64 {
        self.lags
            .iter()
            .flat_map(|(_, w, _)| w.iter())
            .map(|v| v * v)
            .sum::<f64>()
            / self.cell_volume
    }

    /// `Cov(xi^a(z), xi^b(z))` for two weight sets on the same lattice.
    pub fn cross_covariance(&self, other: &MollifierWeights) -> f64 {
        let mut total = 0.0;
        for (l, w, _) in &self.lags {
            if let Some((_, v, _)) = other.lags.iter().find(|(k, _, _)| k == l) {
                total += w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        total / self.cell_volume
    }

    /// `sum_l |W_l(k)|^2` per mode: the spatial spectrum of the stationary
    /// mollified noise times the cell volume.
    pub fn spectral_power(&self) -> Vec<f64> {
        let len = self.lags.first().map(|(_, w, _)| w.len()).unwrap_or(0);
        let mut out = vec![0.0; len];
        for (_, _, m) in &self.lags {
            for (o, v) in out.iter_mut().zip(m) {
                *o += v * v;
            }
        }
        out
    }

    pub fn lags(&self) -> impl Iterator<Item = (i64, &[f64])> {
        self.lags.iter().map(|(l, _, m)| (*l, m.as_slice()))
    }
}

/// Sequential producer of `xi^eps` slices in Fourier space, at the centres of
/// the time cells `0, 1, 2, ...`.
pub struct MollifiedNoise {
    white: WhiteNoise,
    weights: MollifierWeights,
    grid: Grid,
    ring: VecDeque<(i64, Vec<Complex64>)>,
    next: i64,
}

impl MollifiedNoise {
    pub fn new(seed: u64, lattice: &SpaceTimeLattice, spec: &MollifierSpec) -> Result<Self> {
        let weights = MollifierWeights::new(spec, lattice)?;
        Ok(Self {
            white: WhiteNoise::new(seed, *lattice),
            weights,
            grid: lattice.grid(),
            ring: VecDeque::new(),
            next: 0,
        })
    }

    pub fn weights(&self) -> &MollifierWeights {
        &self.weights
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn white_hat(&self, i: i64) -> Vec<Complex64> {
        self.grid.forward_real(&self.white.slice(i))
    }

    /// Fourier coefficients (unnormalised forward transform) of the next slice.
    pub fn next_fourier(&mut self) -> Vec<Complex64> {
        let k = self.next;
        let reach = self.weights.reach();
        while self.ring.front().is_some_and(|(i, _)| *i < k - reach) {
            self.ring.pop_front();
        }
        let mut have = self.ring.back().map(|(i, _)| i + 1).unwrap_or(k - reach);
        let wanted: Vec<i64> = (have..=k + reach).collect();
        let fresh: Vec<(i64, Vec<Complex64>)> = wanted
            .par_iter()
            .map(|&i| (i, self.white_hat(i)))
            .collect();
        for item in fresh {
            self.ring.push_back(item);
            have += 1;
        }
        debug_assert_eq!(have, k + reach + 1);
        let first = self.ring.front().map(|(i, _)| *i).unwrap_or(k);
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (l, mult) in self.weights.lags() {
            let (_, hat) = &self.ring[(k - l - first) as usize];
            for ((o, h), m) in out.iter_mut().zip(hat).zip(mult) {
                *o += h * m;
            }
        }
        self.next += 1;
        out
    }

    /// Real-space values of the next slice.
    pub fn next_real(&mut self) -> Vec<f64> {
        let hat = self.next_fourier();
        self.grid.inverse_real(&hat)
    }
}

/// Mollify a stored realisation; cells outside the stored window are
/// regenerated from the same seed, which gives the same values.
pub fn mollify_noise(xi: &NoiseRealization, spec: &MollifierSpec) -> Result<Vec<f64>> {
    let mut stream = MollifiedNoise::new(xi.seed, &xi.lattice, spec)?;
    let mut out = Vec::with_capacity(xi.values.len());
    for _ in 0..xi.lattice.n_steps {
        out.extend(stream.next_real());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(d: usize, n: usize, dt: f64, steps: usize) -> SpaceTimeLattice {
        SpaceTimeLattice::new(d, n, 1.0, dt, steps).unwrap()
    }

    #[test]
    fn lattice_validation() {
        assert!(SpaceTimeLattice::new(3, 24, 1.0, 0.01, 4).is_err());
        assert!(SpaceTimeLattice::new(4, 8, 1.0, 0.01, 4).is_err());
        assert!(SpaceTimeLattice::new(2, 8, 1.0, 0.0, 4).is_err());
        let l = lattice(3, 32, 1.0 / 1024.0, 4);
        assert!(l.check_resolves(1.0 / 16.0).is_ok());
        match l.check_resolves(1.0 / 32.0) {
            Err(Error::UnderResolved { required_n, .. }) => assert_eq!(required_n, 64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn white_noise_moments() {
        let l = lattice(3, 64, 1.0 / 256.0, 256);
        let white = WhiteNoise::new(11, l);
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut count = 0usize;
        for i in 0..256 {
            for v in white.slice(i) {
                sum += v;
                sq += v * v;
                count += 1;
            }
        }
        let var_target = 1.0 / l.cell_volume();
        let mean = sum / count as f64;
        let se = (var_target / count as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
        let var = sq / count as f64 - mean * mean;
        assert!((var / var_target - 1.0).abs() < 0.02);
    }

    #[test]
    fn sampling_is_deterministic() {
        let l = lattice(2, 8, 0.01, 5);
        let a = sample_white_noise(3, &l);
        let b = sample_white_noise(3, &l);
        assert_eq!(a, b);
        assert_eq!(a.slice(2), WhiteNoise::new(3, l).slice(2).as_slice());
        assert_ne!(a.values, sample_white_noise(4, &l).values);
    }

    #[test]
    fn mollifier_support_mass_and_scaling() {
        for profile in [MollifierProfile::Radial, MollifierProfile::Tensor] {
            let spec = MollifierSpec::new(profile, 0.25, 3).unwrap();
            assert_eq!(spec.eval(0.07, &[0.0, 0.0, 0.0]), 0.0);
            assert_eq!(spec.eval(0.0, &[0.26, 0.0, 0.0]), 0.0);
            let origin = spec.eval(0.0, &[0.0; 3]);
            assert!((origin - 0.25f64.powi(-5) * spec.rho(0.0, 0.0)).abs() < 1e-9 * origin);
            // independent mass check by a tensor midpoint rule in (t, x1, x2, x3)
            let m = 40;
            let h = 2.0 / m as f64;
            let mut mass = 0.0;
            for a in 0..m {
                let t = -1.0 + (a as f64 + 0.5) * h;
                for b in 0..m {
                    for c in 0..m {
                        for e in 0..m {
                            let x = [-1.0 + (b as f64 + 0.5) * h, -1.0 + (c as f64 + 0.5) * h, -1.0 + (e as f64 + 0.5) * h];
                            mass += spec.rho(t, x.iter().map(|v| v * v).sum());
                        }
                    }
                }
            }
            mass *= h.powi(4);
            assert!((mass - 1.0).abs() < 1e-3, "{profile:?}: {mass}");
        }
    }

    #[test]
    fn discrete_weights_have_unit_mass() {
        let l = lattice(3, 16, 1.0 / 256.0, 4);
        let spec = MollifierSpec::new(MollifierProfile::Radial, 0.25, 3).unwrap();
        let w = MollifierWeights::new(&spec, &l).unwrap();
        assert!((w.total_mass() - 1.0).abs() < 1e-12);
        assert!((12..=16).contains(&w.reach()), "{}", w.reach());
    }

    #[test]
    fn mollified_variance_matches_l2_norm() {
        // Ito isometry: Var xi^eps(z) = ||rho_eps||^2, the latter by an independent midpoint rule
        let eps = 0.125;
        let spec = MollifierSpec::new(MollifierProfile::Radial, eps, 2).unwrap();
        let m = 200;
        let h = 2.0 / m as f64;
        let mut norm2 = 0.0;
        for a in 0..m {
            let t = -1.0 + (a as f64 + 0.5) * h;
            for b in 0..m {
                for c in 0..m {
                    let x = [-1.0 + (b as f64 + 0.5) * h, -1.0 + (c as f64 + 0.5) * h];
                    norm2 += spec.rho(t, x[0] * x[0] + x[1] * x[1]).powi(2);
                }
            }
        }
        norm2 *= h.powi(3) * eps.powi(-4);
        assert!((spec.l2_norm_squared() / norm2 - 1.0).abs() < 1e-3);
        let fine = lattice(2, 64, 1.0 / 4096.0, 1);
        let wf = MollifierWeights::new(&spec, &fine).unwrap();
        assert!((wf.discrete_variance() / norm2 - 1.0).abs() < 0.05);

        let l = lattice(2, 32, 1.0 / 256.0, 12);
        let w = MollifierWeights::new(&spec, &l).unwrap();
        let target = w.discrete_variance();
        let mut samples = Vec::new();
        for seed in 0..48 {
            let mut s = MollifiedNoise::new(seed, &l, &spec).unwrap();
            for k in 0..12 {
                let v = s.next_real();
                if k % 4 == 0 {
                    samples.push(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64);
                }
            }
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt();
        let se = sd / (samples.len() as f64).sqrt();
        assert!((mean - target).abs() < 4.0 * se, "{mean} vs {target} (se {se})");
    }

    #[test]
    fn coupling_across_eps() {
        // oracle: corr = <rho_a, rho_b> / (|rho_a| |rho_b|) by a midpoint rule in (t, x1, x2)
        let l = lattice(2, 32, 1.0 / 1024.0, 1);
        let (ea, eb) = (0.25, 0.125);
        let sa = MollifierSpec::new(MollifierProfile::Radial, ea, 2).unwrap();
        let sb = MollifierSpec::new(MollifierProfile::Radial, eb, 2).unwrap();
        let m = 160;
        let h = 2.0 * ea / m as f64;
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in 0..m {
            let t = (-1.0 + (i as f64 + 0.5) * 2.0 / m as f64) * ea * ea;
            for j in 0..m {
                for k in 0..m {
                    let x = [-ea + (j as f64 + 0.5) * h, -ea + (k as f64 + 0.5) * h];
                    let (va, vb) = (sa.eval(t, &x), sb.eval(t, &x));
                    ab += va * vb;
                    aa += va * va;
                    bb += vb * vb;
                }
            }
        }
        let oracle = ab / (aa * bb).sqrt();
        let wa = MollifierWeights::new(&sa, &l).unwrap();
        let wb = MollifierWeights::new(&sb, &l).unwrap();
        let discrete = wa.cross_covariance(&wb) / (wa.discrete_variance() * wb.discrete_variance()).sqrt();
        assert!((discrete - oracle).abs() < 0.02, "{discrete} vs {oracle}");

        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for seed in 0..32 {
            let xa = mollify_noise(&sample_white_noise(seed, &l), &sa).unwrap();
            let xb = mollify_noise(&sample_white_noise(seed, &l), &sb).unwrap();
            for (a, b) in xa.iter().zip(&xb) {
                xy += a * b;
                xx += a * a;
                yy += b * b;
            }
        }
        let empirical = xy / (xx * yy).sqrt();
        assert!((empirical - oracle).abs() < 0.1, "{empirical} vs {oracle}");
        // independent seeds are uncorrelated
        let xa = mollify_noise(&sample_white_noise(1, &l), &sa).unwrap();
        let xc = mollify_noise(&sample_white_noise(2, &l), &sb).unwrap();
        let c: f64 = xa.iter().zip(&xc).map(|(a, b)| a * b).sum::<f64>()
            / (xa.iter().map(|a| a * a).sum::<f64>() * xc.iter().map(|b| b * b).sum::<f64>()).sqrt();
        assert!(c.abs() < 0.5 * oracle, "{c}");
    }

    #[test]
    fn streaming_matches_direct_sum() {
        let l = lattice(1, 16, 1.0 / 256.0, 3);
        let spec = MollifierSpec::new(MollifierProfile::Tensor, 0.125, 1).unwrap();
        let w = MollifierWeights::new(&spec, &l).unwrap();
        let white = WhiteNoise::new(9, l);
        let mut s = MollifiedNoise::new(9, &l, &spec).unwrap();
        let dx = l.dx();
        for k in 0..3i64 {
            let got = s.next_real();
            for j in 0..16usize {
                let mut direct = 0.0;
                let mut mass = 0.0;
                for lag in -w.reach()..=w.reach() {
                    let cells = white.slice(k - lag);
                    for (jj, c) in cells.iter().enumerate() {
                        let mut y = (j as f64 - jj as f64) * dx;
                        y -= y.round();
                        let wt = spec.eval(lag as f64 * l.dt, &[y]);
                        direct += wt * c;
                        mass += wt;
                    }
                }
                direct /= mass;
                assert!((got[j] - direct).abs() < 1e-9 * direct.abs().max(1.0), "{k},{j}");
            }
        }
    }
}
