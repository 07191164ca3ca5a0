//! Exponential time stepping of the renormalised system
//!
//! ```text
//! d_t u = Lap u + F(u, v) + c0 + c1 u + c2 v + xi^eps,    d_t v = a1 u + a2 v
//! ```
//!
//! on the torus, a Picard iteration of its mild form, and the `S^Q`
//! representation of `v`.
//!
//! Over each step the forcing `f_k = F^(u_k, v_k) + xi^eps_k` is frozen and
//! the linear part of the `(u, v)` system is integrated exactly per Fourier
//! mode, so `v` sees the exact exponential-in-time `u` between grid times.

use crate::error::{Error, Result};
use crate::fft::Grid;
use crate::kernel::CutoffKernel;
use crate::noise::{MollifiedNoise, MollifierProfile, MollifierSpec, SpaceTimeLattice};
use crate::objects::HeatPropagator;
use crate::quadrature::GaussLegendre;
use crate::renorm::{CubicCoefficients, RenormConstants};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// `(e^z - 1)/z`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// `(e^z - 1 - z)/z^2`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 0.2 {
        // sum_n z^n / (n + 2)!
        let (mut term, mut sum) = (0.5, 0.5);
        for n in 1..16 {
            term *= z / (n + 2) as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    Constant { u: f64, v: f64 },
    /// `amp cos(2 pi mode x_1 / L)` in both fields.
    Cosine { mode: usize, u_amp: f64, v_amp: f64 },
}

impl InitialData {
    pub fn fields(&self, lattice: &SpaceTimeLattice) -> (Vec<f64>, Vec<f64>) {
        let n = lattice.sites();
        match *self {
            InitialData::Zero => (vec![0.0; n], vec![0.0; n]),
            InitialData::Constant { u, v } => (vec![u; n], vec![v; n]),
            InitialData::Cosine { mode, u_amp, v_amp } => {
                let c = cosine_profile(lattice, mode);
                (c.iter().map(|x| u_amp * x).collect(), c.iter().map(|x| v_amp * x).collect())
            }
        }
    }
}

fn cosine_profile(lattice: &SpaceTimeLattice, mode: usize) -> Vec<f64> {
    let grid = lattice.grid();
    (0..lattice.sites())
        .map(|i| (2.0 * PI * (mode * grid.coords(i)[0]) as f64 / lattice.n as f64).cos())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    None,
    /// Mollified space-time white noise at scale `eps` from `seed`.
    Noise { profile: MollifierProfile },
    /// `amplitude cos(2 pi mode x_1 / L) cos(omega t)` at step midpoints.
    Smooth { mode: usize, amplitude: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lattice: SpaceTimeLattice,
    pub coeffs: CubicCoefficients,
    pub renorm: RenormConstants,
    pub eps: f64,
    pub seed: u64,
    pub init: InitialData,
    pub forcing: Forcing,
    pub blowup_threshold: f64,
    /// Keep a snapshot every this many steps (0: none).
    pub snapshot_every: usize,
}

impl SolverConfig {
    /// Noise-driven run with `renorm` switched off and zero initial data.
    pub fn new(lattice: SpaceTimeLattice, coeffs: CubicCoefficients, eps: f64, seed: u64) -> Self {
        Self {
            lattice,
            coeffs,
            renorm: RenormConstants::off(eps),
            eps,
            seed,
            init: InitialData::Zero,
            forcing: Forcing::Noise {
                profile: MollifierProfile::Radial,
            },
            blowup_threshold: 1e6,
            snapshot_every: 0,
        }
    }

    pub fn mollifier(&self) -> Result<Option<MollifierSpec>> {
        match self.forcing {
            Forcing::Noise { profile } => Ok(Some(MollifierSpec::new(profile, self.eps, self.lattice.d)?)),
            _ => Ok(None),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::InvalidParameter("blow-up threshold must be positive".into()));
        }
        if let Some(spec) = self.mollifier()? {
            self.lattice.check_resolves(spec.eps)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

impl SystemState {
    pub fn initial(cfg: &SolverConfig) -> Self {
        let (u, v) = cfg.init.fields(&cfg.lattice);
        Self { u, v, t: 0.0, step: 0 }
    }
}

/// `F(u, v) + c0 + c1 u + c2 v` pointwise.
pub fn renormalised_drift(u: &[f64], v: &[f64], coeffs: &CubicCoefficients, consts: &RenormConstants) -> Vec<f64> {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| coeffs.f(a, b) + consts.c0 + consts.c1 * a + consts.c2 * b)
        .collect()
}

pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// `L^2` norm on the torus.
pub fn l2_norm(f: &[f64], lattice: &SpaceTimeLattice) -> f64 {
    (f.iter().map(|v| v * v).sum::<f64>() * lattice.dx().powi(lattice.d as i32)).sqrt()
}

/// One-step integrator with the per-mode factors precomputed.
pub struct Stepper {
    cfg: SolverConfig,
    grid: Grid,
    heat: HeatPropagator,
    /// `v^ <- ev v^ + a1 (pu u^ + pf f^)`.
    ev: f64,
    pu: Vec<f64>,
    pf: Vec<f64>,
    noise: Option<MollifiedNoise>,
    smooth: Option<Vec<f64>>,
}

impl Stepper {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let lat = &cfg.lattice;
        let grid = lat.grid();
        let dt = lat.dt;
        let a2 = cfg.coeffs.a2;
        let lambda = grid.laplacian_symbol(lat.side);
        // int_0^dt e^{a2 (dt - s)} e^{-lambda s} ds and int_0^dt e^{a2 (dt - s)} s phi1(-lambda s) ds
        let whole = dt * phi1(a2 * dt);
        let (pu, pf) = lambda
            .iter()
            .map(|&l| {
                let pu = dt * (a2 * dt).exp() * phi1(-(a2 + l) * dt);
                let pf = if l > 0.0 { (whole - pu) / l } else { dt * dt * phi2(a2 * dt) };
                (pu, pf)
            })
            .unzip();
        let noise = match cfg.mollifier()? {
            Some(spec) => Some(MollifiedNoise::new(cfg.seed, lat, &spec)?),
            None => None,
        };
        let smooth = match cfg.forcing {
            Forcing::Smooth { mode, .. } => Some(cosine_profile(lat, mode)),
            _ => None,
        };
        Ok(Self {
            cfg: *cfg,
            heat: HeatPropagator::new(lat),
            grid,
            ev: (a2 * dt).exp(),
            pu,
            pf,
            noise,
            smooth,
        })
    }

    /// Fourier coefficients of the external forcing on step `k`.
    fn external(&mut self, k: usize) -> Option<Vec<Complex64>> {
        if let Some(noise) = self.noise.as_mut() {
            return Some(noise.next_fourier());
        }
        if let (Some(p), Forcing::Smooth { amplitude, omega, .. }) = (&self.smooth, self.cfg.forcing) {
            let c = amplitude * (omega * (k as f64 + 0.5) * self.cfg.lattice.dt).cos();
            let f: Vec<f64> = p.iter().map(|x| c * x).collect();
            return Some(self.grid.forward_real(&f));
        }
        None
    }

    /// Advance one step and return the frozen forcing `f^_k` it used.
    pub fn step(&mut self, state: &mut SystemState) -> Result<Vec<Complex64>> {
        let x = self.external(state.step);
        self.advance(state, x.as_deref())
    }

    fn advance(&self, state: &mut SystemState, external: Option<&[Complex64]>) -> Result<Vec<Complex64>> {
        let drift = renormalised_drift(&state.u, &state.v, &self.cfg.coeffs, &self.cfg.renorm);
        let mut f = self.grid.forward_real(&drift);
        if let Some(x) = external {
            f.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        }
        let mut u = self.grid.forward_real(&state.u);
        let mut v = self.grid.forward_real(&state.v);
        let a1 = self.cfg.coeffs.a1;
        for i in 0..u.len() {
            v[i] = v[i] * self.ev + (u[i] * self.pu[i] + f[i] * self.pf[i]) * a1;
        }
        self.heat.step(&mut u, &f);
        state.u = self.grid.inverse_real(&u);
        state.v = self.grid.inverse_real(&v);
        state.step += 1;
        state.t = state.step as f64 * self.cfg.lattice.dt;
        let sup = sup_norm(&state.u);
        if !(sup <= self.cfg.blowup_threshold) {
            return Err(Error::BlowUp {
                step: state.step,
                time: state.t,
                sup_norm: sup,
            });
        }
        Ok(f)
    }
}

/// Advance `state` by one step of `cfg` (a fresh noise stream positioned at
/// `state.step`).
pub fn step(state: &SystemState, cfg: &SolverConfig) -> Result<SystemState> {
    let mut stepper = Stepper::new(cfg)?;
    if let Some(noise) = stepper.noise.as_mut() {
        for _ in 0..state.step {
            noise.next_fourier();
        }
    }
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: usize,
    pub t: f64,
    pub sup_u: f64,
    pub l2_u: f64,
    pub sup_v: f64,
    pub l2_v: f64,
}

impl Observation {
    fn of(state: &SystemState, lattice: &SpaceTimeLattice) -> Self {
        Self {
            step: state.step,
            t: state.t,
            sup_u: sup_norm(&state.u),
            l2_u: l2_norm(&state.u, lattice),
            sup_v: sup_norm(&state.v),
            l2_v: l2_norm(&state.v, lattice),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    BlowUp { step: usize, time: f64, sup_norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Observation>,
    pub snapshots: Vec<SystemState>,
    /// Last finite state.
    pub final_state: SystemState,
    pub outcome: RunOutcome,
}

impl Trajectory {
    /// Turn a blow-up into an error.
    pub fn completed(self) -> Result<Self> {
        match self.outcome {
            RunOutcome::Completed => Ok(self),
            RunOutcome::BlowUp { step, time, sup_norm } => Err(Error::BlowUp { step, time, sup_norm }),
        }
    }
}

/// Run `n_steps` steps, recording observables every step. A blow-up stops
/// the run and is reported in `outcome`.
pub fn simulate(cfg: &SolverConfig) -> Result<Trajectory> {
    let mut stepper = Stepper::new(cfg)?;
    let mut state = SystemState::initial(cfg);
    let mut observations = vec![Observation::of(&state, &cfg.lattice)];
    let mut snapshots = Vec::new();
    let keep = |s: &SystemState| cfg.snapshot_every > 0 && s.step % cfg.snapshot_every == 0;
    if keep(&state) {
        snapshots.push(state.clone());
    }
    let mut outcome = RunOutcome::Completed;
    for _ in 0..cfg.lattice.n_steps {
        let mut next = state.clone();
        match stepper.step(&mut next) {
            Ok(_) => state = next,
            Err(Error::BlowUp { step, time, sup_norm }) => {
                outcome = RunOutcome::BlowUp { step, time, sup_norm };
                break;
            }
            Err(e) => return Err(e),
        }
        observations.push(Observation::of(&state, &cfg.lattice));
        if keep(&state) {
            snapshots.push(state.clone());
        }
    }
    Ok(Trajectory {
        observations,
        snapshots,
        final_state: state,
        outcome,
    })
}

/// Run several configurations that differ only in coefficients,
/// counterterms or initial data in lockstep, generating the shared forcing
/// once per step. A blow-up stops only the affected run.
pub fn simulate_coupled(cfgs: &[SolverConfig]) -> Result<Vec<Trajectory>> {
    let Some(first) = cfgs.first() else {
        return Ok(Vec::new());
    };
    let same = |c: &SolverConfig| {
        c.lattice == first.lattice && c.eps == first.eps && c.seed == first.seed && c.forcing == first.forcing
    };
    if !cfgs.iter().all(same) {
        return Err(Error::InvalidParameter(
            "coupled runs need the same lattice, eps, seed and forcing".into(),
        ));
    }
    let mut source = Stepper::new(first)?;
    let steppers: Vec<Stepper> = cfgs.iter().map(Stepper::new).collect::<Result<_>>()?;
    let mut runs: Vec<Trajectory> = cfgs
        .iter()
        .map(|c| {
            let s = SystemState::initial(c);
            Trajectory {
                observations: vec![Observation::of(&s, &c.lattice)],
                snapshots: Vec::new(),
                final_state: s,
                outcome: RunOutcome::Completed,
            }
        })
        .collect();
    for k in 0..first.lattice.n_steps {
        let x = source.external(k);
        for ((run, st), c) in runs.iter_mut().zip(&steppers).zip(cfgs) {
            if run.outcome != RunOutcome::Completed {
                continue;
            }
            let mut next = run.final_state.clone();
            match st.advance(&mut next, x.as_deref()) {
                Ok(_) => {
                    run.observations.push(Observation::of(&next, &c.lattice));
                    if c.snapshot_every > 0 && next.step % c.snapshot_every == 0 {
                        run.snapshots.push(next.clone());
                    }
                    run.final_state = next;
                }
                Err(Error::BlowUp { step, time, sup_norm }) => {
                    run.outcome = RunOutcome::BlowUp { step, time, sup_norm };
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(runs)
}

/// `e^{delta Lap} f`.
pub fn heat_smooth(f: &[f64], lattice: &SpaceTimeLattice, delta: f64) -> Vec<f64> {
    let grid = lattice.grid();
    let mut hat = grid.forward_real(f);
    for (h, l) in hat.iter_mut().zip(grid.laplacian_symbol(lattice.side)) {
        *h *= (-l * delta).exp();
    }
    grid.inverse_real(&hat)
}

/// Run to the end, returning the final state and the frozen forcing of
/// every step.
pub fn simulate_recording(cfg: &SolverConfig) -> Result<(SystemState, Vec<Vec<Complex64>>)> {
    let mut stepper = Stepper::new(cfg)?;
    let mut state = SystemState::initial(cfg);
    let mut forcing = Vec::with_capacity(cfg.lattice.n_steps);
    for _ in 0..cfg.lattice.n_steps {
        forcing.push(stepper.step(&mut state)?);
    }
    Ok((state, forcing))
}

/// Breaks on `[a, b]` graded geometrically toward `a` down to the scale
/// `1/lambda` of `e^{-lambda (s - a)}`.
fn graded_breaks(a: f64, b: f64, lambda: f64) -> Vec<f64> {
    let mut out = vec![b];
    let mut w = 0.5 * (b - a);
    while w * lambda > 0.25 && out.len() < 64 {
        out.push(a + w);
        w *= 0.5;
    }
    out.push(a);
    out.reverse();
    out
}

/// `S^Q(tau) = int_0^tau Q(tau - s) e^{-lambda s} ds` for one Fourier mode.
pub fn sq_scalar(q: &CutoffKernel, lambda: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let gl = GaussLegendre::new(12);
    graded_breaks(0.0, tau, lambda)
        .windows(2)
        .map(|p| gl.integrate(p[0], p[1], |s| q.eval(tau - s) * (-lambda * s).exp()))
        .sum()
}

/// `[S^Q(T), int_{t_k}^{t_{k+1}} S^Q(T - s) ds for k = 0..n_steps]`.
fn sq_weights(q: &CutoffKernel, lambda: f64, lattice: &SpaceTimeLattice) -> Vec<f64> {
    let gl = GaussLegendre::new(8);
    let t_end = lattice.t_end();
    let mut out = vec![sq_scalar(q, lambda, t_end)];
    for k in 0..lattice.n_steps {
        // tau = T - s runs over [T - t_{k+1}, T - t_k]
        let lo = t_end - (k + 1) as f64 * lattice.dt;
        let hi = t_end - k as f64 * lattice.dt;
        let stiff = if lambda * lo > 40.0 { 0.0 } else { lambda };
        let w: f64 = graded_breaks(lo.max(0.0), hi, stiff)
            .windows(2)
            .map(|p| gl.integrate(p[0], p[1], |tau| sq_scalar(q, lambda, tau)))
            .sum();
        out.push(w);
    }
    out
}

/// `v(T) = S^Q(T) u0 + int_0^T S^Q(T - s) f(s) ds + e^{T a2} v0` for the
/// recorded piecewise-constant forcing `f` (one Fourier slice per step),
/// with `S^Q` applied per mode by scalar quadrature.
pub fn v_via_sq(cfg: &SolverConfig, forcing: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let lat = cfg.lattice;
    if forcing.len() != lat.n_steps || forcing.iter().any(|f| f.len() != lat.sites()) {
        return Err(Error::InvalidParameter("forcing record does not match the lattice".into()));
    }
    let t_end = lat.t_end();
    let q = CutoffKernel::new(cfg.coeffs.a1, cfg.coeffs.a2, t_end.max(f64::MIN_POSITIVE))?;
    let grid = lat.grid();
    let lambda = grid.laplacian_symbol(lat.side);
    let mut distinct: Vec<f64> = lambda.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let weights: HashMap<u64, Vec<f64>> = distinct
        .par_iter()
        .map(|&l| (l.to_bits(), sq_weights(&q, l, &lat)))
        .collect();
    let (u0, v0) = cfg.init.fields(&lat);
    let (u0, v0) = (grid.forward_real(&u0), grid.forward_real(&v0));
    let decay = (cfg.coeffs.a2 * t_end).exp();
    let out: Vec<Complex64> = (0..lat.sites())
        .map(|i| {
            let w = &weights[&lambda[i].to_bits()];
            let mut acc = v0[i] * decay + u0[i] * w[0];
            for (f, wk) in forcing.iter().zip(&w[1..]) {
                acc += f[i] * wk;
            }
            acc
        })
        .collect();
    Ok(grid.inverse_real(&out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub state: SystemState,
    /// Sup-norm change of the whole trajectory per iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Fixed-point iteration of the mild form
///
/// ```text
/// u = S(t) u0 + int_0^t S(t - s) [F^(u_s, v_s) + xi_s] ds,   v = e^{t a2} v0 + int_0^t Q(t - s) u_s ds
/// ```
///
/// on the time grid, with `F^` and `u` interpolated linearly in time inside
/// the integrals and the external forcing piecewise constant as in the
/// stepper. Its fixed point is a second, independent discretisation.
pub fn picard_mild(cfg: &SolverConfig, iterations: usize) -> Result<PicardResult> {
    cfg.validate()?;
    let lat = cfg.lattice;
    let grid = lat.grid();
    let dt = lat.dt;
    let levels = lat.n_steps + 1;
    let heat = HeatPropagator::new(&lat);
    let lambda = grid.laplacian_symbol(lat.side);
    let lin: Vec<f64> = lambda.iter().map(|&l| dt * phi2(-l * dt)).collect();
    let (a1, a2) = (cfg.coeffs.a1, cfg.coeffs.a2);
    let ev = (a2 * dt).exp();
    let p1 = dt * phi2(a2 * dt);
    let p0 = dt * phi1(a2 * dt) - p1;

    let mut stepper = Stepper::new(cfg)?;
    let external: Vec<Option<Vec<Complex64>>> = (0..lat.n_steps).map(|k| stepper.external(k)).collect();
    let (u0, v0) = cfg.init.fields(&lat);

    let v_from = |u: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut v = vec![v0.clone()];
        for k in 0..lat.n_steps {
            let next = v[k]
                .iter()
                .zip(u[k].iter().zip(&u[k + 1]))
                .map(|(vv, (a, b))| ev * vv + a1 * (p0 * a + p1 * b))
                .collect();
            v.push(next);
        }
        v
    };
    let mut u = vec![u0.clone()];
    let mut hat = grid.forward_real(&u0);
    for _ in 0..lat.n_steps {
        hat.iter_mut().zip(&heat.decay).for_each(|(h, r)| *h *= r);
        u.push(grid.inverse_real(&hat));
    }
    let mut v: Vec<Vec<f64>> = (0..levels)
        .map(|k| {
            let d = (a2 * k as f64 * dt).exp();
            v0.iter().map(|x| d * x).collect()
        })
        .collect();

    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..iterations {
        let drift: Vec<Vec<Complex64>> = (0..levels)
            .map(|k| grid.forward_real(&renormalised_drift(&u[k], &v[k], &cfg.coeffs, &cfg.renorm)))
            .collect();
        let mut hat = grid.forward_real(&u0);
        let mut next_u = vec![u0.clone()];
        for k in 0..lat.n_steps {
            let mut f = drift[k].clone();
            if let Some(x) = &external[k] {
                f.iter_mut().zip(x).for_each(|(a, b)| *a += b);
            }
            heat.step(&mut hat, &f);
            for i in 0..hat.len() {
                hat[i] += (drift[k + 1][i] - drift[k][i]) * lin[i];
            }
            next_u.push(grid.inverse_real(&hat));
        }
        let next_v = v_from(&next_u);
        let mut change = 0.0f64;
        let mut scale = 1.0f64;
        for k in 0..levels {
            for (a, b) in next_u[k].iter().zip(&u[k]).chain(next_v[k].iter().zip(&v[k])) {
                change = change.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        if !change.is_finite() {
            change = f64::INFINITY;
        }
        residuals.push(change);
        u = next_u;
        v = next_v;
        if change <= 1e-13 * scale {
            converged = true;
            break;
        }
        let n = residuals.len();
        if n >= 4 && (n - 3..n).all(|j| residuals[j] > residuals[j - 1]) || change == f64::INFINITY {
            return Err(Error::NonContraction { residuals });
        }
    }
    Ok(PicardResult {
        state: SystemState {
            u: u.pop().unwrap_or_default(),
            v: v.pop().unwrap_or_default(),
            t: lat.t_end(),
            step: lat.n_steps,
        },
        residuals,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renorm::ConstantMode;

    fn deterministic(lat: SpaceTimeLattice, coeffs: CubicCoefficients) -> SolverConfig {
        SolverConfig {
            forcing: Forcing::None,
            ..SolverConfig::new(lat, coeffs, 0.25, 1)
        }
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let n: f64 = b.iter().map(|y| y * y).sum();
        (d / n).sqrt()
    }

    #[test]
    fn phi_functions_match_taylor_sums() {
        let taylor = |z: f64, shift: i32| {
            let mut term = 1.0;
            let mut sum = 0.0;
            for n in 0..40 {
                if n > 0 {
                    term *= z / (n + shift) as f64;
                }
                sum += term;
            }
            sum
        };
        for z in [-1.5, -0.2, -0.19, -1e-3, -1e-6, 0.0, 1e-6, 1e-3, 0.19, 0.2, 1.5] {
            assert!((phi1(z) - taylor(z, 1)).abs() < 2e-15, "{z}");
            assert!((phi2(z) - 0.5 * taylor(z, 2)).abs() < 2e-15, "{z}");
        }
    }

    #[test]
    fn drift_examples() {
        let std = CubicCoefficients::standard_fhn();
        let off = RenormConstants::off(0.1);
        assert_eq!(renormalised_drift(&[0.7], &[-0.2], &std, &off), vec![std.f(0.7, -0.2)]);
        let mut coeffs = std;
        coeffs.beta1 = 2.0;
        let k = RenormConstants::new(0.1, ConstantMode::Lattice, &coeffs, 1.5, 0.0);
        assert_eq!(renormalised_drift(&[0.0; 3], &[0.0; 3], &coeffs, &k), vec![k.c0; 3]);
        let k = RenormConstants::new(0.1, ConstantMode::Lattice, &std, 1.0, 0.0);
        let (u, v) = (0.3f64, -0.4f64);
        let got = renormalised_drift(&[u], &[v], &std, &k)[0];
        assert!((got - (u + v - u * u * u + 3.0 * u)).abs() < 1e-15);
    }

    #[test]
    fn single_mode_decays_exactly() {
        let lat = SpaceTimeLattice::new(2, 16, 1.0, 1e-3, 50).unwrap();
        let mut cfg = deterministic(lat, CubicCoefficients::zero());
        cfg.init = InitialData::Cosine { mode: 3, u_amp: 1.0, v_amp: 0.0 };
        let lambda = (2.0 * PI * 3.0).powi(2);
        let u0 = SystemState::initial(&cfg).u;
        let mut stepper = Stepper::new(&cfg).unwrap();
        let mut s = SystemState::initial(&cfg);
        for k in 1..=50 {
            stepper.step(&mut s).unwrap();
            let decay = (-lambda * k as f64 * lat.dt).exp();
            let err = s.u.iter().zip(&u0).map(|(a, b)| (a - decay * b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-12, "step {k}: {err}");
        }
    }

    #[test]
    fn decoupled_v_is_exponential() {
        let lat = SpaceTimeLattice::new(1, 16, 1.0, 1e-2, 40).unwrap();
        let mut coeffs = CubicCoefficients::standard_fhn();
        coeffs.a1 = 0.0;
        coeffs.a2 = -0.7;
        let mut cfg = deterministic(lat, coeffs);
        cfg.init = InitialData::Cosine { mode: 1, u_amp: 0.5, v_amp: 2.0 };
        let v0 = SystemState::initial(&cfg).v;
        let end = simulate(&cfg).unwrap().completed().unwrap().final_state;
        let decay = (-0.7 * lat.t_end()).exp();
        for (a, b) in end.v.iter().zip(&v0) {
            assert!((a - decay * b).abs() <= 1e-14, "{a} {b}");
        }
        let (_, forcing) = simulate_recording(&cfg).unwrap();
        let via = v_via_sq(&cfg, &forcing).unwrap();
        for (a, b) in via.iter().zip(&v0) {
            assert!((a - decay * b).abs() <= 1e-14);
        }
    }

    #[test]
    fn linear_drift_converges_at_first_order() {
        let alpha = 3.0;
        let mut coeffs = CubicCoefficients::zero();
        coeffs.alpha1 = alpha;
        let lambda = (2.0 * PI).powi(2);
        let err = |dt: f64| {
            let steps = (0.1 / dt).round() as usize;
            let lat = SpaceTimeLattice::new(1, 8, 1.0, dt, steps).unwrap();
            let mut cfg = deterministic(lat, coeffs);
            cfg.init = InitialData::Cosine { mode: 1, u_amp: 1.0, v_amp: 0.0 };
            let end = simulate(&cfg).unwrap().final_state;
            ((alpha - lambda) * 0.1).exp() - end.u[0]
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        let ratio = e2 / e1;
        assert!((0.375..=0.625).contains(&ratio), "{e1} {e2}");
    }

    #[test]
    fn sq_scalar_matches_closed_form() {
        let q = CutoffKernel::new(1.3, -0.8, 5.0).unwrap();
        for (lambda, tau) in [(0.0, 0.5), (39.5, 0.3), (2500.0, 0.01), (2500.0, 1.0)] {
            let closed: f64 = 1.3 * ((-0.8 * tau as f64).exp() - (-lambda * tau as f64).exp()) / (lambda - 0.8);
            let got = sq_scalar(&q, lambda, tau);
            assert!((got - closed).abs() <= 1e-12 * closed.abs(), "{lambda} {tau}: {got} {closed}");
        }
    }

    #[test]
    fn single_mode_without_forcing_follows_sq() {
        let lat = SpaceTimeLattice::new(1, 8, 1.0, 1.0 / 64.0, 32).unwrap();
        let mut coeffs = CubicCoefficients::zero();
        coeffs.a1 = 1.0;
        coeffs.a2 = -1.0;
        let mut cfg = deterministic(lat, coeffs);
        cfg.init = InitialData::Cosine { mode: 2, u_amp: 1.0, v_amp: 0.5 };
        let (_, forcing) = simulate_recording(&cfg).unwrap();
        let v = v_via_sq(&cfg, &forcing).unwrap();
        let (lambda, t) = ((4.0 * PI).powi(2), lat.t_end());
        let sq: f64 = ((-t).exp() - (-lambda * t).exp()) / (lambda - 1.0);
        let want = sq + 0.5 * (-t).exp();
        assert!((v[0] - want).abs() < 1e-12, "{} {want}", v[0]);
    }

    #[test]
    fn stepper_and_sq_representation_agree() {
        let lat = SpaceTimeLattice::new(1, 16, 1.0, 1.0 / 1024.0, 256).unwrap();
        let mut cfg = deterministic(lat, CubicCoefficients::standard_fhn());
        cfg.init = InitialData::Cosine { mode: 1, u_amp: 0.8, v_amp: 0.3 };
        cfg.forcing = Forcing::Smooth { mode: 2, amplitude: 5.0, omega: 7.0 };
        let (end, forcing) = simulate_recording(&cfg).unwrap();
        let via = v_via_sq(&cfg, &forcing).unwrap();
        let err = rel_l2(&end.v, &via);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn picard_contracts_and_matches_stepper() {
        let mut coeffs = CubicCoefficients::zero();
        coeffs.alpha1 = 1.0;
        coeffs.a1 = 1.0;
        coeffs.a2 = -1.0;
        let lat = SpaceTimeLattice::new(1, 16, 1.0, 1.0 / 512.0, 51).unwrap();
        let mut cfg = deterministic(lat, coeffs);
        cfg.init = InitialData::Cosine { mode: 1, u_amp: 1.0, v_amp: 0.2 };
        cfg.forcing = Forcing::Smooth { mode: 1, amplitude: 3.0, omega: 10.0 };
        let p = picard_mild(&cfg, 40).unwrap();
        assert!(p.converged);
        for w in p.residuals.windows(2).filter(|w| w[0] > 1e-12) {
            assert!(w[1] < 0.8 * w[0], "{:?}", p.residuals);
        }

        let gap = |dt: f64| {
            let steps = (0.1 / dt).round() as usize;
            let mut c = cfg;
            c.lattice = SpaceTimeLattice::new(1, 16, 1.0, dt, steps).unwrap();
            c.coeffs = CubicCoefficients::standard_fhn();
            let pic = picard_mild(&c, 60).unwrap();
            assert!(pic.converged);
            let st = simulate(&c).unwrap().final_state;
            pic.state.u.iter().zip(&st.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = gap(1.0 / 1024.0) / gap(1.0 / 512.0);
        assert!((0.375..=0.625).contains(&ratio), "{ratio}");
    }

    #[test]
    fn zero_problem_stays_zero() {
        let lat = SpaceTimeLattice::new(2, 8, 1.0, 1e-3, 20).unwrap();
        let cfg = deterministic(lat, CubicCoefficients::standard_fhn());
        let p = picard_mild(&cfg, 10).unwrap();
        assert!(p.converged);
        assert_eq!(p.residuals, vec![0.0]);
        let traj = simulate(&cfg).unwrap();
        assert!(traj.observations.iter().all(|o| o.sup_u == 0.0 && o.sup_v == 0.0));
    }

    #[test]
    fn mean_is_preserved_without_mean_forcing() {
        let lat = SpaceTimeLattice::new(2, 8, 1.0, 1e-3, 30).unwrap();
        let mut cfg = deterministic(lat, CubicCoefficients::zero());
        cfg.init = InitialData::Constant { u: 0.4, v: 0.0 };
        cfg.forcing = Forcing::Smooth { mode: 1, amplitude: 2.0, omega: 1.0 };
        let end = simulate(&cfg).unwrap().final_state;
        let mean = end.u.iter().sum::<f64>() / end.u.len() as f64;
        assert!((mean - 0.4).abs() < 1e-14);
    }

    #[test]
    fn blow_up_is_reported() {
        let lat = SpaceTimeLattice::new(1, 8, 1.0, 1e-2, 200).unwrap();
        let mut coeffs = CubicCoefficients::zero();
        coeffs.gamma1 = 1.0;
        let mut cfg = deterministic(lat, coeffs);
        cfg.init = InitialData::Constant { u: 2.0, v: 0.0 };
        let traj = simulate(&cfg).unwrap();
        match traj.outcome {
            RunOutcome::BlowUp { step, .. } => assert!(step < 200),
            RunOutcome::Completed => panic!("expected blow-up"),
        }
        assert!(traj.final_state.u.iter().all(|u| u.is_finite()));
        assert_eq!(traj.completed().unwrap_err().exit_code(), 3);
    }

    #[test]
    fn runs_are_deterministic_and_step_matches_stepper() {
        let lat = SpaceTimeLattice::new(2, 16, 1.0, 1.0 / 256.0, 12).unwrap();
        let mut cfg = SolverConfig::new(lat, CubicCoefficients::standard_fhn(), 0.25, 5);
        cfg.renorm = RenormConstants::new(0.25, ConstantMode::Lattice, &cfg.coeffs, 0.5, 0.0);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        let mid = SystemState {
            u: a.final_state.u.clone(),
            v: a.final_state.v.clone(),
            ..a.final_state.clone()
        };
        let mut short = cfg;
        short.lattice.n_steps = 11;
        let s11 = simulate(&short).unwrap().final_state;
        assert_eq!(step(&s11, &cfg).unwrap(), mid);
    }

    #[test]
    fn coupled_runs_match_separate_runs() {
        let lat = SpaceTimeLattice::new(2, 16, 1.0, 1.0 / 256.0, 10).unwrap();
        let a = SolverConfig::new(lat, CubicCoefficients::standard_fhn(), 0.25, 9);
        let mut b = a;
        b.renorm = RenormConstants::new(0.25, ConstantMode::Lattice, &b.coeffs, 0.7, 0.01);
        let both = simulate_coupled(&[a, b]).unwrap();
        assert_eq!(both[0], simulate(&a).unwrap());
        assert_eq!(both[1], simulate(&b).unwrap());
        let mut c = b;
        c.seed = 10;
        assert!(simulate_coupled(&[a, c]).is_err());
    }

    #[test]
    fn heat_smoothing_damps_modes() {
        let lat = SpaceTimeLattice::new(1, 16, 1.0, 1.0, 1).unwrap();
        let cfg = InitialData::Cosine { mode: 2, u_amp: 1.0, v_amp: 0.0 };
        let (u, _) = cfg.fields(&lat);
        let s = heat_smooth(&u, &lat, 0.01);
        let f = (-(4.0 * PI).powi(2) * 0.01).exp();
        assert!(s.iter().zip(&u).all(|(a, b)| (a - f * b).abs() < 1e-14));
    }

    #[test]
    fn under_resolved_noise_is_rejected() {
        let lat = SpaceTimeLattice::new(2, 8, 1.0, 1e-3, 4).unwrap();
        let cfg = SolverConfig::new(lat, CubicCoefficients::standard_fhn(), 0.1, 1);
        assert!(matches!(simulate(&cfg), Err(Error::UnderResolved { .. })));
    }
}
