//! The five experiments behind the command-line runner. Each writes its
//! resolved configuration before computing, then CSV tables and a JSON
//! summary into `<out-dir>/<command>/`.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::io::{write_csv, write_field_dump, write_json, RunSummary};
use crate::kernel::{
    joint_level_uniformity, level_uniformity, verify_derivative_bounds, verify_moment_bounds, verify_support, BoundRow,
    KernelDecomposition, Uniformity,
};
use crate::noise::{MollifierSpec, SpaceTimeLattice};
use crate::objects::{run_ensemble, ObjectOptions};
use crate::renorm::{
    c1_continuum, c2_constant, divergence_fit, lattice_c1, C2Options, ConstantMode, FitModel, FitResult,
    LatticeTime, MollifierTransform, RenormConstants,
};
use crate::rng::realisation_seed;
use crate::scaling::Multiindex;
use crate::solver::{
    heat_smooth, l2_norm, simulate, simulate_coupled, Forcing, RunOutcome, SolverConfig, SystemState,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Constants,
    KernelVerify,
    Simulate,
    Converge,
    Objects,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::KernelVerify => "kernel-verify",
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::Objects => "objects",
        }
    }
}

/// Summary plus the process exit code (3 when a simulation blew up).
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub exit_code: i32,
}

pub fn run(command: Command, cfg: &Config) -> Result<Report> {
    let dir = cfg.out_dir.join(command.name());
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let (pass_fail, metrics, exit_code) = match command {
        Command::Constants => constants(cfg, &dir)?,
        Command::KernelVerify => kernel_verify(cfg, &dir)?,
        Command::Simulate => simulate_cmd(cfg, &dir)?,
        Command::Converge => converge(cfg, &dir)?,
        Command::Objects => objects(cfg, &dir)?,
    };
    let summary = RunSummary {
        command: command.name().to_string(),
        config_hash: cfg.hash(),
        pass_fail,
        metrics,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(Report { dir, summary, exit_code })
}

type Outcome = (Option<bool>, serde_json::Value, i32);

/// Counterterms used by the solver: lattice `C1` (stationary, zero mode
/// excluded) and the continuum `C2` in `d = 3` (`C2` does not diverge below
/// three dimensions and is set to zero there).
pub fn solver_constants(cfg: &Config, eps: f64, lattice: &SpaceTimeLattice) -> Result<RenormConstants> {
    let spec = MollifierSpec::new(cfg.profile, eps, lattice.d)?;
    let c1 = lattice_c1(&spec, lattice, LatticeTime::Stationary)?;
    let c2 = if lattice.d == 3 {
        let tr = MollifierTransform::new(cfg.profile)?;
        c2_constant(&tr, eps, &c2_options(cfg))?
    } else {
        0.0
    };
    Ok(RenormConstants::new(eps, ConstantMode::Lattice, &cfg.coefficients(), c1, c2))
}

fn c2_options(cfg: &Config) -> C2Options {
    C2Options {
        t_cut: cfg.t_cut(),
        resolution: cfg.c2_resolution.max(1),
        check: Some(cfg.tolerance.max(1e-10)),
    }
}

fn eps_list(cfg: &Config) -> Result<Vec<f64>> {
    let list = match (&cfg.eps_list, cfg.eps) {
        (Some(l), _) => l.clone(),
        (None, Some(e)) => vec![e],
        (None, None) => return Err(Error::MissingKey("eps-list".into())),
    };
    if list.is_empty() || list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config(format!("`eps-list` needs positive entries, got {list:?}")));
    }
    Ok(list)
}

fn is_dyadic(eps: &[f64]) -> bool {
    let mut v = eps.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.windows(2).all(|w| ((w[0] / w[1]) - 2.0).abs() < 1e-9)
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "PascalCase")]
struct ConstantsRow {
    #[serde(rename = "eps")]
    eps: f64,
    #[serde(rename = "C1_continuum")]
    c1_continuum: Option<f64>,
    #[serde(rename = "C1_lattice")]
    c1_lattice: Option<f64>,
    #[serde(rename = "C2")]
    c2: Option<f64>,
    #[serde(rename = "c0")]
    small_c0: f64,
    #[serde(rename = "c1")]
    small_c1: f64,
    #[serde(rename = "c2")]
    small_c2: f64,
    #[serde(rename = "mode")]
    mode: ConstantMode,
    #[serde(rename = "quadrature_tol")]
    quadrature_tol: f64,
}

fn constants(cfg: &Config, dir: &Path) -> Result<Outcome> {
    let eps = eps_list(cfg)?;
    let modes: Vec<ConstantMode> = cfg
        .modes
        .iter()
        .map(|m| match m.as_str() {
            "continuum" => Ok(ConstantMode::Continuum),
            "lattice" => Ok(ConstantMode::Lattice),
            other => Err(Error::Config(format!("unknown constant mode `{other}`"))),
        })
        .collect::<Result<_>>()?;
    let continuum = modes.contains(&ConstantMode::Continuum);
    let lattice_mode = modes.contains(&ConstantMode::Lattice);
    if continuum && cfg.d != 3 {
        return Err(Error::Config("continuum constants are defined for d = 3 only".into()));
    }
    let coeffs = cfg.coefficients();
    let eps_min = eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let lattice = cfg.lattice(eps_min)?;
    let tr = MollifierTransform::new(cfg.profile)?;
    let opts = c2_options(cfg);
    let per_eps: Vec<(f64, Option<f64>, Option<f64>, Option<f64>)> = eps
        .par_iter()
        .map(|&e| {
            let c1c = if continuum { Some(c1_continuum(&tr, e, cfg.t_cut())?) } else { None };
            let c1l = if lattice_mode {
                let spec = MollifierSpec::new(cfg.profile, e, lattice.d)?;
                Some(lattice_c1(&spec, &lattice, LatticeTime::Stationary)?)
            } else {
                None
            };
            let c2 = if cfg.d == 3 { Some(c2_constant(&tr, e, &opts)?) } else { None };
            Ok((e, c1c, c1l, c2))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &(e, c1c, c1l, c2) in &per_eps {
        for &mode in &modes {
            let big_c1 = match mode {
                ConstantMode::Continuum => c1c,
                ConstantMode::Lattice => c1l,
            }
            .unwrap_or(0.0);
            let k = RenormConstants::new(e, mode, &coeffs, big_c1, c2.unwrap_or(0.0));
            rows.push(ConstantsRow {
                eps: e,
                c1_continuum: c1c,
                c1_lattice: c1l,
                c2,
                small_c0: k.c0 + 0.0,
                small_c1: k.c1 + 0.0,
                small_c2: k.c2 + 0.0,
                mode,
                quadrature_tol: cfg.tolerance,
            });
        }
    }
    write_csv(&dir.join("constants.csv"), &rows)?;

    let mut fits = serde_json::Map::new();
    let mut pass = None;
    if per_eps.len() >= 3 && is_dyadic(&eps) {
        let series = |pick: fn(&(f64, Option<f64>, Option<f64>, Option<f64>)) -> Option<f64>| -> Vec<(f64, f64)> {
            per_eps.iter().filter_map(|p| pick(p).map(|v| (p.0, v))).collect()
        };
        let mut fit = |name: &str, pts: Vec<(f64, f64)>, model: FitModel| -> Result<Option<FitResult>> {
            if pts.len() < 3 {
                return Ok(None);
            }
            let f = divergence_fit(&pts, model)?;
            fits.insert(name.to_string(), serde_json::to_value(&f)?);
            Ok(Some(f))
        };
        if let Some(f) = fit("C1_continuum", series(|p| p.1), FitModel::Power)? {
            pass = Some((-1.15..=-0.85).contains(&f.slope));
        }
        fit("C1_lattice", series(|p| p.2), FitModel::Power)?;
        fit("C2", series(|p| p.3), FitModel::Log)?;
    }
    let metrics = json!({
        "eps": eps,
        "t_cut": cfg.t_cut(),
        "lattice": lattice,
        "profile": cfg.profile,
        "fits": fits,
    });
    Ok((pass, metrics, 0))
}

#[derive(Debug, Clone, Serialize)]
struct SupportRow {
    n: u32,
    m: i64,
    samples: usize,
    violations: usize,
    max_violation: f64,
}

fn kernel_verify(cfg: &Config, dir: &Path) -> Result<Outcome> {
    let kd = KernelDecomposition::new(cfg.d, cfg.n_max, cfg.cutoff_kernel()?)?
        .with_tolerance(cfg.tolerance)
        .with_corrupted_shift(cfg.corrupt_shift);
    let pieces = kd.index_set();
    let support: Vec<SupportRow> = pieces
        .par_iter()
        .map(|&(n, m)| {
            let r = verify_support(&kd, n, m, cfg.support_samples, 1.0, cfg.seed)?;
            Ok(SupportRow {
                n,
                m,
                samples: r.samples,
                violations: r.violations,
                max_violation: r.max_violation,
            })
        })
        .collect::<Result<_>>()?;
    write_csv(&dir.join("support.csv"), &support)?;

    let ks = Multiindex::up_to_degree(kd.scaling(), cfg.k_degree);
    let mut failures = Vec::new();
    let mut derivative: Vec<BoundRow> = Vec::new();
    let mut moments: Vec<BoundRow> = Vec::new();
    for n in 0..=cfg.n_max {
        match verify_derivative_bounds(&kd, n..=n, &ks, cfg.samples, cfg.seed) {
            Ok(rows) => derivative.extend(rows),
            Err(e) => failures.push(format!("derivatives n={n}: {e}")),
        }
        match verify_moment_bounds(&kd, n..=n, cfg.ell_degree, cfg.tolerance.max(1e-10)) {
            Ok(rows) => moments.extend(rows),
            Err(e) => failures.push(format!("moments n={n}: {e}")),
        }
    }
    let mut table = std::fs::File::create(dir.join("kernel_bounds.csv"))?;
    BoundRow::write_csv(&[derivative.clone(), moments.clone()].concat(), &mut table)?;

    let support_pass = support.iter().all(|r| r.violations == 0);
    let d_uni: Vec<Uniformity> = level_uniformity(&derivative, 10.0);
    // the moment bound has the same rate for every `l`, sharp only at `l = 0`
    let m_joint = joint_level_uniformity("all", &moments, 10.0);
    let m_uni: Vec<Uniformity> = level_uniformity(&moments, 10.0);
    let derivative_pass = d_uni.iter().all(|u| u.pass) && !derivative.is_empty();
    let moment_pass = m_joint.pass && !moments.is_empty();
    let pass = support_pass && derivative_pass && moment_pass && failures.is_empty();
    let metrics = json!({
        "pieces": pieces.len(),
        "support_pass": support_pass,
        "support_violations": support.iter().map(|r| r.violations).sum::<usize>(),
        "derivative_pass": derivative_pass,
        "moment_pass": moment_pass,
        "derivative_uniformity": d_uni,
        "moment_uniformity": m_joint,
        "moment_uniformity_by_label": m_uni,
        "quadrature_failures": failures,
    });
    Ok((Some(pass), metrics, 0))
}

fn solver_config(cfg: &Config, eps: f64, lattice: SpaceTimeLattice, seed: u64) -> SolverConfig {
    SolverConfig {
        init: cfg.initial_data(),
        forcing: Forcing::Noise { profile: cfg.profile },
        blowup_threshold: cfg.blowup_threshold,
        snapshot_every: cfg.snapshot_every,
        ..SolverConfig::new(lattice, cfg.coefficients(), eps, seed)
    }
}

fn simulate_cmd(cfg: &Config, dir: &Path) -> Result<Outcome> {
    let eps = cfg.require_eps()?;
    let lattice = cfg.lattice(eps)?;
    lattice.check_resolves(eps)?;
    let mut sc = solver_config(cfg, eps, lattice, cfg.seed);
    if cfg.renorm {
        sc.renorm = solver_constants(cfg, eps, &lattice)?;
    }
    write_json(&dir.join("solver.json"), &sc)?;
    let traj = simulate(&sc)?;
    write_csv(&dir.join("observables.csv"), &traj.observations)?;
    if cfg.dump_fields && !traj.snapshots.is_empty() {
        let u: Vec<&[f64]> = traj.snapshots.iter().map(|s| s.u.as_slice()).collect();
        let v: Vec<&[f64]> = traj.snapshots.iter().map(|s| s.v.as_slice()).collect();
        write_field_dump(&dir.join("u.bin"), &lattice, cfg.seed, &u)?;
        write_field_dump(&dir.join("v.bin"), &lattice, cfg.seed, &v)?;
    }
    let last = traj.observations.last().copied();
    let exit = match traj.outcome {
        RunOutcome::Completed => 0,
        RunOutcome::BlowUp { .. } => 3,
    };
    let metrics = json!({
        "outcome": traj.outcome,
        "final": last,
        "renorm": sc.renorm,
        "lattice": lattice,
    });
    Ok((Some(exit == 0), metrics, exit))
}

#[derive(Debug, Clone, Serialize)]
struct ConvergeRow {
    seed: u64,
    renormalised: bool,
    eps: f64,
    sup_u: f64,
    l2_u: f64,
    /// `||u^eps - u^{eps/2}||_{L^2}(T)`, empty for the smallest `eps`.
    r: Option<f64>,
    /// The same distance after heat smoothing for time `smoothing`.
    r_smoothed: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct ConvergeMedian {
    renormalised: bool,
    eps: f64,
    sup_u: f64,
    r: Option<f64>,
    r_smoothed: Option<f64>,
}

/// Median of the finite values (`NaN` marks a blown-up run and sorts last).
fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Verdicts of the coupled-convergence experiment from the median columns
/// (largest `eps` first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeVerdict {
    pub renormalised_ratios: Vec<f64>,
    pub renormalised_pass: bool,
    pub unrenormalised_r: Vec<f64>,
    pub unrenormalised_sup_growth: Vec<f64>,
    pub unrenormalised_pass: bool,
}

pub fn converge_verdict(renorm_r: &[f64], off_r: &[f64], off_sup: &[f64]) -> ConvergeVerdict {
    let ratios: Vec<f64> = renorm_r.windows(2).map(|w| w[1] / w[0]).collect();
    let growth: Vec<f64> = off_sup.windows(2).map(|w| w[1] / w[0]).collect();
    let non_decreasing = off_r.windows(2).all(|w| w[1] >= w[0]);
    ConvergeVerdict {
        renormalised_pass: !ratios.is_empty() && ratios.iter().all(|&q| q <= 0.85),
        renormalised_ratios: ratios,
        unrenormalised_pass: non_decreasing || (!growth.is_empty() && growth.iter().all(|&g| g >= 2.0)),
        unrenormalised_r: off_r.to_vec(),
        unrenormalised_sup_growth: growth,
    }
}

fn converge(cfg: &Config, dir: &Path) -> Result<Outcome> {
    if cfg.eps_halvings < 2 {
        return Err(Error::Config(format!(
            "`eps-halvings` must be at least 2, got {}",
            cfg.eps_halvings
        )));
    }
    if cfg.seeds == 0 {
        return Err(Error::Config("`seeds` must be positive".into()));
    }
    let eps0 = cfg.require_eps()?;
    let eps: Vec<f64> = (0..=cfg.eps_halvings).map(|j| eps0 / 2f64.powi(j as i32)).collect();
    let eps_min = *eps.last().unwrap();
    let lattice = cfg.lattice(eps_min)?;
    lattice.check_resolves(eps_min)?;
    lattice.check_resolves(eps0)?;
    let consts: Vec<RenormConstants> = eps
        .par_iter()
        .map(|&e| solver_constants(cfg, e, &lattice))
        .collect::<Result<_>>()?;

    let jobs: Vec<(u64, usize)> = (0..cfg.seeds as u64).flat_map(|s| (0..eps.len()).map(move |j| (s, j))).collect();
    // per (seed, eps): final states of the renormalised and unrenormalised runs
    let finals: Vec<[(Option<SystemState>, f64); 2]> = jobs
        .par_iter()
        .map(|&(s, j)| {
            let seed = realisation_seed(cfg.seed, s);
            let mut on = solver_config(cfg, eps[j], lattice, seed);
            on.snapshot_every = 0;
            on.renorm = consts[j];
            let off = SolverConfig {
                renorm: RenormConstants::off(eps[j]),
                ..on
            };
            let runs = simulate_coupled(&[on, off])?;
            Ok(runs.map_pair(|t| match t.outcome {
                RunOutcome::Completed => {
                    let sup = t.observations.last().map(|o| o.sup_u).unwrap_or(f64::NAN);
                    (Some(t.final_state), sup)
                }
                RunOutcome::BlowUp { .. } => (None, f64::INFINITY),
            }))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for s in 0..cfg.seeds {
        for (mode, renormalised) in [(0usize, true), (1, false)] {
            for j in 0..eps.len() {
                let (state, sup) = &finals[s * eps.len() + j][mode];
                let next = finals.get(s * eps.len() + j + 1).filter(|_| j + 1 < eps.len());
                let (r, rs) = match (state, next.and_then(|n| n[mode].0.as_ref())) {
                    (Some(a), Some(b)) => {
                        let diff: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
                        let smooth = heat_smooth(&diff, &lattice, cfg.smoothing);
                        (Some(l2_norm(&diff, &lattice)), Some(l2_norm(&smooth, &lattice)))
                    }
                    _ if j + 1 < eps.len() => (Some(f64::NAN), Some(f64::NAN)),
                    _ => (None, None),
                };
                rows.push(ConvergeRow {
                    seed: realisation_seed(cfg.seed, s as u64),
                    renormalised,
                    eps: eps[j],
                    sup_u: *sup,
                    l2_u: state.as_ref().map(|st| l2_norm(&st.u, &lattice)).unwrap_or(f64::NAN),
                    r,
                    r_smoothed: rs,
                });
            }
        }
    }
    write_csv(&dir.join("converge.csv"), &rows)?;

    let mut medians = Vec::new();
    for renormalised in [true, false] {
        for &e in &eps {
            let pick = |f: fn(&ConvergeRow) -> Option<f64>| -> Option<f64> {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.renormalised == renormalised && r.eps == e)
                    .filter_map(f)
                    .collect();
                (!v.is_empty()).then(|| median(v))
            };
            medians.push(ConvergeMedian {
                renormalised,
                eps: e,
                sup_u: pick(|r| Some(r.sup_u)).unwrap_or(f64::NAN),
                r: pick(|r| r.r),
                r_smoothed: pick(|r| r.r_smoothed),
            });
        }
    }
    write_csv(&dir.join("converge_medians.csv"), &medians)?;

    let column = |renormalised: bool, f: fn(&ConvergeMedian) -> Option<f64>| -> Vec<f64> {
        medians.iter().filter(|m| m.renormalised == renormalised).filter_map(f).collect()
    };
    let verdict = converge_verdict(
        &column(true, |m| m.r),
        &column(false, |m| m.r),
        &column(false, |m| Some(m.sup_u)),
    );
    let smoothed = column(true, |m| m.r_smoothed);
    let metrics = json!({
        "eps": eps,
        "lattice": lattice,
        "seeds": cfg.seeds,
        "constants": consts,
        "verdict": verdict,
        "renormalised_r_smoothed": smoothed,
    });
    Ok((Some(verdict.renormalised_pass && verdict.unrenormalised_pass), metrics, 0))
}

trait MapPair<T> {
    fn map_pair<U>(self, f: impl FnMut(T) -> U) -> [U; 2];
}

impl<T> MapPair<T> for Vec<T> {
    fn map_pair<U>(self, mut f: impl FnMut(T) -> U) -> [U; 2] {
        let mut it = self.into_iter();
        let a = f(it.next().expect("two runs"));
        let b = f(it.next().expect("two runs"));
        [a, b]
    }
}

#[derive(Debug, Clone, Serialize)]
struct ObjectRow {
    object: String,
    window: String,
    mean: Option<f64>,
    se: String,
    expected: String,
    pass: String,
}

fn objects(cfg: &Config, dir: &Path) -> Result<Outcome> {
    let eps = cfg.require_eps()?;
    if cfg.realisations == 0 {
        return Err(Error::Config("`realisations` must be positive".into()));
    }
    let lattice = cfg.lattice(eps)?;
    let spec = MollifierSpec::new(cfg.profile, eps, lattice.d)?;
    let opts = ObjectOptions {
        zero_mode: cfg.zero_mode,
        stride: cfg.stride.max(1),
    };
    let summary = run_ensemble(&spec, &lattice, &cfg.cutoff_kernel()?, cfg.seed, cfg.realisations, &opts)?;
    let na = |v: Option<String>| v.unwrap_or_else(|| "n/a".into());
    let mut rows: Vec<ObjectRow> = summary
        .rows
        .iter()
        .map(|r| ObjectRow {
            object: r.object.clone(),
            window: r.window.name().into(),
            mean: Some(r.mean),
            se: na(r.se.map(|v| format!("{v:e}"))),
            expected: na(r.expected.map(|v| format!("{v:e}"))),
            pass: na(r.pass.map(|p| if p { "PASS" } else { "FAIL" }.to_string())),
        })
        .collect();
    rows.push(ObjectRow {
        object: "translation".into(),
        window: "early-vs-late".into(),
        mean: None,
        se: "n/a".into(),
        expected: "n/a".into(),
        pass: na(summary.translation_pass.map(|p| if p { "PASS" } else { "FAIL" }.to_string())),
    });
    write_csv(&dir.join("objects.csv"), &rows)?;
    let stationary = lattice_c1(&spec, &lattice, LatticeTime::Stationary)?;
    let metrics = json!({
        "realisations": summary.realisations,
        "lattice": lattice,
        "c1_lattice_stationary": stationary,
        "translation_pass": summary.translation_pass,
        "rows": summary.rows,
    });
    Ok((summary.all_pass(), metrics, 0))
}
