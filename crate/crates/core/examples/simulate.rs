//! One renormalised run of the standard FitzHugh-Nagumo system in `d = 3`.
//!
//! cargo run --release --example simulate -- 0.25

use fhn_spde::config::Config;
use fhn_spde::experiments::solver_constants;
use fhn_spde::solver::{simulate, Forcing, SolverConfig};

fn main() -> fhn_spde::Result<()> {
    let eps: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let cfg = Config {
        n: 16,
        t_end: 0.125,
        ..Config::default()
    };
    let lattice = cfg.lattice(eps)?;
    let mut sc = SolverConfig::new(lattice, cfg.coefficients(), eps, cfg.seed);
    sc.forcing = Forcing::Noise { profile: cfg.profile };
    sc.renorm = solver_constants(&cfg, eps, &lattice)?;
    println!("C1 = {:.5}, C2 = {:.5}, drift shift c1 = {:.5}", sc.renorm.big_c1, sc.renorm.big_c2, sc.renorm.c1);
    let traj = simulate(&sc)?.completed()?;
    for o in traj.observations.iter().step_by(2) {
        println!("t = {:.4}  sup|u| = {:.4}  |u|_2 = {:.4}  |v|_2 = {:.4}", o.t, o.sup_u, o.l2_u, o.l2_v);
    }
    Ok(())
}
