//! Coupled runs over halving `eps` with and without renormalisation, all
//! driven by the same white noise. Prints the distances between successive
//! final states in `L2` and after heat smoothing.
//!
//! cargo run --release --example coupled_convergence

use fhn_spde::config::Config;
use fhn_spde::experiments::solver_constants;
use fhn_spde::renorm::RenormConstants;
use fhn_spde::solver::{heat_smooth, l2_norm, simulate_coupled, Forcing, SolverConfig};

fn main() -> fhn_spde::Result<()> {
    let cfg = Config {
        n: 16,
        t_end: 0.125,
        ..Config::default()
    };
    let eps = [0.5, 0.25, 0.125];
    let lattice = cfg.lattice(0.125)?;
    let mut finals = Vec::new();
    for &e in &eps {
        let on = SolverConfig {
            forcing: Forcing::Noise { profile: cfg.profile },
            renorm: solver_constants(&cfg, e, &lattice)?,
            ..SolverConfig::new(lattice, cfg.coefficients(), e, 11)
        };
        let off = SolverConfig {
            renorm: RenormConstants::off(e),
            ..on
        };
        let runs = simulate_coupled(&[on, off])?;
        finals.push([runs[0].final_state.u.clone(), runs[1].final_state.u.clone()]);
    }
    for (mode, name) in ["renormalised", "bare"].iter().enumerate() {
        for j in 0..eps.len() - 1 {
            let d: Vec<f64> = finals[j][mode].iter().zip(&finals[j + 1][mode]).map(|(a, b)| a - b).collect();
            println!(
                "{name:>12} eps {:.3} -> {:.3}: L2 {:.4}, smoothed {:.4}",
                eps[j],
                eps[j + 1],
                l2_norm(&d, &lattice),
                l2_norm(&heat_smooth(&d, &lattice, 1e-2), &lattice)
            );
        }
    }
    Ok(())
}
