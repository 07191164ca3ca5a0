//! The stepper against two independent constructions: the Picard iteration
//! of the mild formulation, and `v` rebuilt from `u` through `S^Q`.
//!
//! cargo run --release --example mild_solution

use fhn_spde::noise::SpaceTimeLattice;
use fhn_spde::renorm::CubicCoefficients;
use fhn_spde::solver::{picard_mild, simulate, simulate_recording, v_via_sq, Forcing, InitialData, SolverConfig};

fn main() -> fhn_spde::Result<()> {
    for dt in [1.0 / 256.0, 1.0 / 512.0, 1.0 / 1024.0] {
        let lattice = SpaceTimeLattice::new(1, 32, 1.0, dt, (0.1 / dt) as usize)?;
        let cfg = SolverConfig {
            forcing: Forcing::Smooth { mode: 1, amplitude: 3.0, omega: 10.0 },
            init: InitialData::Cosine { mode: 1, u_amp: 1.0, v_amp: 0.2 },
            ..SolverConfig::new(lattice, CubicCoefficients::standard_fhn(), 0.25, 1)
        };
        let pic = picard_mild(&cfg, 60)?;
        let step = simulate(&cfg)?.final_state;
        let gap = pic.state.u.iter().zip(&step.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let (end, forcing) = simulate_recording(&cfg)?;
        let via = v_via_sq(&cfg, &forcing)?;
        let sq = end.v.iter().zip(&via).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!(
            "dt = {dt:.2e}: {} Picard iterations, |u_picard - u_step| = {gap:.3e}, |v - v_SQ| = {sq:.3e}",
            pic.residuals.len()
        );
    }
    Ok(())
}
