//! Monte Carlo statistics of `Psi`, `Psi^Q` and the Wick powers on a small
//! lattice, compared with the lattice `C1`.
//!
//! cargo run --release --example stochastic_objects

use fhn_spde::kernel::CutoffKernel;
use fhn_spde::noise::{MollifierProfile, MollifierSpec, SpaceTimeLattice};
use fhn_spde::objects::{run_ensemble, ObjectOptions};

fn main() -> fhn_spde::Result<()> {
    let eps = 0.25;
    let lattice = SpaceTimeLattice::new(3, 16, 1.0, 1.0 / 64.0, 32)?;
    let spec = MollifierSpec::new(MollifierProfile::Radial, eps, 3)?;
    let q = CutoffKernel::new(1.0, -1.0, 1.0)?;
    let summary = run_ensemble(&spec, &lattice, &q, 7, 32, &ObjectOptions::default())?;
    for r in &summary.rows {
        let se = r.se.map(|s| format!("{s:.2e}")).unwrap_or_else(|| "n/a".into());
        let expected = r.expected.map(|e| format!("{e:.4e}")).unwrap_or_else(|| "-".into());
        println!("{:>9} {:>5}  mean {:>11.4e}  se {se:>9}  expected {expected}", r.object, r.window.name(), r.mean);
    }
    println!("translation diagnostic: {:?}", summary.translation_pass);
    Ok(())
}
