//! Renormalisation constants across dyadic `eps`: continuum and lattice `C1`,
//! continuum `C2`, and their divergence fits.
//!
//! cargo run --release --example constants

use fhn_spde::noise::{MollifierProfile, MollifierSpec, SpaceTimeLattice};
use fhn_spde::renorm::{
    c1_continuum, c2_constant, divergence_fit, lattice_c1, C2Options, FitModel, LatticeTime, MollifierTransform,
};

fn main() -> fhn_spde::Result<()> {
    let tr = MollifierTransform::new(MollifierProfile::Radial)?;
    let eps: Vec<f64> = (2..=5).map(|j| 0.5f64.powi(j)).collect();
    // one lattice resolving the smallest eps
    let lattice = SpaceTimeLattice::new(3, 64, 1.0, 2f64.powi(-12), 1)?;
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    println!("{:>9} {:>12} {:>12} {:>12}", "eps", "C1", "C1 lattice", "C2");
    for &e in &eps {
        let cont = c1_continuum(&tr, e, 2.0)?;
        let spec = MollifierSpec::new(MollifierProfile::Radial, e, 3)?;
        let lat = lattice_c1(&spec, &lattice, LatticeTime::Stationary)?;
        let k2 = c2_constant(&tr, e, &C2Options::default())?;
        println!("{e:>9.5} {cont:>12.6} {lat:>12.6} {k2:>12.6}");
        c1.push((e, cont));
        c2.push((e, k2));
    }
    let f1 = divergence_fit(&c1, FitModel::Power)?;
    let f2 = divergence_fit(&c2, FitModel::Log)?;
    println!("C1 ~ eps^{:.3}", f1.slope);
    println!("C2 ~ {:.3e} log(1/eps) + {:.3e}", f2.slope, f2.intercept);
    Ok(())
}
