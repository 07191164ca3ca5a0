//! The covariance `Q0` of `Psi^Q` and the integrals `I^Q_{00;nm}` against the
//! pieces `K^Q_{nm}`, weighted by `(m + 2) 2^{2n}`.
//!
//! cargo run --release --example iq00_integrals -- 0.1

use fhn_spde::kernel::{CutoffKernel, KernelDecomposition};
use fhn_spde::noise::MollifierProfile;
use fhn_spde::renorm::{iq00_table, MollifierTransform, Q0Table};

fn main() -> fhn_spde::Result<()> {
    let eps: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let tr = MollifierTransform::new(MollifierProfile::Radial)?;
    let q0 = Q0Table::new(&tr, eps)?;
    let (t_max, r_max) = q0.support();
    println!("Q0(0) = {:.6e}, support |t| <= {t_max:.3}, |x| <= {r_max:.3}", q0.at_origin());

    let kd = KernelDecomposition::new(3, 5, CutoffKernel::new(1.0, -1.0, 1.0)?)?;
    let table = iq00_table(&kd, &q0, 5)?;
    for n in 0..=5u32 {
        let (m, w) = table
            .iter()
            .filter(|r| r.0 == n)
            .map(|&(_, m, v)| (m, v.abs() * (m as f64 + 2.0) * 4f64.powi(n as i32)))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        println!("n={n}  max weighted |I| = {w:.4e} at m={m}");
    }
    Ok(())
}
