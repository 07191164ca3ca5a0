//! Sweep the derivative and moment bounds of the pieces `K^Q_{nm}` and print
//! the worst normalised ratio per level.
//!
//! cargo run --release --example kernel_bounds -- 4

use fhn_spde::kernel::{verify_derivative_bounds, verify_moment_bounds, CutoffKernel, KernelDecomposition};
use fhn_spde::scaling::{Multiindex, Scaling};
use std::time::Instant;

fn main() -> fhn_spde::Result<()> {
    let n_max: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let kd = KernelDecomposition::new(3, n_max, CutoffKernel::new(1.0, -1.0, 1.0)?)?;
    let ks = Multiindex::up_to_degree(&Scaling::parabolic(3), 2);

    let start = Instant::now();
    let rows = verify_derivative_bounds(&kd, 0..=n_max, &ks, 16, 1)?;
    println!("derivative sweep: {} rows in {:.1?}", rows.len(), start.elapsed());
    for n in 0..=n_max {
        let worst = rows.iter().filter(|r| r.n == n).map(|r| r.normalised).fold(0.0, f64::max);
        println!("  n={n}  max ratio {worst:.4e}");
    }

    let start = Instant::now();
    let rows = verify_moment_bounds(&kd, 0..=n_max, 2, 1e-8)?;
    println!("moment sweep: {} rows in {:.1?}", rows.len(), start.elapsed());
    for n in 0..=n_max {
        let worst = rows.iter().filter(|r| r.n == n).map(|r| r.normalised).fold(0.0, f64::max);
        println!("  n={n}  max ratio {worst:.4e}");
    }
    Ok(())
}
