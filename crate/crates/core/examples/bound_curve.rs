//! Normalized Bnd_A / Bnd_B curves against the expansion size E for the
//! spline and exponential eigenvalue regimes, printed as CSV.
//!
//! cargo run --example bound_curve

use klgp::bounds::{bound_curve, curve_argmin, EpsilonGrid, Estimator};
use klgp::kernel_expansion::EigenSystem;

fn main() -> klgp::Result<()> {
    let e_range: Vec<usize> = (1..=60).collect();
    let grid = EpsilonGrid::default();
    let systems = [
        ("spline", EigenSystem::spline(100)?),
        ("exponential_0.5", EigenSystem::exponential(100, 0.5)?),
    ];
    println!("family,E,bnd_a,bnd_b,lower_bound");
    for (name, sys) in &systems {
        let a = bound_curve(sys, &e_range, 10_000, 0.05, 0.01, Estimator::A, &grid)?;
        let b = bound_curve(sys, &e_range, 10_000, 0.05, 0.01, Estimator::B, &grid)?;
        for (ra, rb) in a.iter().zip(&b) {
            println!(
                "{name},{},{:.6e},{:.6e},{:.6e}",
                ra.e, ra.bnd_normalized, rb.bnd_normalized, ra.lower_bound_normalized
            );
        }
        eprintln!(
            "{name}: argmin Bnd_A = {:?}, argmin Bnd_B = {:?}",
            curve_argmin(&a),
            curve_argmin(&b)
        );
    }
    Ok(())
}
