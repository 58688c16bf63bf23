//! Bnd_A, Bnd_B and the lower bound next to Monte Carlo estimates of the
//! A and B errors, for a handful of expansion sizes.
//!
//! cargo run --release --example bounds_vs_monte_carlo

use klgp::harness::{bounds_experiment, BoundsConfig};

fn main() -> klgp::Result<()> {
    let cfg = BoundsConfig {
        m: 2000,
        e_grid: vec![1, 2, 4, 7, 10, 20, 40],
        mc_runs: 20,
        seed: 81,
        ..Default::default()
    };
    let table = bounds_experiment(&cfg)?;
    table.write_csv(std::io::stdout())?;
    eprintln!(
        "argmin Bnd_A = {:?}, argmin Bnd_B = {:?}",
        table.argmin_a, table.argmin_b
    );
    Ok(())
}
