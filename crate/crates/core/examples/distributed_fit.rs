//! Distributed fitting over a sensor network: each agent holds one
//! measurement, and the A and B protocols reach the network-wide estimate
//! through average consensus, including their SURE tuning.
//!
//! cargo run --example distributed_fit

use std::sync::Arc;

use klgp::consensus::{distributed_fit_a, distributed_fit_b, ConsensusConfig, NetworkTopology};
use klgp::harness::{generate_dataset, sample_truth};
use klgp::kernel_expansion::{Basis, EigenSystem, InputMeasure};
use klgp::linalg::logspace;
use klgp::tuning::TuningGrid;

fn main() -> klgp::Result<()> {
    let sigma2 = 0.01;
    let agents = 60;
    let system = Arc::new(EigenSystem::spline(200)?);
    let truth = sample_truth(&system, 200, 41)?;
    let data = generate_dataset(&truth, &InputMeasure::unit_interval(), agents, sigma2, 42)?;
    let basis = Arc::new(Basis::kl_eigen(system, 8)?);
    let topology = NetworkTopology::erdos_renyi(agents, None, 43)?;
    let cfg = ConsensusConfig {
        tolerance: 1e-10,
        ..Default::default()
    };

    let a = distributed_fit_a(
        &data,
        &basis,
        sigma2,
        &logspace(1e-3, 1e3, 30),
        &topology,
        &cfg,
    )?;
    let grid = TuningGrid::new(vec![1e-3, 0.0, 1e3], vec![1, 2, 4, 8])?;
    let b = distributed_fit_b(&data, &basis, sigma2, &grid, &topology, &cfg)?;

    for fit in [&a, &b] {
        println!("{}", serde_json::to_string_pretty(&fit.summary)?);
        let agent0 = &fit.agents[0];
        println!(
            "agent 0: gamma {:.3e}, E' {}, f(0.5) = {:.5}",
            agent0.selection.gamma,
            agent0.selection.e_prime,
            agent0.estimate.predict(&[0.5])
        );
    }
    println!("true f(0.5) = {:.5}", truth.eval(&[0.5]));
    Ok(())
}
