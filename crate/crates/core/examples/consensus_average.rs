//! Average consensus on a random geometric network: per-round maximum
//! deviation from the network average under Metropolis and uniform weights.
//!
//! cargo run --example consensus_average

use klgp::consensus::{
    network_average, run_average_consensus, ConsensusConfig, NetworkTopology, WeightRule,
};
use rand::Rng as _;

fn main() -> klgp::Result<()> {
    let n = 40;
    let topology = NetworkTopology::erdos_renyi(n, None, 31)?;
    let mut r = klgp::seeding::rng(32);
    let values: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>() * 10.0]).collect();
    let target = network_average(&values)[0];

    let rules = [
        ("metropolis", WeightRule::Metropolis),
        (
            "uniform",
            WeightRule::Uniform {
                epsilon: 0.9 / topology.max_degree() as f64,
            },
        ),
    ];
    println!("rule,round,max_deviation");
    for (name, rule) in rules {
        let cfg = ConsensusConfig {
            rule,
            tolerance: 1e-8,
            ..Default::default()
        };
        let run = run_average_consensus(&values, &topology, &cfg)?;
        for (k, d) in run.deviation_history.iter().enumerate() {
            println!("{name},{k},{d:.6e}");
        }
        eprintln!(
            "{name}: {} rounds, converged {}, agent 0 holds {:.8} (true average {target:.8})",
            run.rounds, run.converged, run.states[0][0]
        );
    }
    Ok(())
}
