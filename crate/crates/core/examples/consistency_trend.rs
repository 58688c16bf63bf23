//! Error of the A and B estimators as the sample size M grows, both at a
//! fixed expansion size and with E = ceil(sqrt(M)).
//!
//! cargo run --release --example consistency_trend

use klgp::harness::{consistency_trend_experiment, TrendConfig};

fn main() -> klgp::Result<()> {
    let cfg = TrendConfig {
        m_grid: vec![100, 400, 1600],
        runs: 40,
        seed: 61,
        ..Default::default()
    };
    let table = consistency_trend_experiment(&cfg)?;
    table.write_csv(std::io::stdout())?;
    Ok(())
}
