//! Monte Carlo comparison of SURE-tuned and oracle-tuned estimators; S_p is
//! the mean ratio of oracle to SURE error.
//!
//! cargo run --release --example sure_study

use klgp::harness::{sure_vs_oracle_experiment, SureStudyConfig};

fn main() -> klgp::Result<()> {
    let cfg = SureStudyConfig {
        runs: 20,
        e: 100,
        truncations_b: vec![1, 5, 10, 20, 50, 100],
        seed: 71,
        ..Default::default()
    };
    let study = sure_vs_oracle_experiment(&cfg)?;
    study.write_csv(std::io::stdout())?;
    eprintln!(
        "S_p = {:.4} (A {:.4}, B {:.4}); oracle never worse than SURE: {}",
        study.s_p, study.s_p_a, study.s_p_b, study.oracle_dominates
    );
    Ok(())
}
