//! Select the regularization gamma of estimator A and the (gamma, E')
//! pair of estimator B by minimizing SURE, printing both traces.
//!
//! cargo run --example sure_tuning

use std::sync::Arc;

use klgp::harness::{generate_dataset, sample_truth};
use klgp::kernel_expansion::{Basis, EigenSystem, InputMeasure};
use klgp::linalg::logspace;
use klgp::regression::SufficientStatistics;
use klgp::tuning::{tune_a, tune_b, write_trace, TuningGrid};

fn main() -> klgp::Result<()> {
    let sigma2 = 0.01;
    let system = Arc::new(EigenSystem::spline(400)?);
    let truth = sample_truth(&system, 400, 21)?;
    let data = generate_dataset(&truth, &InputMeasure::unit_interval(), 500, sigma2, 22)?;
    let basis = Arc::new(Basis::kl_eigen(system, 100)?);
    let stats = SufficientStatistics::from_data(&data, &basis);

    let a = tune_a(&stats, basis.precision(), sigma2, &logspace(1e-3, 1e3, 25))?;
    println!("# estimator A");
    write_trace(&a.trace, std::io::stdout())?;

    let grid = TuningGrid::new(vec![1e-3, 0.0, 1e3], vec![1, 5, 10, 20, 50, 100])?;
    let b = tune_b(&stats, &basis, sigma2, &grid)?;
    println!("# estimator B");
    write_trace(&b.trace, std::io::stdout())?;

    eprintln!("A: gamma = {:.4e}, J = {:.4e}", a.best.gamma, a.best.j);
    eprintln!(
        "B: gamma = {:.4e}, E' = {}, J = {:.4e}",
        b.best.gamma, b.best.e_prime, b.best.j
    );
    Ok(())
}
