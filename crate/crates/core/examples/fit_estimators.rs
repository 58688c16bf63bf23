//! Fit the A, B and MAP estimators to one synthetic data set drawn from the
//! spline-kernel prior and compare their MSE under the input measure.
//!
//! cargo run --example fit_estimators

use std::sync::Arc;

use klgp::harness::{generate_dataset, mse_under_mu, sample_truth, MseMethod};
use klgp::kernel_expansion::{Basis, EigenSystem, InputMeasure, KernelSpec};
use klgp::regression::{estimate_a, estimate_b, estimate_map, SufficientStatistics};

fn main() -> klgp::Result<()> {
    let sigma2 = 0.01;
    let measure = InputMeasure::unit_interval();
    let system = Arc::new(EigenSystem::spline(400)?);
    let truth = sample_truth(&system, 400, 11)?;
    let data = generate_dataset(&truth, &measure, 300, sigma2, 12)?;
    let method = MseMethod::Quadrature { n: 4000 };

    let basis = Arc::new(Basis::kl_eigen(system.clone(), 20)?);
    let stats = SufficientStatistics::from_data(&data, &basis);
    let a = estimate_a(&stats, &basis, sigma2, 1.0)?;
    let b = estimate_b(&stats, &basis, sigma2, 1.0, 20)?;
    let map = estimate_map(&data, &KernelSpec::SplineFirstOrder, 1.0)?;

    println!("estimator,mse");
    println!(
        "A(E=20),{:.6e}",
        mse_under_mu(|x| a.predict(x), &truth, &measure, method)?
    );
    println!(
        "B(E=20),{:.6e}",
        mse_under_mu(|x| b.predict(x), &truth, &measure, method)?
    );
    println!(
        "MAP,{:.6e}",
        mse_under_mu(|x| map.predict(x), &truth, &measure, method)?
    );
    println!("prior variance,{:.6e}", system.tail_sum(0));
    Ok(())
}
