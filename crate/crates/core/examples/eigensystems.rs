//! Analytic and numerical eigensystems: the spline kernel's closed-form
//! spectrum next to its kernel-matrix approximation, a Gaussian-kernel
//! eigensystem under a Gaussian input measure, and a Nystrom basis.
//!
//! cargo run --example eigensystems

use klgp::kernel_expansion::{
    expected_gram, Basis, EigenSystem, GramMethod, InputMeasure, KernelSpec, Sampling,
};

fn main() -> klgp::Result<()> {
    let analytic = EigenSystem::spline(8)?;
    let numerical = EigenSystem::numerical(
        &KernelSpec::SplineFirstOrder,
        &InputMeasure::unit_interval(),
        800,
        8,
        1,
        Sampling::Stratified,
    )?;
    println!("e,lambda_analytic,lambda_numerical,phi_analytic(0.3),phi_numerical(0.3)");
    for e in 0..8 {
        println!(
            "{},{:.6e},{:.6e},{:.4},{:.4}",
            e + 1,
            analytic.lambda(e),
            numerical.lambda(e),
            analytic.phi(e, &[0.3]),
            numerical.phi(e, &[0.3])
        );
    }
    println!("tail beyond E=8: analytic {:.6e}", analytic.tail_sum(8));

    let gaussian = KernelSpec::gaussian(0.2)?;
    let measure = InputMeasure::gaussian(0.0, 1.0);
    let g_sys = EigenSystem::numerical(&gaussian, &measure, 600, 6, 2, Sampling::Iid)?;
    println!(
        "gaussian kernel under N(0,1): lambdas {:?}",
        g_sys.lambdas()
    );

    let mut r = klgp::seeding::rng(3);
    let anchors = measure.sample_n(200, Sampling::Iid, &mut r);
    let nystrom = Basis::nystrom(&gaussian, anchors, 10)?;
    let gram = expected_gram(&nystrom, &measure, GramMethod::ClosedForm)?;
    println!(
        "Nystrom basis {}: dim {}, expected Gram diagonal {:?}",
        nystrom.id(),
        nystrom.dim(),
        gram.diagonal()
            .iter()
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
