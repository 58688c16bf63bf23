//! The field-data pipeline on a synthetic two-dimensional field: split into
//! calibration, training and test sets, estimate the noise variance, fit A
//! and B with SURE and oracle tuning, and report the test RSS.
//!
//! cargo run --example field_pipeline

use klgp::harness::{field_pipeline, FieldConfig};
use klgp::regression::Dataset;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

fn main() -> klgp::Result<()> {
    let mut r = klgp::seeding::rng(51);
    let noise = Normal::new(0.0, 0.2).expect("valid normal");
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for _ in 0..600 {
        let lon = -109.0 + 7.0 * r.random::<f64>();
        let lat = 37.0 + 4.0 * r.random::<f64>();
        let value = (lon * 0.8).sin() + 0.5 * (lat * 1.3).cos() + noise.sample(&mut r);
        inputs.push(vec![lon, lat]);
        outputs.push(value);
    }
    let data = Dataset::new(inputs, outputs, 0.0)?;

    let cfg = FieldConfig {
        runs: 3,
        e: 20,
        seed: 52,
        ..Default::default()
    };
    let report = field_pipeline(&data, None, &cfg)?;
    report.write_csv(std::io::stdout())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
