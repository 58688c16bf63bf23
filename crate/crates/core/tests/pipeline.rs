//! Library-level flows that cross module boundaries.

use std::sync::Arc;

use klgp::consensus::{distributed_fit_a, distributed_fit_b, ConsensusConfig, NetworkTopology};
use klgp::harness::{
    field_pipeline, generate_dataset, read_field_csv, sample_truth, ColumnMapping, FieldConfig,
    FieldSplit,
};
use klgp::kernel_expansion::{Basis, EigenSystem, InputMeasure};
use klgp::linalg::logspace;
use klgp::regression::{estimate_b, SufficientStatistics};
use klgp::tuning::{estimate_noise_variance, tune_b, TuningGrid};
use klgp::Error;

fn spline_data(m: usize, sigma2: f64, seed: u64) -> (Arc<EigenSystem>, klgp::regression::Dataset) {
    let sys = Arc::new(EigenSystem::spline(300).unwrap());
    let truth = sample_truth(&sys, 300, seed).unwrap();
    let data =
        generate_dataset(&truth, &InputMeasure::unit_interval(), m, sigma2, seed + 1).unwrap();
    (sys, data)
}

#[test]
fn noise_variance_is_recovered_from_calibration_data() {
    let (sys, data) = spline_data(4000, 0.04, 1);
    let basis = Arc::new(Basis::kl_eigen(sys, 60).unwrap());
    let s2 = estimate_noise_variance(&data, &basis).unwrap();
    assert!((s2 - 0.04).abs() < 0.005, "sigma2_hat = {s2}");
}

#[test]
fn exact_distributed_b_agrees_with_central_tuning() {
    let (sys, data) = spline_data(25, 0.01, 3);
    let basis = Arc::new(Basis::kl_eigen(sys, 8).unwrap());
    let grid = TuningGrid::new(vec![1e-3, 0.0, 1e3], vec![1, 2, 4, 8]).unwrap();
    let topo = NetworkTopology::ring(25).unwrap();
    let fit =
        distributed_fit_b(&data, &basis, 0.01, &grid, &topo, &ConsensusConfig::exact()).unwrap();
    let stats = SufficientStatistics::from_data(&data, &basis);
    let best = tune_b(&stats, &basis, 0.01, &grid).unwrap().best;
    let central = estimate_b(&stats, &basis, 0.01, best.gamma, best.e_prime).unwrap();
    for agent in &fit.agents {
        assert_eq!(
            (agent.selection.gamma, agent.selection.e_prime),
            (best.gamma, best.e_prime)
        );
        assert!((&agent.estimate.a_hat - &central.a_hat).amax() < 1e-12);
    }
}

#[test]
fn relabeling_agents_does_not_change_the_consensus_fit() {
    let (sys, data) = spline_data(12, 0.01, 5);
    let basis = Arc::new(Basis::kl_eigen(sys, 5).unwrap());
    let topo = NetworkTopology::path(12).unwrap();
    let perm: Vec<usize> = (0..12).rev().collect();
    let reversed = topo.relabeled(&perm).unwrap();
    let cfg = ConsensusConfig {
        tolerance: 1e-12,
        ..Default::default()
    };
    let gammas = logspace(1e-2, 1e2, 9);
    let a = distributed_fit_a(&data, &basis, 0.01, &gammas, &topo, &cfg).unwrap();
    let b = distributed_fit_a(&data, &basis, 0.01, &gammas, &reversed, &cfg).unwrap();
    assert!((&a.agents[0].estimate.a_hat - &b.agents[0].estimate.a_hat).amax() < 1e-8);
}

#[test]
fn edge_list_topologies_are_validated() {
    let topo = NetworkTopology::read_edge_csv("u,v\n0,1\n1,2\n2,3\n".as_bytes(), None).unwrap();
    assert_eq!(topo.node_count(), 4);
    assert_eq!(topo.max_degree(), 2);
    assert!(matches!(
        NetworkTopology::read_edge_csv("0,1\n2,3\n".as_bytes(), None),
        Err(Error::InvalidTopology(_))
    ));
    assert!(matches!(
        NetworkTopology::read_edge_csv("0,1\n1,x\n".as_bytes(), None),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn field_csv_mapping_and_pipeline() {
    let mut text = String::from("station,lon,lat,precip\n");
    for i in 0..300 {
        let lon = -108.0 + (i % 20) as f64 * 0.3;
        let lat = 37.5 + (i / 20) as f64 * 0.25;
        let value =
            (lon * 0.7).sin() * (lat * 0.9).cos() + 0.05 * ((i * 31 % 17) as f64 / 17.0 - 0.5);
        text.push_str(&format!("s{i},{lon},{lat},{value}\n"));
    }
    let mapping = ColumnMapping {
        inputs: vec!["lon".into(), "lat".into()],
        output: "precip".into(),
    };
    let data = read_field_csv(text.as_bytes(), Some(&mapping)).unwrap();
    assert_eq!((data.len(), data.dim()), (300, 2));

    let split = FieldSplit::new(&data, None, 0.25, 2.0 / 3.0, 7).unwrap();
    assert_eq!(
        split.calibration.len() + split.train.len() + split.test.len(),
        300
    );
    for x in split.train.inputs.iter().chain(&split.test.inputs) {
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    let cfg = FieldConfig {
        runs: 2,
        e: 12,
        truncations_b: vec![2, 4, 8, 12],
        seed: 8,
        ..Default::default()
    };
    let report = field_pipeline(&data, None, &cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    for r in &report.rows {
        assert!(r.rss_a_oracle <= r.rss_a_sure + 1e-15);
        assert!(r.rss_b_oracle <= r.rss_b_sure + 1e-15);
        assert!(r.sigma2_hat > 0.0);
    }
}
