use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::topology::NetworkTopology;
use crate::error::{ensure, Error, Result};

/// Rule for the symmetric doubly stochastic consensus weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightRule {
    /// `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges, `w_ii = 1 - sum_j w_ij`.
    Metropolis,
    /// `w_ij = epsilon` on edges, `w_ii = 1 - epsilon deg_i`; needs
    /// `0 < epsilon < 1 / max_degree`.
    Uniform { epsilon: f64 },
}

/// Sparse row representation of the consensus weight matrix.
#[derive(Clone, Debug)]
pub struct WeightMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    pub fn new(topology: &NetworkTopology, rule: WeightRule) -> Result<Self> {
        let n = topology.node_count();
        if let WeightRule::Uniform { epsilon } = rule {
            let dmax = topology.max_degree() as f64;
            ensure(epsilon > 0.0 && epsilon * dmax < 1.0, || {
                format!("uniform weight must lie in (0, 1/{dmax}), got {epsilon}")
            })?;
        }
        let rows = (0..n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = topology
                    .neighbors(i)
                    .iter()
                    .map(|&j| {
                        let w = match rule {
                            WeightRule::Metropolis => {
                                1.0 / (1.0 + topology.degree(i).max(topology.degree(j)) as f64)
                            }
                            WeightRule::Uniform { epsilon } => epsilon,
                        };
                        (j, w)
                    })
                    .collect();
                let off: f64 = row.iter().map(|&(_, w)| w).sum();
                row.push((i, 1.0 - off));
                row.sort_unstable_by_key(|&(j, _)| j);
                row
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// Nonzero entries `(j, w_ij)` of row `i`, ordered by `j`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut w = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                w[(i, j)] = v;
            }
        }
        w
    }
}

fn default_tolerance() -> f64 {
    1e-9
}

fn default_max_rounds() -> usize {
    100_000
}

/// Averaging settings. `exact = true` replaces the iteration by an oracle
/// that hands every agent the network average directly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    #[serde(flatten)]
    pub rule: WeightRule,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default)]
    pub exact: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            rule: WeightRule::Metropolis,
            tolerance: default_tolerance(),
            max_rounds: default_max_rounds(),
            exact: false,
        }
    }
}

impl ConsensusConfig {
    pub fn exact() -> Self {
        Self {
            exact: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.tolerance >= 0.0 && self.tolerance.is_finite(), || {
            format!(
                "consensus tolerance must be nonnegative, got {}",
                self.tolerance
            )
        })
    }
}

/// Outcome of one averaging run.
#[derive(Clone, Debug)]
pub struct ConsensusRun {
    /// Final per-agent vectors.
    pub states: Vec<Vec<f64>>,
    /// The network average the agents were driven toward.
    pub average: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
    /// Max deviation from the average before round 1 and after each round.
    pub deviation_history: Vec<f64>,
}

impl ConsensusRun {
    pub fn max_deviation(&self) -> f64 {
        *self.deviation_history.last().unwrap_or(&0.0)
    }
}

/// Coordinatewise mean, summed in agent order and divided by the count.
pub fn network_average(states: &[Vec<f64>]) -> Vec<f64> {
    let d = states.first().map_or(0, Vec::len);
    let mut sum = vec![0.0; d];
    for s in states {
        for (acc, v) in sum.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let n = states.len() as f64;
    sum.into_iter().map(|s| s / n).collect()
}

fn max_deviation(states: &[Vec<f64>], average: &[f64]) -> f64 {
    states
        .iter()
        .flat_map(|s| s.iter().zip(average).map(|(x, a)| (x - a).abs()))
        .fold(0.0, f64::max)
}

/// Synchronous average consensus `x <- W x` on vector-valued states. Stops
/// as soon as every coordinate of every agent is within `tolerance` of the
/// network average, or after `max_rounds` with `converged = false`.
pub fn run_average_consensus(
    initial: &[Vec<f64>],
    topology: &NetworkTopology,
    config: &ConsensusConfig,
) -> Result<ConsensusRun> {
    config.validate()?;
    let n = topology.node_count();
    if initial.len() != n {
        return Err(Error::InvalidTopology(format!(
            "{} agent states for a {n}-node network",
            initial.len()
        )));
    }
    let d = initial[0].len();
    ensure(initial.iter().all(|s| s.len() == d), || {
        "agent states differ in length".into()
    })?;
    let average = network_average(initial);
    if config.exact {
        return Ok(ConsensusRun {
            states: vec![average.clone(); n],
            average,
            rounds: 0,
            converged: true,
            deviation_history: vec![0.0],
        });
    }
    let weights = WeightMatrix::new(topology, config.rule)?;
    let mut states = initial.to_vec();
    let mut history = vec![max_deviation(&states, &average)];
    let mut rounds = 0;
    while *history.last().unwrap() > config.tolerance && rounds < config.max_rounds {
        states = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut next = vec![0.0; d];
                for &(j, w) in weights.row(i) {
                    for (acc, v) in next.iter_mut().zip(&states[j]) {
                        *acc += w * v;
                    }
                }
                next
            })
            .collect();
        rounds += 1;
        history.push(max_deviation(&states, &average));
    }
    let converged = *history.last().unwrap() <= config.tolerance;
    Ok(ConsensusRun {
        states,
        average,
        rounds,
        converged,
        deviation_history: history,
    })
}
