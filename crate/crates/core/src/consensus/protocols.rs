use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::averaging::{run_average_consensus, ConsensusConfig, ConsensusRun};
use super::topology::NetworkTopology;
use crate::error::{Error, Result};
use crate::kernel_expansion::Basis;
use crate::regression::{
    aggregate_statistics, estimate_a, local_statistics, CoefficientEstimate, Dataset,
    SufficientStatistics,
};
use crate::tuning::{b_family, select_b, tune_a, SureEvaluation, TuningGrid};

/// One agent's tuned estimate after the protocol finishes.
#[derive(Clone, Debug)]
pub struct AgentFit {
    pub estimate: CoefficientEstimate,
    pub selection: SureEvaluation,
}

/// Communication and agreement summary of a distributed fit.
#[derive(Clone, Debug, Serialize)]
pub struct DistributedSummary {
    pub protocol: &'static str,
    pub agents: usize,
    /// Rounds of each consensus stage.
    pub rounds: Vec<usize>,
    /// Scalars each agent sends per round, summed over stages.
    pub payload_scalars_per_round: usize,
    /// Scalars each agent sends over the whole run.
    pub scalars_sent_per_agent: usize,
    pub converged: bool,
    /// Largest spread of any coefficient across agents.
    pub max_disagreement: f64,
    /// Largest deviation of any consensus state from its network average.
    pub consensus_deviation: f64,
}

#[derive(Clone, Debug)]
pub struct DistributedFit {
    pub agents: Vec<AgentFit>,
    pub summary: DistributedSummary,
}

fn check_network(data: &Dataset, topology: &NetworkTopology) -> Result<()> {
    if topology.node_count() != data.len() {
        return Err(Error::InvalidTopology(format!(
            "{} agents but {} measurements; each agent holds one",
            topology.node_count(),
            data.len()
        )));
    }
    Ok(())
}

fn spread(agents: &[AgentFit]) -> f64 {
    let e = agents[0].estimate.a_hat.len();
    (0..e)
        .map(|k| {
            let (lo, hi) = agents
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
                    let v = a.estimate.a_hat[k];
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Run `f` once per agent state; agents holding bit-identical states share
/// one evaluation.
fn per_agent<T: Clone + Send + Sync>(
    states: &[Vec<f64>],
    f: impl Fn(&[f64]) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if states.windows(2).all(|w| w[0] == w[1]) {
        let one = f(&states[0])?;
        return Ok(vec![one; states.len()]);
    }
    states.par_iter().map(|s| f(s)).collect()
}

/// Protocol A: average `(G_m^T G_m, G_m^T y_m)` by consensus (`E^2 + E`
/// scalars per round), then every agent tunes gamma by SURE and solves the
/// A system on its own copy of the statistics.
pub fn distributed_fit_a(
    data: &Dataset,
    basis: &Arc<Basis>,
    sigma2: f64,
    gammas: &[f64],
    topology: &NetworkTopology,
    config: &ConsensusConfig,
) -> Result<DistributedFit> {
    check_network(data, topology)?;
    let e = basis.dim();
    let m = data.len();
    let locals: Vec<(DMatrix<f64>, DVector<f64>)> = data
        .inputs
        .iter()
        .zip(&data.outputs)
        .map(|(x, y)| local_statistics(x, *y, basis))
        .collect();
    let fit_from = |stats: &SufficientStatistics| -> Result<AgentFit> {
        let outcome = tune_a(stats, basis.precision(), sigma2, gammas)?;
        let estimate = estimate_a(stats, basis, sigma2, outcome.best.gamma)?;
        Ok(AgentFit {
            estimate,
            selection: outcome.best,
        })
    };
    let (agents, run) = if config.exact {
        let stats = aggregate_statistics(&locals)?;
        let fit = fit_from(&stats)?;
        (vec![fit; m], None)
    } else {
        let payloads: Vec<Vec<f64>> = locals
            .iter()
            .map(|(v, z)| v.iter().chain(z.iter()).copied().collect())
            .collect();
        let run = run_average_consensus(&payloads, topology, config)?;
        let agents = per_agent(&run.states, |s| {
            let stats = SufficientStatistics {
                v: DMatrix::from_column_slice(e, e, &s[..e * e]),
                z: DVector::from_column_slice(&s[e * e..]),
                m,
            };
            fit_from(&stats)
        })?;
        (agents, Some(run))
    };
    let payload = e * e + e;
    Ok(finish("A", agents, payload, &[(payload, run)]))
}

fn finish(
    protocol: &'static str,
    agents: Vec<AgentFit>,
    payload: usize,
    stages: &[(usize, Option<ConsensusRun>)],
) -> DistributedFit {
    let rounds: Vec<usize> = stages
        .iter()
        .map(|(_, r)| r.as_ref().map_or(0, |r| r.rounds))
        .collect();
    let sent = stages.iter().zip(&rounds).map(|((p, _), r)| p * r).sum();
    let summary = DistributedSummary {
        protocol,
        agents: agents.len(),
        rounds,
        payload_scalars_per_round: payload,
        scalars_sent_per_agent: sent,
        converged: stages
            .iter()
            .all(|(_, r)| r.as_ref().is_none_or(|r| r.converged)),
        max_disagreement: spread(&agents),
        consensus_deviation: stages
            .iter()
            .filter_map(|(_, r)| r.as_ref().map(ConsensusRun::max_deviation))
            .fold(0.0, f64::max),
    };
    DistributedFit { agents, summary }
}

/// Protocol B: a first consensus on `G_m^T y_m` (`E` scalars per round)
/// gives every agent `z` and hence the whole `(gamma, E')` family; a second
/// consensus on the stacked products `G_m^T G_m a_hat(gamma, E')`
/// (`|Gamma| |Omega| E` scalars per round) gives the predicted `z_hat`
/// needed for SURE. Each agent then selects its own `(gamma, E')`.
pub fn distributed_fit_b(
    data: &Dataset,
    basis: &Arc<Basis>,
    sigma2: f64,
    grid: &TuningGrid,
    topology: &NetworkTopology,
    config: &ConsensusConfig,
) -> Result<DistributedFit> {
    check_network(data, topology)?;
    let e = basis.dim();
    let m = data.len();
    let features: Vec<DVector<f64>> = data
        .inputs
        .iter()
        .map(|x| DVector::from_vec(basis.eval(x)))
        .collect();
    let stage1: Vec<Vec<f64>> = features
        .iter()
        .zip(&data.outputs)
        .map(|(g, y)| g.iter().map(|v| v * y).collect())
        .collect();
    let run1 = run_average_consensus(&stage1, topology, config)?;
    let zs: Vec<DVector<f64>> = run1
        .states
        .iter()
        .map(|s| DVector::from_column_slice(s))
        .collect();
    let families = per_agent(&run1.states, |s| {
        b_family(&DVector::from_column_slice(s), m, basis, sigma2, grid)
    })?;
    let count = families[0].len();
    if families.iter().any(|f| f.len() != count) {
        return Err(Error::NumericalFailure(
            "agents disagree on which (gamma, E') candidates are solvable".into(),
        ));
    }
    // G_m^T G_m a = g_m (g_m^T a)
    let stage2: Vec<Vec<f64>> = features
        .iter()
        .zip(&families)
        .map(|(g, fam)| {
            fam.iter()
                .flat_map(|c| {
                    let s = g.dot(&c.a_hat);
                    g.iter().map(move |v| v * s)
                })
                .collect()
        })
        .collect();
    let run2 = run_average_consensus(&stage2, topology, config)?;
    let agents: Vec<AgentFit> = (0..m)
        .into_par_iter()
        .map(|i| {
            let fam = &families[i];
            let zhat: Vec<DVector<f64>> = run2.states[i]
                .chunks(e)
                .map(DVector::from_column_slice)
                .collect();
            let outcome = select_b(&zs[i], fam, &zhat, basis, sigma2, m)?;
            let best = fam
                .iter()
                .find(|c| c.gamma == outcome.best.gamma && c.e_prime == outcome.best.e_prime)
                .expect("selected candidate belongs to the family");
            Ok(AgentFit {
                estimate: CoefficientEstimate {
                    a_hat: best.a_hat.clone(),
                    basis: basis.clone(),
                    gamma: best.gamma,
                    e_prime: best.e_prime,
                },
                selection: outcome.best,
            })
        })
        .collect::<Result<_>>()?;
    let second = grid.gammas.len() * grid.truncations.len() * e;
    let (r1, r2) = if config.exact {
        (None, None)
    } else {
        (Some(run1), Some(run2))
    };
    Ok(finish("B", agents, e + second, &[(e, r1), (second, r2)]))
}
