//! Average consensus over an agent network and the two distributed
//! regression protocols built on it.

mod averaging;
mod protocols;
mod topology;

pub use averaging::{
    network_average, run_average_consensus, ConsensusConfig, ConsensusRun, WeightMatrix, WeightRule,
};
pub use protocols::{
    distributed_fit_a, distributed_fit_b, AgentFit, DistributedFit, DistributedSummary,
};
pub use topology::NetworkTopology;
