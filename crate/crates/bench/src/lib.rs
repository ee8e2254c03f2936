//! Shared fixtures for the benchmarks.

use orbit_prestore::ac::{self, AgentParams};
use orbit_prestore::graph::ContactGraph;
use orbit_prestore::harness::{build_graph, build_initials, build_requests, ExperimentConfig};
use orbit_prestore::requests::RequestMatrix;

/// A preset's graph, one request realization and seeded random initials.
pub struct Fixture {
    pub cfg: ExperimentConfig,
    pub graph: ContactGraph,
    pub requests: RequestMatrix,
    pub agents: Vec<AgentParams>,
}

impl Fixture {
    pub fn new(preset: &str, seed: u64) -> Self {
        let cfg = ExperimentConfig::preset(preset).expect("known preset");
        let graph = build_graph(&cfg).expect("valid preset");
        let requests = build_requests(&cfg, seed);
        let agents = build_initials(&cfg, &graph, seed);
        Self { cfg, graph, requests, agents }
    }

    pub fn train_config(&self, epochs: usize) -> ac::TrainConfig {
        ac::TrainConfig { epochs, ..self.cfg.train_config(self.cfg.seed) }
    }
}
