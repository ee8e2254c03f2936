//! Experiment orchestration: configs, seeding, checkpoints, commands and
//! paired comparison studies.

pub mod commands;
pub mod config;
pub mod gradcheck;
pub mod manifest;
pub mod stats;
pub mod studies;

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::ac::{self, AgentParams};
use crate::env::EnvError;
use crate::graph::{ContactGraph, GraphError};
use crate::meta::{MetaError, Scene};
use crate::nn::{DenseNet, NetError};
use crate::requests::{RequestError, RequestMatrix};
use crate::seed::{streams, SeedStream};

pub use config::{ConfigError, ExperimentConfig};
pub use manifest::{OutDir, RunManifest};

pub const WORKERS_ENV: &str = "ORBIT_PRESTORE_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Requests(#[from] RequestError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

/// Seed of the `i`-th paired run of a study.
pub fn run_seed(master: u64, i: usize) -> u64 {
    SeedStream::new(master).child("run", i as u64).seed()
}

pub fn graph_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.graph_seed
        .unwrap_or_else(|| SeedStream::new(cfg.seed).derive(streams::GRAPH).seed())
}

/// The constellation of a config (fixed across a study's runs).
pub fn build_graph(cfg: &ExperimentConfig) -> Result<ContactGraph, HarnessError> {
    Ok(ContactGraph::generate(&cfg.constellation(graph_seed(cfg)))?)
}

/// The request realization for run seed `seed`.
pub fn build_requests(cfg: &ExperimentConfig, seed: u64) -> RequestMatrix {
    let stream = match cfg.request_seed {
        Some(s) => SeedStream::new(s),
        None => SeedStream::new(seed).derive(streams::REQUESTS),
    };
    cfg.distribution().sample(cfg.files, cfg.horizon, &mut stream.rng())
}

/// Random initials for run seed `seed`.
pub fn build_initials(cfg: &ExperimentConfig, graph: &ContactGraph, seed: u64) -> Vec<AgentParams> {
    let scene = scene(cfg, graph);
    let mut rng = SeedStream::new(seed).derive(streams::INIT).rng();
    ac::init_agents(cfg.files, scene.dims(), &cfg.hidden, &mut rng)
}

pub fn scene<'a>(cfg: &ExperimentConfig, graph: &'a ContactGraph) -> Scene<'a> {
    Scene { graph, env: cfg.env_config(), n_files: cfg.files }
}

pub fn policy_file(f: usize) -> String {
    format!("file{f:03}_policy.net")
}

pub fn value_file(f: usize) -> String {
    format!("file{f:03}_value.net")
}

/// Write one parameter file per (file, role) under `prefix/`.
pub fn write_checkpoint(out: &mut OutDir, prefix: &str, agents: &[AgentParams]) -> Result<(), HarnessError> {
    for (f, a) in agents.iter().enumerate() {
        let p = format!("{prefix}/{}", policy_file(f));
        out.write(&p, &a.theta.save()).map_err(io_err(&out.root().join(&p)))?;
        let v = format!("{prefix}/{}", value_file(f));
        out.write(&v, &a.psi.save()).map_err(io_err(&out.root().join(&v)))?;
    }
    Ok(())
}

pub fn read_checkpoint(dir: &Path, n_files: usize) -> Result<Vec<AgentParams>, HarnessError> {
    (0..n_files)
        .map(|f| {
            let read = |name: String| -> Result<DenseNet, HarnessError> {
                let path = dir.join(name);
                let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                Ok(DenseNet::load(&text)?)
            };
            Ok(AgentParams { theta: read(policy_file(f))?, psi: read(value_file(f))? })
        })
        .collect()
}

/// Parallelism cap from `ORBIT_PRESTORE_WORKERS` (default: all cores).
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run `f` on a pool capped at [`worker_count`] threads.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
