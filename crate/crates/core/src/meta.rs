//! Meta-trained initials for a request distribution, and warm-started
//! meta training across a sequence of distributions.
//!
//! The meta gradient is first order: gradients evaluated at the adapted
//! parameters are applied to the initials.

use rayon::prelude::*;
use thiserror::Error;

use crate::ac::{self, AgentParams, Selection, Trajectory};
use crate::env::{Env, EnvConfig, EnvError};
use crate::graph::ContactGraph;
use crate::nn::{self, EncodingDims};
use crate::requests::{RequestDistribution, RequestMatrix};
use crate::seed::{Rng, SeedStream};

#[derive(Debug, Error, PartialEq)]
pub enum MetaError {
    #[error("meta step needs at least one inner result")]
    EmptyBatch,
    #[error("at least one distribution is required")]
    NoDistributions,
    #[error("invalid meta config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaInitials {
    pub agents: Vec<AgentParams>,
    /// Distribution the initials were trained for.
    pub label: String,
    /// Meta epochs run.
    pub epochs: usize,
    /// Index of the candidate these initials were warm-started from.
    pub warm_start: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaConfig {
    /// J: request realizations per meta epoch.
    pub samples: usize,
    /// I: meta epochs (upper bound when stopping at convergence).
    pub epochs: usize,
    pub inner_actor_step: f64,
    pub inner_critic_step: f64,
    pub outer_actor_step: f64,
    pub outer_critic_step: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Run the one-step inner adaptation. When off, the post-adaptation
    /// trajectory is sampled from the initials (plain joint training).
    pub adapt: bool,
    pub window: usize,
    pub tolerance: f64,
    /// End meta training at the convergence epoch.
    pub stop_at_convergence: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            samples: 8,
            epochs: 300,
            inner_actor_step: 1e-3,
            inner_critic_step: 1e-3,
            outer_actor_step: 1e-3,
            outer_critic_step: 1e-3,
            gamma: 0.99,
            seed: 0,
            adapt: true,
            window: 50,
            tolerance: 0.01,
            stop_at_convergence: false,
        }
    }
}

impl MetaConfig {
    pub fn check(&self) -> Result<(), MetaError> {
        if self.samples == 0 {
            return Err(MetaError::Config("samples (J) must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(MetaError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything shared by the realizations of one distribution.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub graph: &'a ContactGraph,
    pub env: EnvConfig,
    pub n_files: usize,
}

impl<'a> Scene<'a> {
    pub fn dims(&self) -> EncodingDims {
        EncodingDims {
            n_gateways: self.graph.n_gateways(),
            n_satellites: self.graph.n_satellites(),
            horizon: self.graph.horizon(),
        }
    }

    pub fn env<'b>(&self, x: &'b RequestMatrix) -> Result<Env<'b>, EnvError>
    where
        'a: 'b,
    {
        Env::new(self.graph, x, self.env)
    }

    pub fn sample(&self, dist: &RequestDistribution, rng: &mut Rng) -> RequestMatrix {
        dist.sample(self.n_files, self.graph.horizon(), rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub adapted: Vec<AgentParams>,
    /// η̄, sampled with the initials.
    pub pre: Trajectory,
    /// η, sampled with the adapted parameters.
    pub post: Trajectory,
}

/// One-step adaptation of the initials to a single realization.
pub fn inner_adapt(initials: &[AgentParams], env: &Env, cfg: &MetaConfig, rng: &mut Rng) -> Result<InnerResult, EnvError> {
    let pre = ac::rollout(initials, env, Selection::Sample, rng)?;
    let adapted = if cfg.adapt {
        let a = ac::joint_td_errors(initials, &pre, cfg.gamma);
        let adv = vec![a; initials.len()];
        ac::update_all(initials, &pre, &adv, cfg.inner_actor_step, cfg.inner_critic_step)
    } else {
        initials.to_vec()
    };
    let post = ac::rollout(&adapted, env, Selection::Sample, rng)?;
    Ok(InnerResult { adapted, pre, post })
}

/// First-order outer update; returns the new initials and the mean absolute
/// parameter change.
pub fn meta_step(initials: &[AgentParams], batch: &[InnerResult], cfg: &MetaConfig) -> Result<(Vec<AgentParams>, f64), MetaError> {
    if batch.is_empty() {
        return Err(MetaError::EmptyBatch);
    }
    let advs: Vec<Vec<f64>> = batch
        .iter()
        .map(|r| ac::joint_td_errors(&r.adapted, &r.post, cfg.gamma))
        .collect();
    let mut out = Vec::with_capacity(initials.len());
    let (mut moved, mut count) = (0.0, 0usize);
    for (f, init) in initials.iter().enumerate() {
        let mut g_theta = init.theta.zeros_like();
        let mut g_psi = init.psi.zeros_like();
        for (r, a) in batch.iter().zip(&advs) {
            let ft = &r.post.files[f];
            let gt = ac::logprob_sum_gradient(&r.adapted[f].theta, ft, a).expect("recorded actions are legal");
            g_theta.add_scaled(&gt, 1.0).expect("same shape");
            g_psi
                .add_scaled(&ac::value_sum_gradient(&r.adapted[f].psi, ft, a), 1.0)
                .expect("same shape");
        }
        let theta = init.theta.apply_update(&g_theta, cfg.outer_actor_step, 1.0).expect("same shape");
        let psi = init.psi.apply_update(&g_psi, 2.0 * cfg.outer_critic_step, 1.0).expect("same shape");
        moved += cfg.outer_actor_step * g_theta.l1_norm() + 2.0 * cfg.outer_critic_step * g_psi.l1_norm();
        count += init.theta.n_params() + init.psi.n_params();
        out.push(AgentParams { theta, psi });
    }
    Ok((out, if count == 0 { 0.0 } else { moved / count as f64 }))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetaReport {
    /// Mean post-adaptation episode hits over the J realizations, per epoch.
    pub post_adapt_hits: Vec<f64>,
    pub mean_abs_update: Vec<f64>,
    pub convergence_epoch: Option<usize>,
}

pub const META_HEADER: &str = "meta_epoch,mean_post_adapt_hits,mean_abs_outer_update";

impl MetaReport {
    pub fn epochs(&self) -> usize {
        self.post_adapt_hits.len()
    }

    pub fn epochs_to_converge(&self) -> usize {
        self.convergence_epoch.unwrap_or(self.epochs())
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(META_HEADER);
        s.push('\n');
        for (i, (h, u)) in self.post_adapt_hits.iter().zip(&self.mean_abs_update).enumerate() {
            s.push_str(&format!("{},{:?},{:?}\n", i + 1, h, u));
        }
        s
    }
}

/// Inner adaptations for one batch of realizations, each on its own
/// derived stream, evaluated concurrently and collected in order.
fn adapt_batch(initials: &[AgentParams], scene: &Scene, xs: &[RequestMatrix], cfg: &MetaConfig, stream: SeedStream) -> Result<Vec<InnerResult>, EnvError> {
    xs.par_iter()
        .enumerate()
        .map(|(j, x)| {
            let env = scene.env(x)?;
            inner_adapt(initials, &env, cfg, &mut stream.child("adapt", j as u64).rng())
        })
        .collect()
}

/// Meta training for one distribution.
pub fn meta_train(dist: &RequestDistribution, scene: &Scene, cfg: &MetaConfig, start: &MetaInitials) -> Result<(MetaInitials, MetaReport), MetaError> {
    cfg.check()?;
    let root = SeedStream::new(cfg.seed).derive("meta");
    let mut agents = start.agents.clone();
    let mut report = MetaReport::default();
    for epoch in 0..cfg.epochs {
        let es = root.child("epoch", epoch as u64);
        let mut rng = es.derive("requests").rng();
        let xs: Vec<RequestMatrix> = (0..cfg.samples).map(|_| scene.sample(dist, &mut rng)).collect();
        let batch = adapt_batch(&agents, scene, &xs, cfg, es)?;
        let hits = batch.iter().map(|r| r.post.total_hits() as f64).sum::<f64>() / batch.len() as f64;
        let (next, moved) = meta_step(&agents, &batch, cfg)?;
        agents = next;
        report.post_adapt_hits.push(hits);
        report.mean_abs_update.push(moved);
        if cfg.stop_at_convergence {
            if let Some(c) = ac::convergence_epoch(&report.post_adapt_hits, cfg.window, cfg.tolerance) {
                report.convergence_epoch = Some(c);
                break;
            }
        }
    }
    if report.convergence_epoch.is_none() {
        report.convergence_epoch = ac::convergence_epoch(&report.post_adapt_hits, cfg.window, cfg.tolerance);
    }
    let out = MetaInitials {
        agents,
        label: dist.label.clone(),
        epochs: report.epochs(),
        warm_start: start.warm_start,
    };
    Ok((out, report))
}

/// Per-file distance terms of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDistance {
    pub d_theta: Vec<f64>,
    pub d_psi: Vec<f64>,
}

impl CandidateDistance {
    pub fn d_theta_total(&self) -> f64 {
        self.d_theta.iter().sum()
    }

    pub fn d_psi_total(&self) -> f64 {
        self.d_psi.iter().sum()
    }

    /// D = Σ_f (d_θ,f + d_ψ,f).
    pub fn total(&self) -> f64 {
        self.d_theta_total() + self.d_psi_total()
    }
}

/// Distance of one candidate to the distribution the samples come from.
///
/// For each sample the candidate is adapted once; on the adapted
/// trajectory `d_θ,f` accumulates `A(t) · π_f(a^f(t))` and `d_ψ,f`
/// accumulates `(R^f(t) − V_f(σ^f(t)))²`.
pub fn initial_distance(candidate: &[AgentParams], samples: &[RequestMatrix], scene: &Scene, cfg: &MetaConfig, stream: SeedStream) -> Result<CandidateDistance, MetaError> {
    if samples.is_empty() {
        return Err(MetaError::EmptyBatch);
    }
    let n = candidate.len();
    let mut d_theta = vec![0.0; n];
    let mut d_psi = vec![0.0; n];
    let batch = adapt_batch(candidate, scene, samples, cfg, stream)?;
    for r in &batch {
        let a = ac::joint_td_errors(&r.adapted, &r.post, cfg.gamma);
        for f in 0..n {
            let ft = &r.post.files[f];
            let v = ac::local_values(&r.adapted[f].psi, ft);
            for (t, s) in ft.steps.iter().enumerate() {
                let p = if s.forced {
                    1.0
                } else {
                    nn::policy_forward(&r.adapted[f].theta, &s.enc, &s.mask).expect("legal mask")[s.action]
                };
                d_theta[f] += a[t] * p;
                d_psi[f] += (s.reward - v[t]).powi(2);
            }
        }
    }
    Ok(CandidateDistance { d_theta, d_psi })
}

/// Lowest-index minimizer of the candidates' D values.
pub fn argmin_candidate(distances: &[CandidateDistance]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in distances.iter().enumerate() {
        let v = d.total();
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

pub const DISTANCE_HEADER: &str = "candidate,d_theta_total,d_psi_total,D";

pub fn distance_csv(distances: &[CandidateDistance]) -> String {
    let mut s = String::from(DISTANCE_HEADER);
    s.push('\n');
    for (i, d) in distances.iter().enumerate() {
        s.push_str(&format!("{},{:?},{:?},{:?}\n", i, d.d_theta_total(), d.d_psi_total(), d.total()));
    }
    s
}

/// Result of [`pretrain_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub initials: Vec<MetaInitials>,
    pub reports: Vec<MetaReport>,
    /// Candidate distances computed for stage k (empty for k = 1).
    pub distances: Vec<Vec<CandidateDistance>>,
}

/// Random initials for a scene.
pub fn random_initials(scene: &Scene, hidden: &[usize], label: &str, seed: u64) -> MetaInitials {
    let mut rng = SeedStream::new(seed).derive(crate::seed::streams::INIT).rng();
    MetaInitials {
        agents: ac::init_agents(scene.n_files, scene.dims(), hidden, &mut rng),
        label: label.to_string(),
        epochs: 0,
        warm_start: None,
    }
}

/// Meta-train initials for `dists` in order. The first starts from random
/// initials; each later one starts from the earlier result with the
/// smallest distance D.
pub fn pretrain_sequence(dists: &[RequestDistribution], scene: &Scene, cfg: &MetaConfig, hidden: &[usize]) -> Result<PretrainOutcome, MetaError> {
    if dists.is_empty() {
        return Err(MetaError::NoDistributions);
    }
    let root = SeedStream::new(cfg.seed).derive("pretrain");
    let mut out = PretrainOutcome { initials: Vec::new(), reports: Vec::new(), distances: Vec::new() };
    for (k, dist) in dists.iter().enumerate() {
        let stage = root.child("stage", k as u64);
        let stage_cfg = MetaConfig { seed: stage.derive("meta").seed(), ..*cfg };
        let start = if k == 0 {
            out.distances.push(Vec::new());
            random_initials(scene, hidden, &dist.label, cfg.seed)
        } else {
            let mut rng = stage.derive("distance-requests").rng();
            let samples: Vec<RequestMatrix> = (0..cfg.samples).map(|_| scene.sample(dist, &mut rng)).collect();
            let ds: Vec<CandidateDistance> = out
                .initials
                .iter()
                .map(|c| initial_distance(&c.agents, &samples, scene, cfg, stage.derive("distance")))
                .collect::<Result<_, _>>()?;
            let best = argmin_candidate(&ds).expect("k ≥ 1 candidates");
            out.distances.push(ds);
            MetaInitials {
                agents: out.initials[best].agents.clone(),
                label: dist.label.clone(),
                epochs: 0,
                warm_start: Some(best),
            }
        };
        let (init, report) = meta_train(dist, scene, &stage_cfg, &start)?;
        out.initials.push(init);
        out.reports.push(report);
    }
    Ok(out)
}
