//! Value-decomposed actor-critic over per-file agents, plus the independent
//! actor-critic baseline.
//!
//! Each file owns a policy net θ_f and a local value net ψ_f. The team value
//! is the sum of the local values, so one shared TD error
//!
//! ```text
//! A(t) = R(t) + γ Σ_f V_f(σ^f(t+1)) − Σ_f V_f(σ^f(t))
//! ```
//!
//! drives every file's critic and actor. Local values of files in the
//! terminal state, and every value after the last slot, are fixed at 0.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;

use crate::env::{ActionToken, Env, EnvError, LocalState, TraceRow};
use crate::nn::{self, DenseNet, EncodingDims, NetError};
use crate::seed::{Rng, SeedStream};

/// θ_f and ψ_f for one file.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub theta: DenseNet,
    pub psi: DenseNet,
}

impl AgentParams {
    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.psi.is_finite()
    }
}

pub fn encoding_dims(env: &Env) -> EncodingDims {
    EncodingDims {
        n_gateways: env.graph().n_gateways(),
        n_satellites: env.graph().n_satellites(),
        horizon: env.horizon(),
    }
}

/// Random per-file initials: `[d_in, hidden.., n_actions]` policies and
/// `[d_in, hidden.., 1]` values.
pub fn init_agents(n_files: usize, dims: EncodingDims, hidden: &[usize], rng: &mut Rng) -> Vec<AgentParams> {
    let shape = |out: usize| {
        let mut d = vec![dims.len()];
        d.extend_from_slice(hidden);
        d.push(out);
        d
    };
    (0..n_files)
        .map(|_| AgentParams {
            theta: DenseNet::init(&shape(dims.n_actions()), rng).expect("valid dims"),
            psi: DenseNet::init(&shape(1), rng).expect("valid dims"),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Sample from the masked softmax.
    #[default]
    Sample,
    /// Most probable legal action, lowest index on ties.
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileStep {
    pub state: LocalState,
    pub enc: Vec<f64>,
    /// Empty for terminal files.
    pub mask: Vec<bool>,
    pub proposed: ActionToken,
    pub admitted: ActionToken,
    /// Vocabulary index of `admitted`.
    pub action: usize,
    pub reward: f64,
    /// At most one legal action: no sampling and no policy gradient.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileTrajectory {
    pub steps: Vec<FileStep>,
    /// σ^f(T).
    pub last: LocalState,
}

/// η: per-file (σ, a, R) sequences plus the team reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub files: Vec<FileTrajectory>,
    /// R(t) = Σ_f R^f(t).
    pub rewards: Vec<f64>,
    /// h(t) from the storage ledger.
    pub hits: Vec<usize>,
    pub dims: EncodingDims,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    pub fn total_hits(&self) -> usize {
        self.hits.iter().sum()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        for t in 0..self.horizon() {
            for (f, ft) in self.files.iter().enumerate() {
                let s = &ft.steps[t];
                rows.push(TraceRow {
                    t,
                    file: f,
                    state: s.state,
                    proposed: Some(s.proposed),
                    admitted: Some(s.admitted),
                    reward: s.reward as u32,
                });
            }
        }
        rows
    }
}

fn pick(probs: &[f64], selection: Selection, rng: &mut Rng) -> usize {
    match selection {
        Selection::Greedy => {
            let mut best = 0;
            for (k, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = k;
                }
            }
            best
        }
        Selection::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (k, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            probs.iter().rposition(|&p| p > 0.0).expect("non-empty support")
        }
    }
}

/// Play one episode. Records admitted actions; forced states skip sampling.
pub fn rollout(agents: &[AgentParams], env: &Env, selection: Selection, rng: &mut Rng) -> Result<Trajectory, EnvError> {
    let n = env.n_files();
    if agents.len() != n {
        return Err(EnvError::ActionCount { expected: n, got: agents.len() });
    }
    let dims = encoding_dims(env);
    let horizon = env.horizon();
    let mut files: Vec<FileTrajectory> = (0..n)
        .map(|_| FileTrajectory { steps: Vec::with_capacity(horizon), last: LocalState::INITIAL })
        .collect();
    let mut rewards = Vec::with_capacity(horizon);
    let mut hits = Vec::with_capacity(horizon);
    let mut state = env.reset();
    for t in 0..horizon {
        let mut proposed = Vec::with_capacity(n);
        let mut pending = Vec::with_capacity(n);
        for (f, agent) in agents.iter().enumerate() {
            let local = state.locals[f];
            let enc = nn::encode_state(&local, t, dims);
            let legal = env.legal_actions(&state, f);
            let (mask, action, forced) = if legal.is_empty() {
                (Vec::new(), ActionToken::Hold, true)
            } else {
                let mask = env.legal_mask(&state, f);
                if legal.len() == 1 {
                    (mask, legal[0], true)
                } else {
                    let p = nn::policy_forward(&agent.theta, &enc, &mask)?;
                    let k = pick(&p, selection, rng);
                    (mask, ActionToken::from_vocab_index(k, dims.n_gateways), false)
                }
            };
            proposed.push(action);
            pending.push((local, enc, mask, forced));
        }
        let out = env.advance(&state, &proposed, rng)?;
        for (f, (local, enc, mask, forced)) in pending.into_iter().enumerate() {
            files[f].steps.push(FileStep {
                state: local,
                enc,
                mask,
                proposed: proposed[f],
                admitted: out.admitted[f],
                action: out.admitted[f].vocab_index(dims.n_gateways),
                reward: f64::from(out.rewards[f]),
                forced,
            });
        }
        rewards.push(out.rewards.iter().map(|&r| f64::from(r)).sum());
        hits.push(out.hits);
        state = out.next;
    }
    for (f, ft) in files.iter_mut().enumerate() {
        ft.last = state.locals[f];
    }
    Ok(Trajectory { files, rewards, hits, dims })
}

/// `V_f(σ^f(t))` for t = 0..=T, with zeros for terminal files and at T.
pub fn local_values(psi: &DenseNet, ft: &FileTrajectory) -> Vec<f64> {
    let horizon = ft.steps.len();
    let mut v = vec![0.0; horizon + 1];
    let rows: Vec<usize> = (0..horizon).filter(|&t| !ft.steps[t].state.is_terminal()).collect();
    if rows.is_empty() {
        return v;
    }
    let encs: Vec<Vec<f64>> = rows.iter().map(|&t| ft.steps[t].enc.clone()).collect();
    let cache = psi.forward_batch(nn::batch(&encs, psi.d_in()));
    for (i, &t) in rows.iter().enumerate() {
        v[t] = cache.output()[[i, 0]];
    }
    v
}

/// Shared TD errors of the summed value function.
pub fn joint_td_errors(agents: &[AgentParams], traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let horizon = traj.horizon();
    let mut total = vec![0.0; horizon + 1];
    for (agent, ft) in agents.iter().zip(&traj.files) {
        for (acc, v) in total.iter_mut().zip(local_values(&agent.psi, ft)) {
            *acc += v;
        }
    }
    (0..horizon)
        .map(|t| traj.rewards[t] + gamma * total[t + 1] - total[t])
        .collect()
}

/// Per-file TD errors `R^f(t) + γ V_f(σ^f(t+1)) − V_f(σ^f(t))`.
pub fn local_td_errors(agent: &AgentParams, ft: &FileTrajectory, gamma: f64) -> Vec<f64> {
    let v = local_values(&agent.psi, ft);
    (0..ft.steps.len())
        .map(|t| ft.steps[t].reward + gamma * v[t + 1] - v[t])
        .collect()
}

/// `Σ_t A(t) ∇V_f(σ^f(t))`, terminal steps excluded.
pub fn value_sum_gradient(psi: &DenseNet, ft: &FileTrajectory, td: &[f64]) -> DenseNet {
    let rows: Vec<usize> = (0..ft.steps.len()).filter(|&t| !ft.steps[t].state.is_terminal()).collect();
    if rows.is_empty() {
        return psi.zeros_like();
    }
    let encs: Vec<Vec<f64>> = rows.iter().map(|&t| ft.steps[t].enc.clone()).collect();
    let cache = psi.forward_batch(nn::batch(&encs, psi.d_in()));
    let up = Array2::from_shape_fn((rows.len(), 1), |(i, _)| td[rows[i]]);
    psi.backward(&cache, &up)
}

/// `Σ_t A(t) ∇log π_f(a^f(t) | σ^f(t))` over non-forced steps.
pub fn logprob_sum_gradient(theta: &DenseNet, ft: &FileTrajectory, td: &[f64]) -> Result<DenseNet, NetError> {
    let rows: Vec<usize> = (0..ft.steps.len()).filter(|&t| !ft.steps[t].forced).collect();
    if rows.is_empty() {
        return Ok(theta.zeros_like());
    }
    let encs: Vec<Vec<f64>> = rows.iter().map(|&t| ft.steps[t].enc.clone()).collect();
    let cache = theta.forward_batch(nn::batch(&encs, theta.d_in()));
    let mut up = Array2::zeros((rows.len(), theta.d_out()));
    for (i, &t) in rows.iter().enumerate() {
        let s = &ft.steps[t];
        let row = nn::logprob_upstream(cache.output().row(i), &s.mask, s.action, td[t])?;
        up.row_mut(i).assign(&row);
    }
    Ok(theta.backward(&cache, &up))
}

/// `ψ_f + 2 α_c Σ_t A(t) ∇V_f(σ^f(t))`.
pub fn critic_step(psi: &DenseNet, ft: &FileTrajectory, td: &[f64], alpha_c: f64) -> DenseNet {
    psi.apply_update(&value_sum_gradient(psi, ft, td), 2.0 * alpha_c, 1.0)
        .expect("gradient shares the net's shape")
}

/// `θ_f + α_a Σ_t A(t) ∇log π_f(a^f(t) | σ^f(t))`.
pub fn actor_step(theta: &DenseNet, ft: &FileTrajectory, td: &[f64], alpha_a: f64) -> Result<DenseNet, NetError> {
    theta.apply_update(&logprob_sum_gradient(theta, ft, td)?, alpha_a, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub actor_step: f64,
    pub critic_step: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Trailing window for convergence detection.
    pub window: usize,
    /// Relative improvement below which the hit curve counts as converged.
    pub tolerance: f64,
    /// Fill `TrainReport::wall_ms` with measured times instead of zeros.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            actor_step: 1e-3,
            critic_step: 1e-3,
            epochs: 500,
            seed: 0,
            window: 50,
            tolerance: 0.01,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub hits: Vec<usize>,
    pub mean_abs_td: Vec<f64>,
    pub wall_ms: Vec<u64>,
    pub convergence_epoch: Option<usize>,
}

pub const METRICS_HEADER: &str = "epoch,hits,mean_abs_td,wall_ms";

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.hits.len()
    }

    /// Convergence epoch, or the number of epochs run when the curve never
    /// settled.
    pub fn epochs_to_converge(&self) -> usize {
        self.convergence_epoch.unwrap_or(self.epochs())
    }

    /// Mean hits over the last `window` epochs (all epochs if fewer).
    pub fn final_hits(&self, window: usize) -> f64 {
        let n = self.hits.len();
        if n == 0 {
            return 0.0;
        }
        let tail = &self.hits[n.saturating_sub(window.max(1))..];
        tail.iter().sum::<usize>() as f64 / tail.len() as f64
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for i in 0..self.hits.len() {
            s.push_str(&format!("{},{},{:?},{}\n", i + 1, self.hits[i], self.mean_abs_td[i], self.wall_ms[i]));
        }
        s
    }
}

/// First epoch count `i ≥ 2w` at which the mean of the last `w` values
/// improves on the mean of the `w` before by no more than `tol` (relative).
pub fn convergence_epoch(curve: &[f64], window: usize, tol: f64) -> Option<usize> {
    let w = window.max(1);
    let mut prefix = vec![0.0; curve.len() + 1];
    for (i, &x) in curve.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    (2 * w..=curve.len()).find(|&i| {
        let cur = (prefix[i] - prefix[i - w]) / w as f64;
        let prev = (prefix[i - w] - prefix[i - 2 * w]) / w as f64;
        cur - prev <= tol * prev.abs()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advantage {
    /// Shared TD error of the summed value (VD-AC).
    Joint,
    /// Each file's own TD error (IAC).
    Local,
}

/// Per-file advantages for one trajectory: the same joint sequence for
/// every file, or each file's local sequence.
pub fn advantages(kind: Advantage, agents: &[AgentParams], traj: &Trajectory, gamma: f64) -> Vec<Vec<f64>> {
    match kind {
        Advantage::Joint => {
            let a = joint_td_errors(agents, traj, gamma);
            vec![a; agents.len()]
        }
        Advantage::Local => agents
            .iter()
            .zip(&traj.files)
            .map(|(ag, ft)| local_td_errors(ag, ft, gamma))
            .collect(),
    }
}

/// One critic step and one actor step per file, all from the same frozen
/// parameters.
pub fn update_all(agents: &[AgentParams], traj: &Trajectory, adv: &[Vec<f64>], actor_step_size: f64, critic_step_size: f64) -> Vec<AgentParams> {
    agents
        .iter()
        .zip(&traj.files)
        .zip(adv)
        .map(|((ag, ft), a)| AgentParams {
            psi: critic_step(&ag.psi, ft, a, critic_step_size),
            theta: actor_step(&ag.theta, ft, a, actor_step_size).expect("recorded actions are legal"),
        })
        .collect()
}

pub fn mean_abs(xs: &[Vec<f64>]) -> f64 {
    let n: usize = xs.iter().map(Vec::len).sum();
    if n == 0 {
        return 0.0;
    }
    xs.iter().flatten().map(|x| x.abs()).sum::<f64>() / n as f64
}

/// Rollout → advantages → per-file critic and actor updates, `epochs` times.
pub fn train(kind: Advantage, env: &Env, cfg: &TrainConfig, initials: &[AgentParams]) -> Result<(Vec<AgentParams>, TrainReport), EnvError> {
    let mut agents = initials.to_vec();
    let mut report = TrainReport::default();
    let stream = SeedStream::new(cfg.seed).derive(crate::seed::streams::ROLLOUT);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut rng = stream.child("epoch", epoch as u64).rng();
        let traj = rollout(&agents, env, Selection::Sample, &mut rng)?;
        let adv = advantages(kind, &agents, &traj, cfg.gamma);
        // the shared sequence is counted once in the report
        let td_mag = match kind {
            Advantage::Joint => mean_abs(&adv[..adv.len().min(1)]),
            Advantage::Local => mean_abs(&adv),
        };
        agents = update_all(&agents, &traj, &adv, cfg.actor_step, cfg.critic_step);
        report.hits.push(traj.total_hits());
        report.mean_abs_td.push(td_mag);
        report.wall_ms.push(if cfg.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 });
    }
    let curve: Vec<f64> = report.hits.iter().map(|&h| h as f64).collect();
    report.convergence_epoch = convergence_epoch(&curve, cfg.window, cfg.tolerance);
    Ok((agents, report))
}

pub fn train_vdac(env: &Env, cfg: &TrainConfig, initials: &[AgentParams]) -> Result<(Vec<AgentParams>, TrainReport), EnvError> {
    train(Advantage::Joint, env, cfg, initials)
}

pub fn train_iac(env: &Env, cfg: &TrainConfig, initials: &[AgentParams]) -> Result<(Vec<AgentParams>, TrainReport), EnvError> {
    train(Advantage::Local, env, cfg, initials)
}

/// Mean and (population) standard deviation of episode hits over
/// `n_episodes` stochastic rollouts.
pub fn evaluate(agents: &[AgentParams], env: &Env, n_episodes: usize, rng: &mut Rng) -> Result<(f64, f64), EnvError> {
    let hits: Vec<f64> = (0..n_episodes.max(1))
        .map(|_| rollout(agents, env, Selection::Sample, rng).map(|t| t.total_hits() as f64))
        .collect::<Result<_, _>>()?;
    Ok(mean_std(&hits))
}

/// Hits of the greedy joint policy.
pub fn evaluate_greedy(agents: &[AgentParams], env: &Env, rng: &mut Rng) -> Result<usize, EnvError> {
    Ok(rollout(agents, env, Selection::Greedy, rng)?.total_hits())
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, EvictionRule};
    use crate::graph::{ContactEdge, ContactGraph, NodeRef};
    use crate::requests::RequestMatrix;
    use crate::seed::sub_rng;

    fn line_graph(horizon: usize) -> ContactGraph {
        let mut e = Vec::new();
        for t in 0..horizon {
            e.push(ContactEdge::gs(t, 0, 0));
            e.push(ContactEdge::su(t, 0, 0));
        }
        ContactGraph::from_edges(horizon, 1, 1, 1, e)
    }

    fn cfg() -> EnvConfig {
        EnvConfig { capacity: 2, eviction: EvictionRule::CapAtMax }
    }

    fn small_agents(env: &Env, seed: u64) -> Vec<AgentParams> {
        init_agents(env.n_files(), encoding_dims(env), &[6, 6], &mut sub_rng(seed, "init"))
    }

    #[test]
    fn rollout_is_seeded_and_consistent_with_hits() {
        let g = line_graph(6);
        let mut x = RequestMatrix::zeros(1, 2, 6);
        for t in 2..6 {
            x.set(0, t % 2, t, true);
        }
        let env = Env::new(&g, &x, cfg()).unwrap();
        let agents = small_agents(&env, 1);
        let a = rollout(&agents, &env, Selection::Sample, &mut sub_rng(3, "r")).unwrap();
        let b = rollout(&agents, &env, Selection::Sample, &mut sub_rng(3, "r")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_reward(), a.total_hits() as f64);
        assert_eq!(a.horizon(), 6);
        assert!(a.files.iter().all(|f| f.steps.len() == 6));
    }

    #[test]
    fn td_errors_closed_form() {
        // constant local value c = 1 for two files, reward 1 at one slot
        let g = line_graph(3);
        let x = RequestMatrix::zeros(1, 2, 3);
        let env = Env::new(&g, &x, cfg()).unwrap();
        let mut agents = small_agents(&env, 2);
        for a in &mut agents {
            a.psi = DenseNet::zeros(&a.psi.dims()).unwrap();
            let last = a.psi.n_params() - 1;
            a.psi.set(last, 1.0);
        }
        let mut traj = rollout(&agents, &env, Selection::Sample, &mut sub_rng(0, "r")).unwrap();
        traj.rewards[0] = 1.0;
        let td = joint_td_errors(&agents, &traj, 0.9);
        assert!((td[0] - 0.8).abs() < 1e-12);
        // last slot bootstraps from zero
        assert!((td[2] - (0.0 - 2.0)).abs() < 1e-12);
        let zero: Vec<AgentParams> = agents
            .iter()
            .map(|a| AgentParams { theta: a.theta.clone(), psi: a.psi.zeros_like() })
            .collect();
        let mut quiet = traj.clone();
        quiet.rewards.iter_mut().for_each(|r| *r = 0.0);
        assert!(joint_td_errors(&zero, &quiet, 0.9).iter().all(|&a| a == 0.0));
    }

    #[test]
    fn zero_advantage_or_step_leaves_params() {
        let g = line_graph(4);
        let x = RequestMatrix::zeros(1, 2, 4);
        let env = Env::new(&g, &x, cfg()).unwrap();
        let agents = small_agents(&env, 3);
        let traj = rollout(&agents, &env, Selection::Sample, &mut sub_rng(1, "r")).unwrap();
        let zeros = vec![0.0; 4];
        let ones = vec![1.0; 4];
        let ft = &traj.files[0];
        assert_eq!(critic_step(&agents[0].psi, ft, &zeros, 0.1), agents[0].psi);
        assert_eq!(critic_step(&agents[0].psi, ft, &ones, 0.0), agents[0].psi);
        assert_eq!(actor_step(&agents[0].theta, ft, &zeros, 0.1).unwrap(), agents[0].theta);
    }

    #[test]
    fn all_forced_steps_leave_policy() {
        // a file that is requested everywhere on its satellite is forced to deliver
        let g = line_graph(3);
        let x = RequestMatrix::zeros(1, 1, 3);
        let env = Env::new(&g, &x, cfg()).unwrap();
        let agents = small_agents(&env, 4);
        let mut traj = rollout(&agents, &env, Selection::Sample, &mut sub_rng(1, "r")).unwrap();
        for s in &mut traj.files[0].steps {
            s.forced = true;
        }
        assert_eq!(actor_step(&agents[0].theta, &traj.files[0], &[1.0; 3], 0.5).unwrap(), agents[0].theta);
    }

    #[test]
    fn zero_epochs_returns_initials() {
        let g = line_graph(4);
        let x = RequestMatrix::zeros(1, 2, 4);
        let env = Env::new(&g, &x, cfg()).unwrap();
        let agents = small_agents(&env, 5);
        let c = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (out, rep) = train_vdac(&env, &c, &agents).unwrap();
        assert_eq!(out, agents);
        assert_eq!(rep.epochs(), 0);
        let (out, _) = train_iac(&env, &c, &agents).unwrap();
        assert_eq!(out, agents);
    }

    #[test]
    fn single_file_vdac_equals_iac() {
        let g = line_graph(5);
        let mut x = RequestMatrix::zeros(1, 1, 5);
        x.set(0, 0, 3, true);
        let env = Env::new(&g, &x, cfg()).unwrap();
        let agents = small_agents(&env, 6);
        let c = TrainConfig { epochs: 20, actor_step: 0.05, critic_step: 0.05, ..TrainConfig::default() };
        assert_eq!(train_vdac(&env, &c, &agents).unwrap(), train_iac(&env, &c, &agents).unwrap());
    }

    #[test]
    fn positive_advantage_raises_chosen_action_probability() {
        let g = line_graph(1);
        let x = RequestMatrix::zeros(1, 1, 1);
        let env = Env::new(&g, &x, cfg()).unwrap();
        let mut theta = small_agents(&env, 7)[0].theta.clone();
        let traj = rollout(&small_agents(&env, 7), &env, Selection::Sample, &mut sub_rng(2, "r")).unwrap();
        let ft = &traj.files[0];
        let step = &ft.steps[0];
        assert_eq!(step.state.location, NodeRef::Initial);
        let mut last = nn::policy_forward(&theta, &step.enc, &step.mask).unwrap()[step.action];
        for _ in 0..20 {
            theta = actor_step(&theta, ft, &[1.0], 0.1).unwrap();
            let p = nn::policy_forward(&theta, &step.enc, &step.mask).unwrap()[step.action];
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn convergence_detection() {
        let mut curve: Vec<f64> = (0..40).map(|i| i as f64).collect();
        curve.extend(std::iter::repeat_n(40.0, 40));
        let c = convergence_epoch(&curve, 10, 0.01).unwrap();
        assert!((50..=60).contains(&c), "{c}");
        assert_eq!(convergence_epoch(&[1.0, 2.0, 3.0], 2, 0.01), None);
        assert_eq!(convergence_epoch(&[0.0; 4], 2, 0.01), Some(4));
    }

    #[test]
    fn metrics_csv_layout() {
        let r = TrainReport { hits: vec![3, 4], mean_abs_td: vec![0.5, 0.25], wall_ms: vec![0, 0], convergence_epoch: None };
        assert_eq!(r.metrics_csv(), "epoch,hits,mean_abs_td,wall_ms\n1,3,0.5,0\n2,4,0.25,0\n");
        assert_eq!(r.final_hits(1), 4.0);
    }
}
