use orbit_prestore::ac::{self, AgentParams, FileTrajectory, Selection, Trajectory};
use orbit_prestore::env::Env;
use orbit_prestore::harness::gradcheck::relative_error;
use orbit_prestore::harness::{build_graph, build_requests, scene, ExperimentConfig};
use orbit_prestore::nn::{self, DenseNet};
use orbit_prestore::seed::SeedStream;

const H: f64 = 1e-5;

fn numeric(net: &DenseNet, i: usize, f: impl Fn(&DenseNet) -> f64) -> f64 {
    let mut p = net.clone();
    p.set(i, net.get(i) + H);
    let up = f(&p);
    p.set(i, net.get(i) - H);
    let down = f(&p);
    (up - down) / (2.0 * H)
}

fn value_objective(psi: &DenseNet, ft: &FileTrajectory, w: &[f64]) -> f64 {
    ft.steps
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.state.is_terminal())
        .map(|(t, s)| w[t] * nn::value_forward(psi, &s.enc))
        .sum()
}

fn logprob_objective(theta: &DenseNet, ft: &FileTrajectory, w: &[f64]) -> f64 {
    ft.steps
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.forced)
        .map(|(t, s)| w[t] * nn::policy_forward(theta, &s.enc, &s.mask).unwrap()[s.action].ln())
        .sum()
}

fn desk_episode(hidden: &[usize], seed: u64) -> (Vec<AgentParams>, Trajectory) {
    let cfg = ExperimentConfig::preset("desk").unwrap();
    let graph = build_graph(&cfg).unwrap();
    let x = build_requests(&cfg, seed);
    let env = Env::new(&graph, &x, cfg.env_config()).unwrap();
    let dims = scene(&cfg, &graph).dims();
    let agents = ac::init_agents(cfg.files, dims, hidden, &mut SeedStream::new(seed).rng());
    let traj = ac::rollout(&agents, &env, Selection::Sample, &mut SeedStream::new(seed + 100).rng()).unwrap();
    (agents, traj)
}

#[test]
fn summed_gradients_match_finite_differences() {
    for seed in 0..3 {
        let (agents, traj) = desk_episode(&[7, 5], seed);
        let td = ac::joint_td_errors(&agents, &traj, 0.99);
        for (a, ft) in agents.iter().zip(&traj.files) {
            let gv = ac::value_sum_gradient(&a.psi, ft, &td);
            let gp = ac::logprob_sum_gradient(&a.theta, ft, &td).unwrap();
            for i in 0..a.psi.n_params() {
                let n = numeric(&a.psi, i, |p| value_objective(p, ft, &td));
                assert!(relative_error(gv.get(i), n) < 1e-4, "value coord {i}: {} vs {n}", gv.get(i));
            }
            for i in 0..a.theta.n_params() {
                let n = numeric(&a.theta, i, |p| logprob_objective(p, ft, &td));
                assert!(relative_error(gp.get(i), n) < 1e-4, "policy coord {i}: {} vs {n}", gp.get(i));
            }
        }
    }
}

#[test]
fn critic_step_descends_the_squared_td_error() {
    let (agents, traj) = desk_episode(&[16, 16], 4);
    let gamma = 0.99;
    for (a, ft) in agents.iter().zip(&traj.files) {
        let td = ac::local_td_errors(a, ft, gamma);
        let v = ac::local_values(&a.psi, ft);
        let targets: Vec<f64> = (0..ft.steps.len()).map(|t| ft.steps[t].reward + gamma * v[t + 1]).collect();
        let loss = |psi: &DenseNet| -> f64 {
            let v = ac::local_values(psi, ft);
            (0..ft.steps.len()).filter(|&t| !ft.steps[t].state.is_terminal()).map(|t| (targets[t] - v[t]).powi(2)).sum()
        };
        if loss(&a.psi) == 0.0 {
            continue;
        }
        let stepped = ac::critic_step(&a.psi, ft, &td, 1e-4);
        assert!(loss(&stepped) < loss(&a.psi));
        let g = ac::value_sum_gradient(&a.psi, ft, &td);
        for i in (0..a.psi.n_params()).step_by(37) {
            let n = numeric(&a.psi, i, loss);
            assert!(relative_error(-2.0 * g.get(i), n) < 1e-4, "coord {i}");
        }
    }
}

#[test]
fn actor_step_raises_the_weighted_log_likelihood() {
    let (agents, traj) = desk_episode(&[16, 16], 5);
    let td = ac::joint_td_errors(&agents, &traj, 0.99);
    for (a, ft) in agents.iter().zip(&traj.files) {
        let before = logprob_objective(&a.theta, ft, &td);
        let after = logprob_objective(&ac::actor_step(&a.theta, ft, &td, 1e-4).unwrap(), ft, &td);
        if ft.steps.iter().all(|s| s.forced) {
            assert_eq!(before, after);
        } else {
            assert!(after >= before, "{after} < {before}");
        }
    }
}
