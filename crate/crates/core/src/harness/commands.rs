//! The command implementations behind the CLI. Each writes its artifacts,
//! the resolved config and a manifest into an output directory.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::manifest::{OutDir, RunManifest};
use super::studies::{self, Study};
use super::{
    build_graph, build_initials, build_requests, graph_seed, gradcheck, io_err, read_checkpoint, scene, write_checkpoint,
    ExperimentConfig, HarnessError,
};
use crate::ac::{self, Selection};
use crate::env::trace_csv;
use crate::meta;
use crate::seed::{streams, SeedStream};

pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Vdac,
    Iac,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Vdac => "vdac",
            Algo::Iac => "iac",
        })
    }
}

impl FromStr for Algo {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vdac" => Ok(Algo::Vdac),
            "iac" => Ok(Algo::Iac),
            _ => Err(HarnessError::Invalid(format!("unknown algorithm `{s}` (expected vdac or iac)"))),
        }
    }
}

fn open(command: &str, cfg: &ExperimentConfig, out: &Path) -> Result<OutDir, HarnessError> {
    cfg.validate()?;
    let mut dir = OutDir::create(out, RunManifest::new(command, cfg)).map_err(io_err(out))?;
    put(&mut dir, CONFIG_FILE, &cfg.serialize())?;
    Ok(dir)
}

fn put(dir: &mut OutDir, rel: &str, text: &str) -> Result<(), HarnessError> {
    let path = dir.root().join(rel);
    dir.write(rel, text).map_err(io_err(&path))?;
    Ok(())
}

fn close(dir: OutDir) -> Result<RunManifest, HarnessError> {
    let path = dir.root().to_path_buf();
    dir.finish().map_err(io_err(&path))
}

pub fn gen_graph(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, HarnessError> {
    let mut dir = open("gen-graph", cfg, out)?;
    dir.add_seed(streams::GRAPH, graph_seed(cfg));
    let graph = build_graph(cfg)?;
    put(&mut dir, "graph.csn", &graph.save())?;
    close(dir)
}

pub fn gen_requests(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, HarnessError> {
    let mut dir = open("gen-requests", cfg, out)?;
    let x = build_requests(cfg, cfg.seed);
    put(&mut dir, "requests.req", &x.save())?;
    put(&mut dir, "distribution.dist", &cfg.distribution().save())?;
    close(dir)
}

pub const RESULT_HEADER: &str = "algorithm,epochs,final_hits,greedy_hits,convergence_epoch";

/// Train on the realization of `cfg.seed`. Starts from the checkpoint in
/// `init_from` when given, else from seeded random initials.
pub fn train(cfg: &ExperimentConfig, algo: Algo, out: &Path, init_from: Option<&Path>) -> Result<RunManifest, HarnessError> {
    let mut dir = open(&format!("train {algo}"), cfg, out)?;
    let graph = build_graph(cfg)?;
    let x = build_requests(cfg, cfg.seed);
    let env = scene(cfg, &graph).env(&x)?;
    let init = match init_from {
        Some(p) => read_checkpoint(p, cfg.files)?,
        None => build_initials(cfg, &graph, cfg.seed),
    };
    let tc = cfg.train_config(cfg.seed);
    let (agents, report) = match algo {
        Algo::Vdac => ac::train_vdac(&env, &tc, &init)?,
        Algo::Iac => ac::train_iac(&env, &tc, &init)?,
    };
    let mut rng = SeedStream::new(cfg.seed).derive("evaluate").rng();
    let greedy = ac::rollout(&agents, &env, Selection::Greedy, &mut rng)?;
    put(&mut dir, "metrics.csv", &report.metrics_csv())?;
    put(&mut dir, "trace.csv", &trace_csv(&greedy.trace_rows()))?;
    put(
        &mut dir,
        "result.csv",
        &format!(
            "{RESULT_HEADER}\n{algo},{},{:?},{},{}\n",
            report.epochs(),
            report.final_hits(cfg.final_window),
            greedy.total_hits(),
            report.convergence_epoch.map_or_else(String::new, |c| c.to_string())
        ),
    )?;
    write_checkpoint(&mut dir, "checkpoint", &agents)?;
    dir.add_seed(streams::GRAPH, graph_seed(cfg));
    close(dir)
}

pub fn meta_train(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, HarnessError> {
    let mut dir = open("meta-train", cfg, out)?;
    let (initials, report) = studies::train_meta_initials(cfg)?;
    put(&mut dir, "meta.csv", &report.csv())?;
    write_checkpoint(&mut dir, &format!("initials/{}", initials.label), &initials.agents)?;
    close(dir)
}

pub const SELECTION_HEADER: &str = "stage,label,warm_start,meta_epochs,convergence_epoch";

/// Sequential pre-training over the study's three distributions.
pub fn pretrain(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, HarnessError> {
    let mut dir = open("pretrain", cfg, out)?;
    let graph = build_graph(cfg)?;
    let dists = cfg.study_distributions();
    let res = meta::pretrain_sequence(&dists, &scene(cfg, &graph), &cfg.meta_config(cfg.seed), &cfg.hidden)?;
    let mut sel = String::from(SELECTION_HEADER);
    sel.push('\n');
    for (k, (init, report)) in res.initials.iter().zip(&res.reports).enumerate() {
        put(&mut dir, &format!("meta_{}.csv", init.label), &report.csv())?;
        if k > 0 {
            put(&mut dir, &format!("distances_{}.csv", init.label), &meta::distance_csv(&res.distances[k]))?;
        }
        write_checkpoint(&mut dir, &format!("initials/{}", init.label), &init.agents)?;
        sel.push_str(&format!(
            "{},{},{},{},{}\n",
            k + 1,
            init.label,
            init.warm_start.map_or_else(String::new, |w| w.to_string()),
            init.epochs,
            report.convergence_epoch.map_or_else(String::new, |c| c.to_string())
        ));
    }
    put(&mut dir, "selection.csv", &sel)?;
    close(dir)
}

pub const EVAL_HEADER: &str = "episodes,mean_hits,std_hits,greedy_hits";

pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<RunManifest, HarnessError> {
    let mut dir = open("eval", cfg, out)?;
    let graph = build_graph(cfg)?;
    let x = build_requests(cfg, cfg.seed);
    let env = scene(cfg, &graph).env(&x)?;
    let agents = read_checkpoint(checkpoint, cfg.files)?;
    let stream = SeedStream::new(cfg.seed).derive("evaluate");
    let (mean, std) = ac::evaluate(&agents, &env, cfg.eval_episodes, &mut stream.derive("sample").rng())?;
    let greedy = ac::evaluate_greedy(&agents, &env, &mut stream.rng())?;
    put(&mut dir, "eval.csv", &format!("{EVAL_HEADER}\n{},{mean:?},{std:?},{greedy}\n", cfg.eval_episodes))?;
    close(dir)
}

pub const GRADCHECK_CASES: usize = 100;
pub const GRADCHECK_PROBES: usize = 64;

/// Finite-difference check of both heads; returns the manifest and the
/// worst relative error.
pub fn grad_check(cfg: &ExperimentConfig, out: &Path) -> Result<(RunManifest, f64), HarnessError> {
    let mut dir = open("grad-check", cfg, out)?;
    let graph = build_graph(cfg)?;
    let dims = scene(cfg, &graph).dims();
    let results = gradcheck::run(GRADCHECK_CASES, dims, &cfg.hidden, GRADCHECK_PROBES, cfg.seed);
    let worst = results.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    put(&mut dir, "gradcheck.csv", &gradcheck::csv(&results))?;
    Ok((close(dir)?, worst))
}

pub fn compare(cfg: &ExperimentConfig, study: Study, out: &Path) -> Result<(RunManifest, studies::StudyResult), HarnessError> {
    let mut dir = open(&format!("compare {study}"), cfg, out)?;
    let res = studies::run_study(study, cfg)?;
    put(&mut dir, "runs.csv", &res.runs.csv())?;
    put(&mut dir, "summary.csv", &studies::summary_csv(&res.summary))?;
    for (name, text) in &res.extras {
        put(&mut dir, name, text)?;
    }
    Ok((close(dir)?, res))
}

/// Check that every artifact a manifest lists exists and is non-empty.
pub fn verify_manifest(out: &Path) -> Result<RunManifest, HarnessError> {
    let path = out.join(super::manifest::MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m = RunManifest::parse(&text).ok_or_else(|| HarnessError::Invalid(format!("malformed manifest {}", path.display())))?;
    for a in &m.artifacts {
        let p = out.join(a);
        let len = fs::metadata(&p).map_err(io_err(&p))?.len();
        if len == 0 {
            return Err(HarnessError::Invalid(format!("artifact {a} is empty")));
        }
    }
    Ok(m)
}
