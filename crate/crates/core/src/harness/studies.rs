//! Paired comparison studies. Every run `i` uses the seed
//! [`run_seed`]`(master, i)` for both arms, runs execute concurrently, and
//! results are reduced in run order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::stats::{mean_sd, paired_t_greater, relative_difference};
use super::{build_graph, build_initials, build_requests, run_seed, scene, ExperimentConfig, HarnessError};
use crate::ac;
use crate::meta::{self, MetaInitials, MetaReport};
use crate::requests::RequestDistribution;
use crate::seed::{streams, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    VdVsIac,
    MetaVsRandom,
    PretrainVsCold,
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::VdVsIac => "vd-vs-iac",
            Study::MetaVsRandom => "meta-vs-random",
            Study::PretrainVsCold => "pretrain-vs-cold",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vd-vs-iac" => Ok(Study::VdVsIac),
            "meta-vs-random" => Ok(Study::MetaVsRandom),
            "pretrain-vs-cold" => Ok(Study::PretrainVsCold),
            _ => Err(HarnessError::Invalid(format!(
                "unknown study `{s}` (expected vd-vs-iac, meta-vs-random or pretrain-vs-cold)"
            ))),
        }
    }
}

/// Per-run raw values: `run,seed,<columns...>`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, u64, Vec<f64>)>,
}

impl RunTable {
    pub fn new(columns: &[&str], rows: Vec<(usize, u64, Vec<f64>)>) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows }
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = self.columns.iter().position(|c| c == name).expect("known column");
        self.rows.iter().map(|r| r.2[i]).collect()
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("run,seed");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (run, seed, vals) in &self.rows {
            s.push_str(&format!("{run},{seed}"));
            for v in vals {
                s.push_str(&format!(",{v:?}"));
            }
            s.push('\n');
        }
        s
    }

    /// Parse the CSV form back.
    pub fn parse(text: &str) -> Option<RunTable> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next()?.split(',').collect();
        if header.len() < 2 || header[0] != "run" || header[1] != "seed" {
            return None;
        }
        let columns: Vec<String> = header[2..].iter().map(|c| c.to_string()).collect();
        let mut rows = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != header.len() {
                return None;
            }
            let vals = f[2..].iter().map(|v| v.parse().ok()).collect::<Option<Vec<f64>>>()?;
            rows.push((f[0].parse().ok()?, f[1].parse().ok()?, vals));
        }
        Some(RunTable { columns, rows })
    }
}

/// Arm `a` against arm `b` over paired runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub a: String,
    pub a_mean: f64,
    pub a_sd: f64,
    pub b: String,
    pub b_mean: f64,
    pub b_sd: f64,
    /// `a_mean / b_mean`.
    pub ratio: f64,
    /// `(a_mean − b_mean) / b_mean`.
    pub relative_difference: f64,
    /// Paired one-sided t statistic for `a > b`.
    pub paired_t: f64,
    pub p_value: f64,
}

pub const SUMMARY_HEADER: &str = "metric,a,a_mean,a_sd,b,b_mean,b_sd,ratio,relative_difference,paired_t,p_value";

pub fn summarize(metric: &str, a: &str, av: &[f64], b: &str, bv: &[f64]) -> SummaryRow {
    let (a_mean, a_sd) = mean_sd(av);
    let (b_mean, b_sd) = mean_sd(bv);
    let t = paired_t_greater(av, bv);
    SummaryRow {
        metric: metric.into(),
        a: a.into(),
        a_mean,
        a_sd,
        b: b.into(),
        b_mean,
        b_sd,
        ratio: a_mean / b_mean,
        relative_difference: relative_difference(a_mean, b_mean),
        paired_t: t.t,
        p_value: t.p_value,
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{:?},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.metric, r.a, r.a_mean, r.a_sd, r.b, r.b_mean, r.b_sd, r.ratio, r.relative_difference, r.paired_t, r.p_value
        ));
    }
    s
}

/// The summary pairs each study derives from its run table.
pub fn summary_pairs(study: Study) -> &'static [(&'static str, &'static str, &'static str)] {
    match study {
        Study::VdVsIac => &[
            ("final_hits", "vd_final_hits", "iac_final_hits"),
            ("convergence_epoch", "vd_convergence_epoch", "iac_convergence_epoch"),
        ],
        Study::MetaVsRandom => &[
            ("convergence_epoch", "meta_convergence_epoch", "random_convergence_epoch"),
            ("final_hits", "meta_final_hits", "random_final_hits"),
            ("first_window_hits", "meta_first_window_hits", "random_first_window_hits"),
        ],
        Study::PretrainVsCold => &[
            ("meta_epochs", "pretrain_meta_epochs", "cold_meta_epochs"),
            ("picked_near_duplicate", "picked_near", "picked_far"),
        ],
    }
}

pub fn summarize_table(study: Study, table: &RunTable) -> Vec<SummaryRow> {
    summary_pairs(study)
        .iter()
        .map(|(metric, a, b)| summarize(metric, a, &table.column(a), b, &table.column(b)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub study: Study,
    pub runs: RunTable,
    pub summary: Vec<SummaryRow>,
    /// Additional named CSV artifacts.
    pub extras: Vec<(String, String)>,
}

impl StudyResult {
    pub fn row(&self, metric: &str) -> &SummaryRow {
        self.summary.iter().find(|r| r.metric == metric).expect("known metric")
    }
}

fn first_window(hits: &[usize], w: usize) -> f64 {
    let head = &hits[..w.min(hits.len()).max(1).min(hits.len())];
    if head.is_empty() {
        return 0.0;
    }
    head.iter().sum::<usize>() as f64 / head.len() as f64
}

pub fn run_study(study: Study, cfg: &ExperimentConfig) -> Result<StudyResult, HarnessError> {
    cfg.validate()?;
    match study {
        Study::VdVsIac => vd_vs_iac(cfg),
        Study::MetaVsRandom => meta_vs_random(cfg),
        Study::PretrainVsCold => pretrain_vs_cold(cfg),
    }
}

fn vd_vs_iac(cfg: &ExperimentConfig) -> Result<StudyResult, HarnessError> {
    let graph = build_graph(cfg)?;
    let rows = (0..cfg.study_seeds)
        .into_par_iter()
        .map(|i| -> Result<_, HarnessError> {
            let seed = run_seed(cfg.seed, i);
            let x = build_requests(cfg, seed);
            let env = scene(cfg, &graph).env(&x)?;
            let init = build_initials(cfg, &graph, seed);
            let tc = cfg.train_config(seed);
            let (_, vd) = ac::train_vdac(&env, &tc, &init)?;
            let (_, iac) = ac::train_iac(&env, &tc, &init)?;
            Ok((
                i,
                seed,
                vec![
                    vd.final_hits(cfg.final_window),
                    iac.final_hits(cfg.final_window),
                    vd.epochs_to_converge() as f64,
                    iac.epochs_to_converge() as f64,
                ],
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let runs = RunTable::new(
        &["vd_final_hits", "iac_final_hits", "vd_convergence_epoch", "iac_convergence_epoch"],
        rows,
    );
    let summary = summarize_table(Study::VdVsIac, &runs);
    Ok(StudyResult { study: Study::VdVsIac, runs, summary, extras: Vec::new() })
}

/// Meta initials for the config's base distribution, trained from random
/// initials on the master seed.
pub fn train_meta_initials(cfg: &ExperimentConfig) -> Result<(MetaInitials, MetaReport), HarnessError> {
    let graph = build_graph(cfg)?;
    let sc = scene(cfg, &graph);
    let seed = SeedStream::new(cfg.seed).derive("meta-initials").seed();
    let start = meta::random_initials(&sc, &cfg.hidden, &cfg.distribution().label, seed);
    Ok(meta::meta_train(&cfg.distribution(), &sc, &cfg.meta_config(seed), &start)?)
}

fn meta_vs_random(cfg: &ExperimentConfig) -> Result<StudyResult, HarnessError> {
    let graph = build_graph(cfg)?;
    let (initials, report) = train_meta_initials(cfg)?;
    let rows = (0..cfg.study_seeds)
        .into_par_iter()
        .map(|i| -> Result<_, HarnessError> {
            let seed = run_seed(cfg.seed, i);
            let x = build_requests(cfg, seed);
            let env = scene(cfg, &graph).env(&x)?;
            let random = build_initials(cfg, &graph, seed);
            let tc = cfg.train_config(seed);
            let (_, m) = ac::train_vdac(&env, &tc, &initials.agents)?;
            let (_, r) = ac::train_vdac(&env, &tc, &random)?;
            Ok((
                i,
                seed,
                vec![
                    m.epochs_to_converge() as f64,
                    r.epochs_to_converge() as f64,
                    m.final_hits(cfg.final_window),
                    r.final_hits(cfg.final_window),
                    first_window(&m.hits, cfg.window),
                    first_window(&r.hits, cfg.window),
                ],
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let runs = RunTable::new(
        &[
            "meta_convergence_epoch",
            "random_convergence_epoch",
            "meta_final_hits",
            "random_final_hits",
            "meta_first_window_hits",
            "random_first_window_hits",
        ],
        rows,
    );
    let summary = summarize_table(Study::MetaVsRandom, &runs);
    Ok(StudyResult {
        study: Study::MetaVsRandom,
        runs,
        summary,
        extras: vec![("meta.csv".into(), report.csv())],
    })
}

/// One paired pre-training trial: the full sequence over `dists` and a
/// cold meta training on the last distribution with the same stage seed.
pub struct PretrainTrial {
    pub pretrain: meta::PretrainOutcome,
    pub cold: MetaReport,
}

pub fn pretrain_trial(cfg: &ExperimentConfig, dists: &[RequestDistribution], seed: u64) -> Result<PretrainTrial, HarnessError> {
    let graph = build_graph(cfg)?;
    let sc = scene(cfg, &graph);
    let mc = cfg.meta_config(seed);
    let pretrain = meta::pretrain_sequence(dists, &sc, &mc, &cfg.hidden)?;
    let last = dists.len() - 1;
    let stage_seed = SeedStream::new(seed).derive("pretrain").child("stage", last as u64).derive("meta").seed();
    let cold_seed = SeedStream::new(seed).derive(streams::INIT).child("cold", 0).seed();
    let start = meta::random_initials(&sc, &cfg.hidden, &dists[last].label, cold_seed);
    let (_, cold) = meta::meta_train(&dists[last], &sc, &meta::MetaConfig { seed: stage_seed, ..mc }, &start)?;
    Ok(PretrainTrial { pretrain, cold })
}

fn pretrain_vs_cold(cfg: &ExperimentConfig) -> Result<StudyResult, HarnessError> {
    let dists = cfg.study_distributions();
    let rows = (0..cfg.study_seeds)
        .into_par_iter()
        .map(|i| -> Result<_, HarnessError> {
            let seed = run_seed(cfg.seed, i);
            let trial = pretrain_trial(cfg, &dists, seed)?;
            let last = dists.len() - 1;
            let chosen = trial.pretrain.initials[last].warm_start.expect("warm started");
            let ds = &trial.pretrain.distances[last];
            Ok((
                i,
                seed,
                vec![
                    trial.pretrain.reports[last].epochs_to_converge() as f64,
                    trial.cold.epochs_to_converge() as f64,
                    f64::from(u8::from(chosen == 0)),
                    f64::from(u8::from(chosen != 0)),
                    chosen as f64,
                    ds[0].total(),
                    ds[1].total(),
                ],
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let runs = RunTable::new(
        &[
            "pretrain_meta_epochs",
            "cold_meta_epochs",
            "picked_near",
            "picked_far",
            "selected_candidate",
            "d_candidate_0",
            "d_candidate_1",
        ],
        rows,
    );
    let summary = summarize_table(Study::PretrainVsCold, &runs);
    Ok(StudyResult { study: Study::PretrainVsCold, runs, summary, extras: Vec::new() })
}
