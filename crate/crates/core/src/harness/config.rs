//! Experiment configuration: a flat `key = value` format with `[section]`
//! headers, layered over a named preset.
//!
//! ```text
//! preset = desk
//! seed = 7
//!
//! [env]
//! capacity = 3
//!
//! [train]
//! actor_step = 0.001
//! hidden = 100, 100
//! ```
//!
//! `#` starts a comment. Keys before the first header belong to the
//! top-level section. Unknown sections and keys are rejected.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ac::TrainConfig;
use crate::env::{EnvConfig, EvictionRule};
use crate::graph::ConstellationSpec;
use crate::meta::MetaConfig;
use crate::requests::RequestDistribution;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown preset `{0}` (expected tiny, desk or paper)")]
    UnknownPreset(String),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub seed: u64,
    /// Fixes the constellation instead of deriving it from `seed`.
    pub graph_seed: Option<u64>,
    /// Fixes the request realization instead of deriving it from `seed`.
    pub request_seed: Option<u64>,

    pub satellites: usize,
    pub gateways: usize,
    pub users: usize,
    pub horizon: usize,
    pub orbits: usize,
    pub slots_per_revolution: usize,
    pub ss_span: usize,

    pub files: usize,
    pub means: Vec<f64>,
    /// Request means of the far distribution in the pre-training study.
    pub far_means: Vec<f64>,
    /// Request means of the near-duplicate distribution in the pre-training study.
    pub near_means: Vec<f64>,

    pub capacity: usize,
    pub eviction: EvictionRule,

    pub gamma: f64,
    pub actor_step: f64,
    pub critic_step: f64,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub window: usize,
    pub tolerance: f64,
    /// Trailing epochs averaged into "final hits".
    pub final_window: usize,
    pub eval_episodes: usize,
    pub record_wall_time: bool,

    pub meta_samples: usize,
    pub meta_epochs: usize,
    pub inner_actor_step: f64,
    pub inner_critic_step: f64,
    pub outer_actor_step: f64,
    pub outer_critic_step: f64,
    pub adapt: bool,
    pub meta_window: usize,
    pub meta_tolerance: f64,
    pub stop_at_convergence: bool,

    /// Paired runs in a `compare` study.
    pub study_seeds: usize,
}

pub const PRESETS: [&str; 3] = ["tiny", "desk", "paper"];

fn half_and_half(users: usize, low: f64, high: f64) -> Vec<f64> {
    (0..users).map(|u| if u < users / 2 { low } else { high }).collect()
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let desk = ExperimentConfig {
            preset: "desk".into(),
            seed: 0,
            graph_seed: None,
            request_seed: None,
            satellites: 6,
            gateways: 3,
            users: 6,
            horizon: 30,
            orbits: 2,
            slots_per_revolution: 60,
            ss_span: 1,
            files: 8,
            means: half_and_half(6, 0.3, 0.6),
            far_means: half_and_half(6, 1.2, 0.9),
            near_means: half_and_half(6, 0.315, 0.615),
            capacity: 3,
            eviction: EvictionRule::CapAtMax,
            gamma: 0.99,
            actor_step: 1e-3,
            critic_step: 1e-3,
            epochs: 8000,
            hidden: vec![32, 32],
            window: 50,
            tolerance: 0.01,
            final_window: 100,
            eval_episodes: 100,
            record_wall_time: false,
            meta_samples: 8,
            meta_epochs: 300,
            inner_actor_step: 1e-3,
            inner_critic_step: 1e-3,
            outer_actor_step: 1e-3,
            outer_critic_step: 1e-3,
            adapt: true,
            meta_window: 25,
            meta_tolerance: 0.01,
            stop_at_convergence: false,
            study_seeds: 20,
        };
        match name {
            "desk" => Ok(desk),
            "tiny" => Ok(ExperimentConfig {
                preset: "tiny".into(),
                graph_seed: Some(1),
                request_seed: Some(2),
                satellites: 2,
                gateways: 1,
                users: 2,
                horizon: 4,
                orbits: 1,
                slots_per_revolution: 4,
                ss_span: 1,
                files: 2,
                means: vec![1.0, 1.0],
                far_means: vec![2.0, 2.0],
                near_means: vec![1.05, 1.05],
                capacity: 1,
                epochs: 500,
                hidden: vec![100, 100],
                actor_step: 1e-2,
                critic_step: 1e-2,
                window: 25,
                final_window: 25,
                eval_episodes: 50,
                meta_epochs: 100,
                meta_samples: 4,
                ..desk
            }),
            "paper" => Ok(ExperimentConfig {
                preset: "paper".into(),
                satellites: 12,
                gateways: 5,
                users: 20,
                horizon: 100,
                orbits: 4,
                slots_per_revolution: 120,
                ss_span: 1,
                files: 15,
                means: half_and_half(20, 1.0, 2.0),
                far_means: half_and_half(20, 4.0, 3.0),
                near_means: half_and_half(20, 1.05, 2.05),
                hidden: vec![100, 100],
                capacity: 5,
                epochs: 3000,
                meta_epochs: 1100,
                ..desk
            }),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn constellation(&self, seed: u64) -> ConstellationSpec {
        ConstellationSpec {
            n_satellites: self.satellites,
            n_gateways: self.gateways,
            n_users: self.users,
            horizon: self.horizon,
            orbits: self.orbits,
            slots_per_revolution: self.slots_per_revolution,
            ss_neighbor_span: self.ss_span,
            seed,
        }
    }

    pub fn distribution(&self) -> RequestDistribution {
        RequestDistribution::new(format!("{}-base", self.preset), self.means.clone(), self.files)
            .expect("validated means")
    }

    /// The base, far and near-duplicate distributions of the pre-training study.
    pub fn study_distributions(&self) -> Vec<RequestDistribution> {
        [("p1", &self.means), ("p2", &self.far_means), ("p3", &self.near_means)]
            .iter()
            .map(|(l, m)| RequestDistribution::new(*l, (*m).clone(), self.files).expect("validated means"))
            .collect()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig { capacity: self.capacity, eviction: self.eviction }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            actor_step: self.actor_step,
            critic_step: self.critic_step,
            epochs: self.epochs,
            seed,
            window: self.window,
            tolerance: self.tolerance,
            record_wall_time: self.record_wall_time,
        }
    }

    pub fn meta_config(&self, seed: u64) -> MetaConfig {
        MetaConfig {
            samples: self.meta_samples,
            epochs: self.meta_epochs,
            inner_actor_step: self.inner_actor_step,
            inner_critic_step: self.inner_critic_step,
            outer_actor_step: self.outer_actor_step,
            outer_critic_step: self.outer_critic_step,
            gamma: self.gamma,
            seed,
            adapt: self.adapt,
            window: self.meta_window,
            tolerance: self.meta_tolerance,
            stop_at_convergence: self.stop_at_convergence,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("constellation.satellites", self.satellites),
            ("constellation.gateways", self.gateways),
            ("constellation.users", self.users),
            ("constellation.horizon", self.horizon),
            ("constellation.orbits", self.orbits),
            ("constellation.slots_per_revolution", self.slots_per_revolution),
            ("requests.files", self.files),
            ("env.capacity", self.capacity),
            ("train.window", self.window),
            ("train.final_window", self.final_window),
            ("train.eval_episodes", self.eval_episodes),
            ("meta.samples", self.meta_samples),
            ("meta.epochs", self.meta_epochs),
            ("meta.window", self.meta_window),
            ("study.seeds", self.study_seeds),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(invalid(k, "must be at least 1"));
            }
        }
        if !self.satellites.is_multiple_of(self.orbits) {
            return Err(invalid("constellation.orbits", "must divide the satellite count"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("train.gamma", "must lie in (0, 1]"));
        }
        let steps = [
            ("train.actor_step", self.actor_step),
            ("train.critic_step", self.critic_step),
            ("meta.inner_actor_step", self.inner_actor_step),
            ("meta.inner_critic_step", self.inner_critic_step),
            ("meta.outer_actor_step", self.outer_actor_step),
            ("meta.outer_critic_step", self.outer_critic_step),
            ("train.tolerance", self.tolerance),
            ("meta.tolerance", self.meta_tolerance),
        ];
        for (k, v) in steps {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(k, "must be a finite non-negative number"));
            }
        }
        for (k, m) in [("requests.means", &self.means), ("study.far_means", &self.far_means), ("study.near_means", &self.near_means)] {
            if m.len() != self.users {
                return Err(invalid(k, format!("needs one mean per user cluster ({}), got {}", self.users, m.len())));
            }
            if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(invalid(k, "means must be finite and non-negative"));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid("train.hidden", "needs at least one positive layer width"));
        }
        Ok(())
    }

    /// Resolve a config text over a preset. A `preset` key in the text is
    /// honoured unless `preset_override` is given.
    pub fn load(text: &str, preset_override: Option<&str>) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        let from_text = entries.iter().find(|e| e.key == "preset" && e.section.is_empty());
        let name = match (preset_override, from_text) {
            (Some(p), _) => p.to_string(),
            (None, Some(e)) => e.value.clone(),
            (None, None) => "desk".to_string(),
        };
        let mut cfg = Self::preset(&name)?;
        for e in &entries {
            if e.section.is_empty() && e.key == "preset" {
                continue;
            }
            cfg.set(&e.section, &e.key, &e.value).map_err(|err| match err {
                ConfigError::Invalid { key, message } => ConfigError::Parse { line: e.line, message: format!("`{key}`: {message}") },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        let k = full.as_str();
        match k {
            "seed" => self.seed = parse(k, value)?,
            "graph_seed" => self.graph_seed = parse_opt(k, value)?,
            "request_seed" => self.request_seed = parse_opt(k, value)?,
            "constellation.satellites" => self.satellites = parse(k, value)?,
            "constellation.gateways" => self.gateways = parse(k, value)?,
            "constellation.users" => self.users = parse(k, value)?,
            "constellation.horizon" => self.horizon = parse(k, value)?,
            "constellation.orbits" => self.orbits = parse(k, value)?,
            "constellation.slots_per_revolution" => self.slots_per_revolution = parse(k, value)?,
            "constellation.ss_span" => self.ss_span = parse(k, value)?,
            "requests.files" => self.files = parse(k, value)?,
            "requests.means" => self.means = parse_list(k, value)?,
            "study.far_means" => self.far_means = parse_list(k, value)?,
            "study.near_means" => self.near_means = parse_list(k, value)?,
            "study.seeds" => self.study_seeds = parse(k, value)?,
            "env.capacity" => self.capacity = parse(k, value)?,
            "env.eviction" => {
                self.eviction = match value {
                    "cap-at-max" => EvictionRule::CapAtMax,
                    "reach-max" => EvictionRule::ReachMax,
                    _ => return Err(invalid(k, "expected `cap-at-max` or `reach-max`")),
                }
            }
            "train.gamma" => {
                self.gamma = parse(k, value)?;
                if !(self.gamma > 0.0 && self.gamma <= 1.0) {
                    return Err(invalid(k, "must lie in (0, 1]"));
                }
            }
            "train.actor_step" => self.actor_step = parse(k, value)?,
            "train.critic_step" => self.critic_step = parse(k, value)?,
            "train.epochs" => self.epochs = parse(k, value)?,
            "train.hidden" => self.hidden = parse_list(k, value)?,
            "train.window" => self.window = parse(k, value)?,
            "train.tolerance" => self.tolerance = parse(k, value)?,
            "train.final_window" => self.final_window = parse(k, value)?,
            "train.eval_episodes" => self.eval_episodes = parse(k, value)?,
            "train.record_wall_time" => self.record_wall_time = parse(k, value)?,
            "meta.samples" => self.meta_samples = parse(k, value)?,
            "meta.epochs" => self.meta_epochs = parse(k, value)?,
            "meta.inner_actor_step" => self.inner_actor_step = parse(k, value)?,
            "meta.inner_critic_step" => self.inner_critic_step = parse(k, value)?,
            "meta.outer_actor_step" => self.outer_actor_step = parse(k, value)?,
            "meta.outer_critic_step" => self.outer_critic_step = parse(k, value)?,
            "meta.adapt" => self.adapt = parse(k, value)?,
            "meta.window" => self.meta_window = parse(k, value)?,
            "meta.tolerance" => self.meta_tolerance = parse(k, value)?,
            "meta.stop_at_convergence" => self.stop_at_convergence = parse(k, value)?,
            _ => return Err(invalid(k, "unknown key")),
        }
        Ok(())
    }

    /// Full text form; loading it reproduces this config.
    pub fn serialize(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let ulist = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let opt = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |s| s.to_string());
        let eviction = match self.eviction {
            EvictionRule::CapAtMax => "cap-at-max",
            EvictionRule::ReachMax => "reach-max",
        };
        let mut s = String::new();
        let _ = writeln!(s, "preset = {}", self.preset);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "graph_seed = {}", opt(self.graph_seed));
        let _ = writeln!(s, "request_seed = {}", opt(self.request_seed));
        let _ = writeln!(s, "\n[constellation]");
        let _ = writeln!(s, "satellites = {}", self.satellites);
        let _ = writeln!(s, "gateways = {}", self.gateways);
        let _ = writeln!(s, "users = {}", self.users);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "orbits = {}", self.orbits);
        let _ = writeln!(s, "slots_per_revolution = {}", self.slots_per_revolution);
        let _ = writeln!(s, "ss_span = {}", self.ss_span);
        let _ = writeln!(s, "\n[requests]");
        let _ = writeln!(s, "files = {}", self.files);
        let _ = writeln!(s, "means = {}", list(&self.means));
        let _ = writeln!(s, "\n[env]");
        let _ = writeln!(s, "capacity = {}", self.capacity);
        let _ = writeln!(s, "eviction = {eviction}");
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "actor_step = {:?}", self.actor_step);
        let _ = writeln!(s, "critic_step = {:?}", self.critic_step);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "hidden = {}", ulist(&self.hidden));
        let _ = writeln!(s, "window = {}", self.window);
        let _ = writeln!(s, "tolerance = {:?}", self.tolerance);
        let _ = writeln!(s, "final_window = {}", self.final_window);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "record_wall_time = {}", self.record_wall_time);
        let _ = writeln!(s, "\n[meta]");
        let _ = writeln!(s, "samples = {}", self.meta_samples);
        let _ = writeln!(s, "epochs = {}", self.meta_epochs);
        let _ = writeln!(s, "inner_actor_step = {:?}", self.inner_actor_step);
        let _ = writeln!(s, "inner_critic_step = {:?}", self.inner_critic_step);
        let _ = writeln!(s, "outer_actor_step = {:?}", self.outer_actor_step);
        let _ = writeln!(s, "outer_critic_step = {:?}", self.outer_critic_step);
        let _ = writeln!(s, "adapt = {}", self.adapt);
        let _ = writeln!(s, "window = {}", self.meta_window);
        let _ = writeln!(s, "tolerance = {:?}", self.meta_tolerance);
        let _ = writeln!(s, "stop_at_convergence = {}", self.stop_at_convergence);
        let _ = writeln!(s, "\n[study]");
        let _ = writeln!(s, "seeds = {}", self.study_seeds);
        let _ = writeln!(s, "far_means = {}", list(&self.far_means));
        let _ = writeln!(s, "near_means = {}", list(&self.near_means));
        s
    }
}

struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

const SECTIONS: [&str; 6] = ["constellation", "requests", "env", "train", "meta", "study"];

fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::new();
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse { line, message: "unterminated section header".into() })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::Parse { line, message: format!("unknown section `[{name}]`") });
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line, message: "expected `key = value`".into() })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Parse { line, message: "empty key".into() });
        }
        if out.iter().any(|e| e.section == section && e.key == k) {
            return Err(ConfigError::Parse { line, message: format!("duplicate key `{k}`") });
        }
        out.push(Entry { line, section: section.clone(), key: k.to_string(), value: v.to_string() });
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| invalid(key, format!("cannot parse `{v}`")))
}

fn parse_opt(key: &str, v: &str) -> Result<Option<u64>, ConfigError> {
    if v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_preset() {
        for p in PRESETS {
            let c = ExperimentConfig::load("", Some(p)).unwrap();
            assert_eq!(c, ExperimentConfig::preset(p).unwrap());
        }
        assert_eq!(ExperimentConfig::load("", None).unwrap().preset, "desk");
        assert_eq!(ExperimentConfig::load("preset = tiny", None).unwrap().files, 2);
    }

    #[test]
    fn preset_shapes() {
        let d = ExperimentConfig::preset("desk").unwrap();
        assert_eq!((d.gateways, d.satellites, d.users, d.files, d.horizon, d.capacity), (3, 6, 6, 8, 30, 3));
        let p = ExperimentConfig::preset("paper").unwrap();
        assert_eq!((p.gateways, p.users, p.satellites, p.orbits, p.files, p.horizon), (5, 20, 12, 4, 15, 100));
        assert_eq!(p.hidden, vec![100, 100]);
        let t = ExperimentConfig::preset("tiny").unwrap();
        assert_eq!((t.files, t.satellites, t.gateways, t.users, t.horizon, t.capacity), (2, 2, 1, 2, 4, 1));
        for name in PRESETS {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn gamma_out_of_range_is_rejected() {
        let err = ExperimentConfig::load("[train]\ngamma = 1.5\n", None).unwrap_err();
        assert!(err.to_string().contains("(0, 1]"), "{err}");
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn unknown_keys_and_sections() {
        assert!(matches!(ExperimentConfig::load("[train]\nlearning_rate = 1\n", None), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(ExperimentConfig::load("\n[wat]\n", None), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(ExperimentConfig::load("seed 3", None), Err(ConfigError::Parse { line: 1, .. })));
        assert_eq!(ExperimentConfig::load("", Some("huge")).unwrap_err(), ConfigError::UnknownPreset("huge".into()));
    }

    #[test]
    fn constraint_errors_name_the_key() {
        let err = ExperimentConfig::load("[requests]\nmeans = 1, 2\n", None).unwrap_err();
        assert!(err.to_string().contains("requests.means"), "{err}");
        let err = ExperimentConfig::load("[env]\ncapacity = 0\n", None).unwrap_err();
        assert!(err.to_string().contains("env.capacity"), "{err}");
    }

    #[test]
    fn round_trip() {
        let text = "preset = tiny\nseed = 9 # comment\n[train]\nactor_step = 0.1234567890123\nhidden = 7, 5\n[env]\neviction = reach-max\n";
        let c = ExperimentConfig::load(text, None).unwrap();
        assert_eq!(c.hidden, vec![7, 5]);
        let again = ExperimentConfig::load(&c.serialize(), None).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.serialize(), c.serialize());
    }
}
