//! User request realizations and the distributions they are drawn from.

use rand::seq::index;
use rand::Rng as _;
use thiserror::Error;

use crate::seed::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum RequestError {
    #[error("negative Poisson mean {0}")]
    NegativeMean(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("distribution has {got} means but {expected} user clusters")]
    WrongLength { expected: usize, got: usize },
}

/// Probability mass of a Poisson(`mean`) variable truncated to `0..=max`
/// and renormalized.
pub fn truncated_poisson_pmf(mean: f64, max: usize) -> Result<Vec<f64>, RequestError> {
    if mean.is_nan() || mean < 0.0 {
        return Err(RequestError::NegativeMean(mean));
    }
    if mean == 0.0 {
        let mut p = vec![0.0; max + 1];
        p[0] = 1.0;
        return Ok(p);
    }
    // log-weights k ln(mean) - ln k!, shifted by their max before exponentiating
    let ln_mean = mean.ln();
    let mut logw = Vec::with_capacity(max + 1);
    let mut ln_fact = 0.0;
    for k in 0..=max {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        logw.push(k as f64 * ln_mean - ln_fact);
    }
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Draw `k ∈ 0..=max` from the truncated Poisson law by inverse CDF.
pub fn truncated_poisson_sample(mean: f64, max: usize, rng: &mut Rng) -> Result<usize, RequestError> {
    let pmf = truncated_poisson_pmf(mean, max)?;
    Ok(sample_pmf(&pmf, rng))
}

fn sample_pmf(pmf: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left a sliver above the last cumulative value
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Per-cluster truncated-Poisson request counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestDistribution {
    pub label: String,
    pub means: Vec<f64>,
    /// Truncation bound; equals the number of files.
    pub max_per_slot: usize,
}

impl RequestDistribution {
    pub fn new(label: impl Into<String>, means: Vec<f64>, max_per_slot: usize) -> Result<Self, RequestError> {
        if let Some(&m) = means.iter().find(|m| m.is_nan() || **m < 0.0) {
            return Err(RequestError::NegativeMean(m));
        }
        Ok(Self { label: label.into(), means, max_per_slot })
    }

    /// Analytic mean of each cluster's truncated request count.
    pub fn truncated_means(&self) -> Vec<f64> {
        self.means
            .iter()
            .map(|&m| {
                truncated_poisson_pmf(m, self.max_per_slot)
                    .expect("validated")
                    .iter()
                    .enumerate()
                    .map(|(k, p)| k as f64 * p)
                    .sum()
            })
            .collect()
    }

    /// Draw one realization. For every slot `t` and cluster `u`, `m_u` is
    /// drawn from the truncated law and `m_u` distinct files are chosen
    /// uniformly.
    pub fn sample(&self, n_files: usize, horizon: usize, rng: &mut Rng) -> RequestMatrix {
        let pmfs: Vec<Vec<f64>> = self
            .means
            .iter()
            .map(|&m| truncated_poisson_pmf(m, n_files).expect("validated"))
            .collect();
        let mut x = RequestMatrix::zeros(self.means.len(), n_files, horizon);
        for t in 0..horizon {
            for (u, pmf) in pmfs.iter().enumerate() {
                let m = sample_pmf(pmf, rng);
                if m == 0 {
                    continue;
                }
                for f in index::sample(rng, n_files, m) {
                    x.set(u, f, t, true);
                }
            }
        }
        x
    }

    /// `DIST v1` document.
    pub fn save(&self) -> String {
        let mut s = String::from("DIST v1\n");
        for (u, m) in self.means.iter().enumerate() {
            s.push_str(&format!("mean {u} {m}\n"));
        }
        s
    }

    pub fn load(text: &str, label: &str, n_users: usize, n_files: usize) -> Result<Self, RequestError> {
        let mut means = vec![None; n_users];
        let mut saw_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |message: String| RequestError::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split_whitespace().collect();
            if !saw_header {
                if f != ["DIST", "v1"] {
                    return Err(perr("expected header `DIST v1`".into()));
                }
                saw_header = true;
                continue;
            }
            if f.len() != 3 || f[0] != "mean" {
                return Err(perr(format!("expected `mean <u> <value>`, got `{line}`")));
            }
            let u: usize = f[1].parse().map_err(|_| perr(format!("bad cluster `{}`", f[1])))?;
            let v: f64 = f[2].parse().map_err(|_| perr(format!("bad mean `{}`", f[2])))?;
            if u >= n_users {
                return Err(perr(format!("cluster {u} out of range")));
            }
            if v.is_nan() || v < 0.0 {
                return Err(perr(format!("negative mean {v}")));
            }
            means[u] = Some(v);
        }
        if !saw_header {
            return Err(RequestError::Parse { line: 0, message: "missing `DIST v1` header".into() });
        }
        let got = means.iter().filter(|m| m.is_some()).count();
        if got != n_users {
            return Err(RequestError::WrongLength { expected: n_users, got });
        }
        Self::new(label, means.into_iter().flatten().collect(), n_files)
    }
}

/// Binary request tensor `x[u][f][t]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RequestMatrix {
    n_users: usize,
    n_files: usize,
    horizon: usize,
    bits: Vec<bool>,
}

impl RequestMatrix {
    pub fn zeros(n_users: usize, n_files: usize, horizon: usize) -> Self {
        Self { n_users, n_files, horizon, bits: vec![false; n_users * n_files * horizon] }
    }

    fn offset(&self, u: usize, f: usize, t: usize) -> usize {
        debug_assert!(u < self.n_users && f < self.n_files && t < self.horizon);
        (t * self.n_users + u) * self.n_files + f
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `x_u^f(t)`; slots at or beyond the horizon carry no requests.
    pub fn get(&self, u: usize, f: usize, t: usize) -> bool {
        t < self.horizon && self.bits[self.offset(u, f, t)]
    }

    pub fn set(&mut self, u: usize, f: usize, t: usize, v: bool) {
        let i = self.offset(u, f, t);
        self.bits[i] = v;
    }

    /// Number of files requested by cluster `u` at slot `t`.
    pub fn row_sum(&self, u: usize, t: usize) -> usize {
        (0..self.n_files).filter(|&f| self.get(u, f, t)).count()
    }

    pub fn total(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// `REQ v1` document, entries ordered by slot, cluster, file.
    pub fn save(&self) -> String {
        let mut s = format!("REQ v1 {} {} {}\n", self.n_users, self.n_files, self.horizon);
        for t in 0..self.horizon {
            for u in 0..self.n_users {
                for f in 0..self.n_files {
                    if self.get(u, f, t) {
                        s.push_str(&format!("{t} {u} {f}\n"));
                    }
                }
            }
        }
        s
    }

    pub fn load(text: &str) -> Result<Self, RequestError> {
        let mut m: Option<RequestMatrix> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |message: String| RequestError::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split_whitespace().collect();
            let nums = |xs: &[&str]| -> Result<Vec<usize>, RequestError> {
                xs.iter()
                    .map(|x| x.parse::<usize>().map_err(|_| perr(format!("bad integer `{x}`"))))
                    .collect()
            };
            match m.as_mut() {
                None => {
                    if f.len() != 5 || f[0] != "REQ" || f[1] != "v1" {
                        return Err(perr("expected header `REQ v1 N_U N_F T`".into()));
                    }
                    let v = nums(&f[2..])?;
                    m = Some(RequestMatrix::zeros(v[0], v[1], v[2]));
                }
                Some(x) => {
                    if f.len() != 3 {
                        return Err(perr(format!("expected `<t> <u> <f>`, got `{line}`")));
                    }
                    let v = nums(&f)?;
                    let (t, u, file) = (v[0], v[1], v[2]);
                    if t >= x.horizon || u >= x.n_users || file >= x.n_files {
                        return Err(perr(format!("entry `{line}` out of range")));
                    }
                    x.set(u, file, t, true);
                }
            }
        }
        m.ok_or(RequestError::Parse { line: 0, message: "missing `REQ v1` header".into() })
    }
}
