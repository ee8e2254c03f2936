//! Central finite-difference check of the analytic network gradients.

use rand::seq::index::sample;
use rand::Rng as _;

use crate::nn::{self, DenseNet, EncodingDims};
use crate::seed::{Rng, SeedStream};

pub const FD_STEP: f64 = 1e-5;
/// Magnitudes below this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case: usize,
    pub head: &'static str,
    pub dims: Vec<usize>,
    pub checked: usize,
    pub max_rel_err: f64,
}

pub const GRADCHECK_HEADER: &str = "case,head,dims,checked,max_rel_err";

pub fn csv(results: &[CaseResult]) -> String {
    let mut s = String::from(GRADCHECK_HEADER);
    s.push('\n');
    for r in results {
        let dims = r.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        s.push_str(&format!("{},{},{},{},{:?}\n", r.case, r.head, dims, r.checked, r.max_rel_err));
    }
    s
}

fn random_encoding(dims: EncodingDims, rng: &mut Rng) -> Vec<f64> {
    let mut x = vec![0.0; dims.len()];
    let n = dims.len();
    x[rng.gen_range(0..n - 3)] = 1.0;
    if rng.gen_bool(0.5) {
        x[n - 3] = f64::from(u8::from(rng.gen_bool(0.5)));
        x[n - 2] = 1.0;
    }
    x[n - 1] = rng.gen_range(0..=dims.horizon) as f64 / dims.horizon.max(1) as f64;
    x
}

fn random_mask(n: usize, rng: &mut Rng) -> (Vec<bool>, usize) {
    let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let forced = rng.gen_range(0..n);
    mask[forced] = true;
    let legal: Vec<usize> = (0..n).filter(|&k| mask[k]).collect();
    let a = legal[rng.gen_range(0..legal.len())];
    (mask, a)
}

fn check<F: Fn(&DenseNet) -> f64>(net: &DenseNet, grad: &DenseNet, coords: &[usize], f: F) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for &i in coords {
        let v = net.get(i);
        probe.set(i, v + FD_STEP);
        let up = f(&probe);
        probe.set(i, v - FD_STEP);
        let down = f(&probe);
        probe.set(i, v);
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(grad.get(i), numeric));
    }
    worst
}

/// Run `cases` checks. Even cases use small random architectures with every
/// coordinate checked; odd cases use the full `[d_in, hidden.., d_out]`
/// shape for `dims` with `probes` sampled coordinates. Heads alternate
/// between the policy log-probability and the value.
pub fn run(cases: usize, dims: EncodingDims, hidden: &[usize], probes: usize, seed: u64) -> Vec<CaseResult> {
    let root = SeedStream::new(seed).derive("grad-check");
    (0..cases)
        .map(|case| {
            let mut rng = root.child("case", case as u64).rng();
            let policy = (case / 2) % 2 == 0;
            let head = if policy { "policy" } else { "value" };
            let (enc_dims, shape) = if case % 2 == 0 {
                let d = EncodingDims {
                    n_gateways: rng.gen_range(1..4),
                    n_satellites: rng.gen_range(1..5),
                    horizon: rng.gen_range(1..20),
                };
                let mut shape = vec![d.len()];
                for _ in 0..rng.gen_range(1..3) {
                    shape.push(rng.gen_range(2..10));
                }
                shape.push(if policy { d.n_actions() } else { 1 });
                (d, shape)
            } else {
                let mut shape = vec![dims.len()];
                shape.extend_from_slice(hidden);
                shape.push(if policy { dims.n_actions() } else { 1 });
                (dims, shape)
            };
            let net = DenseNet::init(&shape, &mut rng).expect("valid shape");
            let x = random_encoding(enc_dims, &mut rng);
            let n = net.n_params();
            let coords: Vec<usize> = if case % 2 == 0 || probes >= n {
                (0..n).collect()
            } else {
                sample(&mut rng, n, probes).into_vec()
            };
            let max_rel_err = if policy {
                let (mask, a) = random_mask(net.d_out(), &mut rng);
                let g = nn::logprob_gradient(&net, &x, &mask, a).expect("legal action");
                check(&net, &g, &coords, |p| nn::policy_forward(p, &x, &mask).expect("mask")[a].ln())
            } else {
                let g = nn::value_gradient(&net, &x).expect("shape");
                check(&net, &g, &coords, |p| nn::value_forward(p, &x))
            };
            CaseResult { case, head, dims: shape, checked: coords.len(), max_rel_err }
        })
        .collect()
}
