//! Summary statistics for paired studies.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean and sample standard deviation (n − 1 denominator).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// One-sided paired t-test of `mean(a − b) > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    /// P(T ≥ t) under the null of zero mean difference.
    pub p_value: f64,
}

pub fn paired_t_greater(a: &[f64], b: &[f64]) -> PairedTest {
    assert_eq!(a.len(), b.len(), "paired samples");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let (mean, sd) = mean_sd(&d);
    if n < 2 {
        return PairedTest { n, mean_diff: mean, t: f64::NAN, p_value: f64::NAN };
    }
    if sd == 0.0 {
        let p = if mean > 0.0 { 0.0 } else { 1.0 };
        let t = if mean > 0.0 { f64::INFINITY } else if mean < 0.0 { f64::NEG_INFINITY } else { 0.0 };
        return PairedTest { n, mean_diff: mean, t, p_value: p };
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
    PairedTest { n, mean_diff: mean, t, p_value: 1.0 - dist.cdf(t) }
}

/// `(a − b) / b`.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b) / b
}
