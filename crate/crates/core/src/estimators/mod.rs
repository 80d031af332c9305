//! Monte Carlo estimates, exponent fits and empirical checks of the
//! percolation inequalities for both models.
//!
//! Every estimate is a pure function of its inputs and the master seed:
//! replica i draws from `ReplicaStream::new(seed, i)` and accumulators are
//! merged in block order, so the worker count never changes a result.

pub mod bernoulli;
pub mod bounds;
pub mod fit;
pub mod gaussian;
pub mod spec;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub use fit::{fit_exponential_decay, fit_power_law, FitResult};
pub use spec::{csv_row, mc_estimate, EventSpec, KernelSpec, ModelSpec};

/// Monte Carlo mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub params: String,
}

impl Estimate {
    /// Frequency of an indicator; stderr = √(mean(1−mean)/n).
    pub fn from_count(count: u64, n: u64, seed: u64, params: impl Into<String>) -> Self {
        let mean = count as f64 / n as f64;
        Self { mean, stderr: (mean * (1.0 - mean) / n as f64).sqrt(), n, seed, params: params.into() }
    }

    /// Sample mean of a real quantity from Σx and Σx².
    pub fn from_moments(sum: f64, sumsq: f64, n: u64, seed: u64, params: impl Into<String>) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sumsq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Self { mean, stderr: (var / nf).sqrt(), n, seed, params: params.into() }
    }

    pub fn term(&self) -> Term {
        Term { value: self.mean, stderr: self.stderr }
    }
}

/// Value and standard error of one term of a report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub value: f64,
    pub stderr: f64,
}

impl Term {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// The inequality holds by more than three standard errors.
    Holds,
    /// The gap is within three standard errors.
    Inconclusive,
    /// Violated by more than three standard errors.
    Fails,
    /// Only reported; the constant is existential.
    Reported,
}

/// `{check, terms, verdict, margin_sigma}`. `margin_sigma` is the gap in
/// units of its standard error; `None` when the gap carries no Monte Carlo
/// error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub terms: BTreeMap<String, Term>,
    pub verdict: Verdict,
    pub margin_sigma: Option<f64>,
}

impl Report {
    pub fn new(check: impl Into<String>) -> Self {
        Self { check: check.into(), terms: BTreeMap::new(), verdict: Verdict::Reported, margin_sigma: None }
    }

    pub fn with(mut self, name: &str, t: Term) -> Self {
        self.terms.insert(name.to_string(), t);
        self
    }

    pub fn set(&mut self, name: &str, t: Term) {
        self.terms.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.get(name).map(|t| t.value)
    }

    /// Verdict for `gap ≥ 0` with standard error `sigma`.
    pub fn judge(mut self, gap: f64, sigma: f64) -> Self {
        self.set("gap", Term { value: gap, stderr: sigma });
        let (v, m) = judge(gap, sigma);
        self.verdict = v;
        self.margin_sigma = m;
        self
    }

    /// Not failing by more than three standard errors.
    pub fn not_failed(&self) -> bool {
        self.verdict != Verdict::Fails
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

pub fn judge(gap: f64, sigma: f64) -> (Verdict, Option<f64>) {
    if sigma > 0.0 && sigma.is_finite() {
        let m = gap / sigma;
        let v = if m >= 3.0 {
            Verdict::Holds
        } else if m <= -3.0 {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        };
        (v, Some(m))
    } else {
        (if gap >= -1e-12 { Verdict::Holds } else { Verdict::Fails }, None)
    }
}

/// One line of the estimate CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub model: String,
    pub event: String,
    pub param: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub k: f64,
    pub n: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub seed: u64,
}

pub fn write_csv<W: Write>(w: W, rows: &[CsvRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        if let Err(e) = wr.serialize(r) {
            bail!(Internal, "csv: {e}");
        }
    }
    if let Err(e) = wr.flush() {
        bail!(Internal, "csv: {e}");
    }
    Ok(())
}

pub(crate) fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        bail!(InvalidParameter, "n = 0 replicas");
    }
    Ok(())
}

/// Sums of per-replica vectors and of their pairwise products, enough for
/// delta-method errors of smooth functions of several means.
#[derive(Clone, Debug)]
pub(crate) struct JointMoments {
    pub n: u64,
    pub sum: Vec<f64>,
    pub prod: Vec<f64>,
}

impl JointMoments {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, sum: vec![0.0; dim], prod: vec![0.0; dim * dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.sum.len();
        self.n += 1;
        for i in 0..d {
            self.sum[i] += x[i];
            for j in 0..d {
                self.prod[i * d + j] += x[i] * x[j];
            }
        }
    }

    pub fn merge(&mut self, o: JointMoments) {
        self.n += o.n;
        for (a, b) in self.sum.iter_mut().zip(o.sum) {
            *a += b;
        }
        for (a, b) in self.prod.iter_mut().zip(o.prod) {
            *a += b;
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        let d = self.sum.len();
        let n = self.n as f64;
        if self.n < 2 {
            return 0.0;
        }
        (self.prod[i * d + j] - n * self.mean(i) * self.mean(j)) / (n - 1.0)
    }

    pub fn term(&self, i: usize) -> Term {
        Term { value: self.mean(i), stderr: (self.cov(i, i).max(0.0) / self.n as f64).sqrt() }
    }

    /// Standard error of g(means) given its gradient.
    pub fn delta(&self, grad: &[f64]) -> f64 {
        let d = self.sum.len();
        let mut v = 0.0;
        for i in 0..d {
            for j in 0..d {
                if grad[i] != 0.0 && grad[j] != 0.0 {
                    v += grad[i] * grad[j] * self.cov(i, j);
                }
            }
        }
        (v.max(0.0) / self.n as f64).sqrt()
    }
}

/// Fold per-replica vectors into joint moments.
pub(crate) fn joint_replicas<F>(n: u64, workers: usize, dim: usize, f: F) -> Result<JointMoments>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    crate::mc::fold_replicas(
        n,
        workers,
        || JointMoments::new(dim),
        |acc, i| {
            let x = f(i)?;
            if x.len() != dim {
                bail!(Internal, "replica returned {} values, expected {dim}", x.len());
            }
            acc.push(&x);
            Ok(())
        },
        |a, b| a.merge(b),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(judge(1.0, 0.1).0, Verdict::Holds);
        assert_eq!(judge(0.1, 0.1).0, Verdict::Inconclusive);
        assert_eq!(judge(-1.0, 0.1).0, Verdict::Fails);
        assert_eq!(judge(0.0, 0.0), (Verdict::Holds, None));
    }

    #[test]
    fn estimate_errors() {
        let e = Estimate::from_count(25, 100, 1, "x");
        assert!((e.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        let m = Estimate::from_moments(10.0, 10.0, 10, 1, "x");
        assert_eq!((m.mean, m.stderr), (1.0, 0.0));
    }

    #[test]
    fn delta_method_matches_linear_case() {
        let mut j = JointMoments::new(2);
        for i in 0..100 {
            let x = i as f64;
            j.push(&[x, 2.0 * x]);
        }
        // a − b/2 is constant
        assert!(j.delta(&[1.0, -0.5]) < 1e-12);
        assert!((j.delta(&[1.0, 0.0]) - j.term(0).stderr).abs() < 1e-12);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[CsvRow { model: "bernoulli".into(), event: "one-arm".into(), param: 0.5, r: 8.0, k: 1.0, n: 10, estimate: 0.5, stderr: 0.1, seed: 3 }]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("model,event,param,R,k,n,estimate,stderr,seed\n"));
    }
}
