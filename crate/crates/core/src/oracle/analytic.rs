//! Closed-form checks: Bernoulli relative entropy, stopped sequences, the
//! Pinsker variant and half-space isoperimetry.

use std::collections::HashMap;

use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::Neumaier;
use crate::error::{bail, Result};

/// D_KL(Ber(p) ‖ Ber(q)) in nats; infinite when p is not absolutely
/// continuous with respect to q.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        bail!(InvalidParameter, "probabilities ({p}, {q}) outside [0,1]");
    }
    let term = |a: f64, b: f64| -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    Ok(term(p, q) + term(1.0 - p, 1.0 - q))
}

#[derive(Clone, Debug, Serialize)]
pub struct KlStoppedReport {
    /// D_KL of the stopped sequences, by enumeration.
    pub lhs: f64,
    /// E[τ(X)]·D_KL(Ber(p) ‖ Ber(q)).
    pub rhs: f64,
    pub expected_tau: f64,
    pub equal: bool,
}

/// Relative entropy between the laws of i.i.d. Ber(p) and Ber(q) sequences of
/// length n stopped at τ, where `tau` maps a full sequence to its stopping
/// time in 1..=n. Errors with a contract violation if τ is not a stopping time.
pub fn kl_stopped(p: f64, q: f64, n: usize, tau: &dyn Fn(&[bool]) -> usize) -> Result<KlStoppedReport> {
    if n == 0 || n > 12 {
        bail!(ResourceLimit, "sequence length {n} outside 1..=12");
    }
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        bail!(InvalidParameter, "probabilities ({p}, {q}) outside [0,1]");
    }
    let seqs: Vec<Vec<bool>> = (0..1u32 << n).map(|m| (0..n).map(|i| m >> i & 1 == 1).collect()).collect();
    // stopped prefixes, keyed by (length, bits)
    let mut stops: HashMap<(usize, u32), ()> = HashMap::new();
    let mut taus = Vec::with_capacity(seqs.len());
    for (m, x) in seqs.iter().enumerate() {
        let t = tau(x);
        if t == 0 || t > n {
            bail!(ContractViolation, "stopping time {t} outside 1..={n}");
        }
        stops.insert((t, m as u32 & ((1u32 << t) - 1)), ());
        taus.push(t);
    }
    for (m, &t) in taus.iter().enumerate() {
        let first = (1..=n).find(|&l| stops.contains_key(&(l, m as u32 & ((1u32 << l) - 1)))).expect("own prefix is recorded");
        if first != t {
            bail!(ContractViolation, "τ is not adapted: a sequence continues past a prefix where another stopped");
        }
    }
    let law = |r: f64, len: usize, bits: u32| -> f64 { (0..len).map(|i| if bits >> i & 1 == 1 { r } else { 1.0 - r }).product() };
    let mut keys: Vec<(usize, u32)> = stops.keys().copied().collect();
    keys.sort_unstable();
    let mut lhs = Neumaier::default();
    for &(len, bits) in &keys {
        let a = law(p, len, bits);
        if a == 0.0 {
            continue;
        }
        let b = law(q, len, bits);
        if b == 0.0 {
            lhs.add(f64::INFINITY);
        } else {
            lhs.add(a * (a / b).ln());
        }
    }
    let expected_tau: Neumaier = taus.iter().enumerate().map(|(m, &t)| law(p, n, m as u32) * t as f64).collect();
    let expected_tau = expected_tau.value();
    let kl = kl_bernoulli(p, q)?;
    let rhs = if kl == 0.0 { 0.0 } else { expected_tau * kl };
    let lhs = lhs.value();
    let equal = (lhs == rhs) || (lhs - rhs).abs() <= 1e-12;
    Ok(KlStoppedReport { lhs, rhs, expected_tau, equal })
}

/// 2·max{x, y}·D_KL(Ber(x) ‖ Ber(y)) − (x − y)².
pub fn pinsker_slack(x: f64, y: f64) -> Result<f64> {
    let kl = kl_bernoulli(x, y)?;
    if x == y {
        return Ok(0.0);
    }
    Ok(2.0 * x.max(y) * kl - (x - y).powi(2))
}

#[derive(Clone, Debug, Serialize)]
pub struct PinskerReport {
    pub step: f64,
    pub points: usize,
    pub worst_slack: f64,
    pub worst_at: (f64, f64),
}

/// Worst Pinsker-variant slack over the grid {step, 2·step, ...} ∩ (0, 1), squared.
pub fn pinsker_sweep(step: f64) -> Result<PinskerReport> {
    if !(step > 0.0 && step < 1.0) {
        bail!(InvalidParameter, "step {step} outside (0, 1)");
    }
    let k = ((1.0 / step) - 1e-9).ceil() as usize;
    let grid: Vec<f64> = (1..k).map(|i| i as f64 * step).filter(|&v| v < 1.0).collect();
    let mut worst = f64::INFINITY;
    let mut at = (0.0, 0.0);
    for &x in &grid {
        for &y in &grid {
            let s = pinsker_slack(x, y)?;
            if s < worst {
                worst = s;
                at = (x, y);
            }
        }
    }
    Ok(PinskerReport { step, points: grid.len() * grid.len(), worst_slack: worst, worst_at: at })
}

/// ½·sup|φ'| = φ(1)/2, the constant of the isoperimetric lower bound.
pub const ISO_C: f64 = 0.120_985_362_259_571_7;

#[derive(Clone, Debug, Serialize)]
pub struct IsoReport {
    pub a: f64,
    pub eps: f64,
    /// Φ(Φ⁻¹(a) + ε) − a, the ε-boundary of a half-space of measure a.
    pub lhs: f64,
    /// √(2/π)·a(1−a)·ε − c·ε².
    pub rhs: f64,
    pub holds: bool,
}

pub fn isoperimetry_halfspace_check(a: f64, eps: f64) -> Result<IsoReport> {
    if !(a > 0.0 && a < 1.0) || !(eps >= 0.0) {
        bail!(InvalidParameter, "need 0 < a < 1 and ε ≥ 0, got a={a}, ε={eps}");
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let lhs = n.cdf(n.inverse_cdf(a) + eps) - a;
    let rhs = (2.0 / std::f64::consts::PI).sqrt() * a * (1.0 - a) * eps - ISO_C * eps * eps;
    Ok(IsoReport { a, eps, lhs, rhs, holds: lhs >= rhs - 1e-15 })
}

/// The check on every (a, ε) pair of the two grids.
pub fn isoperimetry_sweep(a_grid: &[f64], eps_grid: &[f64]) -> Result<Vec<IsoReport>> {
    let mut out = Vec::with_capacity(a_grid.len() * eps_grid.len());
    for &a in a_grid {
        for &e in eps_grid {
            out.push(isoperimetry_halfspace_check(a, e)?);
        }
    }
    Ok(out)
}

#[doc(hidden)]
pub fn standard_normal_pdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").pdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kl_values() {
        assert_eq!(kl_bernoulli(0.3, 0.3).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_bernoulli(0.5, 0.25).unwrap(), 0.5 * (4.0f64 / 3.0).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(kl_bernoulli(0.5, 0.25).unwrap(), 0.143841036, epsilon = 1e-9);
        assert_eq!(kl_bernoulli(0.0, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(kl_bernoulli(0.0, 0.0).unwrap(), 0.0);
        assert!(kl_bernoulli(1.2, 0.5).is_err());
    }

    #[test]
    fn stopped_sequences() {
        let first_success = |x: &[bool]| x.iter().position(|&b| b).map_or(x.len(), |i| i + 1);
        let r = kl_stopped(0.3, 0.6, 6, &first_success).unwrap();
        assert!(r.equal, "{r:?}");
        assert_abs_diff_eq!(r.expected_tau, (1.0 - 0.7f64.powi(6)) / 0.3, epsilon = 1e-12);
        let full = kl_stopped(0.3, 0.6, 6, &|_| 6).unwrap();
        assert_abs_diff_eq!(full.lhs, 6.0 * kl_bernoulli(0.3, 0.6).unwrap(), epsilon = 1e-12);
        let same = kl_stopped(0.4, 0.4, 5, &first_success).unwrap();
        assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
        // looks at the future
        let peek = |x: &[bool]| if x[1] { 1 } else { 2 };
        assert!(matches!(kl_stopped(0.3, 0.6, 3, &peek), Err(crate::Error::ContractViolation(_))));
    }

    #[test]
    fn pinsker() {
        assert_eq!(pinsker_slack(0.4, 0.4).unwrap(), 0.0);
        let s = pinsker_slack(0.9, 0.1).unwrap();
        assert_abs_diff_eq!(s + 0.64, 1.8 * 0.8 * 9f64.ln(), epsilon = 1e-12);
        let r = pinsker_sweep(0.01).unwrap();
        assert_eq!(r.points, 99 * 99);
        assert!(r.worst_slack >= 0.0);
    }

    #[test]
    fn isoperimetry() {
        assert_abs_diff_eq!(ISO_C, standard_normal_pdf(1.0) / 2.0, epsilon = 1e-16);
        let r = isoperimetry_halfspace_check(0.3, 0.1).unwrap();
        assert_abs_diff_eq!(r.lhs, 0.0356, epsilon = 5e-5);
        assert_abs_diff_eq!(r.rhs, 0.01554, epsilon = 1e-5);
        assert!(r.holds);
        let z = isoperimetry_halfspace_check(0.5, 0.0).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        let a: Vec<f64> = (1..=19).map(|i| i as f64 * 0.05).collect();
        let e: Vec<f64> = (1..=50).map(|i| i as f64 * 0.01).collect();
        assert!(isoperimetry_sweep(&a, &e).unwrap().iter().all(|r| r.holds));
    }
}
