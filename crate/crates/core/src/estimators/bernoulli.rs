//! Bernoulli bond percolation: arm curves, pivotal-count derivatives and the
//! arm/crossing inequalities.

use super::fit::{fit_exponential_decay, FitResult};
use super::spec::{check_p, BondEventFn, EventSpec};
use super::{check_n, joint_replicas, Estimate, JointMoments, Report, Term};
use crate::bond::LazyBonds;
use crate::error::{bail, Result};
use crate::events::{cluster_of, crossing_event, one_arm_event, one_arm_radius, pivotal_edges, two_arm_event, Domain};
use crate::lattice::LatticeBox;
use crate::mc::{fold_replicas, moments_replicas};
use crate::rng::ReplicaStream;

/// P̂[A₁(R)] for every R in `radii` from one exploration of Λ_{max R} per
/// replica. Because edge uniforms are global, entry i equals
/// `mc_estimate` of A₁(radii[i]) with the same seed.
pub fn one_arm_curve(d: usize, p: f64, radii: &[i64], n: u64, seed: u64, workers: usize) -> Result<Vec<Estimate>> {
    check_n(n)?;
    check_p(p)?;
    let Some(&big) = radii.iter().max() else { bail!(InvalidParameter, "empty radius list") };
    if radii.iter().any(|&r| r < 0) {
        bail!(InvalidParameter, "negative radius");
    }
    let lat = LatticeBox::cube(d, big)?;
    let counts = fold_replicas(
        n,
        workers,
        || vec![0u64; radii.len()],
        |acc, i| {
            let s = LazyBonds::new(&lat, p, ReplicaStream::new(seed, i))?;
            let reach = one_arm_radius(&s, big)?;
            for (c, &r) in acc.iter_mut().zip(radii) {
                *c += (reach >= r) as u64;
            }
            Ok(())
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )?;
    Ok(radii.iter().zip(counts).map(|(r, c)| Estimate::from_count(c, n, seed, format!("bernoulli d={d} p={p} one-arm R={r}"))).collect())
}

/// P_q[A₁(R)] − P_p[A₁(R)] ≤ M·(q−p)·√(P_q[A₁(R)]·Σ_{v∈Λ_R} P_p[0↔v]) with
/// M = max{√2/√(q(1−q)), √2/√(p(1−p))}. All three means come from the same
/// coupled replicas; the gap's error is by the delta method.
pub fn check_ubb1(d: usize, p: f64, q: f64, r: i64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    if !(p > 0.0 && q < 1.0) {
        bail!(InvalidParameter, "need 0 < p ≤ q < 1, got p={p}, q={q}");
    }
    if p > q {
        bail!(InvalidParameter, "p = {p} exceeds q = {q}");
    }
    if r < 1 {
        bail!(InvalidParameter, "need R ≥ 1");
    }
    let lat = LatticeBox::cube(d, r)?;
    let o = lat.origin().expect("origin");
    let j = joint_replicas(n, workers, 3, |i| {
        let st = ReplicaStream::new(seed, i);
        let sq = LazyBonds::new(&lat, q, st)?;
        let sp = LazyBonds::new(&lat, p, st)?;
        let cluster = cluster_of(&sp, &[o], &Domain::Whole).count_ones(..);
        Ok(vec![one_arm_event(&sq, r)? as u8 as f64, one_arm_event(&sp, r)? as u8 as f64, cluster as f64])
    })?;
    let m = (2.0f64.sqrt() / (q * (1.0 - q)).sqrt()).max(2.0f64.sqrt() / (p * (1.0 - p)).sqrt());
    let (pq, pp, s) = (j.mean(0), j.mean(1), j.mean(2));
    let lhs = pq - pp;
    let root = (pq * s).sqrt();
    let rhs = m * (q - p) * root;
    let (g0, g2) = if root > 0.0 { (m * (q - p) * s / (2.0 * root), m * (q - p) * pq / (2.0 * root)) } else { (0.0, 0.0) };
    let sigma = j.delta(&[g0 - 1.0, 1.0, g2]);
    Ok(Report::new("ubb1")
        .with("P_q[A1]", j.term(0))
        .with("P_p[A1]", j.term(1))
        .with("sum P_p[0<->v]", j.term(2))
        .with("lhs", Term { value: lhs, stderr: j.delta(&[1.0, -1.0, 0.0]) })
        .with("rhs", Term { value: rhs, stderr: j.delta(&[g0, 0.0, g2]) })
        .with("M", Term::exact(m))
        .judge(rhs - lhs, sigma))
}

/// dP_p[A]/dp = E_p[number of pivotal edges] for an increasing connection event.
pub fn russo_derivative_estimate(d: usize, event: &EventSpec, p: f64, n: u64, seed: u64, workers: usize) -> Result<Estimate> {
    check_n(n)?;
    check_p(p)?;
    let ev = BondEventFn::new(d, event)?;
    let (src, tgt, lo, hi) = ev.connection()?;
    let (s, s2) = moments_replicas(n, workers, |i| {
        let st = LazyBonds::new(&ev.lattice, p, ReplicaStream::new(seed, i))?;
        Ok(pivotal_edges(&st, &src, &tgt, &lo, &hi).len() as f64)
    })?;
    Ok(Estimate::from_moments(s, s2, n, seed, format!("bernoulli d={d} p={p} {} pivotal count", event.describe())))
}

/// Central difference (P[A at p+h] − P[A at p−h])/(2h) on coupled uniforms,
/// one-sided at the ends of [0, 1].
pub fn finite_difference(d: usize, event: &EventSpec, p: f64, h: f64, n: u64, seed: u64, workers: usize) -> Result<Estimate> {
    check_n(n)?;
    check_p(p)?;
    if !(h > 0.0) {
        bail!(InvalidParameter, "step h must be positive");
    }
    let (a, b) = ((p - h).max(0.0), (p + h).min(1.0));
    let ev = BondEventFn::new(d, event)?;
    let (s, s2) = moments_replicas(n, workers, |i| {
        let st = ReplicaStream::new(seed, i);
        let hi = ev.evaluate(&LazyBonds::new(&ev.lattice, b, st)?)? as u8 as f64;
        let lo = ev.evaluate(&LazyBonds::new(&ev.lattice, a, st)?)? as u8 as f64;
        Ok((hi - lo) / (b - a))
    })?;
    Ok(Estimate::from_moments(s, s2, n, seed, format!("bernoulli d={d} p={p} h={h} {} finite difference", event.describe())))
}

fn require_geometry(k: f64, radii: &[i64], min_r: i64) -> Result<()> {
    if radii.is_empty() {
        bail!(InvalidParameter, "empty radius list");
    }
    if !(k >= 1.0) {
        bail!(InvalidParameter, "need k ≥ 1, got {k}");
    }
    if let Some(r) = radii.iter().find(|&&r| r < min_r) {
        bail!(InvalidParameter, "R = {r} below the minimum {min_r}");
    }
    Ok(())
}

/// Per-replica terms shared by ubb2 and lbb, five per radius:
/// pivotal count of Cross_k(R), 1[A₂(R)], 1[A₁(R)], 1[Cross_{1/(8k)}(kR)], 1[Cross_{8k}(R/8)].
fn crossing_terms(p: f64, k: f64, radii: &[i64], thin: bool, n: u64, seed: u64, workers: usize) -> Result<JointMoments> {
    struct Geo {
        cross: BondEventFn,
        src: Vec<usize>,
        tgt: Vec<usize>,
        lo: Vec<i64>,
        hi: Vec<i64>,
        arms: LatticeBox,
        r: i64,
        wide: Option<(LatticeBox, i64, LatticeBox, i64)>,
    }
    let mut geos = Vec::new();
    for &r in radii {
        let cross = BondEventFn::new(2, &EventSpec::Crossing { k, r: r as f64 })?;
        let (src, tgt, lo, hi) = cross.connection()?;
        let wide = if thin {
            let kr = (k * r as f64).round() as i64;
            if ((k * r as f64) - kr as f64).abs() > 1e-9 {
                bail!(InvalidParameter, "kR = {} must be a whole number", k * r as f64);
            }
            let r8 = r / 8;
            Some((LatticeBox::crossing(2, 1.0 / (8.0 * k), kr)?, kr, LatticeBox::crossing(2, 8.0 * k, r8)?, r8))
        } else {
            None
        };
        geos.push(Geo { cross, src, tgt, lo, hi, arms: LatticeBox::cube(2, r)?, r, wide });
    }
    joint_replicas(n, workers, 5 * radii.len(), |i| {
        let st = ReplicaStream::new(seed, i);
        let mut out = Vec::with_capacity(5 * geos.len());
        for g in &geos {
            let sc = LazyBonds::new(&g.cross.lattice, p, st)?;
            out.push(pivotal_edges(&sc, &g.src, &g.tgt, &g.lo, &g.hi).len() as f64);
            let sa = LazyBonds::new(&g.arms, p, st)?;
            out.push(two_arm_event(&sa, g.r)? as u8 as f64);
            out.push(one_arm_event(&sa, g.r)? as u8 as f64);
            match &g.wide {
                Some((lt, kr, lf, r8)) => {
                    out.push(crossing_event(&LazyBonds::new(lt, p, st)?, 1.0 / (8.0 * k), *kr)? as u8 as f64);
                    out.push(crossing_event(&LazyBonds::new(lf, p, st)?, 8.0 * k, *r8)? as u8 as f64);
                }
                None => out.extend([0.0, 0.0]),
            }
        }
        Ok(out)
    })
}

/// Largest and smallest finite positive entry.
fn spread(cs: &[f64]) -> Option<(f64, f64)> {
    let v: Vec<f64> = cs.iter().copied().filter(|c| c.is_finite() && *c > 0.0).collect();
    if v.is_empty() {
        return None;
    }
    Some((v.iter().copied().fold(f64::MIN, f64::max), v.iter().copied().fold(f64::MAX, f64::min)))
}

/// dP[Cross_k(R)]/dp ≤ c·R/√(p(1−p))·√P[A₂(R)] (and the √P[A₁(R)] form),
/// d = 2. Reports c_R = dP/dp·√(p(1−p))/(R·√P[A₂(R)]) per radius and the
/// fitted c = max_R c_R with the stability ratio max/min.
pub fn check_ubb2(p: f64, k: f64, radii: &[i64], n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    check_p(p)?;
    require_geometry(k, radii, 1)?;
    let j = crossing_terms(p, k, radii, false, n, seed, workers)?;
    let a = (p * (1.0 - p)).sqrt();
    let mut rep = Report::new("ubb2");
    let (mut c2s, mut c1s) = (Vec::new(), Vec::new());
    for (t, &r) in radii.iter().enumerate() {
        let b = 5 * t;
        let (dv, a2, a1) = (j.mean(b), j.mean(b + 1), j.mean(b + 2));
        let rr = r as f64;
        rep.set(&format!("dP/dp(R={r})"), j.term(b));
        rep.set(&format!("P[A2](R={r})"), j.term(b + 1));
        rep.set(&format!("P[A1](R={r})"), j.term(b + 2));
        for (name, pa, idx, list) in [("c_two_arm", a2, b + 1, &mut c2s), ("c_one_arm", a1, b + 2, &mut c1s)] {
            let c = if dv == 0.0 { 0.0 } else { dv * a / (rr * pa.sqrt()) };
            let mut g = vec![0.0; j.sum.len()];
            if pa > 0.0 {
                g[b] = a / (rr * pa.sqrt());
                g[idx] = -0.5 * c / pa;
            }
            rep.set(&format!("{name}(R={r})"), Term { value: c, stderr: j.delta(&g) });
            list.push(c);
        }
    }
    for (name, cs) in [("c_two_arm", &c2s), ("c_one_arm", &c1s)] {
        if let Some((hi, lo)) = spread(cs) {
            rep.set(&format!("{name}_fit"), Term::exact(hi));
            rep.set(&format!("{name}_stability"), Term::exact(hi / lo));
        } else {
            rep.set(&format!("{name}_fit"), Term::exact(0.0));
        }
    }
    Ok(rep)
}

/// dP[Cross_k(R)]/dp ≥ c/(p(1−p))·P[Cross_{1/(8k)}(kR)]⁴(1−P[Cross_{8k}(R/8)])²/P[A₂(R)],
/// d = 2, R ≥ 8. Reports c_R = derivative / (rhs without c) and the fitted
/// c = min_R c_R with its stability ratio.
pub fn check_lbb(p: f64, k: f64, radii: &[i64], n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    check_p(p)?;
    require_geometry(k, radii, 8)?;
    let j = crossing_terms(p, k, radii, true, n, seed, workers)?;
    let v = p * (1.0 - p);
    let mut rep = Report::new("lbb");
    let mut cs = Vec::new();
    for (t, &r) in radii.iter().enumerate() {
        let b = 5 * t;
        let (dv, a2, th, fat) = (j.mean(b), j.mean(b + 1), j.mean(b + 3), j.mean(b + 4));
        rep.set(&format!("dP/dp(R={r})"), j.term(b));
        rep.set(&format!("P[A2](R={r})"), j.term(b + 1));
        rep.set(&format!("P[Cross_1/8k(kR)](R={r})"), j.term(b + 3));
        rep.set(&format!("P[Cross_8k(R/8)](R={r})"), j.term(b + 4));
        let den = th.powi(4) * (1.0 - fat).powi(2);
        let q = if v > 0.0 && a2 > 0.0 { den / (v * a2) } else { f64::INFINITY };
        rep.set(&format!("rhs_over_c(R={r})"), Term::exact(q));
        let c = if q.is_finite() && q > 0.0 { dv / q } else { f64::INFINITY };
        let mut g = vec![0.0; j.sum.len()];
        if c.is_finite() {
            g[b] = v * a2 / den;
            g[b + 1] = dv * v / den;
            g[b + 3] = -4.0 * c / th;
            g[b + 4] = 2.0 * c / (1.0 - fat);
        }
        rep.set(&format!("c(R={r})"), Term { value: c, stderr: if c.is_finite() { j.delta(&g) } else { 0.0 } });
        cs.push(c);
    }
    if let Some((hi, lo)) = spread(&cs) {
        rep.set("c_fit", Term::exact(lo));
        rep.set("c_stability", Term::exact(hi / lo));
    }
    Ok(rep)
}

/// P[A₂(R)] ≤ 4·P[A₁(R−1)]² at p = 1/2, d = 2.
pub fn check_two_arm_square(r: i64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    if r < 2 {
        bail!(InvalidParameter, "need R ≥ 2");
    }
    let lat = LatticeBox::cube(2, r)?;
    let j = joint_replicas(n, workers, 2, |i| {
        let s = LazyBonds::new(&lat, 0.5, ReplicaStream::new(seed, i))?;
        Ok(vec![two_arm_event(&s, r)? as u8 as f64, one_arm_event(&s, r - 1)? as u8 as f64])
    })?;
    let (a2, a1) = (j.mean(0), j.mean(1));
    let rhs = 4.0 * a1 * a1;
    Ok(Report::new("two-arm-square")
        .with("P[A2(R)]", j.term(0))
        .with("P[A1(R-1)]", j.term(1))
        .with("rhs", Term { value: rhs, stderr: j.delta(&[0.0, 8.0 * a1]) })
        .with("R", Term::exact(r as f64))
        .judge(rhs - a2, j.delta(&[-1.0, 8.0 * a1])))
}

/// Exponential fit of the one-arm curve; returns the fit and ξ̂ = 1/rate.
pub fn correlation_length_estimate(d: usize, p: f64, radii: &[i64], n: u64, seed: u64, workers: usize) -> Result<(FitResult, f64)> {
    let curve = one_arm_curve(d, p, radii, n, seed, workers)?;
    let pts: Vec<(f64, f64, f64)> = radii.iter().zip(&curve).map(|(&r, e)| (r as f64, e.mean, e.stderr)).collect();
    let fit = fit_exponential_decay(&pts)?;
    let xi = if fit.rate() > 0.0 { 1.0 / fit.rate() } else { f64::INFINITY };
    Ok((fit, xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{mc_estimate, ModelSpec, Verdict};
    use crate::oracle::{enumerate_pivotal_derivative, Instance};

    #[test]
    fn curve_matches_single_estimates() {
        let radii = [1, 3, 5];
        let c = one_arm_curve(2, 0.5, &radii, 400, 11, 2).unwrap();
        for (r, e) in radii.iter().zip(&c) {
            let m = mc_estimate(&ModelSpec::Bernoulli { d: 2, p: 0.5 }, &EventSpec::OneArm { r: *r as f64, inner: None }, 400, 11, 1).unwrap();
            assert_eq!(e.mean, m.mean, "R={r}");
        }
        assert!(c.windows(2).all(|w| w[0].mean >= w[1].mean));
    }

    #[test]
    fn ubb1_trivial_and_errors() {
        let r = check_ubb1(2, 0.5, 0.5, 4, 200, 1, 1).unwrap();
        assert_eq!(r.get("lhs"), Some(0.0));
        assert_ne!(r.verdict, Verdict::Fails);
        assert!(matches!(check_ubb1(2, 0.6, 0.5, 4, 10, 1, 1), Err(crate::Error::InvalidParameter(_))));
        let r = check_ubb1(2, 0.5, 0.55, 8, 2000, 2, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Holds, "{r:?}");
    }

    #[test]
    fn pivotal_derivative_of_one_edge_is_one() {
        let ev = EventSpec::Rect { cols: 2, rows: 1 };
        let e = russo_derivative_estimate(2, &ev, 0.3, 100, 1, 1).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
        assert!(matches!(russo_derivative_estimate(2, &EventSpec::TwoArm { r: 3.0, inner: None }, 0.5, 10, 1, 1), Err(crate::Error::ContractViolation(_))));
    }

    #[test]
    fn pivotal_derivative_matches_oracle() {
        let ev = EventSpec::Rect { cols: 3, rows: 2 };
        let inst = Instance::crossing_rect(3, 2).unwrap();
        let exact: f64 = (0..inst.n()).map(|i| enumerate_pivotal_derivative(&inst, inst.free[i], 0.5).unwrap()).sum();
        let e = russo_derivative_estimate(2, &ev, 0.5, 20_000, 5, 1).unwrap();
        assert!((e.mean - exact).abs() <= 3.0 * e.stderr, "{e:?} vs {exact}");
    }

    #[test]
    fn pivotal_count_matches_finite_difference() {
        let ev = EventSpec::Crossing { k: 1.0, r: 4.0 };
        let a = russo_derivative_estimate(2, &ev, 0.5, 4000, 7, 1).unwrap();
        let b = finite_difference(2, &ev, 0.5, 0.02, 4000, 8, 1).unwrap();
        let s = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 3.0 * s, "{a:?} {b:?}");
    }

    #[test]
    fn two_arm_square_small() {
        let r = check_two_arm_square(4, 2000, 3, 1).unwrap();
        assert!(r.not_failed(), "{r:?}");
        assert!(check_two_arm_square(1, 10, 1, 1).is_err());
    }

    #[test]
    fn ubb2_and_lbb_report_constants() {
        let r = check_ubb2(0.5, 1.0, &[4, 8], 300, 1, 1).unwrap();
        assert!(r.get("c_two_arm_fit").unwrap() > 0.0);
        let at_one = check_ubb2(1.0, 1.0, &[4], 20, 1, 1).unwrap();
        assert_eq!(at_one.get("dP/dp(R=4)"), Some(0.0));
        let l = check_lbb(0.5, 1.0, &[8], 300, 1, 1).unwrap();
        assert!(l.get("c(R=8)").unwrap() > 0.0);
        assert!(matches!(check_lbb(0.5, 1.0, &[4], 10, 1, 1), Err(crate::Error::InvalidParameter(_))));
    }

    #[test]
    fn subcritical_correlation_length() {
        let (fit, xi) = correlation_length_estimate(2, 0.35, &[2, 4, 6, 8], 4000, 1, 1).unwrap();
        assert!(fit.rate() > 0.0 && xi.is_finite(), "{fit:?}");
    }
}
