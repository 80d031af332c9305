//! Enumeration over all configurations of a small set of free edges.
//!
//! An [`Instance`] fixes a box, its free edges (all other edges are closed)
//! and an event. Its [`TruthTable`] is computed once; every exact quantity is
//! then a compensated sum over the table in mask order.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::Serialize;

use super::Neumaier;
use crate::bond::EdgeStates;
use crate::error::{bail, Result};
use crate::events;
use crate::explorer::{BondAlgorithm, BondTarget};
use crate::lattice::LatticeBox;

pub const MAX_PROBABILITY_EDGES: usize = 24;
pub const MAX_INFLUENCE_EDGES: usize = 20;
pub const MAX_REVEALMENT_EDGES: usize = 16;

const TOL: f64 = 1e-12;

pub type EventFn = Arc<dyn Fn(&dyn EdgeStates) -> Result<bool> + Send + Sync>;

/// Edge states given by the bits of a mask over the free edges.
struct MaskStates<'a> {
    lattice: &'a LatticeBox,
    pos: &'a [u8],
    mask: u64,
}

impl EdgeStates for MaskStates<'_> {
    fn lattice(&self) -> &LatticeBox {
        self.lattice
    }
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        let i = self.pos[e];
        i != u8::MAX && self.mask >> i & 1 == 1
    }
}

/// An event on a box with a designated set of free edges.
#[derive(Clone)]
pub struct Instance {
    pub name: String,
    pub lattice: LatticeBox,
    pub free: Vec<usize>,
    pos: Vec<u8>,
    event: EventFn,
}

impl std::fmt::Debug for Instance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Instance").field("name", &self.name).field("lattice", &self.lattice.describe()).field("free", &self.free).finish()
    }
}

impl Instance {
    pub fn new(name: impl Into<String>, lattice: LatticeBox, free: Vec<usize>, event: EventFn) -> Result<Self> {
        if free.len() > 63 {
            bail!(ResourceLimit, "{} free edges", free.len());
        }
        let mut pos = vec![u8::MAX; lattice.n_edges()];
        for (i, &e) in free.iter().enumerate() {
            if e >= lattice.n_edges() {
                bail!(InvalidQuery, "edge {e} outside {}", lattice.describe());
            }
            if pos[e] != u8::MAX {
                bail!(InvalidQuery, "edge {e} listed twice");
            }
            pos[e] = i as u8;
        }
        Ok(Self { name: name.into(), lattice, free, pos, event })
    }

    /// A bond target on `lattice` with its support as the free edges.
    pub fn from_target(name: impl Into<String>, lattice: LatticeBox, target: BondTarget) -> Result<Self> {
        let free = target.support(&lattice);
        Self::new(name, lattice, free, Arc::new(move |s: &dyn EdgeStates| target.evaluate(s)))
    }

    /// {e open} on a single-edge box.
    pub fn dictator() -> Self {
        let lat = LatticeBox::rect(2, 1).expect("valid rect");
        Self::new("dictator", lat, vec![0], Arc::new(|s: &dyn EdgeStates| Ok(s.is_open(0)))).expect("valid instance")
    }

    /// {e₁ open and e₂ open} on a path of two edges.
    pub fn edge_and() -> Self {
        let lat = LatticeBox::rect(3, 1).expect("valid rect");
        Self::new("and2", lat, vec![0, 1], Arc::new(|s: &dyn EdgeStates| Ok(s.is_open(0) && s.is_open(1)))).expect("valid instance")
    }

    /// {e₁ open} with a second free edge the event ignores.
    pub fn dictator_with_spectator() -> Self {
        let lat = LatticeBox::rect(3, 1).expect("valid rect");
        Self::new("dictator+1", lat, vec![0, 1], Arc::new(|s: &dyn EdgeStates| Ok(s.is_open(0)))).expect("valid instance")
    }

    /// A₁(r) on Λ_r, all edges free.
    pub fn one_arm(d: usize, r: i64) -> Result<Self> {
        let lat = LatticeBox::cube(d, r)?;
        let free = (0..lat.n_edges()).collect();
        Self::new(format!("one-arm d={d} r={r}"), lat, free, Arc::new(move |s: &dyn EdgeStates| events::one_arm_event(&s, r)))
    }

    /// A₂(r) on Λ_r in the plane, all edges free.
    pub fn two_arm(r: i64) -> Result<Self> {
        let lat = LatticeBox::cube(2, r)?;
        let free = (0..lat.n_edges()).collect();
        Self::new(format!("two-arm r={r}"), lat, free, Arc::new(move |s: &dyn EdgeStates| events::two_arm_event(&s, r)))
    }

    /// Left-right crossing of the `cols`×`rows` vertex rectangle.
    pub fn crossing_rect(cols: usize, rows: usize) -> Result<Self> {
        let lat = LatticeBox::rect(cols, rows)?;
        let target = BondTarget::rect(&lat, cols, rows);
        Self::from_target(format!("crossing {cols}x{rows}"), lat, target)
    }

    /// {0 ↔ v} inside Λ_r.
    pub fn two_point(d: usize, r: i64, v: &[i64]) -> Result<Self> {
        let lat = LatticeBox::cube(d, r)?;
        let Some(vi) = lat.vertex(v) else { bail!(InvalidQuery, "{v:?} outside Λ_{r}") };
        let free = (0..lat.n_edges()).collect();
        Self::new(format!("two-point {v:?} r={r}"), lat, free, Arc::new(move |s: &dyn EdgeStates| events::two_point_connected(&s, vi)))
    }

    pub fn n(&self) -> usize {
        self.free.len()
    }

    /// Position of edge `e` among the free edges.
    pub fn position(&self, e: usize) -> Option<usize> {
        self.pos.get(e).filter(|&&i| i != u8::MAX).map(|&i| i as usize)
    }

    pub fn evaluate(&self, mask: u64) -> Result<bool> {
        (self.event)(&MaskStates { lattice: &self.lattice, pos: &self.pos, mask })
    }

    /// Any view of the same lattice.
    pub fn evaluate_states(&self, states: &dyn EdgeStates) -> Result<bool> {
        (self.event)(states)
    }

    fn check_cap(&self, cap: usize) -> Result<()> {
        if self.n() > cap {
            bail!(ResourceLimit, "{} has {} free edges, cap is {cap}", self.name, self.n());
        }
        Ok(())
    }

    pub fn truth_table(&self) -> Result<TruthTable> {
        self.table_capped(MAX_PROBABILITY_EDGES)
    }

    fn table_capped(&self, cap: usize) -> Result<TruthTable> {
        self.check_cap(cap)?;
        let total = 1u64 << self.n();
        const CHUNK: u64 = 1 << 12;
        let chunks: Vec<Vec<bool>> = (0..total.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(total)).map(|m| self.evaluate(m)).collect::<Result<Vec<bool>>>())
            .collect::<Result<_>>()?;
        let mut bits = FixedBitSet::with_capacity(total as usize);
        for (m, v) in chunks.into_iter().flatten().enumerate() {
            bits.set(m, v);
        }
        Ok(TruthTable { n: self.n(), bits })
    }

    fn full_reveal(&self) -> Vec<usize> {
        self.free.clone()
    }
}

/// Values of the event on all 2^n masks.
#[derive(Clone, Debug)]
pub struct TruthTable {
    n: usize,
    bits: FixedBitSet,
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        bail!(InvalidParameter, "p = {p} outside [0,1]");
    }
    Ok(())
}

fn check_open_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        bail!(InvalidParameter, "p = {p} outside (0,1)");
    }
    Ok(())
}

/// Product measure weight of `mask` with per-position probabilities.
#[inline]
fn weight(mask: u64, probs: &[f64]) -> f64 {
    let mut w = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        w *= if mask >> i & 1 == 1 { p } else { 1.0 - p };
    }
    w
}

impl TruthTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, mask: u64) -> bool {
        self.bits.contains(mask as usize)
    }

    fn masks(&self) -> impl Iterator<Item = u64> {
        0..1u64 << self.n
    }

    /// P[A] when free edge i is open with probability `probs[i]`.
    pub fn probability_with(&self, probs: &[f64]) -> f64 {
        debug_assert_eq!(probs.len(), self.n);
        self.masks().filter(|&m| self.get(m)).map(|m| weight(m, probs)).collect::<Neumaier>().value()
    }

    pub fn probability(&self, p: f64) -> f64 {
        self.probability_with(&vec![p; self.n])
    }

    pub fn is_increasing(&self) -> bool {
        self.masks().all(|m| !self.get(m) || (0..self.n).all(|i| self.get(m | 1 << i)))
    }

    /// P[1_A(X) ≠ 1_A(X^(i))] with the i-th bit resampled.
    pub fn influence(&self, i: usize, p: f64) -> f64 {
        let probs = vec![p; self.n];
        let mut s = Neumaier::default();
        for m in self.masks() {
            if self.get(m) != self.get(m ^ 1 << i) {
                let flip = if m >> i & 1 == 1 { 1.0 - p } else { p };
                s.add(weight(m, &probs) * flip);
            }
        }
        s.value()
    }

    /// P[A | i open] − P[A | i closed], the derivative in p_i.
    pub fn derivative(&self, i: usize, p: f64) -> f64 {
        let probs = vec![p; self.n];
        let mut s = Neumaier::default();
        for m in self.masks().filter(|m| m >> i & 1 == 0) {
            let d = self.get(m | 1 << i) as i8 - self.get(m) as i8;
            if d != 0 {
                // weight of the other bits
                s.add(d as f64 * weight(m, &probs) / (1.0 - p));
            }
        }
        s.value()
    }

    /// P[i pivotal].
    pub fn pivotal_probability(&self, i: usize, p: f64) -> f64 {
        let probs = vec![p; self.n];
        self.masks().filter(|&m| self.get(m) != self.get(m ^ 1 << i)).map(|m| weight(m, &probs)).collect::<Neumaier>().value()
    }

    /// Cov(1_A, 1_{i open}).
    pub fn covariance(&self, i: usize, p: f64) -> f64 {
        let probs = vec![p; self.n];
        let joint: Neumaier = self.masks().filter(|&m| self.get(m) && m >> i & 1 == 1).map(|m| weight(m, &probs)).collect();
        joint.value() - self.probability(p) * p
    }

    /// Var[P[A | F_S]] and E[Var[1_A | F_S]] for the positions in `subset`.
    pub fn conditional_variance(&self, subset: &[usize], p: f64) -> CondVariance {
        let probs = vec![p; self.n];
        let k = subset.len();
        let smask: u64 = subset.iter().map(|&i| 1u64 << i).sum();
        let comp: Vec<usize> = (0..self.n).filter(|i| smask >> i & 1 == 0).collect();
        let spread = |bits: u64, idx: &[usize]| -> u64 { idx.iter().enumerate().map(|(j, &i)| (bits >> j & 1) << i).sum() };
        let outer_probs = vec![p; k];
        let inner_probs = vec![p; comp.len()];
        let total = self.probability_with(&probs);
        let mut var = Neumaier::default();
        let mut mean_cond = Neumaier::default();
        for s in 0..1u64 << k {
            let outer = spread(s, subset);
            let mut c = Neumaier::default();
            for t in 0..1u64 << comp.len() {
                let m = outer | spread(t, &comp);
                if self.get(m) {
                    c.add(weight(t, &inner_probs));
                }
            }
            let c = c.value();
            let w = weight(s, &outer_probs);
            var.add(w * (c - total) * (c - total));
            mean_cond.add(w * c * (1.0 - c));
        }
        let var_total = total * (1.0 - total);
        let (var_cond, mean_cond_var) = (var.value(), mean_cond.value());
        CondVariance { var_cond, mean_cond_var, var_total, total_variance_gap: (var_total - var_cond - mean_cond_var).abs() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CondVariance {
    /// Var[P[A | F_S]].
    pub var_cond: f64,
    /// E[Var[1_A | F_S]].
    pub mean_cond_var: f64,
    /// Var(1_A).
    pub var_total: f64,
    /// |Var(1_A) − Var[P[A|F_S]] − E[Var[1_A|F_S]]|.
    pub total_variance_gap: f64,
}

pub fn enumerate_probability(inst: &Instance, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(inst.truth_table()?.probability(p))
}

/// Resampling influence of edge `e`; 0 for edges that are not free.
pub fn enumerate_influence(inst: &Instance, e: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    let t = inst.table_capped(MAX_INFLUENCE_EDGES)?;
    Ok(inst.position(e).map_or(0.0, |i| t.influence(i, p)))
}

/// ∂P_p[A]/∂p_e. Equal to P[e pivotal] for increasing events.
pub fn enumerate_pivotal_derivative(inst: &Instance, e: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    let t = inst.table_capped(MAX_INFLUENCE_EDGES)?;
    Ok(inst.position(e).map_or(0.0, |i| t.derivative(i, p)))
}

/// Variance of P[A | F_subset], with the law-of-total-variance terms.
pub fn enumerate_conditional_variance(inst: &Instance, subset: &[usize], p: f64) -> Result<CondVariance> {
    check_p(p)?;
    let t = inst.table_capped(MAX_INFLUENCE_EDGES)?;
    let pos = positions(inst, subset)?;
    Ok(t.conditional_variance(&pos, p))
}

fn positions(inst: &Instance, edges: &[usize]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(edges.len());
    for &e in edges {
        let Some(i) = inst.position(e) else { bail!(InvalidQuery, "edge {e} is not free in {}", inst.name) };
        if out.contains(&i) {
            bail!(InvalidQuery, "edge {e} listed twice");
        }
        out.push(i);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactRevealment {
    /// Rev(e) per free edge, in free-edge order.
    pub rev: Vec<f64>,
    /// E|W ∩ free edges|.
    pub expected_revealed: f64,
    /// E|W|, counting revealed edges that are not free.
    pub expected_revealed_all: f64,
}

impl ExactRevealment {
    pub fn max_over(&self, positions: &[usize]) -> f64 {
        positions.iter().map(|&i| self.rev[i]).fold(0.0, f64::max)
    }
}

/// Exact revealments of `alg` over all free-edge configurations and aux
/// values. Errors with a contract violation if a run's output differs from
/// the instance's event.
pub fn enumerate_revealment(inst: &Instance, alg: &BondAlgorithm, p: f64) -> Result<ExactRevealment> {
    check_p(p)?;
    let t = inst.table_capped(MAX_REVEALMENT_EDGES)?;
    revealment_with_table(inst, &t, alg, p)
}

fn revealment_with_table(inst: &Instance, t: &TruthTable, alg: &BondAlgorithm, p: f64) -> Result<ExactRevealment> {
    let n = inst.n();
    let probs = vec![p; n];
    let naux = alg.aux_count();
    let mut rev = vec![Neumaier::default(); n];
    let mut all = Neumaier::default();
    for m in 0..1u64 << n {
        let w = weight(m, &probs) / naux as f64;
        let states = MaskStates { lattice: &inst.lattice, pos: &inst.pos, mask: m };
        for a in 0..naux {
            let tr = alg.run(&states, a)?;
            if tr.output != t.get(m) {
                bail!(ContractViolation, "{:?} returns {} on mask {m:#x} of {}, event is {}", alg, tr.output, inst.name, t.get(m));
            }
            if w == 0.0 {
                continue;
            }
            for &e in &tr.revealed {
                if let Some(i) = inst.position(e) {
                    rev[i].add(w);
                }
            }
            all.add(w * tr.revealed.len() as f64);
        }
    }
    let rev: Vec<f64> = rev.iter().map(Neumaier::value).collect();
    let expected_revealed = rev.iter().copied().collect::<Neumaier>().value();
    Ok(ExactRevealment { rev, expected_revealed, expected_revealed_all: all.value() })
}

/// The algorithm that reveals every free edge in order.
fn full_reveal_revealment(inst: &Instance) -> ExactRevealment {
    let n = inst.full_reveal().len();
    ExactRevealment { rev: vec![1.0; n], expected_revealed: n as f64, expected_revealed_all: n as f64 }
}

fn revealment_for(inst: &Instance, t: &TruthTable, alg: Option<&BondAlgorithm>, p: f64) -> Result<ExactRevealment> {
    match alg {
        Some(a) => {
            inst.check_cap(MAX_REVEALMENT_EDGES)?;
            revealment_with_table(inst, t, a, p)
        }
        None => Ok(full_reveal_revealment(inst)),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OsssReport {
    /// Var(1_A).
    pub lhs: f64,
    /// ½·Σ Rev(e)·Infl(e).
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Var(1_A) ≤ ½·Σ_e Rev(e)·Infl(e). `alg = None` reveals all free edges.
pub fn check_osss(inst: &Instance, alg: Option<&BondAlgorithm>, p: f64) -> Result<OsssReport> {
    check_p(p)?;
    let t = inst.table_capped(MAX_INFLUENCE_EDGES)?;
    let rev = revealment_for(inst, &t, alg, p)?;
    let pa = t.probability(p);
    let lhs = pa * (1.0 - pa);
    let rhs = 0.5 * (0..inst.n()).map(|i| rev.rev[i] * t.influence(i, p)).collect::<Neumaier>().value();
    Ok(OsssReport { lhs, rhs, slack: rhs - lhs, holds: rhs - lhs >= -TOL })
}

#[derive(Clone, Debug, Serialize)]
pub struct GenlbReport {
    /// Σ_{e∈E'} ∂P_p[A]/∂p_e.
    pub lhs: f64,
    /// Var[P[A|F_E']] / (p(1−p)·max_{E'} Rev).
    pub rhs: f64,
    /// The same with the factor 4/(p(1−p)) in place of 1/(p(1−p)).
    pub rhs_stated: f64,
    pub cond_var: f64,
    pub max_rev: f64,
    /// ½·Σ_{E'} Rev·Infl, the conditional OSSS bound on Var[P[A|F_E']].
    pub osss_rhs: f64,
    pub holds: bool,
    pub holds_stated: bool,
}

fn require_increasing(inst: &Instance, t: &TruthTable) -> Result<()> {
    if !t.is_increasing() {
        bail!(ContractViolation, "{} is not increasing", inst.name);
    }
    Ok(())
}

/// Lower bound on the derivative sum over E' through the maximal revealment
/// in E'. `alg = None` reveals all free edges.
pub fn check_genlb(inst: &Instance, alg: Option<&BondAlgorithm>, subset: &[usize], p: f64) -> Result<GenlbReport> {
    check_open_p(p)?;
    let t = inst.table_capped(MAX_INFLUENCE_EDGES)?;
    require_increasing(inst, &t)?;
    let pos = positions(inst, subset)?;
    let rev = revealment_for(inst, &t, alg, p)?;
    let cv = t.conditional_variance(&pos, p);
    let lhs = pos.iter().map(|&i| t.derivative(i, p)).collect::<Neumaier>().value();
    let max_rev = rev.max_over(&pos);
    let pq = p * (1.0 - p);
    let (rhs, rhs_stated) = if cv.var_cond <= 0.0 {
        (0.0, 0.0)
    } else if max_rev == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (cv.var_cond / (pq * max_rev), 4.0 * cv.var_cond / (pq * max_rev))
    };
    let osss_rhs = 0.5 * pos.iter().map(|&i| rev.rev[i] * t.influence(i, p)).collect::<Neumaier>().value();
    Ok(GenlbReport { lhs, rhs, rhs_stated, cond_var: cv.var_cond, max_rev, osss_rhs, holds: lhs >= rhs - TOL, holds_stated: lhs >= rhs_stated - TOL })
}

#[derive(Clone, Debug, Serialize)]
pub struct GenubReport {
    pub p_p: f64,
    /// P_{p;q}^{E'}[A]: edges of E' at q, the others at p.
    pub p_pq: f64,
    /// |P_{p;q}^{E'}[A] − P_p[A]|.
    pub lhs: f64,
    /// max{1/√(q(1−q)), 1/√(p(1−p))}·|p−q|·√(max{P_p, P_{p;q}}·E_p|W_E'|).
    pub rhs: f64,
    /// The same with an extra factor √2.
    pub rhs_sqrt2: f64,
    pub expected_revealed: f64,
    /// |Σ_{E'} ∂P_p[A]/∂p_e|.
    pub deriv_lhs: f64,
    /// √(P_p[A]·E_p|W_E'|)/√(p(1−p)).
    pub deriv_rhs: f64,
    pub holds: bool,
    pub deriv_holds: bool,
}

/// Effect of moving the edges of E' from p to q, bounded through E_p|W_E'|.
pub fn check_genub(inst: &Instance, alg: Option<&BondAlgorithm>, subset: &[usize], p: f64, q: f64) -> Result<GenubReport> {
    check_open_p(p)?;
    check_open_p(q)?;
    let t = inst.table_capped(MAX_INFLUENCE_EDGES)?;
    let pos = positions(inst, subset)?;
    let rev = revealment_for(inst, &t, alg, p)?;
    let p_p = t.probability(p);
    let mut probs = vec![p; inst.n()];
    for &i in &pos {
        probs[i] = q;
    }
    let p_pq = t.probability_with(&probs);
    let ew: f64 = pos.iter().map(|&i| rev.rev[i]).collect::<Neumaier>().value();
    let c = (1.0 / (q * (1.0 - q)).sqrt()).max(1.0 / (p * (1.0 - p)).sqrt());
    let rhs = c * (p - q).abs() * (p_p.max(p_pq) * ew).sqrt();
    let lhs = (p_pq - p_p).abs();
    let deriv_lhs = pos.iter().map(|&i| t.derivative(i, p)).collect::<Neumaier>().value().abs();
    let deriv_rhs = (p_p * ew).sqrt() / (p * (1.0 - p)).sqrt();
    Ok(GenubReport {
        p_p,
        p_pq,
        lhs,
        rhs,
        rhs_sqrt2: std::f64::consts::SQRT_2 * rhs,
        expected_revealed: ew,
        deriv_lhs,
        deriv_rhs,
        holds: lhs <= rhs + TOL,
        deriv_holds: deriv_lhs <= deriv_rhs + TOL,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GenrevReport {
    pub max_rev: f64,
    /// Var[P[A|F_E']]^{2/3} / (p(1−p)·P_p[A]·|E'|)^{1/3}.
    pub bound: f64,
    /// The same with 4·Var in place of Var.
    pub bound_stated: f64,
    /// At p = ½ with E' all free edges: (2·Var)^{2/3}/(P·n)^{1/3} and the
    /// form with 8·Var.
    pub bsw: Option<(f64, f64)>,
    pub cond_var: f64,
    pub holds: bool,
    pub holds_stated: bool,
}

/// Lower bound on the maximal revealment in E' for an increasing event.
pub fn check_genrevbound(inst: &Instance, alg: Option<&BondAlgorithm>, subset: &[usize], p: f64) -> Result<GenrevReport> {
    check_open_p(p)?;
    let t = inst.table_capped(MAX_INFLUENCE_EDGES)?;
    require_increasing(inst, &t)?;
    let pos = positions(inst, subset)?;
    if pos.is_empty() {
        bail!(InvalidQuery, "empty edge subset");
    }
    let rev = revealment_for(inst, &t, alg, p)?;
    let cv = t.conditional_variance(&pos, p);
    let pa = t.probability(p);
    let max_rev = rev.max_over(&pos);
    let denom = (p * (1.0 - p) * pa * pos.len() as f64).cbrt();
    let (bound, bound_stated) = if cv.var_cond <= 0.0 { (0.0, 0.0) } else { (cv.var_cond.powf(2.0 / 3.0) / denom, (4.0 * cv.var_cond).powf(2.0 / 3.0) / denom) };
    let bsw = (p == 0.5 && pos.len() == inst.n()).then(|| {
        let v = pa * (1.0 - pa);
        let d = (pa * inst.n() as f64).cbrt();
        if v <= 0.0 {
            (0.0, 0.0)
        } else {
            ((2.0 * v).powf(2.0 / 3.0) / d, (8.0 * v).powf(2.0 / 3.0) / d)
        }
    });
    Ok(GenrevReport { max_rev, bound, bound_stated, bsw, cond_var: cv.var_cond, holds: max_rev >= bound - TOL, holds_stated: max_rev >= bound_stated - TOL })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn probabilities() {
        let lat = LatticeBox::rect(2, 2).unwrap();
        let always = Instance::new("true", lat, vec![0, 1], Arc::new(|_: &dyn EdgeStates| Ok(true))).unwrap();
        assert_abs_diff_eq!(enumerate_probability(&always, 0.37).unwrap(), 1.0, epsilon = 1e-15);
        let a1 = Instance::one_arm(2, 1).unwrap();
        assert_eq!(enumerate_probability(&a1, 0.5).unwrap(), 15.0 / 16.0);
        for p in [0.1, 0.3, 0.8] {
            assert_abs_diff_eq!(enumerate_probability(&a1, p).unwrap(), 1.0 - (1.0 - p).powi(4), epsilon = 1e-14);
        }
        assert_eq!(enumerate_probability(&Instance::crossing_rect(2, 1).unwrap(), 0.5).unwrap(), 0.5);
        assert_eq!(enumerate_probability(&Instance::crossing_rect(3, 2).unwrap(), 0.5).unwrap(), 0.5);
    }

    #[test]
    fn caps() {
        let big = Instance::one_arm(2, 2).unwrap(); // 40 edges
        assert!(matches!(enumerate_probability(&big, 0.5), Err(crate::Error::ResourceLimit(_))));
        let mid = Instance::crossing_rect(4, 3).unwrap(); // 17 edges
        assert!(enumerate_probability(&mid, 0.5).is_ok());
        assert!(matches!(enumerate_revealment(&mid, &BondAlgorithm::for_crossing("hyperplane", &BondTarget::rect(&mid.lattice, 4, 3)).unwrap(), 0.5), Err(crate::Error::ResourceLimit(_))));
    }

    #[test]
    fn influences_and_derivatives() {
        let p = 0.3;
        let d = Instance::dictator();
        assert_abs_diff_eq!(enumerate_influence(&d, 0, p).unwrap(), 2.0 * p * (1.0 - p), epsilon = 1e-15);
        assert_abs_diff_eq!(enumerate_pivotal_derivative(&d, 0, p).unwrap(), 1.0, epsilon = 1e-15);
        let s = Instance::dictator_with_spectator();
        assert_eq!(enumerate_influence(&s, 1, p).unwrap(), 0.0);
        let a = Instance::edge_and();
        assert_abs_diff_eq!(enumerate_influence(&a, 0, p).unwrap(), 2.0 * p * p * (1.0 - p), epsilon = 1e-15);
        assert_abs_diff_eq!(enumerate_pivotal_derivative(&a, 0, p).unwrap(), p, epsilon = 1e-15);
        // central difference, Russo and covariance identities
        let inst = Instance::crossing_rect(3, 2).unwrap();
        let t = inst.truth_table().unwrap();
        let h = 1e-4;
        for i in 0..inst.n() {
            let mut up = vec![p; inst.n()];
            let mut dn = up.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (t.probability_with(&up) - t.probability_with(&dn)) / (2.0 * h);
            let der = t.derivative(i, p);
            assert_abs_diff_eq!(fd, der, epsilon = 1e-6);
            assert_abs_diff_eq!(der, t.pivotal_probability(i, p), epsilon = 1e-14);
            assert_abs_diff_eq!(t.covariance(i, p), p * (1.0 - p) * der, epsilon = 1e-14);
            assert_abs_diff_eq!(t.influence(i, p), 2.0 * p * (1.0 - p) * der, epsilon = 1e-14);
        }
    }

    #[test]
    fn conditional_variance() {
        let inst = Instance::crossing_rect(3, 2).unwrap();
        let p = 0.4;
        let pa = enumerate_probability(&inst, p).unwrap();
        let none = enumerate_conditional_variance(&inst, &[], p).unwrap();
        assert_abs_diff_eq!(none.var_cond, 0.0, epsilon = 1e-15);
        let all = enumerate_conditional_variance(&inst, &inst.free, p).unwrap();
        assert_abs_diff_eq!(all.var_cond, pa * (1.0 - pa), epsilon = 1e-14);
        for k in 0..inst.n() {
            let cv = enumerate_conditional_variance(&inst, &inst.free[..k], p).unwrap();
            assert!(cv.total_variance_gap <= 1e-12);
        }
        let d = Instance::dictator();
        assert_abs_diff_eq!(enumerate_conditional_variance(&d, &[0], p).unwrap().var_cond, p * (1.0 - p), epsilon = 1e-15);
    }

    #[test]
    fn revealments() {
        let inst = Instance::one_arm(2, 1).unwrap();
        let r = enumerate_revealment(&inst, &BondAlgorithm::origin_cluster(1), 0.5).unwrap();
        // the four origin edges are always revealed
        let o = inst.lattice.origin().unwrap();
        for axis in 0..2 {
            for up in [false, true] {
                let (e, _) = inst.lattice.step(o, axis, up).unwrap();
                assert_eq!(r.rev[inst.position(e).unwrap()], 1.0);
            }
        }
        assert_abs_diff_eq!(r.expected_revealed, r.rev.iter().sum::<f64>(), epsilon = 1e-14);
        // an algorithm for a different event is rejected
        let wrong = Instance::crossing_rect(3, 2).unwrap();
        let alg = BondAlgorithm::for_crossing("hyperplane", &BondTarget::rect(&wrong.lattice, 2, 2)).unwrap();
        assert!(matches!(enumerate_revealment(&wrong, &alg, 0.5), Err(crate::Error::ContractViolation(_))));
    }

    fn crossing_algs(inst: &Instance, cols: usize, rows: usize) -> Vec<BondAlgorithm> {
        let target = BondTarget::rect(&inst.lattice, cols, rows);
        ["hyperplane", "interface", "full"].iter().map(|k| BondAlgorithm::for_crossing(k, &target).unwrap()).collect()
    }

    #[test]
    fn osss() {
        let d = Instance::dictator();
        let r = check_osss(&d, None, 0.3).unwrap();
        assert_abs_diff_eq!(r.slack, 0.0, epsilon = 1e-15);
        for (c, rr) in [(2, 1), (2, 2), (3, 2)] {
            let inst = Instance::crossing_rect(c, rr).unwrap();
            for alg in crossing_algs(&inst, c, rr) {
                for p in [0.2, 0.5, 0.7] {
                    let r = check_osss(&inst, Some(&alg), p).unwrap();
                    assert!(r.holds, "{alg:?} {p} {r:?}");
                }
            }
        }
        let a1 = Instance::one_arm(2, 1).unwrap();
        assert!(check_osss(&a1, Some(&BondAlgorithm::origin_cluster(1)), 0.5).unwrap().holds);
        assert!(check_osss(&Instance::two_arm(1).unwrap(), None, 0.5).unwrap().holds);
    }

    #[test]
    fn genlb() {
        let p = 0.3;
        let d = Instance::dictator();
        let r = check_genlb(&d, None, &[0], p).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_abs_diff_eq!(r.cond_var, p * (1.0 - p), epsilon = 1e-15);
        assert!(r.holds);
        assert!(r.rhs_stated > r.lhs, "the factor-4 form fails on a dictator");
        let s = Instance::dictator_with_spectator();
        let z = check_genlb(&s, None, &[1], p).unwrap();
        assert_eq!(z.rhs, 0.0);
        assert!(z.holds);
        let inst = Instance::crossing_rect(2, 2).unwrap();
        let alg = BondAlgorithm::for_crossing("interface", &BondTarget::rect(&inst.lattice, 2, 2)).unwrap();
        for k in 1..=inst.n() {
            let r = check_genlb(&inst, Some(&alg), &inst.free[..k], 0.5).unwrap();
            assert!(r.holds, "{r:?}");
            assert!(r.cond_var <= r.osss_rhs + 1e-14);
        }
        let closed = Instance::new("closed", LatticeBox::rect(2, 1).unwrap(), vec![0], Arc::new(|s: &dyn EdgeStates| Ok(!s.is_open(0)))).unwrap();
        assert!(matches!(check_genlb(&closed, None, &[0], 0.5), Err(crate::Error::ContractViolation(_))));
        assert!(matches!(check_genrevbound(&closed, None, &[0], 0.5), Err(crate::Error::ContractViolation(_))));
    }

    #[test]
    fn genub() {
        let a1 = Instance::one_arm(2, 1).unwrap();
        let alg = BondAlgorithm::origin_cluster(1);
        let same = check_genub(&a1, Some(&alg), &a1.free, 0.5, 0.5).unwrap();
        assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
        let r = check_genub(&a1, Some(&alg), &a1.free, 0.5, 0.6).unwrap();
        assert!(r.holds && r.deriv_holds, "{r:?}");
        let mut prev = 0.0;
        for q in [0.52, 0.55, 0.6, 0.7, 0.8] {
            let r = check_genub(&a1, Some(&alg), &a1.free, 0.5, q).unwrap();
            assert!(r.holds);
            assert!(r.rhs >= prev);
            prev = r.rhs;
        }
        // two-arm is not increasing but genub applies
        let a2 = Instance::two_arm(1).unwrap();
        assert!(check_genub(&a2, None, &a2.free, 0.4, 0.6).unwrap().holds);
    }

    #[test]
    fn genrevbound() {
        let d = Instance::dictator();
        let r = check_genrevbound(&d, None, &[0], 0.5).unwrap();
        assert_eq!(r.max_rev, 1.0);
        let (bsw, bsw_stated) = r.bsw.unwrap();
        assert_abs_diff_eq!(bsw_stated, 2.0, epsilon = 1e-12);
        assert!(bsw <= 1.0 && r.holds);
        assert!(!r.holds_stated);
        let s = Instance::dictator_with_spectator();
        let z = check_genrevbound(&s, None, &[1], 0.5).unwrap();
        assert_eq!(z.bound, 0.0);
        assert!(z.holds);
        let inst = Instance::crossing_rect(2, 1).unwrap();
        for alg in crossing_algs(&inst, 2, 1) {
            assert!(check_genrevbound(&inst, Some(&alg), &inst.free, 0.5).unwrap().holds);
        }
        let a1 = Instance::one_arm(2, 1).unwrap();
        assert!(check_genrevbound(&a1, Some(&BondAlgorithm::origin_cluster(1)), &a1.free, 0.5).unwrap().holds);
    }

    #[test]
    fn order_independent() {
        // same event, free edges listed in reverse
        let lat = LatticeBox::rect(3, 2).unwrap();
        let target = BondTarget::rect(&lat, 3, 2);
        let fwd = Instance::from_target("f", lat.clone(), target.clone()).unwrap();
        let mut rev_free = fwd.free.clone();
        rev_free.reverse();
        let t2 = target.clone();
        let bwd = Instance::new("b", lat, rev_free, Arc::new(move |s: &dyn EdgeStates| t2.evaluate(s))).unwrap();
        assert_abs_diff_eq!(enumerate_probability(&fwd, 0.37).unwrap(), enumerate_probability(&bwd, 0.37).unwrap(), epsilon = 1e-15);
        for &e in &fwd.free {
            assert_abs_diff_eq!(enumerate_influence(&fwd, e, 0.37).unwrap(), enumerate_influence(&bwd, e, 0.37).unwrap(), epsilon = 1e-15);
        }
    }
}
