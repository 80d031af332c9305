//! Edge-revealing algorithms for bond percolation.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use fixedbitset::FixedBitSet;
use rand::Rng;

use super::AlgorithmTrace;
use crate::bond::EdgeStates;
use crate::error::{bail, Result};
use crate::events;
use crate::lattice::LatticeBox;

/// The only access an algorithm has to the configuration.
pub struct EdgeRevealer<'a> {
    states: &'a dyn EdgeStates,
    seen: FixedBitSet,
    value: FixedBitSet,
    trace: AlgorithmTrace,
}

impl<'a> EdgeRevealer<'a> {
    pub fn new(states: &'a dyn EdgeStates, aux: Vec<u64>) -> Self {
        let m = states.lattice().n_edges();
        Self {
            states,
            seen: FixedBitSet::with_capacity(m),
            value: FixedBitSet::with_capacity(m),
            trace: AlgorithmTrace { aux, ..Default::default() },
        }
    }

    pub fn lattice(&self) -> &LatticeBox {
        self.states.lattice()
    }

    /// State of edge `e`, recording it on first use.
    pub fn reveal(&mut self, e: usize) -> bool {
        if self.seen.contains(e) {
            return self.value.contains(e);
        }
        let s = self.states.is_open(e);
        self.seen.insert(e);
        self.value.set(e, s);
        self.trace.revealed.push(e);
        self.trace.summary.push(s as u8 as f64);
        s
    }

    pub fn known(&self, e: usize) -> Option<bool> {
        self.seen.contains(e).then(|| self.value.contains(e))
    }

    pub fn finish(mut self, output: bool) -> AlgorithmTrace {
        self.trace.output = output;
        self.trace
    }
}

/// Events the bond algorithms determine.
#[derive(Clone, Debug, PartialEq)]
pub enum BondTarget {
    /// A₁(R).
    OneArm { r: i64 },
    /// A₂(R), d = 2.
    TwoArm { r: i64 },
    /// Left-right crossing of the sub-box `lo..=hi`.
    Crossing { lo: Vec<i64>, hi: Vec<i64> },
}

impl BondTarget {
    pub fn crossing(d: usize, k: f64, r: i64) -> Self {
        let (lo, hi) = events::crossing_bounds(d, k, r);
        BondTarget::Crossing { lo, hi }
    }

    /// The `cols`×`rows` vertex rectangle at the lower corner of `lattice`.
    pub fn rect(lattice: &LatticeBox, cols: usize, rows: usize) -> Self {
        let lo = lattice.lo().to_vec();
        let hi = vec![lo[0] + cols as i64 - 1, lo[1] + rows as i64 - 1];
        BondTarget::Crossing { lo, hi }
    }

    pub fn evaluate<E: EdgeStates + ?Sized>(&self, states: &E) -> Result<bool> {
        match self {
            BondTarget::OneArm { r } => events::one_arm_event(&states, *r),
            BondTarget::TwoArm { r } => events::two_arm_event(&states, *r),
            BondTarget::Crossing { lo, hi } => events::crossing_in(&states, lo, hi),
        }
    }

    /// Bounding region `lo..=hi` of the edges the event depends on.
    pub fn region(&self, d: usize) -> (Vec<i64>, Vec<i64>) {
        match self {
            BondTarget::OneArm { r } | BondTarget::TwoArm { r } => (vec![-r; d], vec![*r; d]),
            BondTarget::Crossing { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    /// Edges of `lattice` with both endpoints in the region, in index order.
    pub fn support(&self, lattice: &LatticeBox) -> Vec<usize> {
        let (lo, hi) = self.region(lattice.d());
        let inside = |x: &[i64]| (0..x.len()).all(|a| lo[a] <= x[a] && x[a] <= hi[a]);
        (0..lattice.n_edges())
            .filter(|&e| {
                let (u, v) = lattice.endpoints(e);
                inside(&lattice.coords(u)) && inside(&lattice.coords(v))
            })
            .collect()
    }

    /// Whether the event is increasing in the edge states.
    pub fn is_increasing(&self) -> bool {
        !matches!(self, BondTarget::TwoArm { .. })
    }
}

/// Bond algorithms. None of them uses auxiliary randomness.
#[derive(Clone, Debug, PartialEq)]
pub enum BondAlgorithm {
    /// Reveal every edge touching the open cluster of the origin inside Λ_R.
    OriginCluster { r: i64 },
    /// Reveal every edge touching the clusters of the left face of the box.
    Hyperplane { lo: Vec<i64>, hi: Vec<i64> },
    /// d = 2: trace the interface between the cluster of the left side and
    /// the dual cluster below the bottom side, starting at the bottom-left
    /// corner.
    Interface { lo: Vec<i64>, hi: Vec<i64> },
    /// Reveal the target's support in index order.
    FullReveal { target: BondTarget },
}

impl BondAlgorithm {
    pub fn origin_cluster(r: i64) -> Self {
        BondAlgorithm::OriginCluster { r }
    }

    pub fn hyperplane(d: usize, k: f64, r: i64) -> Self {
        let (lo, hi) = events::crossing_bounds(d, k, r);
        BondAlgorithm::Hyperplane { lo, hi }
    }

    pub fn interface(k: f64, r: i64) -> Self {
        let (lo, hi) = events::crossing_bounds(2, k, r);
        BondAlgorithm::Interface { lo, hi }
    }

    /// Crossing algorithms for the region of a crossing target.
    pub fn for_crossing(kind: &str, target: &BondTarget) -> Result<Self> {
        let BondTarget::Crossing { lo, hi } = target else { bail!(InvalidQuery, "not a crossing target") };
        let (lo, hi) = (lo.clone(), hi.clone());
        Ok(match kind {
            "hyperplane" => BondAlgorithm::Hyperplane { lo, hi },
            "interface" => BondAlgorithm::Interface { lo, hi },
            "full" => BondAlgorithm::FullReveal { target: target.clone() },
            _ => bail!(InvalidQuery, "unknown crossing algorithm {kind}"),
        })
    }

    pub fn target(&self) -> BondTarget {
        match self {
            BondAlgorithm::OriginCluster { r } => BondTarget::OneArm { r: *r },
            BondAlgorithm::Hyperplane { lo, hi } | BondAlgorithm::Interface { lo, hi } => BondTarget::Crossing { lo: lo.clone(), hi: hi.clone() },
            BondAlgorithm::FullReveal { target } => target.clone(),
        }
    }

    pub fn seeding(&self) -> &'static str {
        match self {
            BondAlgorithm::OriginCluster { .. } => "origin",
            BondAlgorithm::Hyperplane { .. } => "hyperplane",
            BondAlgorithm::Interface { .. } => "boundary-lines",
            BondAlgorithm::FullReveal { .. } => "all",
        }
    }

    pub fn growth(&self) -> &'static str {
        match self {
            BondAlgorithm::OriginCluster { .. } | BondAlgorithm::Hyperplane { .. } => "primal cluster",
            BondAlgorithm::Interface { .. } => "interface",
            BondAlgorithm::FullReveal { .. } => "fixed order",
        }
    }

    /// Number of equally likely auxiliary values.
    pub fn aux_count(&self) -> u64 {
        1
    }

    pub fn draw_aux<R: Rng>(&self, _rng: &mut R) -> u64 {
        0
    }

    pub fn run(&self, states: &dyn EdgeStates, aux: u64) -> Result<AlgorithmTrace> {
        let lat = states.lattice();
        let mut rv = EdgeRevealer::new(states, vec![aux]);
        let out = match self {
            BondAlgorithm::OriginCluster { r } => {
                let (lo, hi) = (vec![-r; lat.d()], vec![*r; lat.d()]);
                if !lat.contains_box(&lo, &hi) {
                    bail!(InvalidQuery, "{} does not cover Λ_{r}", lat.describe());
                }
                let o = lat.origin().expect("origin inside");
                let reached = grow(&mut rv, &[o], &lo, &hi);
                reached.ones().any(|v| lat.sup_norm(v) == *r)
            }
            BondAlgorithm::Hyperplane { lo, hi } => {
                if !lat.contains_box(lo, hi) {
                    bail!(InvalidQuery, "{} does not cover the crossing box", lat.describe());
                }
                let inside = |x: &[i64]| (0..x.len()).all(|a| lo[a] <= x[a] && x[a] <= hi[a]);
                let left = lat.vertices_where(|x| x[0] == lo[0] && inside(x));
                let reached = grow(&mut rv, &left, lo, hi);
                reached.ones().any(|v| lat.coord(v, 0) == hi[0])
            }
            BondAlgorithm::Interface { lo, hi } => {
                if lat.d() != 2 {
                    bail!(UnsupportedDimension, lat.d());
                }
                if !lat.contains_box(lo, hi) {
                    bail!(InvalidQuery, "{} does not cover the crossing box", lat.describe());
                }
                walk_interface(&mut rv, lo, hi)?
            }
            BondAlgorithm::FullReveal { target } => {
                for e in target.support(lat) {
                    rv.reveal(e);
                }
                target.evaluate(states)?
            }
        };
        Ok(rv.finish(out))
    }
}

/// Grow the open clusters of `sources` inside `lo..=hi`, revealing every
/// edge of the box incident to a reached vertex. The lowest-index frontier
/// vertex is expanded first.
fn grow(rv: &mut EdgeRevealer, sources: &[usize], lo: &[i64], hi: &[i64]) -> FixedBitSet {
    let lat = rv.lattice().clone();
    let d = lat.d();
    let mut seen = FixedBitSet::with_capacity(lat.n_vertices());
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if !seen.contains(s) {
            seen.insert(s);
            heap.push(Reverse(s));
        }
    }
    while let Some(Reverse(v)) = heap.pop() {
        for a in 0..d {
            for up in [false, true] {
                let Some((e, u)) = lat.step(v, a, up) else { continue };
                let x = lat.coord(u, a);
                if x < lo[a] || x > hi[a] {
                    continue;
                }
                if rv.reveal(e) && !seen.contains(u) {
                    seen.insert(u);
                    heap.push(Reverse(u));
                }
            }
        }
    }
    seen
}

/// Interface exploration from the bottom-left corner of `lo..=hi`.
///
/// `u` is a vertex joined to the left side, `w` a dual vertex joined to the
/// region below the box; they are opposite corners of a unit square. In
/// doubled coordinates w = u + (±1, ±1). Edges leaving the box are closed;
/// vertical edges of the left column are treated as open without revealing
/// them. Ends with 1 when `u` reaches the right side and 0 when `w` passes
/// the top row.
fn walk_interface(rv: &mut EdgeRevealer, lo: &[i64], hi: &[i64]) -> Result<bool> {
    let lat = rv.lattice().clone();
    let (xl, xr, yb, yt) = (lo[0], hi[0], lo[1], hi[1]);
    if xl == xr {
        return Ok(true);
    }
    let mut u = (xl, yb);
    let mut w2 = (2 * xl + 1, 2 * yb - 1);
    let budget = 4 * lat.n_edges() + 16;
    for _ in 0..budget {
        let (dx, dy) = (w2.0 - 2 * u.0, w2.1 - 2 * u.1);
        let v = ((dx - dy) / 2, (dx + dy) / 2);
        let t = (u.0 + v.0, u.1 + v.1);
        let open = if t.0 < xl || t.0 > xr || t.1 < yb || t.1 > yt {
            false
        } else if u.0 == xl && v.0 == 0 {
            true
        } else {
            let e = lat.edge_between(&[u.0, u.1], &[t.0, t.1]).expect("edge inside box");
            rv.reveal(e)
        };
        if open {
            u = t;
            if u.0 == xr {
                return Ok(true);
            }
        } else {
            w2 = (w2.0 - 2 * v.1, w2.1 + 2 * v.0);
            if w2.1 == 2 * yt + 1 {
                return Ok(false);
            }
        }
    }
    bail!(Internal, "interface walk exceeded its step budget")
}
