//! Bond configurations and their dual.

use fixedbitset::FixedBitSet;

use crate::error::{bail, Result};
use crate::lattice::LatticeBox;
use crate::rng::ReplicaStream;

/// Read access to edge states of a box.
pub trait EdgeStates {
    fn lattice(&self) -> &LatticeBox;
    fn is_open(&self, e: usize) -> bool;

    /// State of the edge with lower endpoint `v` along `axis`.
    #[inline]
    fn is_open_at(&self, v: usize, axis: usize) -> bool {
        match self.lattice().edge_id(v, axis) {
            Some(e) => self.is_open(e),
            None => false,
        }
    }
}

impl<T: EdgeStates + ?Sized> EdgeStates for &T {
    fn lattice(&self) -> &LatticeBox {
        (**self).lattice()
    }
    fn is_open(&self, e: usize) -> bool {
        (**self).is_open(e)
    }
    fn is_open_at(&self, v: usize, axis: usize) -> bool {
        (**self).is_open_at(v, axis)
    }
}

/// The coupled uniform U_e of an edge; the edge is open at p iff U_e < p.
#[inline]
pub fn edge_uniform(lattice: &LatticeBox, e: usize, stream: &ReplicaStream) -> f64 {
    stream.uniform_at(lattice.edge_key(e))
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        bail!(InvalidParameter, "p={p} outside [0,1]");
    }
    Ok(())
}

/// Open/closed state of every edge of a box.
#[derive(Clone, Debug)]
pub struct BondConfig {
    lattice: LatticeBox,
    open: FixedBitSet,
}

impl BondConfig {
    /// Each edge open independently with probability `p`, thresholding the
    /// coupled uniforms of `stream`.
    pub fn sample(lattice: &LatticeBox, p: f64, stream: &ReplicaStream) -> Result<Self> {
        check_p(p)?;
        let mut open = FixedBitSet::with_capacity(lattice.n_edges());
        for e in 0..lattice.n_edges() {
            if edge_uniform(lattice, e, stream) < p {
                open.insert(e);
            }
        }
        Ok(Self { lattice: lattice.clone(), open })
    }

    pub fn from_fn(lattice: &LatticeBox, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut open = FixedBitSet::with_capacity(lattice.n_edges());
        for e in 0..lattice.n_edges() {
            open.set(e, f(e));
        }
        Self { lattice: lattice.clone(), open }
    }

    pub fn all_open(lattice: &LatticeBox) -> Self {
        Self::from_fn(lattice, |_| true)
    }

    pub fn all_closed(lattice: &LatticeBox) -> Self {
        Self::from_fn(lattice, |_| false)
    }

    /// Configuration whose free edges take the bits of `mask` in order and
    /// whose other edges are closed.
    pub fn from_mask(lattice: &LatticeBox, free: &[usize], mask: u64) -> Self {
        let mut open = FixedBitSet::with_capacity(lattice.n_edges());
        for (i, &e) in free.iter().enumerate() {
            if mask >> i & 1 == 1 {
                open.insert(e);
            }
        }
        Self { lattice: lattice.clone(), open }
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.open
    }

    pub fn open_count(&self) -> usize {
        self.open.count_ones(..)
    }

    /// Copy with one edge set to `state`.
    pub fn with_edge(&self, e: usize, state: bool) -> Self {
        let mut c = self.clone();
        c.open.set(e, state);
        c
    }

    /// Copy of the restriction to a sub-box (edges outside are dropped).
    pub fn restrict(&self, sub: &LatticeBox) -> Result<Self> {
        if !self.lattice.contains_box(sub.lo(), sub.hi()) {
            bail!(InvalidQuery, "sub-box not inside configuration box");
        }
        Ok(Self::from_fn(sub, |e| {
            let f = sub.map_edge(e, &self.lattice).expect("edge inside");
            self.open.contains(f)
        }))
    }
}

impl EdgeStates for BondConfig {
    fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        self.open.contains(e)
    }
}

/// Edge states drawn on demand from the coupled uniforms; identical to
/// [`BondConfig::sample`] with the same arguments, without materialising the box.
#[derive(Clone, Debug)]
pub struct LazyBonds<'a> {
    lattice: &'a LatticeBox,
    p: f64,
    stream: ReplicaStream,
}

impl<'a> LazyBonds<'a> {
    pub fn new(lattice: &'a LatticeBox, p: f64, stream: ReplicaStream) -> Result<Self> {
        check_p(p)?;
        Ok(Self { lattice, p, stream })
    }
}

impl EdgeStates for LazyBonds<'_> {
    fn lattice(&self) -> &LatticeBox {
        self.lattice
    }
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        self.stream.uniform_at(self.lattice.edge_key(e)) < self.p
    }
    #[inline]
    fn is_open_at(&self, v: usize, axis: usize) -> bool {
        self.stream.uniform_at(self.lattice.edge_key_at(v, axis)) < self.p
    }
}

/// A view with one edge forced to a state.
pub struct Forced<'a, E: EdgeStates> {
    pub base: &'a E,
    pub edge: usize,
    pub state: bool,
}

impl<E: EdgeStates> EdgeStates for Forced<'_, E> {
    fn lattice(&self) -> &LatticeBox {
        self.base.lattice()
    }
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        if e == self.edge {
            self.state
        } else {
            self.base.is_open(e)
        }
    }
}

/// A view with a set of edges overridden.
pub struct Overlay<'a, E: EdgeStates> {
    pub base: &'a E,
    pub mask: &'a FixedBitSet,
    pub values: &'a FixedBitSet,
}

impl<E: EdgeStates> EdgeStates for Overlay<'_, E> {
    fn lattice(&self) -> &LatticeBox {
        self.base.lattice()
    }
    #[inline]
    fn is_open(&self, e: usize) -> bool {
        if self.mask.contains(e) {
            self.values.contains(e)
        } else {
            self.base.is_open(e)
        }
    }
}

/// Planar dual: dual vertex (a,b) sits at (a+½, b+½). The dual edge crossing
/// a primal edge is open iff that primal edge is closed; primal edges outside
/// the box count as closed.
pub struct DualView<'a, E: EdgeStates> {
    states: &'a E,
}

impl<'a, E: EdgeStates> DualView<'a, E> {
    pub fn new(states: &'a E) -> Result<Self> {
        if states.lattice().d() != 2 {
            bail!(UnsupportedDimension, states.lattice().d());
        }
        Ok(Self { states })
    }

    /// Primal edge crossed by the dual edge from (a,b) to (a+1,b) or (a,b+1).
    fn crossed(&self, a: i64, b: i64, axis: usize) -> Option<usize> {
        let lat = self.states.lattice();
        if axis == 0 {
            lat.edge_between(&[a + 1, b], &[a + 1, b + 1])
        } else {
            lat.edge_between(&[a, b + 1], &[a + 1, b + 1])
        }
    }

    /// Whether the dual edge from (a,b) along `axis` (0 or 1) is open.
    pub fn dual_open(&self, a: i64, b: i64, axis: usize) -> bool {
        match self.crossed(a, b, axis) {
            Some(e) => !self.states.is_open(e),
            None => true,
        }
    }

    /// Dual state of the dual edge crossing primal edge `e`.
    pub fn dual_of(&self, e: usize) -> bool {
        !self.states.is_open(e)
    }

    pub fn dual_open_count(&self) -> usize {
        (0..self.states.lattice().n_edges()).filter(|&e| self.dual_of(e)).count()
    }

    /// The four dual neighbours of a primal vertex, as dual coordinates.
    pub fn star(x: i64, y: i64) -> [(i64, i64); 4] {
        [(x - 1, y - 1), (x, y - 1), (x - 1, y), (x, y)]
    }

    /// Breadth-first search over dual vertices in [alo, ahi]×[blo, bhi].
    pub fn reach(&self, sources: &[(i64, i64)], alo: i64, ahi: i64, blo: i64, bhi: i64, mut hit: impl FnMut(i64, i64) -> bool) -> bool {
        if ahi < alo || bhi < blo {
            return false;
        }
        let w = (ahi - alo + 1) as usize;
        let h = (bhi - blo + 1) as usize;
        let idx = |a: i64, b: i64| (a - alo) as usize * h + (b - blo) as usize;
        let mut seen = vec![false; w * h];
        let mut queue = std::collections::VecDeque::new();
        for &(a, b) in sources {
            if a < alo || a > ahi || b < blo || b > bhi || seen[idx(a, b)] {
                continue;
            }
            seen[idx(a, b)] = true;
            queue.push_back((a, b));
        }
        while let Some((a, b)) = queue.pop_front() {
            if hit(a, b) {
                return true;
            }
            let moves = [(a + 1, b, a, b, 0), (a - 1, b, a - 1, b, 0), (a, b + 1, a, b, 1), (a, b - 1, a, b - 1, 1)];
            for (na, nb, ea, eb, ax) in moves {
                if na < alo || na > ahi || nb < blo || nb > bhi || seen[idx(na, nb)] {
                    continue;
                }
                if self.dual_open(ea, eb, ax) {
                    seen[idx(na, nb)] = true;
                    queue.push_back((na, nb));
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_parameters() {
        let b = LatticeBox::cube(2, 3).unwrap();
        let s = ReplicaStream::new(1, 0);
        assert_eq!(BondConfig::sample(&b, 0.0, &s).unwrap().open_count(), 0);
        assert_eq!(BondConfig::sample(&b, 1.0, &s).unwrap().open_count(), b.n_edges());
        assert!(BondConfig::sample(&b, 1.5, &s).is_err());
    }

    #[test]
    fn open_fraction_concentrates() {
        let b = LatticeBox::crossing(2, 1.0, 112).unwrap();
        assert!(b.n_edges() >= 100_000);
        let c = BondConfig::sample(&b, 0.5, &ReplicaStream::new(42, 0)).unwrap();
        let n = b.n_edges() as f64;
        let frac = c.open_count() as f64 / n;
        assert!((frac - 0.5).abs() < 3.0 * (0.25 / n).sqrt());
    }

    #[test]
    fn lazy_matches_materialised() {
        let b = LatticeBox::cube(2, 6).unwrap();
        let s = ReplicaStream::new(9, 4);
        let c = BondConfig::sample(&b, 0.37, &s).unwrap();
        let l = LazyBonds::new(&b, 0.37, s).unwrap();
        for e in 0..b.n_edges() {
            let (v, a) = b.edge(e);
            assert_eq!(c.is_open(e), l.is_open(e));
            assert_eq!(c.is_open(e), l.is_open_at(v, a));
        }
    }

    #[test]
    fn coupling_across_boxes_and_p() {
        let small = LatticeBox::cube(2, 3).unwrap();
        let big = LatticeBox::cube(2, 7).unwrap();
        let s = ReplicaStream::new(3, 8);
        let lo = BondConfig::sample(&big, 0.4, &s).unwrap();
        let hi = BondConfig::sample(&big, 0.6, &s).unwrap();
        let sm = BondConfig::sample(&small, 0.4, &s).unwrap();
        for e in 0..big.n_edges() {
            assert!(!lo.is_open(e) || hi.is_open(e));
        }
        for e in 0..small.n_edges() {
            assert_eq!(sm.is_open(e), lo.is_open(small.map_edge(e, &big).unwrap()));
        }
    }

    #[test]
    fn dual_counts() {
        let b = LatticeBox::cube(2, 2).unwrap();
        let c = BondConfig::sample(&b, 0.5, &ReplicaStream::new(5, 5)).unwrap();
        let dv = DualView::new(&c).unwrap();
        assert_eq!(c.open_count() + dv.dual_open_count(), b.n_edges());
        assert!(DualView::new(&BondConfig::all_open(&LatticeBox::cube(3, 1).unwrap())).is_err());
    }
}
