//! Connectivity and the arm/crossing events of bond percolation.

use std::collections::VecDeque;

use fixedbitset::FixedBitSet;

use crate::bond::{DualView, EdgeStates};
use crate::error::{bail, Result};
use crate::lattice::LatticeBox;

/// Edges usable by a path.
#[derive(Clone, Copy, Debug)]
pub enum Domain<'a> {
    Whole,
    /// Edges with both endpoints in the sub-box `lo..=hi`.
    SubBox { lo: &'a [i64], hi: &'a [i64] },
    /// Edges whose index is set.
    Edges(&'a FixedBitSet),
}

impl Domain<'_> {
    #[inline]
    fn vertex_ok(&self, lat: &LatticeBox, v: usize) -> bool {
        match self {
            Domain::SubBox { lo, hi } => (0..lat.d()).all(|a| {
                let x = lat.coord(v, a);
                lo[a] <= x && x <= hi[a]
            }),
            _ => true,
        }
    }

    #[inline]
    fn edge_ok(&self, e: usize) -> bool {
        match self {
            Domain::Edges(m) => m.contains(e),
            _ => true,
        }
    }

    fn is_whole_for(&self, lat: &LatticeBox) -> bool {
        match self {
            Domain::Whole => true,
            Domain::SubBox { lo, hi } => *lo == lat.lo() && *hi == lat.hi(),
            Domain::Edges(_) => false,
        }
    }
}

/// Breadth-first search from `sources`; stops early when `stop` accepts a
/// reached vertex. Returns the visited set and whether it stopped.
pub(crate) fn search<E: EdgeStates>(states: &E, sources: &[usize], domain: &Domain, mut stop: impl FnMut(usize) -> bool) -> (FixedBitSet, bool) {
    let lat = states.lattice();
    let d = lat.d();
    let whole = domain.is_whole_for(lat);
    let mut seen = FixedBitSet::with_capacity(lat.n_vertices());
    let mut queue = VecDeque::new();
    for &v in sources {
        if !seen.contains(v) && (whole || domain.vertex_ok(lat, v)) {
            seen.insert(v);
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        if stop(v) {
            return (seen, true);
        }
        for a in 0..d {
            for up in [true, false] {
                let Some((e, u)) = lat.step(v, a, up) else { continue };
                if seen.contains(u) || !(whole || (domain.vertex_ok(lat, u) && domain.edge_ok(e))) {
                    continue;
                }
                let lower = if up { v } else { u };
                if states.is_open_at(lower, a) {
                    seen.insert(u);
                    queue.push_back(u);
                }
            }
        }
    }
    (seen, false)
}

/// Vertices reachable from `source` by open edges of `domain`.
pub fn cluster_of<E: EdgeStates>(states: &E, source: &[usize], domain: &Domain) -> FixedBitSet {
    search(states, source, domain, |_| false).0
}

/// Whether an open path in `domain` joins `source` and `target`.
pub fn connected<E: EdgeStates>(states: &E, source: &[usize], target: &[usize], domain: &Domain) -> Result<bool> {
    if source.is_empty() || target.is_empty() {
        bail!(InvalidQuery, "empty source or target set");
    }
    let n = states.lattice().n_vertices();
    if source.iter().chain(target).any(|&v| v >= n) {
        bail!(InvalidQuery, "vertex outside box");
    }
    let mut is_target = FixedBitSet::with_capacity(n);
    for &t in target {
        is_target.insert(t);
    }
    Ok(search(states, source, domain, |v| is_target.contains(v)).1)
}

fn require_box(lat: &LatticeBox, lo: &[i64], hi: &[i64]) -> Result<()> {
    if !lat.contains_box(lo, hi) {
        bail!(InvalidQuery, "{} does not cover {:?}..{:?}", lat.describe(), lo, hi);
    }
    Ok(())
}

/// A₁(R): the origin is joined to ∂Λ_R inside Λ_R.
pub fn one_arm_event<E: EdgeStates>(states: &E, r: i64) -> Result<bool> {
    let lat = states.lattice();
    let (lo, hi) = (vec![-r; lat.d()], vec![r; lat.d()]);
    if r < 0 {
        bail!(InvalidQuery, "negative radius");
    }
    require_box(lat, &lo, &hi)?;
    let o = lat.origin().expect("origin inside");
    let dom = Domain::SubBox { lo: &lo, hi: &hi };
    Ok(search(states, &[o], &dom, |v| lat.sup_norm(v) == r).1)
}

/// Sup-norm radius reached by the open cluster of the origin inside Λ_R,
/// capped at R. A₁(ρ) holds for every ρ ≤ the returned value.
pub fn one_arm_radius<E: EdgeStates>(states: &E, r: i64) -> Result<i64> {
    let lat = states.lattice();
    let (lo, hi) = (vec![-r; lat.d()], vec![r; lat.d()]);
    require_box(lat, &lo, &hi)?;
    let o = lat.origin().expect("origin inside");
    let dom = Domain::SubBox { lo: &lo, hi: &hi };
    let mut best = 0;
    search(states, &[o], &dom, |v| {
        best = best.max(lat.sup_norm(v));
        best == r
    });
    Ok(best)
}

/// A₂(R) in d=2: A₁(R) and a dual path from 0* to (∂Λ_R)*.
pub fn two_arm_event<E: EdgeStates>(states: &E, r: i64) -> Result<bool> {
    let lat = states.lattice();
    if lat.d() != 2 {
        bail!(UnsupportedDimension, lat.d());
    }
    if !one_arm_event(states, r)? {
        return Ok(false);
    }
    if r == 0 {
        return Ok(true);
    }
    Ok(dual_arm(states, r))
}

/// Dual path from the four dual neighbours of the origin to the dual
/// vertices of sup-norm R−½, using dual edges inside Λ_R.
pub(crate) fn dual_arm<E: EdgeStates>(states: &E, r: i64) -> bool {
    let dv = DualView::new(states).expect("planar");
    dv.reach(&DualView::<E>::star(0, 0), -r, r - 1, -r, r - 1, |a, b| a == -r || a == r - 1 || b == -r || b == r - 1)
}

/// Left and right faces of the box `lo..=hi` along axis 0.
fn faces(lat: &LatticeBox, lo: &[i64], hi: &[i64]) -> (Vec<usize>, Vec<usize>) {
    let inside = |x: &[i64]| (0..x.len()).all(|a| lo[a] <= x[a] && x[a] <= hi[a]);
    let left = lat.vertices_where(|x| x[0] == lo[0] && inside(x));
    let right = lat.vertices_where(|x| x[0] == hi[0] && inside(x));
    (left, right)
}

/// Geometry of B_k(R) as (lo, hi).
pub fn crossing_bounds(d: usize, k: f64, r: i64) -> (Vec<i64>, Vec<i64>) {
    let t = crate::lattice::half_side(k, r);
    let mut lo = vec![-t; d];
    let mut hi = vec![t; d];
    lo[0] = -r;
    hi[0] = r;
    (lo, hi)
}

/// Cross_k(R): the left face of B_k(R) is joined to the right face inside it.
pub fn crossing_event<E: EdgeStates>(states: &E, k: f64, r: i64) -> Result<bool> {
    let lat = states.lattice();
    let (lo, hi) = crossing_bounds(lat.d(), k, r);
    require_box(lat, &lo, &hi)?;
    crossing_in(states, &lo, &hi)
}

/// Left-right crossing of the sub-box `lo..=hi` along axis 0.
pub fn crossing_in<E: EdgeStates>(states: &E, lo: &[i64], hi: &[i64]) -> Result<bool> {
    let lat = states.lattice();
    require_box(lat, lo, hi)?;
    let (left, _) = faces(lat, lo, hi);
    let dom = Domain::SubBox { lo, hi };
    let x_right = hi[0];
    Ok(search(states, &left, &dom, |v| lat.coord(v, 0) == x_right).1)
}

/// Bounds of the `cols`×`rows` vertex rectangle anchored at the box's lower corner.
fn rect_bounds(lat: &LatticeBox, cols: usize, rows: usize) -> Result<(Vec<i64>, Vec<i64>)> {
    if lat.d() != 2 {
        bail!(UnsupportedDimension, lat.d());
    }
    if cols == 0 || rows == 0 {
        bail!(InvalidQuery, "empty rectangle");
    }
    let lo = lat.lo().to_vec();
    let hi = vec![lo[0] + cols as i64 - 1, lo[1] + rows as i64 - 1];
    require_box(lat, &lo, &hi)?;
    Ok((lo, hi))
}

/// Left-right open crossing of the `cols`-column × `rows`-row vertex
/// rectangle at the lower corner of the box. Self-dual when cols = rows + 1.
pub fn crossing_rect<E: EdgeStates>(states: &E, cols: usize, rows: usize) -> Result<bool> {
    let (lo, hi) = rect_bounds(states.lattice(), cols, rows)?;
    crossing_in(states, &lo, &hi)
}

/// Top-bottom dual crossing of the same rectangle: dual vertices
/// (a+½, b+½) with a in the column gaps and b from one below the bottom row to
/// the top row.
pub fn dual_crossing_rect<E: EdgeStates>(states: &E, cols: usize, rows: usize) -> Result<bool> {
    let (lo, hi) = rect_bounds(states.lattice(), cols, rows)?;
    if cols < 2 {
        return Ok(false);
    }
    let dv = DualView::new(states)?;
    let (alo, ahi, blo, bhi) = (lo[0], hi[0] - 1, lo[1] - 1, hi[1]);
    let sources: Vec<(i64, i64)> = (alo..=ahi).map(|a| (a, blo)).collect();
    Ok(dv.reach(&sources, alo, ahi, blo, bhi, |_, b| b == bhi))
}

/// Whether the origin is joined to `v` inside the box.
pub fn two_point_connected<E: EdgeStates>(states: &E, v: usize) -> Result<bool> {
    let lat = states.lattice();
    let Some(o) = lat.origin() else { bail!(InvalidQuery, "origin outside box") };
    connected(states, &[o], &[v], &Domain::Whole)
}

/// Union-find cluster labels over the open edges of `domain`; the label of a
/// vertex is the smallest vertex index in its cluster.
pub fn cluster_labels<E: EdgeStates>(states: &E, domain: &Domain) -> Vec<usize> {
    let lat = states.lattice();
    let n = lat.n_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in 0..lat.n_edges() {
        let (v, u) = lat.endpoints(e);
        if !domain.edge_ok(e) || !domain.vertex_ok(lat, v) || !domain.vertex_ok(lat, u) || !states.is_open(e) {
            continue;
        }
        let (a, b) = (find(&mut parent, v), find(&mut parent, u));
        if a != b {
            let (small, large) = if a < b { (a, b) } else { (b, a) };
            parent[large] = small;
        }
    }
    (0..n).map(|v| find(&mut parent, v)).collect()
}

/// Edges whose state flip changes {sources ↔ targets in the sub-box}; this
/// is the pivotal set of an increasing connection event.
pub fn pivotal_edges<E: EdgeStates>(states: &E, sources: &[usize], targets: &[usize], lo: &[i64], hi: &[i64]) -> Vec<usize> {
    let lat = states.lattice();
    let dom = Domain::SubBox { lo, hi };
    let n = lat.n_vertices();
    let mut is_target = FixedBitSet::with_capacity(n);
    for &t in targets {
        is_target.insert(t);
    }
    let from_s = cluster_of(states, sources, &dom);
    if from_s.intersection(&is_target).next().is_none() {
        // closed edges joining the two clusters
        let from_t = cluster_of(states, targets, &dom);
        let mut out = Vec::new();
        for v in from_s.ones() {
            for a in 0..lat.d() {
                for up in [true, false] {
                    let Some((e, u)) = lat.step(v, a, up) else { continue };
                    if from_t.contains(u) && dom.vertex_ok(lat, u) && !states.is_open(e) {
                        out.push(e);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        return out;
    }
    bridges_between(states, sources, &is_target, &dom)
}

/// Open edges lying on every open path from `sources` to the target set.
fn bridges_between<E: EdgeStates>(states: &E, sources: &[usize], is_target: &FixedBitSet, dom: &Domain) -> Vec<usize> {
    let lat = states.lattice();
    let n = lat.n_vertices();
    let d = lat.d();
    let s = n;
    let t = n + 1;
    let ne = lat.n_edges();
    let mut is_source = FixedBitSet::with_capacity(n);
    for &v in sources {
        is_source.insert(v);
    }
    let targets: Vec<usize> = is_target.ones().collect();
    const UNSEEN: u32 = u32::MAX;
    let mut disc = vec![UNSEEN; n + 2];
    let mut low = vec![0u32; n + 2];
    let mut has_t = vec![false; n + 2];
    let mut timer = 0u32;
    // frame: node, id of the edge used to enter it, next neighbour slot
    let mut stack: Vec<(usize, usize, usize)> = vec![(s, usize::MAX, 0)];
    disc[s] = 0;
    low[s] = 0;
    let mut out = Vec::new();

    // neighbour `k` of `x` as (node, link id), or None when the slot is empty
    let neighbour = |x: usize, k: usize| -> Option<Option<(usize, usize)>> {
        if x == s {
            return sources.get(k).map(|&v| Some((v, ne + v)));
        }
        if x == t {
            return targets.get(k).map(|&v| Some((v, ne + n + v)));
        }
        if k < 2 * d {
            let (a, up) = (k / 2, k % 2 == 0);
            let r = lat.step(x, a, up).and_then(|(e, u)| (dom.vertex_ok(lat, u) && dom.edge_ok(e) && states.is_open(e)).then_some((u, e)));
            return Some(r);
        }
        if k == 2 * d {
            return Some(is_source.contains(x).then_some((s, ne + x)));
        }
        if k == 2 * d + 1 {
            return Some(is_target.contains(x).then_some((t, ne + n + x)));
        }
        None
    };

    while let Some(&mut (x, via, ref mut k)) = stack.last_mut() {
        match neighbour(x, *k) {
            None => {
                stack.pop();
                if x == t {
                    has_t[x] = true;
                }
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[x]);
                    has_t[p] |= has_t[x];
                    if via < ne && low[x] > disc[p] && has_t[x] {
                        out.push(via);
                    }
                }
            }
            Some(nb) => {
                *k += 1;
                let Some((y, link)) = nb else { continue };
                if link == via {
                    continue;
                }
                if disc[y] == UNSEEN {
                    timer += 1;
                    disc[y] = timer;
                    low[y] = timer;
                    stack.push((y, link, 0));
                } else {
                    low[x] = low[x].min(disc[y]);
                }
            }
        }
    }
    out.sort_unstable();
    out
}
