//! Finite boxes of Z^d with frozen vertex and edge numbering.
//!
//! Vertices are numbered lexicographically with axis 0 most significant.
//! Edges are numbered lexicographically over (lower endpoint, axis), skipping
//! pairs whose upper endpoint leaves the box.

use std::fmt;
use std::sync::Arc;

use crate::error::{bail, Result};

const NO_EDGE: u32 = u32::MAX;
const AXIS_BITS: u32 = 3;
const KEY_BITS: u32 = 60;

#[derive(Debug)]
struct Inner {
    d: usize,
    lo: Vec<i64>,
    hi: Vec<i64>,
    len: Vec<usize>,
    stride: Vec<usize>,
    n_vertices: usize,
    edge_of_slot: Vec<u32>,
    slot_of_edge: Vec<u32>,
    coord_bits: u32,
    shape: Shape,
}

/// How the box was built; only used for descriptions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Λ_R = [−R,R]^d.
    Cube { r: i64 },
    /// B_k(R) = [−R,R]×[−⌈kR⌉,⌈kR⌉]^{d−1}.
    Crossing { k: f64, r: i64 },
    Custom,
}

/// A box of Z^d. Cheap to clone.
#[derive(Clone)]
pub struct LatticeBox {
    inner: Arc<Inner>,
}

impl fmt::Debug for LatticeBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LatticeBox({:?}, lo={:?}, hi={:?})", self.inner.shape, self.inner.lo, self.inner.hi)
    }
}

impl PartialEq for LatticeBox {
    fn eq(&self, other: &Self) -> bool {
        self.inner.lo == other.inner.lo && self.inner.hi == other.inner.hi
    }
}

/// Integer half-side ⌈kR⌉ of the transverse directions of B_k(R).
pub fn half_side(k: f64, r: i64) -> i64 {
    (k * r as f64 - 1e-9).ceil().max(0.0) as i64
}

impl LatticeBox {
    /// Λ_R in dimension `d`.
    pub fn cube(d: usize, r: i64) -> Result<Self> {
        if r < 0 {
            bail!(InvalidParameter, "negative half-side {r}");
        }
        Self::build(vec![-r; d], vec![r; d], Shape::Cube { r })
    }

    /// B_k(R); kR is rounded up.
    pub fn crossing(d: usize, k: f64, r: i64) -> Result<Self> {
        if r < 0 || !(k > 0.0) || !k.is_finite() {
            bail!(InvalidParameter, "bad crossing box k={k} R={r}");
        }
        let t = half_side(k, r);
        let mut lo = vec![-t; d];
        let mut hi = vec![t; d];
        if d > 0 {
            lo[0] = -r;
            hi[0] = r;
        }
        Self::build(lo, hi, Shape::Crossing { k, r })
    }

    /// Planar vertex rectangle {0..cols−1}×{0..rows−1}.
    pub fn rect(cols: usize, rows: usize) -> Result<Self> {
        if cols == 0 || rows == 0 {
            bail!(InvalidParameter, "empty rectangle {cols}x{rows}");
        }
        Self::build(vec![0, 0], vec![cols as i64 - 1, rows as i64 - 1], Shape::Custom)
    }

    pub fn from_bounds(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        Self::build(lo, hi, Shape::Custom)
    }

    fn build(lo: Vec<i64>, hi: Vec<i64>, shape: Shape) -> Result<Self> {
        let d = lo.len();
        if d < 1 || hi.len() != d {
            bail!(UnsupportedDimension, d);
        }
        if d > 8 {
            bail!(UnsupportedDimension, d);
        }
        let coord_bits = KEY_BITS / d as u32;
        let limit = 1i64 << (coord_bits - 1);
        let mut len = Vec::with_capacity(d);
        for a in 0..d {
            if hi[a] < lo[a] {
                bail!(InvalidParameter, "empty box along axis {a}");
            }
            if lo[a] <= -limit + 1 || hi[a] >= limit - 2 {
                bail!(ResourceLimit, "box coordinate out of packing range ±{limit}");
            }
            len.push((hi[a] - lo[a] + 1) as usize);
        }
        let n_vertices = len.iter().try_fold(1usize, |acc, &l| acc.checked_mul(l));
        let n_vertices = match n_vertices {
            Some(n) if n.saturating_mul(d) < NO_EDGE as usize => n,
            _ => bail!(ResourceLimit, "box too large"),
        };
        let mut stride = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            stride[a] = stride[a + 1] * len[a + 1];
        }
        let mut edge_of_slot = vec![NO_EDGE; n_vertices * d];
        let mut slot_of_edge = Vec::new();
        for v in 0..n_vertices {
            for a in 0..d {
                if (v / stride[a]) % len[a] + 1 < len[a] {
                    edge_of_slot[v * d + a] = slot_of_edge.len() as u32;
                    slot_of_edge.push((v * d + a) as u32);
                }
            }
        }
        Ok(Self {
            inner: Arc::new(Inner { d, lo, hi, len, stride, n_vertices, edge_of_slot, slot_of_edge, coord_bits, shape }),
        })
    }

    pub fn d(&self) -> usize {
        self.inner.d
    }
    pub fn lo(&self) -> &[i64] {
        &self.inner.lo
    }
    pub fn hi(&self) -> &[i64] {
        &self.inner.hi
    }
    pub fn shape(&self) -> Shape {
        self.inner.shape
    }
    pub fn n_vertices(&self) -> usize {
        self.inner.n_vertices
    }
    pub fn n_edges(&self) -> usize {
        self.inner.slot_of_edge.len()
    }

    pub fn contains_point(&self, x: &[i64]) -> bool {
        x.len() == self.inner.d && (0..self.inner.d).all(|a| self.inner.lo[a] <= x[a] && x[a] <= self.inner.hi[a])
    }

    /// True when `other` is a sub-box of `self`.
    pub fn contains_box(&self, lo: &[i64], hi: &[i64]) -> bool {
        self.contains_point(lo) && self.contains_point(hi)
    }

    pub fn vertex(&self, x: &[i64]) -> Option<usize> {
        if !self.contains_point(x) {
            return None;
        }
        let i = &self.inner;
        Some((0..i.d).map(|a| (x[a] - i.lo[a]) as usize * i.stride[a]).sum())
    }

    pub fn origin(&self) -> Option<usize> {
        self.vertex(&vec![0; self.inner.d])
    }

    #[inline]
    pub fn coord(&self, v: usize, axis: usize) -> i64 {
        let i = &self.inner;
        i.lo[axis] + ((v / i.stride[axis]) % i.len[axis]) as i64
    }

    pub fn coords(&self, v: usize) -> Vec<i64> {
        (0..self.inner.d).map(|a| self.coord(v, a)).collect()
    }

    pub fn sup_norm(&self, v: usize) -> i64 {
        (0..self.inner.d).map(|a| self.coord(v, a).abs()).max().unwrap_or(0)
    }

    /// Edge from `v` in direction ±e_axis, with the neighbour reached.
    #[inline]
    pub fn step(&self, v: usize, axis: usize, up: bool) -> Option<(usize, usize)> {
        let i = &self.inner;
        let c = (v / i.stride[axis]) % i.len[axis];
        if up {
            if c + 1 >= i.len[axis] {
                return None;
            }
            Some((i.edge_of_slot[v * i.d + axis] as usize, v + i.stride[axis]))
        } else {
            if c == 0 {
                return None;
            }
            let u = v - i.stride[axis];
            Some((i.edge_of_slot[u * i.d + axis] as usize, u))
        }
    }

    /// Edge with lower endpoint `v` along `axis`.
    pub fn edge_id(&self, v: usize, axis: usize) -> Option<usize> {
        let e = *self.inner.edge_of_slot.get(v * self.inner.d + axis)?;
        (e != NO_EDGE).then_some(e as usize)
    }

    pub fn edge_between(&self, x: &[i64], y: &[i64]) -> Option<usize> {
        let (v, u) = (self.vertex(x)?, self.vertex(y)?);
        let (lo, hi) = if v < u { (v, u) } else { (u, v) };
        (0..self.inner.d).find_map(|a| (lo + self.inner.stride[a] == hi && self.coord(lo, a) < self.inner.hi[a]).then(|| self.edge_id(lo, a)).flatten())
    }

    /// (lower endpoint, axis).
    #[inline]
    pub fn edge(&self, e: usize) -> (usize, usize) {
        let s = self.inner.slot_of_edge[e] as usize;
        (s / self.inner.d, s % self.inner.d)
    }

    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        let (v, a) = self.edge(e);
        (v, v + self.inner.stride[a])
    }

    /// Key of the edge in Z^d, independent of the box; used to couple samples
    /// across boxes.
    #[inline]
    pub fn edge_key(&self, e: usize) -> u64 {
        let (v, a) = self.edge(e);
        self.edge_key_at(v, a)
    }

    #[inline]
    pub fn edge_key_at(&self, v: usize, axis: usize) -> u64 {
        let i = &self.inner;
        let off = 1i64 << (i.coord_bits - 1);
        let mut key = 0u64;
        for a in 0..i.d {
            key = (key << i.coord_bits) | (self.coord(v, a) + off) as u64;
        }
        (key << AXIS_BITS) | axis as u64
    }

    /// Vertices satisfying `pred` (on coordinates), in index order.
    pub fn vertices_where(&self, mut pred: impl FnMut(&[i64]) -> bool) -> Vec<usize> {
        let mut out = Vec::new();
        let mut x = self.inner.lo.clone();
        for v in 0..self.inner.n_vertices {
            if pred(&x) {
                out.push(v);
            }
            for a in (0..self.inner.d).rev() {
                if x[a] < self.inner.hi[a] {
                    x[a] += 1;
                    break;
                }
                x[a] = self.inner.lo[a];
            }
        }
        out
    }

    /// Edges with both endpoints satisfying `pred`.
    pub fn edges_where(&self, mut pred: impl FnMut(&[i64]) -> bool) -> Vec<usize> {
        let inside = {
            let mut m = vec![false; self.n_vertices()];
            for v in self.vertices_where(&mut pred) {
                m[v] = true;
            }
            m
        };
        (0..self.n_edges())
            .filter(|&e| {
                let (v, u) = self.endpoints(e);
                inside[v] && inside[u]
            })
            .collect()
    }

    /// Same vertex in another box, if present.
    pub fn map_vertex(&self, v: usize, other: &LatticeBox) -> Option<usize> {
        other.vertex(&self.coords(v))
    }

    /// Same edge in another box, if present.
    pub fn map_edge(&self, e: usize, other: &LatticeBox) -> Option<usize> {
        let (v, a) = self.edge(e);
        let w = self.map_vertex(v, other)?;
        other.edge_id(w, a)
    }

    pub fn describe(&self) -> String {
        match self.inner.shape {
            Shape::Cube { r } => format!("d={} Lambda_{}", self.inner.d, r),
            Shape::Crossing { k, r } => format!("d={} B_{}({})", self.inner.d, k, r),
            Shape::Custom => format!("d={} box {:?}..{:?}", self.inner.d, self.inner.lo, self.inner.hi),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_numbering() {
        let b = LatticeBox::cube(2, 1).unwrap();
        assert_eq!(b.n_vertices(), 9);
        assert_eq!(b.n_edges(), 12);
        assert_eq!(b.coords(0), vec![-1, -1]);
        assert_eq!(b.coords(1), vec![-1, 0]);
        // (vertex, axis) order: vertex 0 owns edges along axis 0 then axis 1
        assert_eq!(b.edge(0), (0, 0));
        assert_eq!(b.edge(1), (0, 1));
        assert_eq!(b.origin(), Some(4));
        let c = LatticeBox::cube(3, 2).unwrap();
        assert_eq!(c.n_edges(), 3 * 5 * 5 * 4);
    }

    #[test]
    fn crossing_box_rounds_up() {
        let b = LatticeBox::crossing(2, 1.5, 3).unwrap();
        assert_eq!(b.lo(), &[-3, -5]);
        assert_eq!(b.hi(), &[3, 5]);
        let b = LatticeBox::crossing(2, 0.125, 8).unwrap();
        assert_eq!(b.hi(), &[8, 1]);
    }

    #[test]
    fn step_and_edge_agree() {
        let b = LatticeBox::crossing(3, 1.0, 2).unwrap();
        for e in 0..b.n_edges() {
            let (v, a) = b.edge(e);
            let (e2, u) = b.step(v, a, true).unwrap();
            assert_eq!(e, e2);
            assert_eq!(b.step(u, a, false), Some((e, v)));
            assert_eq!(b.endpoints(e), (v, u));
        }
    }

    #[test]
    fn keys_are_global() {
        let small = LatticeBox::cube(2, 1).unwrap();
        let big = LatticeBox::cube(2, 4).unwrap();
        for e in 0..small.n_edges() {
            let f = small.map_edge(e, &big).unwrap();
            assert_eq!(small.edge_key(e), big.edge_key(f));
        }
        let mut keys: Vec<u64> = (0..big.n_edges()).map(|e| big.edge_key(e)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), big.n_edges());
    }
}
