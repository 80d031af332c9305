//! Noise-box algorithms for excursion-set events (d = 2).
//!
//! The reveal units are the boxes of the world's partition. The field at a
//! point is readable only once its box is interior to the revealed set, i.e.
//! the box and its eight neighbours are revealed; with a kernel supported in
//! Λ_s and boxes of side s this is exactly the noise the value depends on.

use std::collections::{BTreeSet, HashMap, VecDeque};

use fixedbitset::FixedBitSet;
use rand::Rng;

use super::AlgorithmTrace;
use crate::error::{bail, Result};
use crate::gaussian::events::{ball_window, crossing_window, flood};
use crate::gaussian::{field_crossing_event, field_one_arm, field_two_arm, CellMask, FieldWorld, NoiseGrid, Window};

/// Events the noise-box algorithms determine; lengths in field units.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldTarget {
    /// Cross_k(R).
    Crossing { k: f64, r: f64 },
    /// A₁(r, R).
    OneArm { r: f64, big: f64 },
    /// A₂(r, R).
    TwoArm { r: f64, big: f64 },
}

impl FieldTarget {
    pub fn evaluate(&self, mask: &CellMask) -> Result<bool> {
        match *self {
            FieldTarget::Crossing { k, r } => field_crossing_event(mask, k, r),
            FieldTarget::OneArm { r, big } => field_one_arm(mask, r, big),
            FieldTarget::TwoArm { r, big } => field_two_arm(mask, r, big),
        }
    }

    /// Points the event reads.
    pub fn region(&self, mesh: f64) -> Result<Window> {
        match *self {
            FieldTarget::Crossing { k, r } => crossing_window(mesh, k, r),
            FieldTarget::OneArm { big, .. } | FieldTarget::TwoArm { big, .. } => ball_window(mesh, big),
        }
    }

    pub fn is_increasing(&self) -> bool {
        !matches!(self, FieldTarget::TwoArm { .. })
    }
}

/// The only access an algorithm has to the noise.
pub struct BoxRevealer<'a> {
    world: &'a FieldWorld,
    noise: &'a NoiseGrid,
    mask: CellMask,
    revealed: FixedBitSet,
    interior: FixedBitSet,
    trace: AlgorithmTrace,
}

impl<'a> BoxRevealer<'a> {
    pub fn new(world: &'a FieldWorld, noise: &'a NoiseGrid, level: f64, aux: Vec<u64>) -> Result<Self> {
        let mask = world.mask(noise, level)?;
        let n = world.partition().len();
        Ok(Self {
            world,
            noise,
            mask,
            revealed: FixedBitSet::with_capacity(n),
            interior: FixedBitSet::with_capacity(n),
            trace: AlgorithmTrace { aux, ..Default::default() },
        })
    }

    pub fn world(&self) -> &FieldWorld {
        self.world
    }

    /// Reveal box `id` (no-op if already revealed).
    pub fn reveal(&mut self, id: usize) {
        if self.revealed.put(id) {
            return;
        }
        let p = self.world.partition();
        let cells = p.cell_window(id);
        let sum: f64 = cells.points().map(|(x, y)| self.noise.at(x, y)).sum();
        self.trace.revealed.push(id);
        self.trace.summary.push(sum);
        for b in std::iter::once(id).chain(p.neighbors(id)) {
            let nb = p.neighbors(b);
            if self.revealed.contains(b) && nb.len() == 8 && nb.iter().all(|&c| self.revealed.contains(c)) {
                self.interior.insert(b);
            }
        }
    }

    pub fn is_revealed(&self, id: usize) -> bool {
        self.revealed.contains(id)
    }

    pub fn is_interior(&self, id: usize) -> bool {
        self.interior.contains(id)
    }

    /// Box of point (x, y); the point must lie in the partition.
    pub fn box_of(&self, x: i64, y: i64) -> usize {
        self.world.partition().id_of_cell(x, y).expect("point inside the partition")
    }

    /// Excursion bit at (x, y) if the revealed boxes determine it.
    pub fn known(&self, x: i64, y: i64) -> Option<bool> {
        let id = self.world.partition().id_of_cell(x, y)?;
        self.interior.contains(id).then(|| self.mask.get(x, y))
    }

    /// Like [`BoxRevealer::known`] but panics on undetermined points.
    pub fn get(&self, x: i64, y: i64) -> bool {
        self.known(x, y).unwrap_or_else(|| panic!("point ({x}, {y}) read before its box is interior to the revealed set"))
    }

    /// Reveal the outer boundary of `boxes`, in id order. Returns how many
    /// boxes were new.
    fn reveal_boundary(&mut self, boxes: &BTreeSet<usize>) -> usize {
        let p = self.world.partition();
        let fresh: BTreeSet<usize> = boxes.iter().flat_map(|&b| p.neighbors(b)).filter(|&n| !self.revealed.contains(n)).collect();
        for &id in &fresh {
            self.reveal(id);
        }
        fresh.len()
    }

    /// Reveal the boxes of `points` and their neighbours, in id order.
    fn seed(&mut self, points: &[(i64, i64)]) {
        let p = self.world.partition();
        let mut ids = BTreeSet::new();
        for &(x, y) in points {
            let b = self.box_of(x, y);
            ids.insert(b);
            ids.extend(p.neighbors(b));
        }
        for id in ids {
            self.reveal(id);
        }
    }

    pub fn finish(mut self, output: bool) -> AlgorithmTrace {
        self.trace.output = output;
        self.trace
    }
}

/// Noise-box algorithms. Lengths in field units; the box scale s is the
/// world's partition scale.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldAlgorithm {
    /// Cross_k(R): grow the set clusters of the column at i·s, i uniform in [−R/s, 0].
    RandomLine { k: f64, r: f64 },
    /// Cross_k(R): grow the set clusters of the left side.
    LeftLine { k: f64, r: f64 },
    /// Cross_k(R), d = 2: trace the level lines from the left and bottom
    /// sides, then decide by the region/sign loop.
    LevelLine { k: f64, r: f64 },
    /// A₁(inner, R): grow the set clusters of Λ_inner inside Λ_R.
    Origin { inner: f64, r: f64 },
    /// A₁(2s, R): grow the set clusters of ∂Λ_{is} inside Λ_R, i uniform in [2, R/s].
    Annulus { scale: f64, r: f64 },
}

fn steps(len: f64, scale: f64) -> i64 {
    (len / scale + 1e-9).floor() as i64
}

impl FieldAlgorithm {
    pub fn target(&self) -> FieldTarget {
        match *self {
            FieldAlgorithm::RandomLine { k, r } | FieldAlgorithm::LeftLine { k, r } | FieldAlgorithm::LevelLine { k, r } => FieldTarget::Crossing { k, r },
            FieldAlgorithm::Origin { inner, r } => FieldTarget::OneArm { r: inner, big: r },
            FieldAlgorithm::Annulus { scale, r } => FieldTarget::OneArm { r: 2.0 * scale, big: r },
        }
    }

    pub fn seeding(&self) -> &'static str {
        match self {
            FieldAlgorithm::RandomLine { .. } => "random-line",
            FieldAlgorithm::LeftLine { .. } => "hyperplane",
            FieldAlgorithm::LevelLine { .. } => "boundary-lines",
            FieldAlgorithm::Origin { .. } => "origin",
            FieldAlgorithm::Annulus { .. } => "random-annulus",
        }
    }

    pub fn growth(&self) -> &'static str {
        match self {
            FieldAlgorithm::LevelLine { .. } => "level-line",
            _ => "primal cluster",
        }
    }

    /// Number of equally likely auxiliary values.
    pub fn aux_count(&self, world: &FieldWorld) -> u64 {
        let s = world.partition().scale;
        match *self {
            FieldAlgorithm::RandomLine { r, .. } => steps(r, s).max(0) as u64 + 1,
            FieldAlgorithm::Annulus { r, scale } => (steps(r, scale) - 1).max(1) as u64,
            _ => {
                let _ = s;
                1
            }
        }
    }

    pub fn draw_aux<R: Rng>(&self, world: &FieldWorld, rng: &mut R) -> u64 {
        match self.aux_count(world) {
            1 => 0,
            n => rng.gen_range(0..n),
        }
    }

    fn check(&self, world: &FieldWorld) -> Result<Window> {
        let region = self.target().region(world.mesh())?;
        if !world.window().contains_window(&region) {
            bail!(InvalidGeometry, "event region {:?} not inside the world window {:?}", region, world.window());
        }
        match *self {
            FieldAlgorithm::Annulus { scale, r } => {
                if (scale - world.partition().scale).abs() > 1e-9 {
                    bail!(InvalidParameter, "annulus scale {scale} differs from the box scale {}", world.partition().scale);
                }
                if steps(r, scale) < 2 {
                    bail!(InvalidParameter, "annulus needs R ≥ 2s");
                }
            }
            FieldAlgorithm::Origin { inner, r } => {
                if inner > r {
                    bail!(InvalidParameter, "inner radius exceeds R");
                }
            }
            _ => {}
        }
        Ok(region)
    }

    pub fn run(&self, world: &FieldWorld, noise: &NoiseGrid, level: f64, aux: u64) -> Result<AlgorithmTrace> {
        let region = self.check(world)?;
        if aux >= self.aux_count(world) {
            bail!(InvalidParameter, "aux value {aux} out of range");
        }
        let mut rv = BoxRevealer::new(world, noise, level, vec![aux])?;
        let cells = world.partition().cells;
        let out = match *self {
            FieldAlgorithm::RandomLine { r, .. } => {
                let i = aux as i64 - steps(r, world.partition().scale);
                let x = i * cells;
                let seeds: Vec<_> = (region.y0..=region.y1).map(|y| (x, y)).collect();
                let seen = grow_primal(&mut rv, &region, &seeds)?;
                crosses(&seen, &region)
            }
            FieldAlgorithm::LeftLine { .. } => {
                let seeds: Vec<_> = (region.y0..=region.y1).map(|y| (region.x0, y)).collect();
                let seen = grow_primal(&mut rv, &region, &seeds)?;
                crosses(&seen, &region)
            }
            FieldAlgorithm::Origin { inner, .. } => {
                let a = ball_window(world.mesh(), inner)?;
                let seeds: Vec<_> = a.points().collect();
                let seen = grow_primal(&mut rv, &region, &seeds)?;
                seen.bits.ones().any(|k| on_sphere(region.point(k), region.x1))
            }
            FieldAlgorithm::Annulus { scale, .. } => {
                let rad = (aux as i64 + 2) * cells;
                let seeds: Vec<_> = Window::centered(rad, rad).points().filter(|&p| on_sphere(p, rad)).collect();
                let seen = grow_primal(&mut rv, &region, &seeds)?;
                let inner = ball_window(world.mesh(), 2.0 * scale)?;
                let rb = region.x1;
                flood(&seen, &region, inner.points(), true, false, |x, y| on_sphere((x, y), rb))
            }
            FieldAlgorithm::LevelLine { .. } => level_line(&mut rv, &region)?,
        };
        Ok(rv.finish(out))
    }
}

fn on_sphere((x, y): (i64, i64), rad: i64) -> bool {
    x.abs().max(y.abs()) == rad
}

const N4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Grow the set clusters of `seeds` inside `region`. Returns the reached
/// points as a mask over `region`.
fn grow_primal(rv: &mut BoxRevealer, region: &Window, seeds: &[(i64, i64)]) -> Result<CellMask> {
    rv.seed(seeds);
    let mut seen = CellMask::from_fn(*region, rv.world().mesh(), |_, _| false);
    let mut queue = VecDeque::new();
    for &(x, y) in seeds {
        if region.contains(x, y) && rv.get(x, y) && !seen.bits.put(region.index(x, y)) {
            queue.push_back((x, y));
        }
    }
    let budget = rv.world().partition().len() + 1;
    for _ in 0..budget {
        let mut pending = BTreeSet::new();
        let mut blocked = Vec::new();
        while let Some((x, y)) = queue.pop_front() {
            let mut stuck = false;
            for (dx, dy) in N4 {
                let (u, v) = (x + dx, y + dy);
                if !region.contains(u, v) || seen.bits.contains(region.index(u, v)) {
                    continue;
                }
                match rv.known(u, v) {
                    Some(true) => {
                        seen.bits.insert(region.index(u, v));
                        queue.push_back((u, v));
                    }
                    Some(false) => {}
                    None => {
                        pending.insert(rv.box_of(u, v));
                        stuck = true;
                    }
                }
            }
            if stuck {
                blocked.push((x, y));
            }
        }
        if pending.is_empty() {
            return Ok(seen);
        }
        if rv.reveal_boundary(&pending) == 0 {
            bail!(Internal, "growth stalled with undetermined boxes");
        }
        queue.extend(blocked);
    }
    bail!(Internal, "growth exceeded its unit budget")
}

/// Left-right crossing of `region` inside the reached set.
fn crosses(seen: &CellMask, region: &Window) -> bool {
    let x1 = region.x1;
    flood(seen, region, (region.y0..=region.y1).map(|y| (region.x0, y)), true, false, |x, _| x == x1)
}

fn level_line(rv: &mut BoxRevealer, region: &Window) -> Result<bool> {
    let b = *region;
    let mut seeds: Vec<_> = (b.x0..=b.x1).map(|x| (x, b.y0)).collect();
    seeds.extend((b.y0..=b.y1).map(|y| (b.x0, y)));
    rv.seed(&seeds);
    let mut tracer = Tracer::new(b);
    let budget = rv.world().partition().len() + 1;
    let mut done = false;
    for _ in 0..budget {
        let unknown = {
            let r = &*rv;
            tracer.advance(&|x, y| r.known(x, y))
        };
        if unknown.is_empty() {
            done = true;
            break;
        }
        let boxes: BTreeSet<usize> = unknown.iter().map(|&(x, y)| rv.box_of(x, y)).collect();
        if rv.reveal_boundary(&boxes) == 0 {
            bail!(Internal, "level-line tracing stalled with undetermined boxes");
        }
    }
    if !done {
        bail!(Internal, "level-line tracing exceeded its unit budget");
    }
    let r = &*rv;
    Ok(tracer.decide(&|x, y| r.known(x, y)))
}

/// A unit segment of the pixel-corner lattice separating two neighbouring
/// points of the window: `V(x, y)` between (x, y) and (x+1, y), `H(x, y)`
/// between (x, y) and (x, y+1). Corner (i, j) sits at (i+½, j+½).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Seg {
    V(i64, i64),
    H(i64, i64),
}

impl Seg {
    fn other_end(self, c: (i64, i64)) -> (i64, i64) {
        let (a, b) = match self {
            Seg::V(x, y) => ((x, y - 1), (x, y)),
            Seg::H(x, y) => ((x - 1, y), (x, y)),
        };
        if c == a {
            b
        } else {
            a
        }
    }
}

type Source<'s> = dyn Fn(i64, i64) -> Option<bool> + 's;

/// Level lines of a mask on a window, traced from the left and bottom sides.
/// At a saddle the curves turn so that the two diagonal set points stay
/// apart, matching 4-connected set points and 8-connected unset points.
struct Tracer {
    b: Window,
    v: FixedBitSet,
    h: FixedBitSet,
    /// (segment, corner it heads to, fresh start).
    pending: Vec<(Seg, (i64, i64), bool)>,
    started: bool,
}

impl Tracer {
    fn new(b: Window) -> Self {
        let (nx, ny) = (b.nx(), b.ny());
        Self {
            b,
            v: FixedBitSet::with_capacity(nx.saturating_sub(1) * ny),
            h: FixedBitSet::with_capacity(nx * ny.saturating_sub(1)),
            pending: Vec::new(),
            started: false,
        }
    }

    fn slot(&self, s: Seg) -> (bool, usize) {
        let b = &self.b;
        match s {
            Seg::V(x, y) => (true, (x - b.x0) as usize * b.ny() + (y - b.y0) as usize),
            Seg::H(x, y) => (false, (x - b.x0) as usize * (b.ny() - 1) + (y - b.y0) as usize),
        }
    }

    fn marked(&self, s: Seg) -> bool {
        match self.slot(s) {
            (true, i) => self.v.contains(i),
            (false, i) => self.h.contains(i),
        }
    }

    fn mark(&mut self, s: Seg) {
        match self.slot(s) {
            (true, i) => self.v.insert(i),
            (false, i) => self.h.insert(i),
        }
    }

    fn interior(&self, (i, j): (i64, i64)) -> bool {
        self.b.x0 <= i && i < self.b.x1 && self.b.y0 <= j && j < self.b.y1
    }

    /// Trace as far as the determined points allow. Returns the undetermined
    /// points that stopped a trace; empty once every arc is complete.
    fn advance(&mut self, src: &Source) -> Vec<(i64, i64)> {
        let b = self.b;
        if !self.started {
            self.started = true;
            let sign = |x, y| src(x, y).expect("seed points are determined");
            for x in b.x0..b.x1 {
                if sign(x, b.y0) != sign(x + 1, b.y0) {
                    self.pending.push((Seg::V(x, b.y0), (x, b.y0), true));
                }
            }
            for y in b.y0..b.y1 {
                if sign(b.x0, y) != sign(b.x0, y + 1) {
                    self.pending.push((Seg::H(b.x0, y), (b.x0, y), true));
                }
            }
        }
        let mut unknown = Vec::new();
        for (seg, c, fresh) in std::mem::take(&mut self.pending) {
            if fresh {
                if self.marked(seg) {
                    continue;
                }
                self.mark(seg);
            }
            if let Err((seg, c, px)) = self.follow(seg, c, src) {
                self.pending.push((seg, c, false));
                unknown.extend(px);
            }
        }
        unknown
    }

    #[allow(clippy::type_complexity)]
    fn follow(&mut self, mut seg: Seg, mut c: (i64, i64), src: &Source) -> std::result::Result<(), (Seg, (i64, i64), Vec<(i64, i64)>)> {
        loop {
            if !self.interior(c) {
                return Ok(());
            }
            let (i, j) = c;
            let px = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
            let vals = px.map(|(x, y)| src(x, y));
            if vals.iter().any(Option::is_none) {
                let missing = px.iter().zip(&vals).filter(|(_, v)| v.is_none()).map(|(p, _)| *p).collect();
                return Err((seg, c, missing));
            }
            let [sw, se, nw, ne] = vals.map(Option::unwrap);
            let (s, n, w, e) = (Seg::V(i, j), Seg::V(i, j + 1), Seg::H(i, j), Seg::H(i + 1, j));
            let next = if sw != se && nw != ne && sw != nw && se != ne {
                let pairs = if ne { [(e, n), (w, s)] } else { [(w, n), (e, s)] };
                pairs.iter().find_map(|&(a, b)| if a == seg { Some(b) } else if b == seg { Some(a) } else { None }).expect("incoming segment at its corner")
            } else {
                let level = [(s, sw != se), (n, nw != ne), (w, sw != nw), (e, se != ne)];
                level.iter().find(|&&(t, l)| l && t != seg).map(|&(t, _)| t).expect("level lines do not end inside the window")
            };
            if self.marked(next) {
                return Ok(());
            }
            self.mark(next);
            c = next.other_end(c);
            seg = next;
        }
    }

    /// Decide the crossing once every arc is traced: first from crossings
    /// visible in the determined points, then by the region/sign loop.
    fn decide(&self, src: &Source) -> bool {
        let b = self.b;
        let plus = CellMask::from_fn(b, 1.0, |x, y| src(x, y) == Some(true));
        if crosses(&plus, &b) {
            return true;
        }
        let minus = CellMask::from_fn(b, 1.0, |x, y| src(x, y) == Some(false));
        let y1 = b.y1;
        if flood(&minus, &b, (b.x0..=b.x1).map(|x| (x, b.y0)), true, true, |_, y| y == y1) {
            return false;
        }
        self.region_decision(src)
    }

    /// Regions cut out by the traced arcs; walking from the top-left point
    /// along the top side and down the right side, the sign flips at each
    /// new region, and the sign of the first region touching the right side
    /// decides the crossing.
    fn region_decision(&self, src: &Source) -> bool {
        let b = self.b;
        if b.nx() == 1 {
            // the left side is the right side
            return (b.y0..=b.y1).any(|y| src(b.x0, y).expect("seed points are determined"));
        }
        if b.ny() == 1 {
            // the bottom side is the top side
            return (b.x0..=b.x1).all(|x| src(x, b.y0).expect("seed points are determined"));
        }
        let mut uf = UnionFind::new(b.len());
        for (x, y) in b.points() {
            if x < b.x1 && !self.marked(Seg::V(x, y)) {
                uf.union(b.index(x, y), b.index(x + 1, y));
            }
            if y < b.y1 && !self.marked(Seg::H(x, y)) {
                uf.union(b.index(x, y), b.index(x, y + 1));
            }
        }
        for i in b.x0..b.x1 {
            for j in b.y0..b.y1 {
                let all = [Seg::V(i, j), Seg::V(i, j + 1), Seg::H(i, j), Seg::H(i + 1, j)].iter().all(|&s| self.marked(s));
                if all {
                    // both curves of a saddle: the unset diagonal stays joined
                    let ne = src(i + 1, j + 1).expect("traced saddle is determined");
                    if ne {
                        uf.union(b.index(i, j + 1), b.index(i + 1, j));
                    } else {
                        uf.union(b.index(i, j), b.index(i + 1, j + 1));
                    }
                }
            }
        }
        let mut right = HashMap::new();
        for y in b.y0..=b.y1 {
            right.insert(uf.find(b.index(b.x1, y)), ());
        }
        let walk = (b.x0..=b.x1).map(|x| (x, b.y1)).chain((b.y0..b.y1).rev().map(|y| (b.x1, y)));
        let mut sign: HashMap<usize, bool> = HashMap::new();
        let mut c = src(b.x0, b.y1).expect("corner point is determined");
        let mut prev = usize::MAX;
        for (x, y) in walk {
            let l = uf.find(b.index(x, y));
            if l != prev {
                if prev != usize::MAX {
                    c = !c;
                }
                c = *sign.entry(l).or_insert(c);
                prev = l;
            }
            if right.contains_key(&l) {
                return c;
            }
        }
        unreachable!("the walk ends on the right side")
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.parent[a.max(b)] = a.min(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::events::crossing_in;
    use crate::gaussian::{resample_boxes, Kernel};
    use crate::rng::{lane, ReplicaStream};

    fn world(r: f64, k: f64) -> FieldWorld {
        let q = Kernel::bargmann_fock(2, 0.25, 4.0).unwrap().truncate(1.0).unwrap();
        FieldWorld::centered(q, 1.0, r, k * r).unwrap()
    }

    fn algorithms(r: f64) -> Vec<FieldAlgorithm> {
        vec![
            FieldAlgorithm::RandomLine { k: 1.0, r },
            FieldAlgorithm::LeftLine { k: 1.0, r },
            FieldAlgorithm::LevelLine { k: 1.0, r },
            FieldAlgorithm::Origin { inner: 0.5, r },
            FieldAlgorithm::Annulus { scale: 1.0, r },
        ]
    }

    #[test]
    fn region_decision_matches_crossing_exhaustively() {
        for (nx, ny) in [(1, 3), (3, 1), (2, 2), (3, 3), (4, 3), (3, 4), (4, 4), (5, 3), (3, 5), (5, 4), (4, 5)] {
            let w = Window::new(0, nx - 1, 0, ny - 1);
            for bits in 0u32..1 << w.len() {
                let mask = CellMask::from_fn(w, 1.0, |x, y| bits >> w.index(x, y) & 1 == 1);
                let src = |x: i64, y: i64| Some(mask.get(x, y));
                let mut t = Tracer::new(w);
                assert!(t.advance(&src).is_empty());
                // the least a run can know: the seeded sides and the four
                // points around every corner a trace passed through
                let mut known = CellMask::from_fn(w, 1.0, |x, y| x == 0 || y == 0);
                let mut corner = |i: i64, j: i64| {
                    if i >= w.x0 && i < w.x1 && j >= w.y0 && j < w.y1 {
                        for (x, y) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                            known.bits.insert(w.index(x, y));
                        }
                    }
                };
                for (x, y) in w.points() {
                    if x < w.x1 && t.marked(Seg::V(x, y)) {
                        corner(x, y - 1);
                        corner(x, y);
                    }
                    if y < w.y1 && t.marked(Seg::H(x, y)) {
                        corner(x - 1, y);
                        corner(x, y);
                    }
                }
                let least = |x: i64, y: i64| known.get(x, y).then(|| mask.get(x, y));
                assert_eq!(t.decide(&least), crossing_in(&mask, &w, false).unwrap(), "{nx}x{ny} mask {bits:b}");
            }
        }
    }

    #[test]
    fn all_set_field_gives_one() {
        let w = world(4.0, 1.0);
        let noise = w.sample_noise(&ReplicaStream::new(1, 0)).unwrap();
        for a in algorithms(4.0) {
            let t = a.run(&w, &noise, 1e9, 0).unwrap();
            assert!(t.output, "{a:?}");
            let t = a.run(&w, &noise, -1e9, 0).unwrap();
            assert!(!t.output, "{a:?}");
        }
    }

    #[test]
    fn determination_and_unrevealed_irrelevance() {
        let w = world(4.0, 1.0);
        let p = w.partition();
        for a in algorithms(4.0) {
            let target = a.target();
            for i in 0..60u64 {
                let stream = ReplicaStream::new(21, i);
                let noise = w.sample_noise(&stream).unwrap();
                let level = [-0.3, 0.0, 0.3][i as usize % 3];
                let aux = a.draw_aux(&w, &mut stream.rng(lane::AUX));
                let t = a.run(&w, &noise, level, aux).unwrap();
                assert_eq!(t.output, target.evaluate(&w.mask(&noise, level).unwrap()).unwrap(), "{a:?} replica {i}");
                let mut s = t.revealed.clone();
                s.sort_unstable();
                s.dedup();
                assert_eq!(s.len(), t.len());
                let hidden: Vec<usize> = (0..p.len()).filter(|b| !t.revealed.contains(b)).collect();
                let other = resample_boxes(&noise, p, &hidden, &mut stream.rng(lane::RESAMPLE)).unwrap();
                // same reveals in the same order, same output
                let t2 = a.run(&w, &other, level, aux).unwrap();
                assert_eq!(t2, t, "{a:?} replica {i}");
                assert_eq!(target.evaluate(&w.mask(&other, level).unwrap()).unwrap(), t.output);
            }
        }
    }

    #[test]
    fn aux_ranges() {
        let w = world(4.0, 1.0);
        assert_eq!(FieldAlgorithm::RandomLine { k: 1.0, r: 4.0 }.aux_count(&w), 5);
        assert_eq!(FieldAlgorithm::Annulus { scale: 1.0, r: 4.0 }.aux_count(&w), 3);
        assert_eq!(FieldAlgorithm::Annulus { scale: 1.0, r: 2.0 }.aux_count(&w), 1);
        let noise = w.sample_noise(&ReplicaStream::new(1, 0)).unwrap();
        assert!(FieldAlgorithm::RandomLine { k: 1.0, r: 4.0 }.run(&w, &noise, 0.0, 5).is_err());
        assert!(FieldAlgorithm::LeftLine { k: 1.0, r: 6.0 }.run(&w, &noise, 0.0, 0).is_err());
    }

    #[test]
    #[should_panic(expected = "read before")]
    fn reads_outside_the_interior_panic() {
        let w = world(4.0, 1.0);
        let noise = w.sample_noise(&ReplicaStream::new(1, 0)).unwrap();
        let mut rv = BoxRevealer::new(&w, &noise, 0.0, vec![]).unwrap();
        let id = w.partition().id_of_cell(0, 0).unwrap();
        rv.reveal(id);
        rv.get(0, 0);
    }
}
