//! Property tests for the model, explorer and estimator invariants.

use perclab::bond::BondConfig;
use perclab::estimators::{judge, mc_estimate, EventSpec, KernelSpec, ModelSpec, Verdict};
use perclab::events::{connected, crossing_event, crossing_rect, dual_crossing_rect, one_arm_event, two_arm_event, Domain};
use perclab::explorer::{check_unrevealed_irrelevance, AlgorithmSpec, BondAlgorithm, FieldAlgorithm, ModelParams};
use perclab::gaussian::{resample_boxes, Kernel};
use perclab::oracle::{enumerate_conditional_variance, enumerate_probability, Instance};
use perclab::rng::lane;
use perclab::{EdgeStates, LatticeBox, LazyBonds, ReplicaStream};
use proptest::prelude::*;

/// Components by union-find over open edges.
struct Dsu(Vec<usize>);

impl Dsu {
    fn of(states: &impl EdgeStates) -> Self {
        let lat = states.lattice();
        let mut d = Dsu((0..lat.n_vertices()).collect());
        for e in 0..lat.n_edges() {
            if states.is_open(e) {
                let (a, b) = lat.endpoints(e);
                let (ra, rb) = (d.find(a), d.find(b));
                d.0[ra] = rb;
            }
        }
        d
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.0[v] != v {
            self.0[v] = self.0[self.0[v]];
            v = self.0[v];
        }
        v
    }
}

fn dsu_one_arm(states: &impl EdgeStates, r: i64) -> bool {
    let lat = states.lattice();
    let mut d = Dsu::of(states);
    let o = d.find(lat.origin().unwrap());
    (0..lat.n_vertices()).any(|v| lat.coords(v).iter().any(|c| c.abs() == r) && d.find(v) == o)
}

fn dsu_rect_crossing(states: &impl EdgeStates, cols: usize) -> bool {
    let lat = states.lattice();
    let mut d = Dsu::of(states);
    let left: Vec<usize> = (0..lat.n_vertices()).filter(|&v| lat.coords(v)[0] == 0).map(|v| d.find(v)).collect();
    (0..lat.n_vertices()).filter(|&v| lat.coords(v)[0] == cols as i64 - 1).any(|v| left.contains(&d.find(v)))
}

fn field_model(level: f64) -> ModelSpec {
    ModelSpec::Gaussian { kernel: KernelSpec::bargmann_fock(0.5, Some(1.0)), level, scale: None }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn coupling_is_monotone(seed in any::<u64>(), r in 1i64..6, p in 0.0f64..1.0, dp in 0.0f64..0.5) {
        let q = (p + dp).min(1.0);
        let lat = LatticeBox::cube(2, r).unwrap();
        let st = ReplicaStream::new(seed, 0);
        let a = LazyBonds::new(&lat, p, st).unwrap();
        let b = LazyBonds::new(&lat, q, st).unwrap();
        for e in 0..lat.n_edges() {
            prop_assert!(!a.is_open(e) || b.is_open(e));
        }
        prop_assert!(one_arm_event(&a, r).unwrap() <= one_arm_event(&b, r).unwrap());
        let c = LatticeBox::crossing(2, 1.0, r).unwrap();
        let (ca, cb) = (LazyBonds::new(&c, p, st).unwrap(), LazyBonds::new(&c, q, st).unwrap());
        prop_assert!(crossing_event(&ca, 1.0, r).unwrap() <= crossing_event(&cb, 1.0, r).unwrap());
    }

    #[test]
    fn rectangle_duality(seed in any::<u64>(), a in 1usize..10, p in 0.05f64..0.95) {
        let lat = LatticeBox::rect(a + 1, a).unwrap();
        let s = LazyBonds::new(&lat, p, ReplicaStream::new(seed, 1)).unwrap();
        let primal = crossing_rect(&s, a + 1, a).unwrap();
        let dual = dual_crossing_rect(&s, a + 1, a).unwrap();
        prop_assert!(primal != dual);
    }

    #[test]
    fn connected_symmetric_and_monotone(seed in any::<u64>(), p in 0.1f64..0.9, u in 0usize..25, v in 0usize..25, extra in 0usize..40) {
        let lat = LatticeBox::cube(2, 2).unwrap();
        let s = BondConfig::sample(&lat, p, &ReplicaStream::new(seed, 2)).unwrap();
        let uv = connected(&s, &[u], &[v], &Domain::Whole).unwrap();
        prop_assert_eq!(uv, connected(&s, &[v], &[u], &Domain::Whole).unwrap());
        let opened = s.with_edge(extra % lat.n_edges(), true);
        prop_assert!(uv <= connected(&opened, &[u], &[v], &Domain::Whole).unwrap());
    }

    #[test]
    fn two_arm_implies_one_arm(seed in any::<u64>(), r in 1i64..7, p in 0.2f64..0.8) {
        let lat = LatticeBox::cube(2, r).unwrap();
        let s = LazyBonds::new(&lat, p, ReplicaStream::new(seed, 3)).unwrap();
        prop_assert!(!two_arm_event(&s, r).unwrap() || one_arm_event(&s, r).unwrap());
    }

    #[test]
    fn evaluators_match_union_find(mask in any::<u64>(), r in 1i64..3, cols in 2usize..5, rows in 1usize..4) {
        // Λ_1 and Λ_2 have 12 and 40 edges; rectangles up to 4×3 have ≤ 17
        let lat = LatticeBox::cube(2, r).unwrap();
        let all: Vec<usize> = (0..lat.n_edges().min(63)).collect();
        let s = BondConfig::from_mask(&lat, &all, mask);
        prop_assert_eq!(one_arm_event(&s, r).unwrap(), dsu_one_arm(&s, r));
        let rl = LatticeBox::rect(cols, rows).unwrap();
        let free: Vec<usize> = (0..rl.n_edges()).collect();
        let s = BondConfig::from_mask(&rl, &free, mask);
        prop_assert_eq!(crossing_rect(&s, cols, rows).unwrap(), dsu_rect_crossing(&s, cols));
    }

    #[test]
    fn excursion_monotone_in_level(seed in any::<u64>(), l in -1.0f64..1.0, dl in 0.0f64..0.5) {
        let w = field_model(0.0).world(3.0, 3.0).unwrap();
        let noise = w.sample_noise(&ReplicaStream::new(seed, 4)).unwrap();
        let lo = w.mask(&noise, l).unwrap();
        let hi = w.mask(&noise, l + dl).unwrap();
        for (x, y) in w.window().points() {
            prop_assert!(!lo.get(x, y) || hi.get(x, y));
        }
    }

    #[test]
    fn box_resampling_is_local(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let w = field_model(0.0).world(3.0, 3.0).unwrap();
        let st = ReplicaStream::new(seed, 5);
        let noise = w.sample_noise(&st).unwrap();
        let part = w.partition();
        let id = pick.index(part.len());
        let other = resample_boxes(&noise, part, &[id], &mut st.rng(lane::RESAMPLE)).unwrap();
        let (f, g) = (w.field(&noise).unwrap(), w.field(&other).unwrap());
        let b = part.cell_window(id);
        let m = w.kernel().half_width() as i64;
        for (x, y) in w.window().points() {
            let dx = (b.x0 - x).max(x - b.x1).max(0);
            let dy = (b.y0 - y).max(y - b.y1).max(0);
            // the FFT convolution leaves roundoff everywhere
            if dx > m || dy > m {
                prop_assert!((f.at(x, y) - g.at(x, y)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn unrevealed_units_never_matter(seed in any::<u64>(), p in 0.1f64..0.9, r in 2i64..6) {
        let lat = LatticeBox::crossing(2, 1.0, r).unwrap();
        for a in [BondAlgorithm::hyperplane(2, 1.0, r), BondAlgorithm::interface(1.0, r)] {
            let rep = check_unrevealed_irrelevance(&AlgorithmSpec::Bond(a), &ModelParams::Bond { lattice: &lat, p }, 8, seed, 1).unwrap();
            prop_assert_eq!((rep.flips, rep.trace_changes), (0, 0));
        }
        let cube = LatticeBox::cube(2, r).unwrap();
        let rep = check_unrevealed_irrelevance(&AlgorithmSpec::Bond(BondAlgorithm::origin_cluster(r)), &ModelParams::Bond { lattice: &cube, p }, 8, seed, 1).unwrap();
        prop_assert_eq!((rep.flips, rep.trace_changes), (0, 0));
    }

    #[test]
    fn estimates_ignore_worker_count(seed in any::<u64>(), workers in 2usize..6, p in 0.2f64..0.8) {
        let m = ModelSpec::Bernoulli { d: 2, p };
        let ev = EventSpec::OneArm { r: 4.0, inner: None };
        prop_assert_eq!(mc_estimate(&m, &ev, 64, seed, 1).unwrap(), mc_estimate(&m, &ev, 64, seed, workers).unwrap());
    }

    #[test]
    fn oracle_total_variance_and_determinism(p in 0.05f64..0.95, subset in prop::collection::vec(0usize..7, 0..7)) {
        let inst = Instance::crossing_rect(3, 2).unwrap();
        let mut s = subset.clone();
        s.sort_unstable();
        s.dedup();
        let cv = enumerate_conditional_variance(&inst, &s, p).unwrap();
        prop_assert!(cv.total_variance_gap <= 1e-12);
        prop_assert_eq!(enumerate_probability(&inst, p).unwrap(), enumerate_probability(&inst, p).unwrap());
    }

    #[test]
    fn checker_never_fails_within_three_sigma(gap in -10.0f64..10.0, sigma in 0.001f64..5.0) {
        let (v, _) = judge(gap, sigma);
        if gap >= -3.0 * sigma {
            prop_assert_ne!(v, Verdict::Fails);
        }
        if gap > 3.0 * sigma {
            prop_assert_eq!(v, Verdict::Holds);
        }
    }
}

#[test]
fn truncation_distance_non_increasing() {
    let base = Kernel::bargmann_fock(2, 0.25, 4.0).unwrap();
    let mut last = f64::INFINITY;
    for i in 2..=16 {
        let d = base.l2_distance_sq(&base.truncate(i as f64 * 0.25).unwrap()).unwrap();
        assert!(d <= last + 1e-15, "r = {}: {d} > {last}", i as f64 * 0.25);
        last = d;
    }
}

#[test]
fn monte_carlo_agrees_with_oracle() {
    // A₁(1) has 12 edges; over 100 seeds the 3σ band should hold ≥ 99 times
    let inst = Instance::one_arm(2, 1).unwrap();
    let m = ModelSpec::Bernoulli { d: 2, p: 0.4 };
    let exact = enumerate_probability(&inst, 0.4).unwrap();
    let ok = (0..100u64)
        .filter(|&seed| {
            let e = mc_estimate(&m, &EventSpec::OneArm { r: 1.0, inner: None }, 2000, seed, 1).unwrap();
            let sd = (exact * (1.0 - exact) / 2000.0).sqrt();
            (e.mean - exact).abs() <= 3.0 * sd
        })
        .count();
    assert!(ok >= 99, "{ok}/100");
}

#[test]
fn field_revealments_replay() {
    let w = field_model(0.0).world(4.0, 4.0).unwrap();
    for a in [FieldAlgorithm::RandomLine { k: 1.0, r: 4.0 }, FieldAlgorithm::LevelLine { k: 1.0, r: 4.0 }, FieldAlgorithm::Annulus { scale: 1.0, r: 4.0 }] {
        let r = check_unrevealed_irrelevance(&AlgorithmSpec::Field(a.clone()), &ModelParams::Field { world: &w, level: 0.1 }, 40, 11, 2).unwrap();
        assert_eq!((r.flips, r.trace_changes), (0, 0), "{a:?}");
    }
}
