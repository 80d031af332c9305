//! Model and event descriptors, and the generic Monte Carlo estimate.

use serde::{Deserialize, Serialize};

use super::{check_n, CsvRow, Estimate};
use crate::bond::{EdgeStates, LazyBonds};
use crate::error::{bail, Result};
use crate::events::{connected, crossing_event, crossing_rect, one_arm_event, two_arm_event, two_point_connected, Domain};
use crate::gaussian::{field_crossing_event, field_one_arm, field_two_arm, CellMask, FieldWorld, Kernel};
use crate::lattice::LatticeBox;
use crate::mc::count_replicas;
use crate::rng::ReplicaStream;

fn default_support() -> f64 {
    4.0
}

/// A sampled kernel: `name` ∈ {"bargmann-fock"}, sampled on Λ_support with
/// spacing `mesh`, optionally truncated at radius `truncate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    pub mesh: f64,
    #[serde(default = "default_support")]
    pub support: f64,
    #[serde(default)]
    pub truncate: Option<f64>,
}

impl KernelSpec {
    pub fn bargmann_fock(mesh: f64, truncate: Option<f64>) -> Self {
        Self { name: "bargmann-fock".into(), mesh, support: default_support(), truncate }
    }

    pub fn build(&self) -> Result<Kernel> {
        let base = match self.name.as_str() {
            "bargmann-fock" | "bf" => Kernel::bargmann_fock(2, self.mesh, self.support)?,
            other => bail!(InvalidParameter, "unknown kernel {other:?}"),
        };
        match self.truncate {
            Some(r) => base.truncate(r),
            None => Ok(base),
        }
    }

    /// Radius outside which the sampled kernel vanishes.
    pub fn range(&self) -> f64 {
        self.truncate.map_or(self.support, |r| r.min(self.support))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Bernoulli {
        d: usize,
        p: f64,
    },
    /// Excursion set {f + level ≥ 0}; `scale` is the box side s, by default
    /// the kernel range.
    Gaussian {
        kernel: KernelSpec,
        level: f64,
        #[serde(default)]
        scale: Option<f64>,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Bernoulli { .. } => "bernoulli",
            ModelSpec::Gaussian { .. } => "gaussian",
        }
    }

    /// p or ℓ.
    pub fn param(&self) -> f64 {
        match *self {
            ModelSpec::Bernoulli { p, .. } => p,
            ModelSpec::Gaussian { level, .. } => level,
        }
    }

    pub fn with_param(&self, v: f64) -> Self {
        let mut m = self.clone();
        match &mut m {
            ModelSpec::Bernoulli { p, .. } => *p = v,
            ModelSpec::Gaussian { level, .. } => *level = v,
        }
        m
    }

    pub fn describe(&self) -> String {
        match self {
            ModelSpec::Bernoulli { d, p } => format!("bernoulli d={d} p={p}"),
            ModelSpec::Gaussian { kernel, level, scale } => {
                let t = kernel.truncate.map_or(String::new(), |r| format!(" r={r}"));
                let s = scale.map_or(String::new(), |s| format!(" s={s}"));
                format!("gaussian {} mesh={}{t}{s} level={level}", kernel.name, kernel.mesh)
            }
        }
    }

    /// Box scale s of a Gaussian model; the kernel range unless set.
    pub fn scale(&self) -> Result<f64> {
        match self {
            ModelSpec::Gaussian { kernel, scale, .. } => Ok(scale.unwrap_or_else(|| kernel.range())),
            _ => bail!(InvalidQuery, "Bernoulli model has no box scale"),
        }
    }

    /// Gaussian world on [−x, x]×[−y, y] with this model's kernel and scale.
    pub fn world(&self, x: f64, y: f64) -> Result<FieldWorld> {
        match self {
            ModelSpec::Gaussian { kernel, .. } => FieldWorld::centered(kernel.build()?, self.scale()?, x, y),
            _ => bail!(InvalidQuery, "Bernoulli model has no field world"),
        }
    }
}

/// Event descriptors. Bernoulli radii are whole numbers of lattice steps;
/// Gaussian lengths are in field units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EventSpec {
    /// A₁(R); for the field A₁(r, R) with inner radius `r` (default 1).
    OneArm {
        #[serde(rename = "R")]
        r: f64,
        #[serde(default, rename = "r")]
        inner: Option<f64>,
    },
    /// A₂(R); for the field A₂(r, R).
    TwoArm {
        #[serde(rename = "R")]
        r: f64,
        #[serde(default, rename = "r")]
        inner: Option<f64>,
    },
    /// Cross_k(R).
    Crossing {
        k: f64,
        #[serde(rename = "R")]
        r: f64,
    },
    /// Left-right crossing of a cols×rows vertex rectangle (Bernoulli, d = 2).
    Rect { cols: usize, rows: usize },
    /// 0 ↔ x (Bernoulli).
    TwoPoint { x: Vec<i64> },
    /// Λ₁ ↔ ∂Λ_R, the proxy for θ.
    Theta {
        #[serde(rename = "R")]
        r: f64,
    },
}

impl EventSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EventSpec::OneArm { .. } => "one-arm",
            EventSpec::TwoArm { .. } => "two-arm",
            EventSpec::Crossing { .. } => "crossing",
            EventSpec::Rect { .. } => "rect",
            EventSpec::TwoPoint { .. } => "two-point",
            EventSpec::Theta { .. } => "theta",
        }
    }

    /// (R, k) columns of the CSV row.
    pub fn radius_k(&self) -> (f64, f64) {
        match self {
            EventSpec::OneArm { r, .. } | EventSpec::TwoArm { r, .. } | EventSpec::Theta { r } => (*r, 1.0),
            EventSpec::Crossing { k, r } => (*r, *k),
            EventSpec::Rect { cols, rows } => (*rows as f64, *cols as f64 / *rows as f64),
            EventSpec::TwoPoint { x } => (x.iter().map(|c| c.abs()).max().unwrap_or(0) as f64, 1.0),
        }
    }

    /// The same event with outer radius `r`.
    pub fn with_radius(&self, radius: f64) -> Result<EventSpec> {
        let mut e = self.clone();
        match &mut e {
            EventSpec::OneArm { r, .. } | EventSpec::TwoArm { r, .. } | EventSpec::Theta { r } | EventSpec::Crossing { r, .. } => *r = radius,
            EventSpec::Rect { .. } | EventSpec::TwoPoint { .. } => bail!(InvalidQuery, "{} has no radius", self.name()),
        }
        Ok(e)
    }

    pub fn describe(&self) -> String {
        serde_json::to_string(self).expect("event serialises")
    }

    pub fn is_increasing(&self) -> bool {
        !matches!(self, EventSpec::TwoArm { .. })
    }
}

pub(crate) fn whole(x: f64, what: &str) -> Result<i64> {
    if !(x >= 0.0) || x.fract() != 0.0 || x > 1e6 {
        bail!(InvalidParameter, "{what} = {x} must be a whole number of lattice steps");
    }
    Ok(x as i64)
}

/// A Bernoulli event with the smallest box it reads.
pub(crate) struct BondEventFn {
    pub lattice: LatticeBox,
    kind: BondKind,
}

enum BondKind {
    OneArm(i64),
    TwoArm(i64),
    Crossing(f64, i64),
    Rect(usize, usize),
    TwoPoint(usize),
    Theta { sources: Vec<usize>, targets: Vec<usize> },
}

impl BondEventFn {
    pub fn new(d: usize, event: &EventSpec) -> Result<Self> {
        let (lattice, kind) = match event {
            EventSpec::OneArm { r, inner } => {
                if inner.is_some_and(|i| i != 0.0) {
                    bail!(InvalidParameter, "Bernoulli one-arm events start at the origin; use theta for Λ₁");
                }
                let r = whole(*r, "R")?;
                (LatticeBox::cube(d, r)?, BondKind::OneArm(r))
            }
            EventSpec::TwoArm { r, inner } => {
                if inner.is_some_and(|i| i != 0.0) {
                    bail!(InvalidParameter, "Bernoulli two-arm events start at the origin");
                }
                if d != 2 {
                    bail!(UnsupportedDimension, d);
                }
                let r = whole(*r, "R")?;
                (LatticeBox::cube(d, r)?, BondKind::TwoArm(r))
            }
            EventSpec::Crossing { k, r } => {
                let r = whole(*r, "R")?;
                (LatticeBox::crossing(d, *k, r)?, BondKind::Crossing(*k, r))
            }
            EventSpec::Rect { cols, rows } => {
                if d != 2 {
                    bail!(UnsupportedDimension, d);
                }
                (LatticeBox::rect(*cols, *rows)?, BondKind::Rect(*cols, *rows))
            }
            EventSpec::TwoPoint { x } => {
                if x.len() != d {
                    bail!(InvalidParameter, "point {x:?} is not in dimension {d}");
                }
                let r = x.iter().map(|c| c.abs()).max().unwrap_or(0).max(1);
                let lat = LatticeBox::cube(d, r)?;
                let v = lat.vertex(x).expect("point inside its box");
                (lat, BondKind::TwoPoint(v))
            }
            EventSpec::Theta { r } => {
                let r = whole(*r, "R")?;
                if r < 1 {
                    bail!(InvalidParameter, "theta needs R ≥ 1");
                }
                let lat = LatticeBox::cube(d, r)?;
                let sources = lat.vertices_where(|x| x.iter().all(|c| c.abs() <= 1));
                let targets = lat.vertices_where(|x| x.iter().any(|c| c.abs() == r));
                (lat, BondKind::Theta { sources, targets })
            }
        };
        Ok(Self { lattice, kind })
    }

    pub fn evaluate<E: EdgeStates>(&self, s: &E) -> Result<bool> {
        match &self.kind {
            BondKind::OneArm(r) => one_arm_event(s, *r),
            BondKind::TwoArm(r) => two_arm_event(s, *r),
            BondKind::Crossing(k, r) => crossing_event(s, *k, *r),
            BondKind::Rect(c, r) => crossing_rect(s, *c, *r),
            BondKind::TwoPoint(v) => two_point_connected(s, *v),
            BondKind::Theta { sources, targets } => connected(s, sources, targets, &Domain::Whole),
        }
    }

    /// (sources, targets, lo, hi) of an increasing connection event, for
    /// pivotal counting.
    pub fn connection(&self) -> Result<(Vec<usize>, Vec<usize>, Vec<i64>, Vec<i64>)> {
        let lat = &self.lattice;
        let d = lat.d();
        let (lo, hi) = (lat.lo().to_vec(), lat.hi().to_vec());
        Ok(match &self.kind {
            BondKind::OneArm(r) => {
                let o = lat.origin().expect("origin");
                let t = lat.vertices_where(|x| x.iter().any(|c| c.abs() == *r));
                (vec![o], t, lo, hi)
            }
            BondKind::Crossing(..) | BondKind::Rect(..) => {
                let (l, h) = (lo.clone(), hi.clone());
                let left = lat.vertices_where(|x| x[0] == l[0]);
                let right = lat.vertices_where(|x| x[0] == h[0]);
                (left, right, lo, hi)
            }
            BondKind::TwoPoint(v) => (vec![lat.origin().expect("origin")], vec![*v], lo, hi),
            BondKind::Theta { sources, targets } => (sources.clone(), targets.clone(), lo, hi),
            BondKind::TwoArm(_) => bail!(ContractViolation, "two-arm event is not increasing (d = {d})"),
        })
    }
}

/// A field event with the world it is read in.
pub(crate) struct FieldEventFn {
    pub world: FieldWorld,
    kind: FieldKind,
}

#[derive(Clone, Copy)]
enum FieldKind {
    OneArm(f64, f64),
    TwoArm(f64, f64),
    Crossing(f64, f64),
}

impl FieldEventFn {
    pub fn new(model: &ModelSpec, event: &EventSpec) -> Result<Self> {
        let ModelSpec::Gaussian { kernel, .. } = model else { bail!(InvalidQuery, "not a Gaussian model") };
        let q = kernel.build()?;
        let s = model.scale()?;
        let (kind, x, y) = match *event {
            EventSpec::OneArm { r, inner } => (FieldKind::OneArm(inner.unwrap_or(1.0), r), r, r),
            EventSpec::Theta { r } => (FieldKind::OneArm(1.0, r), r, r),
            EventSpec::TwoArm { r, inner } => (FieldKind::TwoArm(inner.unwrap_or(1.0), r), r, r),
            EventSpec::Crossing { k, r } => (FieldKind::Crossing(k, r), r, k * r),
            _ => bail!(InvalidParameter, "event {} is not defined for the Gaussian model", event.name()),
        };
        if !(x > 0.0) || !(y > 0.0) {
            bail!(InvalidParameter, "event lengths must be positive");
        }
        Ok(Self { world: FieldWorld::centered(q, s, x, y)?, kind })
    }

    pub fn evaluate(&self, mask: &CellMask) -> Result<bool> {
        match self.kind {
            FieldKind::OneArm(r, big) => field_one_arm(mask, r, big),
            FieldKind::TwoArm(r, big) => field_two_arm(mask, r, big),
            FieldKind::Crossing(k, r) => field_crossing_event(mask, k, r),
        }
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        bail!(InvalidParameter, "p = {p} outside [0, 1]");
    }
    Ok(())
}

/// Frequency of `event` over replicas 0..n of `seed`. Bernoulli replicas
/// use the coupled edge uniforms, so estimates at different p (or ℓ, which
/// shares the noise) are monotonically coupled samplewise.
pub fn mc_estimate(model: &ModelSpec, event: &EventSpec, n: u64, seed: u64, workers: usize) -> Result<Estimate> {
    check_n(n)?;
    let params = format!("{} {}", model.describe(), event.describe());
    let count = match model {
        ModelSpec::Bernoulli { d, p } => {
            check_p(*p)?;
            let ev = BondEventFn::new(*d, event)?;
            count_replicas(n, workers, |i| {
                let s = LazyBonds::new(&ev.lattice, *p, ReplicaStream::new(seed, i))?;
                ev.evaluate(&s)
            })?
        }
        ModelSpec::Gaussian { level, .. } => {
            let ev = FieldEventFn::new(model, event)?;
            count_replicas(n, workers, |i| {
                let noise = ev.world.sample_noise(&ReplicaStream::new(seed, i))?;
                ev.evaluate(&ev.world.mask(&noise, *level)?)
            })?
        }
    };
    Ok(Estimate::from_count(count, n, seed, params))
}

pub fn csv_row(model: &ModelSpec, event: &EventSpec, e: &Estimate) -> CsvRow {
    let (r, k) = event.radius_k();
    CsvRow { model: model.name().into(), event: event.name().into(), param: model.param(), r, k, n: e.n, estimate: e.mean, stderr: e.stderr, seed: e.seed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bern(p: f64) -> ModelSpec {
        ModelSpec::Bernoulli { d: 2, p }
    }

    #[test]
    fn schema_roundtrip_and_rejection() {
        let m: ModelSpec = serde_json::from_str(r#"{"model":"bernoulli","d":2,"p":0.5}"#).unwrap();
        assert_eq!(m, bern(0.5));
        let e: EventSpec = serde_json::from_str(r#"{"event":"crossing","k":1,"R":8}"#).unwrap();
        assert_eq!(e, EventSpec::Crossing { k: 1.0, r: 8.0 });
        assert!(serde_json::from_str::<EventSpec>(r#"{"event":"crossing","k":1,"R":8,"x":1}"#).is_err());
        assert!(serde_json::from_str::<ModelSpec>(r#"{"model":"bernoulli","d":2,"p":0.5,"q":1}"#).is_err());
        let g: ModelSpec = serde_json::from_str(r#"{"model":"gaussian","kernel":{"name":"bargmann-fock","mesh":0.5,"truncate":2},"level":0}"#).unwrap();
        assert_eq!(g.scale().unwrap(), 2.0);
    }

    #[test]
    fn trivial_estimates() {
        let e = mc_estimate(&bern(1.0), &EventSpec::Crossing { k: 1.0, r: 4.0 }, 50, 1, 1).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
        let e = mc_estimate(&bern(0.0), &EventSpec::OneArm { r: 2.0, inner: None }, 50, 1, 1).unwrap();
        assert_eq!(e.mean, 0.0);
        assert!(matches!(mc_estimate(&bern(0.5), &EventSpec::Theta { r: 2.0 }, 0, 1, 1), Err(crate::Error::InvalidParameter(_))));
        assert!(mc_estimate(&bern(0.5), &EventSpec::OneArm { r: 2.5, inner: None }, 5, 1, 1).is_err());
    }

    #[test]
    fn deterministic_and_worker_invariant() {
        let ev = EventSpec::OneArm { r: 6.0, inner: None };
        let a = mc_estimate(&bern(0.5), &ev, 300, 9, 1).unwrap();
        let b = mc_estimate(&bern(0.5), &ev, 300, 9, 4).unwrap();
        assert_eq!(a, b);
        let g = ModelSpec::Gaussian { kernel: KernelSpec::bargmann_fock(0.5, Some(1.5)), level: 0.0, scale: None };
        let ev = EventSpec::Crossing { k: 1.0, r: 3.0 };
        assert_eq!(mc_estimate(&g, &ev, 40, 2, 1).unwrap(), mc_estimate(&g, &ev, 40, 2, 3).unwrap());
    }

    #[test]
    fn one_arm_one_matches_enumeration() {
        // P[A₁(1)] = 1 − (1/2)^4
        let e = mc_estimate(&bern(0.5), &EventSpec::OneArm { r: 1.0, inner: None }, 20_000, 3, 1).unwrap();
        assert!((e.mean - 15.0 / 16.0).abs() <= 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn gaussian_levels_are_coupled() {
        let ev = EventSpec::Crossing { k: 1.0, r: 2.0 };
        let m = ModelSpec::Gaussian { kernel: KernelSpec::bargmann_fock(0.5, Some(1.0)), level: 0.0, scale: None };
        let lo = mc_estimate(&m.with_param(-0.3), &ev, 100, 4, 1).unwrap();
        let hi = mc_estimate(&m.with_param(0.3), &ev, 100, 4, 1).unwrap();
        assert!(lo.mean <= hi.mean);
        assert!(mc_estimate(&m, &EventSpec::Rect { cols: 2, rows: 1 }, 1, 1, 1).is_err());
    }
}
