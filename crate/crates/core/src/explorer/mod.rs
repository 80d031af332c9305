//! Randomized exploration algorithms with revealment accounting.
//!
//! An algorithm only sees the sample through a revealer, which records each
//! unit (edge or noise box) the first time it is queried. Auxiliary draws
//! (random line or annulus index) are recorded in the trace, so a trace is
//! replayable from the sample and the aux values alone.

mod bond;
mod field;

use serde::{Deserialize, Serialize};

pub use bond::{BondAlgorithm, BondTarget, EdgeRevealer};
pub use field::{BoxRevealer, FieldAlgorithm, FieldTarget};

use crate::bond::{edge_uniform, BondConfig, EdgeStates, LazyBonds};
use crate::error::{bail, Result};
use crate::gaussian::{resample_boxes, FieldWorld, NoiseGrid};
use crate::lattice::LatticeBox;
use crate::mc::fold_replicas;
use crate::rng::{lane, ReplicaStream};

/// Ordered record of an algorithm run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmTrace {
    /// Units in reveal order; no repeats.
    pub revealed: Vec<usize>,
    /// One number per revealed unit: 0/1 for edges, the sum of the noise
    /// weights for boxes.
    pub summary: Vec<f64>,
    /// Auxiliary draws used.
    pub aux: Vec<u64>,
    pub output: bool,
}

impl AlgorithmTrace {
    /// One JSON object per line: `{"step", "unit", "state"}`, then a final
    /// line with the aux draws and the output.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for (i, (u, v)) in self.revealed.iter().zip(&self.summary).enumerate() {
            s.push_str(&serde_json::json!({"step": i, "unit": u, "state": v}).to_string());
            s.push('\n');
        }
        s.push_str(&serde_json::json!({"aux": self.aux, "output": self.output}).to_string());
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.revealed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revealed.is_empty()
    }
}

/// Target event, reveal unit, seeding rule and growth rule of an algorithm.
#[derive(Clone, Debug, PartialEq)]
pub enum AlgorithmSpec {
    Bond(BondAlgorithm),
    Field(FieldAlgorithm),
}

impl AlgorithmSpec {
    pub fn target(&self) -> String {
        match self {
            AlgorithmSpec::Bond(a) => format!("{:?}", a.target()),
            AlgorithmSpec::Field(a) => format!("{:?}", a.target()),
        }
    }

    /// "edge" or "noise-box".
    pub fn unit(&self) -> &'static str {
        match self {
            AlgorithmSpec::Bond(_) => "edge",
            AlgorithmSpec::Field(_) => "noise-box",
        }
    }

    pub fn seeding(&self) -> &'static str {
        match self {
            AlgorithmSpec::Bond(a) => a.seeding(),
            AlgorithmSpec::Field(a) => a.seeding(),
        }
    }

    pub fn growth(&self) -> &'static str {
        match self {
            AlgorithmSpec::Bond(a) => a.growth(),
            AlgorithmSpec::Field(a) => a.growth(),
        }
    }
}

/// What an algorithm runs on.
pub enum Sample<'a> {
    Bond(&'a dyn EdgeStates),
    Field { world: &'a FieldWorld, noise: &'a NoiseGrid, level: f64 },
}

/// Run `spec` on `sample`, drawing auxiliary randomness from `stream`.
pub fn run_algorithm(spec: &AlgorithmSpec, sample: &Sample, stream: &ReplicaStream) -> Result<AlgorithmTrace> {
    let mut rng = stream.rng(lane::AUX);
    match (spec, sample) {
        (AlgorithmSpec::Bond(a), Sample::Bond(states)) => {
            let aux = a.draw_aux(&mut rng);
            a.run(*states, aux)
        }
        (AlgorithmSpec::Field(a), Sample::Field { world, noise, level }) => {
            let aux = a.draw_aux(world, &mut rng);
            a.run(world, noise, *level, aux)
        }
        _ => bail!(InvalidQuery, "sample does not match algorithm model"),
    }
}

/// Per-unit revealment frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealmentTable {
    pub n: u64,
    pub hits: Vec<u64>,
    /// Σ over runs of the trace length.
    pub total_revealed: u64,
}

impl RevealmentTable {
    pub fn new(units: usize) -> Self {
        Self { n: 0, hits: vec![0; units], total_revealed: 0 }
    }

    pub fn record(&mut self, trace: &AlgorithmTrace) {
        self.n += 1;
        self.total_revealed += trace.revealed.len() as u64;
        for &u in &trace.revealed {
            self.hits[u] += 1;
        }
    }

    /// Commutative and associative.
    pub fn merge(&mut self, other: &RevealmentTable) {
        assert_eq!(self.hits.len(), other.hits.len(), "tables over different unit sets");
        self.n += other.n;
        self.total_revealed += other.total_revealed;
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
    }

    pub fn revealment(&self, u: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.hits[u] as f64 / self.n as f64
    }

    /// Binomial standard error.
    pub fn stderr(&self, u: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let r = self.revealment(u);
        (r * (1.0 - r) / self.n as f64).sqrt()
    }

    /// Mean trace length, E|W|.
    pub fn mean_revealed(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.total_revealed as f64 / self.n as f64
    }

    /// Unit with the largest revealment among `units` (lowest index on ties).
    pub fn argmax(&self, units: impl IntoIterator<Item = usize>) -> Option<usize> {
        let mut best: Option<usize> = None;
        for u in units {
            if best.is_none_or(|b| self.hits[u] > self.hits[b]) {
                best = Some(u);
            }
        }
        best
    }
}

/// Model parameters for [`estimate_revealments`].
pub enum ModelParams<'a> {
    Bond { lattice: &'a LatticeBox, p: f64 },
    Field { world: &'a FieldWorld, level: f64 },
}

/// Monte Carlo revealments from `n` replicas of `seed`. Each replica also
/// checks that the output matches direct evaluation of the target.
pub fn estimate_revealments(spec: &AlgorithmSpec, params: &ModelParams, n: u64, seed: u64, workers: usize) -> Result<RevealmentTable> {
    if n == 0 {
        bail!(InvalidParameter, "n = 0");
    }
    let units = match (spec, params) {
        (AlgorithmSpec::Bond(_), ModelParams::Bond { lattice, .. }) => lattice.n_edges(),
        (AlgorithmSpec::Field(_), ModelParams::Field { world, .. }) => world.partition().len(),
        _ => bail!(InvalidQuery, "model parameters do not match algorithm"),
    };
    fold_replicas(
        n,
        workers,
        || RevealmentTable::new(units),
        |table, i| {
            let stream = ReplicaStream::new(seed, i);
            let trace = match (spec, params) {
                (AlgorithmSpec::Bond(a), ModelParams::Bond { lattice, p }) => {
                    let states = LazyBonds::new(lattice, *p, stream)?;
                    let trace = run_algorithm(spec, &Sample::Bond(&states), &stream)?;
                    if trace.output != a.target().evaluate(&states)? {
                        bail!(ContractViolation, "algorithm output differs from the event on replica {i}");
                    }
                    trace
                }
                (AlgorithmSpec::Field(a), ModelParams::Field { world, level }) => {
                    let noise = world.sample_noise(&stream)?;
                    let trace = run_algorithm(spec, &Sample::Field { world, noise: &noise, level: *level }, &stream)?;
                    let mask = world.mask(&noise, *level)?;
                    if trace.output != a.target().evaluate(&mask)? {
                        bail!(ContractViolation, "algorithm output differs from the event on replica {i}");
                    }
                    trace
                }
                _ => unreachable!(),
            };
            table.record(&trace);
            Ok(())
        },
        |a, b| a.merge(&b),
    )
}

/// Outcome of [`check_unrevealed_irrelevance`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ResampleReport {
    pub trials: u64,
    /// Trials where the event changed after resampling the unrevealed units.
    pub flips: u64,
    /// Trials where the rerun on the resampled sample gave a different trace.
    pub trace_changes: u64,
}

/// Run each replica, redraw every unit the run did not reveal, and compare
/// the event and the rerun trace against the original run.
pub fn check_unrevealed_irrelevance(spec: &AlgorithmSpec, params: &ModelParams, n: u64, seed: u64, workers: usize) -> Result<ResampleReport> {
    if n == 0 {
        bail!(InvalidParameter, "n = 0");
    }
    fold_replicas(
        n,
        workers,
        ResampleReport::default,
        |rep, i| {
            let stream = ReplicaStream::new(seed, i);
            let (t, t2, after) = match (spec, params) {
                (AlgorithmSpec::Bond(a), ModelParams::Bond { lattice, p }) => {
                    let states = LazyBonds::new(lattice, *p, stream)?;
                    let t = run_algorithm(spec, &Sample::Bond(&states), &stream)?;
                    let mut seen = vec![false; lattice.n_edges()];
                    for &e in &t.revealed {
                        seen[e] = true;
                    }
                    let fresh = stream.derive(lane::RESAMPLE);
                    let other = BondConfig::from_fn(lattice, |e| if seen[e] { states.is_open(e) } else { edge_uniform(lattice, e, &fresh) < *p });
                    let t2 = a.run(&other, t.aux[0])?;
                    (t, t2, a.target().evaluate(&other)?)
                }
                (AlgorithmSpec::Field(a), ModelParams::Field { world, level }) => {
                    let noise = world.sample_noise(&stream)?;
                    let t = run_algorithm(spec, &Sample::Field { world, noise: &noise, level: *level }, &stream)?;
                    let mut seen = vec![false; world.partition().len()];
                    for &b in &t.revealed {
                        seen[b] = true;
                    }
                    let hidden: Vec<usize> = (0..seen.len()).filter(|&b| !seen[b]).collect();
                    let other = resample_boxes(&noise, world.partition(), &hidden, &mut stream.rng(lane::RESAMPLE))?;
                    let t2 = a.run(world, &other, *level, t.aux[0])?;
                    (t, t2, a.target().evaluate(&world.mask(&other, *level)?)?)
                }
                _ => bail!(InvalidQuery, "model parameters do not match algorithm"),
            };
            rep.trials += 1;
            rep.flips += (after != t.output) as u64;
            rep.trace_changes += (t2 != t) as u64;
            Ok(())
        },
        |a, b| {
            a.trials += b.trials;
            a.flips += b.flips;
            a.trace_changes += b.trace_changes;
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Kernel;

    #[test]
    fn unrevealed_units_are_irrelevant() {
        let lat = LatticeBox::crossing(2, 1.0, 4).unwrap();
        for a in [BondAlgorithm::hyperplane(2, 1.0, 4), BondAlgorithm::interface(1.0, 4)] {
            let r = check_unrevealed_irrelevance(&AlgorithmSpec::Bond(a), &ModelParams::Bond { lattice: &lat, p: 0.5 }, 200, 3, 2).unwrap();
            assert_eq!((r.trials, r.flips, r.trace_changes), (200, 0, 0));
        }
        let k = Kernel::bargmann_fock(2, 0.5, 2.0).unwrap().truncate(1.0).unwrap();
        let w = FieldWorld::centered(k, 1.0, 4.0, 4.0).unwrap();
        let a = FieldAlgorithm::LeftLine { k: 1.0, r: 4.0 };
        let r = check_unrevealed_irrelevance(&AlgorithmSpec::Field(a), &ModelParams::Field { world: &w, level: 0.0 }, 50, 3, 1).unwrap();
        assert_eq!((r.flips, r.trace_changes), (0, 0));
    }
}
