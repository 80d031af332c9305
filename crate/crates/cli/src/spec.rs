//! JSON input documents. Every struct rejects unknown keys.

use perclab::estimators::{EventSpec, KernelSpec, ModelSpec};
use perclab::explorer::{AlgorithmSpec, BondAlgorithm, BondTarget, FieldAlgorithm};
use perclab::oracle::Instance;
use perclab::{Error, LatticeBox, Result};
use serde::Deserialize;

/// `simulate`: one CSV row per (param, R).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    pub event: EventSpec,
    /// Outer radii; the event's own R if absent.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    /// Values of p (Bernoulli) or ℓ (Gaussian); the model's own if absent.
    #[serde(default)]
    pub params: Option<Vec<f64>>,
    pub n: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    Dictator,
    EdgeAnd,
    DictatorWithSpectator,
    OneArm { d: usize, r: i64 },
    TwoArm { r: i64 },
    CrossingRect { cols: usize, rows: usize },
    TwoPoint { d: usize, r: i64, v: Vec<i64> },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Instance> {
        match self {
            InstanceSpec::Dictator => Ok(Instance::dictator()),
            InstanceSpec::EdgeAnd => Ok(Instance::edge_and()),
            InstanceSpec::DictatorWithSpectator => Ok(Instance::dictator_with_spectator()),
            InstanceSpec::OneArm { d, r } => Instance::one_arm(*d, *r),
            InstanceSpec::TwoArm { r } => Instance::two_arm(*r),
            InstanceSpec::CrossingRect { cols, rows } => Instance::crossing_rect(*cols, *rows),
            InstanceSpec::TwoPoint { d, r, v } => Instance::two_point(*d, *r, v),
        }
    }

    /// A bond algorithm determining this instance's event, by name:
    /// origin-cluster for one-arm, hyperplane | interface | full for crossings.
    pub fn algorithm(&self, inst: &Instance, name: &str) -> Result<BondAlgorithm> {
        match (self, name) {
            (InstanceSpec::OneArm { r, .. }, "origin-cluster") => Ok(BondAlgorithm::origin_cluster(*r)),
            (InstanceSpec::CrossingRect { cols, rows }, _) => BondAlgorithm::for_crossing(name, &BondTarget::rect(&inst.lattice, *cols, *rows)),
            _ => Err(Error::InvalidQuery(format!("no algorithm {name:?} for this instance"))),
        }
    }
}

/// `oracle`: exact values on a small instance.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub instance: InstanceSpec,
    pub p: f64,
    #[serde(default)]
    pub algorithm: Option<String>,
}

/// Exploration algorithms. Lengths in lattice steps (bond) or field units.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgSpec {
    OriginCluster {
        #[serde(rename = "R")]
        r: i64,
    },
    Hyperplane {
        #[serde(default = "two")]
        d: usize,
        #[serde(default = "one")]
        k: f64,
        #[serde(rename = "R")]
        r: i64,
    },
    Interface {
        #[serde(default = "one")]
        k: f64,
        #[serde(rename = "R")]
        r: i64,
    },
    RandomLine {
        #[serde(default = "one")]
        k: f64,
        #[serde(rename = "R")]
        r: f64,
    },
    LeftLine {
        #[serde(default = "one")]
        k: f64,
        #[serde(rename = "R")]
        r: f64,
    },
    LevelLine {
        #[serde(default = "one")]
        k: f64,
        #[serde(rename = "R")]
        r: f64,
    },
    Origin {
        #[serde(rename = "R")]
        r: f64,
        #[serde(default = "one", rename = "r")]
        inner: f64,
    },
    Annulus {
        #[serde(rename = "R")]
        r: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

impl AlgSpec {
    pub fn field(&self, model: &ModelSpec) -> Result<FieldAlgorithm> {
        Ok(match *self {
            AlgSpec::RandomLine { k, r } => FieldAlgorithm::RandomLine { k, r },
            AlgSpec::LeftLine { k, r } => FieldAlgorithm::LeftLine { k, r },
            AlgSpec::LevelLine { k, r } => FieldAlgorithm::LevelLine { k, r },
            AlgSpec::Origin { r, inner } => FieldAlgorithm::Origin { inner, r },
            AlgSpec::Annulus { r } => FieldAlgorithm::Annulus { scale: model.scale()?, r },
            _ => return Err(Error::InvalidQuery("edge algorithm on a Gaussian model".into())),
        })
    }

    /// The algorithm and the box it runs on.
    pub fn bond(&self, d: usize) -> Result<(BondAlgorithm, LatticeBox)> {
        match *self {
            AlgSpec::OriginCluster { r } => Ok((BondAlgorithm::origin_cluster(r), LatticeBox::cube(d, r)?)),
            AlgSpec::Hyperplane { d: ad, k, r } => {
                if ad != d {
                    return Err(Error::InvalidParameter(format!("algorithm d={ad} on a d={d} model")));
                }
                Ok((BondAlgorithm::hyperplane(d, k, r), LatticeBox::crossing(d, k, r)?))
            }
            AlgSpec::Interface { k, r } => {
                if d != 2 {
                    return Err(Error::UnsupportedDimension(d));
                }
                Ok((BondAlgorithm::interface(k, r), LatticeBox::crossing(2, k, r)?))
            }
            _ => Err(Error::InvalidQuery("noise-box algorithm on a Bernoulli model".into())),
        }
    }

    pub fn spec(&self, model: &ModelSpec) -> Result<AlgorithmSpec> {
        match model {
            ModelSpec::Bernoulli { d, .. } => Ok(AlgorithmSpec::Bond(self.bond(*d)?.0)),
            ModelSpec::Gaussian { .. } => Ok(AlgorithmSpec::Field(self.field(model)?)),
        }
    }
}

/// `revealments`: Monte Carlo revealment table of one algorithm.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevealmentSpec {
    pub model: ModelSpec,
    pub algorithm: AlgSpec,
    pub n: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<String>,
}

// Parameters of the `verify` checks. A top-level "seed" and "out" are
// stripped before these are parsed.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsssParams {
    pub instance: InstanceSpec,
    #[serde(default)]
    pub algorithm: Option<String>,
    pub p: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub instance: InstanceSpec,
    #[serde(default)]
    pub algorithm: Option<String>,
    /// Free-edge positions; all free edges if absent.
    #[serde(default)]
    pub subset: Option<Vec<usize>>,
    pub p: f64,
    #[serde(default)]
    pub q: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlParams {
    #[serde(default = "kl_p")]
    pub p: f64,
    #[serde(default = "kl_q")]
    pub q: f64,
    #[serde(default = "kl_n")]
    pub n: usize,
    /// "first-success" or "fixed".
    #[serde(default = "kl_rule")]
    pub rule: String,
}

fn kl_p() -> f64 {
    0.3
}
fn kl_q() -> f64 {
    0.6
}
fn kl_n() -> usize {
    6
}
fn kl_rule() -> String {
    "first-success".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinskerParams {
    #[serde(default = "pinsker_step")]
    pub step: f64,
}

fn pinsker_step() -> f64 {
    0.01
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoParams {
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ubb1Params {
    #[serde(default = "two")]
    pub d: usize,
    pub p: f64,
    pub q: f64,
    #[serde(rename = "R")]
    pub r: i64,
    pub n: u64,
}

/// ubb2 and lbb.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub p: f64,
    #[serde(default = "one")]
    pub k: f64,
    pub radii: Vec<i64>,
    pub n: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoArmParams {
    /// Bernoulli at p = 1/2 if absent.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(rename = "R")]
    pub r: f64,
    /// Inner radius (Gaussian only).
    #[serde(default = "one", rename = "r")]
    pub inner: f64,
    pub n: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationParams {
    pub kernel: KernelSpec,
    pub cutoffs: Vec<f64>,
    pub event: EventSpec,
    #[serde(default)]
    pub level: f64,
    pub n: u64,
}

fn fd_h() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RussoParams {
    pub model: ModelSpec,
    pub event: EventSpec,
    #[serde(default)]
    pub boxes: Option<Vec<usize>>,
    #[serde(default = "fd_h")]
    pub h: f64,
    pub n: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbderivParams {
    pub model: ModelSpec,
    pub algorithm: AlgSpec,
    #[serde(default)]
    pub subset: Option<Vec<usize>>,
    #[serde(default = "fd_h")]
    pub h: f64,
    pub n: u64,
}

/// With `radii`, the crossing-derivative form; otherwise the one-arm form
/// at `R` and the second level `level2`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UbgfParams {
    pub model: ModelSpec,
    #[serde(default)]
    pub level2: Option<f64>,
    #[serde(default, rename = "R")]
    pub r: Option<f64>,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    #[serde(default = "fd_h")]
    pub h: f64,
    pub n: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbgfParams {
    pub model: ModelSpec,
    #[serde(default = "one")]
    pub k: f64,
    pub radii: Vec<f64>,
    #[serde(default = "fd_h")]
    pub h: f64,
    pub n: u64,
}
