//! `verify`: dispatch a named check and reduce it to (JSON, passed).

use perclab::estimators::bernoulli::{check_lbb, check_two_arm_square, check_ubb1, check_ubb2};
use perclab::estimators::gaussian::{check_field_two_arm_square, check_gaussian_russo, check_lbderiv, check_lbgf, check_truncation, check_ubgf1, check_ubgf2};
use perclab::estimators::{ModelSpec, Report, Verdict};
use perclab::oracle::{check_genlb, check_genrevbound, check_genub, check_osss, isoperimetry_sweep, kl_stopped, pinsker_sweep, Instance};
use perclab::{Error, Result};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::spec::*;

pub const CHECKS: [&str; 16] = [
    "osss",
    "genub",
    "genlb",
    "genrevbound",
    "kl-stopped",
    "pinsker",
    "isoperimetry",
    "ubb1",
    "ubb2",
    "lbb",
    "two-arm-square",
    "truncation",
    "gaussian-russo",
    "lbderiv",
    "ubgf",
    "lbgf",
];

fn parse<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::InvalidData(format!("spec: {e}")))
}

fn exact(report: impl serde::Serialize, holds: bool) -> Result<(Value, bool)> {
    let mut v = serde_json::to_value(report).map_err(|e| Error::Internal(e.to_string()))?;
    v["verdict"] = json!(if holds { "holds" } else { "fails" });
    Ok((v, holds))
}

/// Inconclusive and reported verdicts pass; only a 3σ failure does not.
fn mc(r: Report) -> Result<(Value, bool)> {
    let ok = r.verdict != Verdict::Fails;
    Ok((serde_json::from_str(&r.to_json()).map_err(|e| Error::Internal(e.to_string()))?, ok))
}

fn instance_alg(inst_spec: &InstanceSpec, name: &Option<String>) -> Result<(Instance, Option<perclab::explorer::BondAlgorithm>)> {
    let inst = inst_spec.build()?;
    let alg = match name {
        Some(n) if n != "full" || matches!(inst_spec, InstanceSpec::CrossingRect { .. }) => Some(inst_spec.algorithm(&inst, n)?),
        _ => None,
    };
    Ok((inst, alg))
}

pub fn run(check: &str, params: Value, seed: u64, workers: usize) -> Result<(Value, bool)> {
    match check {
        "osss" => {
            let p: OsssParams = parse(params)?;
            let (inst, alg) = instance_alg(&p.instance, &p.algorithm)?;
            let r = check_osss(&inst, alg.as_ref(), p.p)?;
            let h = r.holds;
            exact(r, h)
        }
        "genub" | "genlb" | "genrevbound" => {
            let p: GenParams = parse(params)?;
            let (inst, alg) = instance_alg(&p.instance, &p.algorithm)?;
            let subset = p.subset.clone().unwrap_or_else(|| (0..inst.n()).collect());
            match check {
                "genub" => {
                    let Some(q) = p.q else { return Err(Error::InvalidData("genub needs q".into())) };
                    let r = check_genub(&inst, alg.as_ref(), &subset, p.p, q)?;
                    let h = r.holds && r.deriv_holds;
                    exact(r, h)
                }
                "genlb" => {
                    let r = check_genlb(&inst, alg.as_ref(), &subset, p.p)?;
                    let h = r.holds;
                    exact(r, h)
                }
                _ => {
                    let r = check_genrevbound(&inst, alg.as_ref(), &subset, p.p)?;
                    let h = r.holds;
                    exact(r, h)
                }
            }
        }
        "kl-stopped" => {
            let p: KlParams = parse(params)?;
            let r = match p.rule.as_str() {
                "first-success" => kl_stopped(p.p, p.q, p.n, &|x: &[bool]| x.iter().position(|&b| b).map_or(x.len(), |i| i + 1))?,
                "fixed" => kl_stopped(p.p, p.q, p.n, &|x: &[bool]| x.len())?,
                other => return Err(Error::InvalidData(format!("unknown stopping rule {other:?}"))),
            };
            let h = r.equal;
            exact(r, h)
        }
        "pinsker" => {
            let p: PinskerParams = parse(params)?;
            let r = pinsker_sweep(p.step)?;
            let h = r.worst_slack >= 0.0;
            exact(r, h)
        }
        "isoperimetry" => {
            let p: IsoParams = parse(params)?;
            let a = p.a.unwrap_or_else(|| (1..=19).map(|i| i as f64 * 0.05).collect());
            let e = p.eps.unwrap_or_else(|| (1..=50).map(|i| i as f64 * 0.01).collect());
            let rs = isoperimetry_sweep(&a, &e)?;
            let h = rs.iter().all(|r| r.holds);
            let worst = rs.iter().map(|r| r.lhs - r.rhs).fold(f64::INFINITY, f64::min);
            exact(json!({"points": rs.len(), "worst_slack": worst, "c": perclab::oracle::ISO_C}), h)
        }
        "ubb1" => {
            let p: Ubb1Params = parse(params)?;
            mc(check_ubb1(p.d, p.p, p.q, p.r, p.n, seed, workers)?)
        }
        "ubb2" => {
            let p: SweepParams = parse(params)?;
            mc(check_ubb2(p.p, p.k, &p.radii, p.n, seed, workers)?)
        }
        "lbb" => {
            let p: SweepParams = parse(params)?;
            mc(check_lbb(p.p, p.k, &p.radii, p.n, seed, workers)?)
        }
        "two-arm-square" => {
            let p: TwoArmParams = parse(params)?;
            match &p.model {
                None | Some(ModelSpec::Bernoulli { d: 2, .. }) => {
                    if p.model.as_ref().is_some_and(|m| m.param() != 0.5) {
                        return Err(Error::InvalidParameter("the Bernoulli two-arm square check runs at p = 1/2".into()));
                    }
                    if p.r.fract() != 0.0 || p.r < 1.0 {
                        return Err(Error::InvalidParameter(format!("R = {} is not a whole number of steps", p.r)));
                    }
                    mc(check_two_arm_square(p.r as i64, p.n, seed, workers)?)
                }
                Some(m @ ModelSpec::Gaussian { .. }) => mc(check_field_two_arm_square(m, p.inner, p.r, p.n, seed, workers)?),
                Some(ModelSpec::Bernoulli { d, .. }) => Err(Error::UnsupportedDimension(*d)),
            }
        }
        "truncation" => {
            let p: TruncationParams = parse(params)?;
            mc(check_truncation(&p.kernel, &p.cutoffs, &p.event, p.level, p.n, seed, workers)?)
        }
        "gaussian-russo" => {
            let p: RussoParams = parse(params)?;
            mc(check_gaussian_russo(&p.model, &p.event, p.boxes.as_deref(), p.h, p.n, seed, workers)?)
        }
        "lbderiv" => {
            let p: LbderivParams = parse(params)?;
            let alg = p.algorithm.field(&p.model)?;
            mc(check_lbderiv(&p.model, &alg, p.subset.as_deref(), p.h, p.n, seed, workers)?)
        }
        "ubgf" => {
            let p: UbgfParams = parse(params)?;
            match (&p.radii, p.level2, p.r) {
                (Some(radii), None, None) => mc(check_ubgf2(&p.model, p.k, radii, p.h, p.n, seed, workers)?),
                (None, Some(l2), Some(r)) => mc(check_ubgf1(&p.model, l2, r, p.n, seed, workers)?),
                _ => Err(Error::InvalidData("ubgf needs either radii, or level2 and R".into())),
            }
        }
        "lbgf" => {
            let p: LbgfParams = parse(params)?;
            mc(check_lbgf(&p.model, p.k, &p.radii, p.h, p.n, seed, workers)?)
        }
        other => Err(Error::InvalidQuery(format!("unknown check {other:?}; known: {}", CHECKS.join(", ")))),
    }
}
