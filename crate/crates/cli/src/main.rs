//! Experiment runner for the percolation laboratory.
//!
//! Exit codes: 0 success, 2 usage/schema/invalid data, 3 resource limit,
//! 4 verdict failed, 1 internal error.

mod spec;
mod verify;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perclab::estimators::bernoulli::one_arm_curve;
use perclab::estimators::{csv_row, fit_exponential_decay, fit_power_law, mc_estimate, write_csv, CsvRow, EventSpec, ModelSpec};
use perclab::explorer::{estimate_revealments, AlgorithmSpec, FieldTarget, ModelParams};
use perclab::oracle::{enumerate_influence, enumerate_pivotal_derivative, enumerate_probability, enumerate_revealment};
use perclab::Error;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use spec::{ExperimentSpec, OracleSpec, RevealmentSpec};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "perclab", version, about = "Percolation simulation and verification laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON spec file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Master seed; overrides PERCLAB_SEED and the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; never changes a result.
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Power,
    Exp,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo estimates as CSV, one row per (param, R).
    Simulate(Common),
    /// Run a named check and print its JSON report.
    Verify {
        /// One of: osss, genub, genlb, genrevbound, kl-stopped, pinsker,
        /// isoperimetry, ubb1, ubb2, lbb, two-arm-square, truncation,
        /// gaussian-russo, lbderiv, ubgf, lbgf.
        check: String,
        #[command(flatten)]
        common: Common,
    },
    /// Fit an estimate CSV and write the fit JSON and (log R, log P) plot data.
    Fit {
        csv: PathBuf,
        #[arg(long, value_enum, default_value = "power")]
        kind: FitKind,
        /// Plot-data CSV (default: next to the input, suffix .plot.csv).
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact values on a small instance, as JSON fixtures.
    Oracle(Common),
    /// Monte Carlo revealment table of an exploration algorithm.
    Revealments(Common),
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ResourceLimit(_) => 3,
            Error::ContractViolation(_) | Error::Internal(_) => 1,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn io_fail(what: &str, e: std::io::Error) -> Failure {
    Failure { code: 1, msg: format!("{what}: {e}") }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Raw spec bytes (`{}` when no file is given) and the parsed document.
fn read_spec(path: Option<&Path>, required: bool) -> Result<(Vec<u8>, Value), Failure> {
    let bytes = match path {
        Some(p) => fs::read(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?,
        None if required => return Err(usage("--spec is required")),
        None => b"{}".to_vec(),
    };
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| usage(format!("spec is not valid JSON: {e}")))?;
    if !v.is_object() {
        return Err(usage("spec must be a JSON object"));
    }
    Ok((bytes, v))
}

fn typed<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, Failure> {
    serde_json::from_value(v).map_err(|e| usage(format!("spec: {e}")))
}

/// Flag, then PERCLAB_SEED, then the spec, then the default.
fn resolve_seed(flag: Option<u64>, spec: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var("PERCLAB_SEED") {
        return v.trim().parse().map_err(|_| usage(format!("PERCLAB_SEED={v:?} is not a u64")));
    }
    Ok(spec.unwrap_or(DEFAULT_SEED))
}

fn workers(flag: Option<usize>) -> Result<usize, Failure> {
    match flag {
        Some(0) => Err(usage("--workers must be at least 1")),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_fail(&format!("cannot write {}", p.display()), e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| io_fail("stdout", e)),
    }
}

fn emit_json(out: Option<&Path>, v: &Value) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
    s.push('\n');
    emit(out, &s)
}

fn out_path(flag: &Option<PathBuf>, spec: &Option<String>) -> Option<PathBuf> {
    flag.clone().or_else(|| spec.as_ref().map(PathBuf::from))
}

fn simulate(c: &Common) -> Result<(), Failure> {
    let (bytes, v) = read_spec(c.spec.as_deref(), true)?;
    let s: ExperimentSpec = typed(v)?;
    let seed = resolve_seed(c.seed, s.seed)?;
    let workers = workers(c.workers)?;
    let params = s.params.clone().unwrap_or_else(|| vec![s.model.param()]);
    let events: Vec<EventSpec> = match &s.radii {
        Some(rs) => rs.iter().map(|&r| s.event.with_radius(r)).collect::<perclab::Result<_>>()?,
        None => vec![s.event.clone()],
    };
    let mut rows: Vec<CsvRow> = Vec::new();
    for &p in &params {
        let model = s.model.with_param(p);
        match (&model, &s.event, &s.radii) {
            // one radius search per replica gives every R at once
            (ModelSpec::Bernoulli { d, p }, EventSpec::OneArm { inner: None, .. }, Some(rs)) if rs.iter().all(|r| r.fract() == 0.0 && *r >= 0.0) => {
                let radii: Vec<i64> = rs.iter().map(|&r| r as i64).collect();
                let est = one_arm_curve(*d, *p, &radii, s.n, seed, workers)?;
                for (e, ev) in est.iter().zip(&events) {
                    rows.push(csv_row(&model, ev, e));
                }
            }
            _ => {
                for ev in &events {
                    let e = mc_estimate(&model, ev, s.n, seed, workers)?;
                    rows.push(csv_row(&model, ev, &e));
                }
            }
        }
    }
    let mut buf = format!("# perclab simulate seed={seed} spec_sha256={}\n", sha256_hex(&bytes)).into_bytes();
    write_csv(&mut buf, &rows)?;
    emit(out_path(&c.out, &s.out).as_deref(), &String::from_utf8_lossy(&buf))
}

fn verify_cmd(check: &str, c: &Common) -> Result<(), Failure> {
    if !verify::CHECKS.contains(&check) {
        return Err(usage(format!("unknown check {check:?}; known: {}", verify::CHECKS.join(", "))));
    }
    let (bytes, mut v) = read_spec(c.spec.as_deref(), false)?;
    let obj = v.as_object_mut().expect("checked object");
    let spec_seed = match obj.remove("seed") {
        Some(s) => Some(s.as_u64().ok_or_else(|| usage("seed must be a u64"))?),
        None => None,
    };
    let spec_out = match obj.remove("out") {
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(usage("out must be a string")),
        None => None,
    };
    let seed = resolve_seed(c.seed, spec_seed)?;
    let (report, passed) = verify::run(check, v, seed, workers(c.workers)?)?;
    let doc = json!({
        "check": check,
        "seed": seed,
        "spec_sha256": sha256_hex(&bytes),
        "passed": passed,
        "report": report,
    });
    emit_json(out_path(&c.out, &spec_out).as_deref(), &doc)?;
    if passed {
        Ok(())
    } else {
        Err(Failure { code: 4, msg: format!("{check}: verdict failed") })
    }
}

fn fit_cmd(csv_path: &Path, kind: FitKind, plot: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let bytes = fs::read(csv_path).map_err(|e| usage(format!("cannot read {}: {e}", csv_path.display())))?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes.as_slice());
    let mut rows: Vec<CsvRow> = Vec::new();
    for r in rd.deserialize() {
        rows.push(r.map_err(|e| usage(format!("invalid data: {e}")))?);
    }
    if rows.is_empty() {
        return Err(usage("invalid data: no rows"));
    }
    let key = |r: &CsvRow| (r.model.clone(), r.event.clone(), r.param.to_bits(), r.k.to_bits());
    if rows.iter().any(|r| key(r) != key(&rows[0])) {
        return Err(usage("invalid data: rows mix several series; fit one (model, event, param, k) at a time"));
    }
    let pts: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.r, r.estimate, r.stderr)).collect();
    let (fit, kind_name) = match kind {
        FitKind::Power => (fit_power_law(&pts)?, "power"),
        FitKind::Exp => (fit_exponential_decay(&pts)?, "exp"),
    };
    let plot_path = plot.map(Path::to_path_buf).unwrap_or_else(|| csv_path.with_extension("plot.csv"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let x_name = if matches!(kind, FitKind::Power) { "log_R" } else { "R" };
    let wr = |w: &mut csv::Writer<Vec<u8>>, rec: &[String]| w.write_record(rec).map_err(|e| Failure { code: 1, msg: e.to_string() });
    wr(&mut w, &[x_name.into(), "log_P".into(), "log_P_stderr".into(), "fitted_log_P".into()])?;
    for &(r, p, s) in &pts {
        let x = if matches!(kind, FitKind::Power) { r.ln() } else { r };
        wr(&mut w, &[x.to_string(), p.ln().to_string(), (s / p).to_string(), (fit.intercept + fit.slope * x).to_string()])?;
    }
    let data = w.into_inner().map_err(|e| Failure { code: 1, msg: e.to_string() })?;
    fs::write(&plot_path, data).map_err(|e| io_fail(&format!("cannot write {}", plot_path.display()), e))?;
    let doc = json!({
        "kind": kind_name,
        "seed": rows[0].seed,
        "spec_sha256": sha256_hex(&bytes),
        "fit": fit,
        "rate": fit.rate(),
        "plot": plot_path.display().to_string(),
    });
    emit_json(out, &doc)
}

fn oracle_cmd(c: &Common) -> Result<(), Failure> {
    let (bytes, v) = read_spec(c.spec.as_deref(), true)?;
    let s: OracleSpec = typed(v)?;
    let inst = s.instance.build()?;
    let prob = enumerate_probability(&inst, s.p)?;
    let mut doc = json!({
        "instance": inst.name,
        "p": s.p,
        "free_edges": inst.n(),
        "probability": prob,
        "spec_sha256": sha256_hex(&bytes),
    });
    // per-edge values have a lower cap; omit them beyond it
    let infl: perclab::Result<Vec<f64>> = (0..inst.n()).map(|i| enumerate_influence(&inst, inst.free[i], s.p)).collect();
    match infl {
        Ok(infl) => {
            let piv: Vec<f64> = (0..inst.n()).map(|i| enumerate_pivotal_derivative(&inst, inst.free[i], s.p)).collect::<perclab::Result<_>>()?;
            doc["influence"] = json!(infl);
            doc["derivative"] = json!(piv);
        }
        Err(Error::ResourceLimit(_)) => {}
        Err(e) => return Err(e.into()),
    }
    if let Some(name) = &s.algorithm {
        let alg = s.instance.algorithm(&inst, name)?;
        let r = enumerate_revealment(&inst, &alg, s.p)?;
        doc["algorithm"] = json!(name);
        doc["revealment"] = json!(r.rev);
        doc["expected_revealed"] = json!(r.expected_revealed);
    }
    emit_json(c.out.as_deref(), &doc)
}

fn revealments_cmd(c: &Common) -> Result<(), Failure> {
    let (bytes, v) = read_spec(c.spec.as_deref(), true)?;
    let s: RevealmentSpec = typed(v)?;
    let seed = resolve_seed(c.seed, s.seed)?;
    let workers = workers(c.workers)?;
    let spec = s.algorithm.spec(&s.model)?;
    let table = match (&s.model, &spec) {
        (ModelSpec::Bernoulli { d, p }, AlgorithmSpec::Bond(_)) => {
            let (_, lattice) = s.algorithm.bond(*d)?;
            estimate_revealments(&spec, &ModelParams::Bond { lattice: &lattice, p: *p }, s.n, seed, workers)?
        }
        (ModelSpec::Gaussian { level, .. }, AlgorithmSpec::Field(a)) => {
            let (x, y) = match a.target() {
                FieldTarget::Crossing { k, r } => (r, k * r),
                FieldTarget::OneArm { big, .. } | FieldTarget::TwoArm { big, .. } => (big, big),
            };
            let world = s.model.world(x, y)?;
            estimate_revealments(&spec, &ModelParams::Field { world: &world, level: *level }, s.n, seed, workers)?
        }
        _ => unreachable!("spec() matches the model"),
    };
    let all = 0..table.hits.len();
    let top = table.argmax(all.clone());
    let doc = json!({
        "seed": seed,
        "spec_sha256": sha256_hex(&bytes),
        "target": spec.target(),
        "unit": spec.unit(),
        "seeding": spec.seeding(),
        "growth": spec.growth(),
        "n": table.n,
        "mean_revealed": table.mean_revealed(),
        "max": top.map(|u| json!({"unit": u, "revealment": table.revealment(u), "stderr": table.stderr(u)})),
        "revealment": all.map(|u| table.revealment(u)).collect::<Vec<_>>(),
    });
    emit_json(out_path(&c.out, &s.out).as_deref(), &doc)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let r = match &cli.cmd {
        Cmd::Simulate(c) => simulate(c),
        Cmd::Verify { check, common } => verify_cmd(check, common),
        Cmd::Fit { csv, kind, plot, out } => fit_cmd(csv, *kind, plot.as_deref(), out.as_deref()),
        Cmd::Oracle(c) => oracle_cmd(c),
        Cmd::Revealments(c) => revealments_cmd(c),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("perclab: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
