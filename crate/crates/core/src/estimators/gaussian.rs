//! Gaussian excursion sets: arm curves, truncation, derivatives in the
//! level and the finite-range inequalities.
//!
//! A replica samples the noise once and computes the field once; masks at
//! nearby levels are thresholds of the same field, so finite differences in
//! ℓ use common random numbers.

use fixedbitset::FixedBitSet;

use super::spec::{EventSpec, FieldEventFn, KernelSpec, ModelSpec};
use super::{check_n, joint_replicas, judge, Estimate, JointMoments, Report, Term};
use crate::error::{bail, Result};
use crate::explorer::{FieldAlgorithm, FieldTarget, RevealmentTable};
use crate::gaussian::events::{ball_window, flood};
use crate::gaussian::field::FieldSample;
use crate::gaussian::kernel::whole_steps;
use crate::gaussian::{box_component, excursion_set, field_crossing_event, field_one_arm, field_two_arm, resample_boxes, CellMask, FieldWorld, Kernel, NoiseGrid, Window};
use crate::mc::fold_replicas;
use crate::rng::{lane, ReplicaStream};

/// Derivative step in ℓ.
pub const LEVEL_STEP: f64 = 0.05;

fn parts(model: &ModelSpec) -> Result<(&KernelSpec, f64, f64)> {
    match model {
        ModelSpec::Gaussian { kernel, level, .. } => Ok((kernel, *level, model.scale()?)),
        _ => bail!(InvalidQuery, "not a Gaussian model"),
    }
}

/// World with window [−x, x] × [−y, y].
fn world(model: &ModelSpec, x: f64, y: f64) -> Result<FieldWorld> {
    let (k, _, s) = parts(model)?;
    FieldWorld::centered(k.build()?, s, x, y)
}

/// ∫q = Σ q·ε².
pub fn kernel_integral(q: &Kernel) -> f64 {
    q.values().iter().sum::<f64>() * q.mesh() * q.mesh()
}

fn b(x: bool) -> f64 {
    x as u8 as f64
}

/// P̂[A₁(r, R)] (or A₂ with `two_arm`) for each R from one field per replica
/// on the window Λ_{max R}.
pub fn field_arm_curve(model: &ModelSpec, inner: f64, radii: &[f64], two_arm: bool, n: u64, seed: u64, workers: usize) -> Result<Vec<Estimate>> {
    check_n(n)?;
    let (_, level, _) = parts(model)?;
    let big = radii.iter().copied().fold(f64::NAN, f64::max);
    if !(big > 0.0) {
        bail!(InvalidParameter, "empty or non-positive radius list");
    }
    let w = world(model, big, big)?;
    let counts = fold_replicas(
        n,
        workers,
        || vec![0u64; radii.len()],
        |acc, i| {
            let mask = w.mask(&w.sample_noise(&ReplicaStream::new(seed, i))?, level)?;
            for (c, &r) in acc.iter_mut().zip(radii) {
                let hit = if two_arm { field_two_arm(&mask, inner, r)? } else { field_one_arm(&mask, inner, r)? };
                *c += hit as u64;
            }
            Ok(())
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    )?;
    let ev = if two_arm { "two-arm" } else { "one-arm" };
    Ok(radii.iter().zip(counts).map(|(r, c)| Estimate::from_count(c, n, seed, format!("{} {ev} r={inner} R={r}", model.describe()))).collect())
}

/// P[A₂(r, R)] ≤ P[A₁(r, R)]², the planar consequence of FKG at the critical level.
pub fn check_field_two_arm_square(model: &ModelSpec, inner: f64, r: f64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    let (_, level, _) = parts(model)?;
    let w = world(model, r, r)?;
    let j = joint_replicas(n, workers, 2, |i| {
        let mask = w.mask(&w.sample_noise(&ReplicaStream::new(seed, i))?, level)?;
        Ok(vec![b(field_two_arm(&mask, inner, r)?), b(field_one_arm(&mask, inner, r)?)])
    })?;
    let a1 = j.mean(1);
    Ok(Report::new("field-two-arm-square")
        .with("P[A2]", j.term(0))
        .with("P[A1]", j.term(1))
        .with("rhs", Term { value: a1 * a1, stderr: j.delta(&[0.0, 2.0 * a1]) })
        .judge(a1 * a1 - j.mean(0), j.delta(&[-1.0, 2.0 * a1])))
}

/// Discrepancies P[f_r ∈ A] − P[f ∈ A] for the truncations q_r of `base`,
/// all driven by the same noise. Holds when ‖q − q_r‖₂ decreases in r and no
/// discrepancy grows by more than 3σ from one r to the next.
pub fn check_truncation(base: &KernelSpec, cutoffs: &[f64], event: &EventSpec, level: f64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    if base.truncate.is_some() {
        bail!(InvalidParameter, "base kernel must be untruncated");
    }
    if cutoffs.is_empty() || cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        bail!(InvalidParameter, "cutoff list must be non-empty and increasing");
    }
    let scale = Some(base.range());
    let full = FieldEventFn::new(&ModelSpec::Gaussian { kernel: base.clone(), level, scale }, event)?;
    let mut evs = Vec::new();
    for &r in cutoffs {
        let k = KernelSpec { truncate: Some(r), ..base.clone() };
        let ev = FieldEventFn::new(&ModelSpec::Gaussian { kernel: k, level, scale }, event)?;
        if ev.world.noise_region() != full.world.noise_region() {
            bail!(Internal, "truncated world has a different noise region");
        }
        evs.push(ev);
    }
    let m = cutoffs.len();
    let j = joint_replicas(n, workers, m + 1, |i| {
        let noise = full.world.sample_noise(&ReplicaStream::new(seed, i))?;
        let mut out = vec![b(full.evaluate(&full.world.mask(&noise, level)?)?)];
        for ev in &evs {
            out.push(b(ev.evaluate(&ev.world.mask(&noise, level)?)?));
        }
        Ok(out)
    })?;
    let q = base.build()?;
    let mut rep = Report::new("truncation").with("P[f]", j.term(0));
    let mut disc = Vec::new();
    let mut l2 = Vec::new();
    for (t, &r) in cutoffs.iter().enumerate() {
        let mut g = vec![0.0; m + 1];
        g[0] = -1.0;
        g[t + 1] = 1.0;
        let d = j.mean(t + 1) - j.mean(0);
        rep.set(&format!("P[f_r](r={r})"), j.term(t + 1));
        rep.set(&format!("discrepancy(r={r})"), Term { value: d, stderr: j.delta(&g) });
        let dist = q.truncate(r)?.l2_distance_sq(&q)?.sqrt();
        rep.set(&format!("l2(r={r})"), Term::exact(dist));
        disc.push((d, g));
        l2.push(dist);
    }
    if l2.windows(2).any(|w| w[1] > w[0] + 1e-15) {
        rep.verdict = super::Verdict::Fails;
        return Ok(rep);
    }
    // worst step of |discrepancy|
    let mut worst: Option<(f64, f64)> = None;
    for w in disc.windows(2) {
        let (d0, g0) = &w[0];
        let (d1, g1) = &w[1];
        let gap = d0.abs() - d1.abs();
        let g: Vec<f64> = g0.iter().zip(g1).map(|(a, c)| d0.signum() * a - d1.signum() * c).collect();
        let s = j.delta(&g);
        let score = if s > 0.0 { gap / s } else if gap >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        if worst.map_or(true, |(ws, _)| score < ws) {
            worst = Some((score, gap));
            rep.set("worst_step", Term { value: gap, stderr: s });
        }
    }
    match worst {
        Some(_) => {
            let t = rep.terms["worst_step"];
            let (v, mg) = judge(t.value, t.stderr);
            // a flat or shrinking sequence within noise is acceptable
            rep.verdict = if v == super::Verdict::Fails { v } else { super::Verdict::Holds };
            rep.margin_sigma = mg;
        }
        None => rep.verdict = super::Verdict::Holds,
    }
    Ok(rep)
}

/// Field plus the effect of redrawing the noise of box `id`, on the field's points.
fn perturbed(world: &FieldWorld, field: &FieldSample, noise: &NoiseGrid, id: usize, rng: &mut impl rand::Rng) -> Result<FieldSample> {
    let fresh = resample_boxes(noise, world.partition(), &[id], rng)?;
    let mut delta = NoiseGrid::zeros(noise.region, noise.mesh);
    for (x, y) in world.partition().cell_window(id).points() {
        let k = noise.region.index(x, y);
        delta.weights[k] = fresh.weights[k] - noise.weights[k];
    }
    let reach = world.partition().cell_window(id).grow(world.kernel().half_width() as i64);
    let mut out = field.clone();
    let wx = Window::new(reach.x0.max(field.window.x0), reach.x1.min(field.window.x1), reach.y0.max(field.window.y0), reach.y1.min(field.window.y1));
    if wx.x0 <= wx.x1 && wx.y0 <= wx.y1 {
        let df = box_component(world.kernel(), &delta, world.partition(), id, wx)?;
        for (x, y) in wx.points() {
            out.values[field.window.index(x, y)] += df.at(x, y);
        }
    }
    Ok(out)
}

fn target_event(model: &ModelSpec, t: &FieldTarget) -> Result<FieldEventFn> {
    let ev = match *t {
        FieldTarget::Crossing { k, r } => EventSpec::Crossing { k, r },
        FieldTarget::OneArm { r, big } => EventSpec::OneArm { r: big, inner: Some(r) },
        FieldTarget::TwoArm { r, big } => EventSpec::TwoArm { r: big, inner: Some(r) },
    };
    FieldEventFn::new(model, &ev)
}

fn region_of(event: &EventSpec, mesh: f64) -> Result<Window> {
    Ok(match *event {
        EventSpec::Crossing { k, r } => crate::gaussian::events::crossing_window(mesh, k, r)?,
        EventSpec::OneArm { r, .. } | EventSpec::TwoArm { r, .. } | EventSpec::Theta { r } => ball_window(mesh, r)?,
        _ => bail!(InvalidParameter, "event {} is not defined for the Gaussian model", event.name()),
    })
}

/// min{1, (s/r)^d} with r the kernel range.
fn scale_factor(model: &ModelSpec) -> Result<f64> {
    let (k, _, s) = parts(model)?;
    Ok((s / k.range()).powi(2).min(1.0))
}

/// dP_ℓ[A]/dℓ by the coupled central difference with step h, against the
/// resampling influences Infl_A(S) of the boxes whose noise reaches the
/// event region (or of `boxes` when given). Asserts only that the derivative
/// is positive; the ratio derivative·‖q‖₂/(min{1,(s/r)^d}·Σ Infl) is reported.
pub fn check_gaussian_russo(model: &ModelSpec, event: &EventSpec, boxes: Option<&[usize]>, h: f64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    if !event.is_increasing() {
        bail!(ContractViolation, "event {} is not increasing", event.name());
    }
    let (_, level, _) = parts(model)?;
    let ev = FieldEventFn::new(model, event)?;
    let w = &ev.world;
    let units: Vec<usize> = match boxes {
        Some(b) => b.to_vec(),
        None => w.boxes_influencing(&region_of(event, w.mesh())?),
    };
    if let Some(bad) = units.iter().find(|&&u| u >= w.partition().len()) {
        bail!(InvalidQuery, "box {bad} not in the partition");
    }
    let m = units.len();
    let j = joint_replicas(n, workers, m + 2, |i| {
        let st = ReplicaStream::new(seed, i);
        let noise = w.sample_noise(&st)?;
        let f = w.field(&noise)?;
        let x = ev.evaluate(&excursion_set(&f, level))?;
        let hi = ev.evaluate(&excursion_set(&f, level + h))?;
        let lo = ev.evaluate(&excursion_set(&f, level - h))?;
        let mut out = vec![(b(hi) - b(lo)) / (2.0 * h)];
        let mut rng = st.rng(lane::RESAMPLE);
        let mut total = 0.0;
        for &id in &units {
            let g = perturbed(w, &f, &noise, id, &mut rng)?;
            let flip = b(ev.evaluate(&excursion_set(&g, level))? != x);
            total += flip;
            out.push(flip);
        }
        out.push(total);
        Ok(out)
    })?;
    let norm = w.kernel().l2_norm_sq().sqrt();
    let fac = scale_factor(model)?;
    let (dv, si) = (j.mean(0), j.mean(m + 1));
    let ratio = if si > 0.0 { dv * norm / (fac * si) } else { f64::NAN };
    let mut g = vec![0.0; m + 2];
    if si > 0.0 {
        g[0] = norm / (fac * si);
        g[m + 1] = -ratio / si;
    }
    let mut rep = Report::new("gaussian-russo")
        .with("dP/dl", j.term(0))
        .with("sum Infl", j.term(m + 1))
        .with("ratio", Term { value: ratio, stderr: j.delta(&g) })
        .with("boxes", Term::exact(m as f64));
    for (t, &id) in units.iter().enumerate() {
        rep.set(&format!("Infl(S={id})"), j.term(t + 1));
    }
    Ok(rep.judge(dv, j.term(0).stderr))
}

struct LbAcc {
    j: JointMoments,
    rev: RevealmentTable,
}

/// Terms of the lower bound dP/dℓ ≥ c·min{1,(s/r)^d}/‖q‖₂ · Var(P[A | F_S'])/max_{S∈S'} Rev(S)
/// for the event determined by `alg`. The conditional variance uses paired
/// replicas that share the noise of S' and redraw the rest:
/// Var(P[A|F]) = E[X·X'] − P². With S' = all boxes X' = X and the term is Var(1_A).
pub fn check_lbderiv(model: &ModelSpec, alg: &FieldAlgorithm, subset: Option<&[usize]>, h: f64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    let (_, level, _) = parts(model)?;
    let target = alg.target();
    if !target.is_increasing() {
        bail!(ContractViolation, "target event is not increasing");
    }
    let ev = target_event(model, &target)?;
    let w = &ev.world;
    let all: Vec<usize> = (0..w.partition().len()).collect();
    let keep: Vec<usize> = subset.map_or_else(|| all.clone(), |s| s.to_vec());
    if keep.is_empty() || keep.iter().any(|&u| u >= all.len()) {
        bail!(InvalidParameter, "subset must be a non-empty set of partition boxes");
    }
    let mut inside = FixedBitSet::with_capacity(all.len());
    keep.iter().for_each(|&u| inside.insert(u));
    let redraw: Vec<usize> = all.iter().copied().filter(|&u| !inside.contains(u)).collect();
    let acc = fold_replicas(
        n,
        workers,
        || LbAcc { j: JointMoments::new(4), rev: RevealmentTable::new(all.len()) },
        |acc, i| {
            let st = ReplicaStream::new(seed, i);
            let noise = w.sample_noise(&st)?;
            let f = w.field(&noise)?;
            let x = b(ev.evaluate(&excursion_set(&f, level))?);
            let xp = if redraw.is_empty() {
                x
            } else {
                let other = resample_boxes(&noise, w.partition(), &redraw, &mut st.rng(lane::RESAMPLE))?;
                b(ev.evaluate(&w.mask(&other, level)?)?)
            };
            let hi = b(ev.evaluate(&excursion_set(&f, level + h))?);
            let lo = b(ev.evaluate(&excursion_set(&f, level - h))?);
            acc.j.push(&[(x + xp) / 2.0, x * xp, (hi - lo) / (2.0 * h), x]);
            let aux = alg.draw_aux(w, &mut st.rng(lane::AUX));
            let trace = alg.run(w, &noise, level, aux)?;
            if trace.output != (x == 1.0) {
                bail!(ContractViolation, "algorithm output differs from the event on replica {i}");
            }
            acc.rev.record(&trace);
            Ok(())
        },
        |a, b| {
            a.j.merge(b.j);
            a.rev.merge(&b.rev);
        },
    )?;
    let j = &acc.j;
    let (pbar, xx, dv) = (j.mean(0), j.mean(1), j.mean(2));
    let var_cond = xx - pbar * pbar;
    let mean_cond_var = pbar - xx;
    let arg = acc.rev.argmax(keep.iter().copied()).expect("non-empty subset");
    let max_rev = acc.rev.revealment(arg);
    let direct = j.cov(3, 3);
    let norm = w.kernel().l2_norm_sq().sqrt();
    let fac = scale_factor(model)?;
    let c = if var_cond > 0.0 { dv * norm * max_rev / (fac * var_cond) } else { f64::NAN };
    Ok(Report::new("lbderiv")
        .with("dP/dl", j.term(2))
        .with("var_cond", Term { value: var_cond, stderr: j.delta(&[-2.0 * pbar, 1.0, 0.0, 0.0]) })
        .with("mean_cond_var", Term { value: mean_cond_var, stderr: j.delta(&[1.0, -1.0, 0.0, 0.0]) })
        .with("var_total", Term::exact(pbar * (1.0 - pbar)))
        .with("var_direct", Term::exact(direct))
        .with("ltv_gap", Term { value: var_cond + mean_cond_var - direct, stderr: j.delta(&[1.0 - 2.0 * pbar, 0.0, 0.0, 0.0]) })
        .with("max_rev", Term { value: max_rev, stderr: acc.rev.stderr(arg) })
        .with("c", Term::exact(c)))
}

/// Points of `region` joined to `sources` by set points (four neighbours).
fn cluster(mask: &CellMask, region: &Window, sources: impl IntoIterator<Item = (i64, i64)>) -> FixedBitSet {
    let mut seen = FixedBitSet::with_capacity(region.len());
    flood(mask, region, sources, true, false, |x, y| {
        seen.insert(region.index(x, y));
        false
    });
    seen
}

/// Summed-area table of a point set, for box queries.
struct Integral {
    w: Window,
    s: Vec<u32>,
}

impl Integral {
    fn new(w: Window, set: &FixedBitSet) -> Self {
        let (nx, ny) = (w.nx(), w.ny());
        let mut s = vec![0u32; (nx + 1) * (ny + 1)];
        for yi in 0..ny {
            for xi in 0..nx {
                let v = set.contains(w.index(w.x0 + xi as i64, w.y0 + yi as i64)) as u32;
                s[(yi + 1) * (nx + 1) + xi + 1] = v + s[yi * (nx + 1) + xi + 1] + s[(yi + 1) * (nx + 1) + xi] - s[yi * (nx + 1) + xi];
            }
        }
        Self { w, s }
    }

    fn any(&self, b: &Window) -> bool {
        let x0 = b.x0.max(self.w.x0);
        let x1 = b.x1.min(self.w.x1);
        let y0 = b.y0.max(self.w.y0);
        let y1 = b.y1.min(self.w.y1);
        if x0 > x1 || y0 > y1 {
            return false;
        }
        let nx = self.w.nx() + 1;
        let (a0, a1) = ((x0 - self.w.x0) as usize, (x1 - self.w.x0) as usize + 1);
        let (b0, b1) = ((y0 - self.w.y0) as usize, (y1 - self.w.y0) as usize + 1);
        self.s[b1 * nx + a1] + self.s[b0 * nx + a0] > self.s[b0 * nx + a1] + self.s[b1 * nx + a0]
    }
}

/// Number of v ∈ rZ² ∩ Λ_{R+2r} with Λ₁ joined to v + Λ_{6r} inside `mask`'s window.
pub(crate) fn connection_count(mask: &CellMask, r: f64, big: f64) -> Result<f64> {
    let mesh = mask.mesh;
    let win = mask.window;
    let one = whole_steps(1.0, mesh)?;
    let src = (-one..=one).flat_map(move |x| (-one..=one).map(move |y| (x, y)));
    let set = Integral::new(win, &cluster(mask, &win, src));
    let step = whole_steps(r, mesh)?;
    let six = whole_steps(6.0 * r, mesh)?;
    let lim = ((big + 2.0 * r) / r + 1e-9).floor() as i64;
    let mut count = 0;
    for i in -lim..=lim {
        for jx in -lim..=lim {
            let (cx, cy) = (i * step, jx * step);
            if set.any(&Window::new(cx - six, cx + six, cy - six, cy + six)) {
                count += 1;
            }
        }
    }
    Ok(count as f64)
}

/// P_ℓ'[A₁(1,R)] − P_ℓ[A₁(1,R)] ≤ r^{d/2}(ℓ'−ℓ)/∫q · √(P_ℓ'[A₁(1,R)]·Σ_v P_ℓ[Λ₁ ↔ v+Λ_{6r}]),
/// v over rZ² ∩ Λ_{R+2r}, r the kernel range.
pub fn check_ubgf1(model: &ModelSpec, level2: f64, r_big: f64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    check_n(n)?;
    let (k, level, _) = parts(model)?;
    let r = k.range();
    if level2 < level {
        bail!(InvalidParameter, "need ℓ ≤ ℓ', got {level} > {level2}");
    }
    if !(r_big >= r && r >= 1.0) {
        bail!(InvalidParameter, "need R ≥ r ≥ 1, got R={r_big}, r={r}");
    }
    let half = r_big + 8.0 * r;
    let w = world(model, half, half)?;
    let j = joint_replicas(n, workers, 3, |i| {
        let f = w.field(&w.sample_noise(&ReplicaStream::new(seed, i))?)?;
        let lo = excursion_set(&f, level);
        let hi = excursion_set(&f, level2);
        Ok(vec![b(field_one_arm(&hi, 1.0, r_big)?), b(field_one_arm(&lo, 1.0, r_big)?), connection_count(&lo, r, r_big)?])
    })?;
    let iq = kernel_integral(w.kernel());
    let m = r * (level2 - level) / iq;
    let (p2, p1, s) = (j.mean(0), j.mean(1), j.mean(2));
    let root = (p2 * s).sqrt();
    let rhs = m * root;
    let (g0, g2) = if root > 0.0 { (m * s / (2.0 * root), m * p2 / (2.0 * root)) } else { (0.0, 0.0) };
    Ok(Report::new("ubgf1")
        .with("P_l'[A1]", j.term(0))
        .with("P_l[A1]", j.term(1))
        .with("sum P[L1<->v+L6r]", j.term(2))
        .with("int q", Term::exact(iq))
        .with("lhs", Term { value: p2 - p1, stderr: j.delta(&[1.0, -1.0, 0.0]) })
        .with("rhs", Term { value: rhs, stderr: j.delta(&[g0, 0.0, g2]) })
        .judge(rhs - p2 + p1, j.delta(&[g0 - 1.0, 1.0, g2])))
}

/// Largest and smallest finite positive entry.
fn spread(cs: &[f64]) -> Option<(f64, f64)> {
    let v: Vec<f64> = cs.iter().copied().filter(|c| c.is_finite() && *c > 0.0).collect();
    if v.is_empty() {
        return None;
    }
    Some((v.iter().copied().fold(f64::MIN, f64::max), v.iter().copied().fold(f64::MAX, f64::min)))
}

/// Per-radius terms of the crossing inequalities: derivative, 1[Cross_k(R)],
/// 1[A₂(2r,R−2r)], 1[A₁(2r,R−2r)], Σ_{i=2}^{R/r} 1[A₁(2r,ir)],
/// 1[Cross_{1/(8k)}(kR)], 1[Cross_{8k}(R/8)] (the last two only when R ≥ 8r).
const PER_R: usize = 7;

fn crossing_family(model: &ModelSpec, k: f64, radii: &[f64], min_ratio: f64, h: f64, n: u64, seed: u64, workers: usize) -> Result<(JointMoments, f64)> {
    check_n(n)?;
    let (kern, level, _) = parts(model)?;
    let r = kern.range();
    if !(k >= 1.0) {
        bail!(InvalidParameter, "need k ≥ 1, got {k}");
    }
    if radii.is_empty() {
        bail!(InvalidParameter, "empty radius list");
    }
    if let Some(bad) = radii.iter().find(|&&rr| rr < min_ratio * r - 1e-9) {
        bail!(InvalidParameter, "R = {bad} violates R ≥ {min_ratio}r with r = {r}");
    }
    let big = radii.iter().copied().fold(0.0, f64::max);
    let w = world(model, k * big, k * big)?;
    let j = joint_replicas(n, workers, PER_R * radii.len(), |i| {
        let f = w.field(&w.sample_noise(&ReplicaStream::new(seed, i))?)?;
        let mid = excursion_set(&f, level);
        let hi = excursion_set(&f, level + h);
        let lo = excursion_set(&f, level - h);
        let mut out = Vec::with_capacity(PER_R * radii.len());
        for &rr in radii {
            let d = (b(field_crossing_event(&hi, k, rr)?) - b(field_crossing_event(&lo, k, rr)?)) / (2.0 * h);
            out.push(d);
            out.push(b(field_crossing_event(&mid, k, rr)?));
            out.push(b(field_two_arm(&mid, 2.0 * r, rr - 2.0 * r)?));
            out.push(b(field_one_arm(&mid, 2.0 * r, rr - 2.0 * r)?));
            let top = (rr / r + 1e-9).floor() as i64;
            let mut s = 0.0;
            for i in 2..=top {
                s += b(field_one_arm(&mid, 2.0 * r, i as f64 * r)?);
            }
            out.push(s);
            if rr >= 8.0 * r - 1e-9 {
                out.push(b(field_crossing_event(&mid, 1.0 / (8.0 * k), k * rr)?));
                out.push(b(field_crossing_event(&mid, 8.0 * k, rr / 8.0)?));
            } else {
                out.extend([0.0, 0.0]);
            }
        }
        Ok(out)
    })?;
    Ok((j, r))
}

/// d⁺P_ℓ[Cross_k(R)]/dℓ ≤ c·R/∫q·√P_ℓ[A₂(2r,R−2r)] (and the A₁ form),
/// R ≥ 4r. Reports c_R per radius, c = max_R c_R and the stability ratio.
pub fn check_ubgf2(model: &ModelSpec, k: f64, radii: &[f64], h: f64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    let (j, _) = crossing_family(model, k, radii, 4.0, h, n, seed, workers)?;
    let iq = kernel_integral(&parts(model)?.0.build()?);
    let mut rep = Report::new("ubgf2").with("int q", Term::exact(iq));
    let (mut c2s, mut c1s) = (Vec::new(), Vec::new());
    for (t, &rr) in radii.iter().enumerate() {
        let o = PER_R * t;
        let dv = j.mean(o);
        rep.set(&format!("dP/dl(R={rr})"), j.term(o));
        rep.set(&format!("P[A2(2r,R-2r)](R={rr})"), j.term(o + 2));
        rep.set(&format!("P[A1(2r,R-2r)](R={rr})"), j.term(o + 3));
        for (name, idx, list) in [("c_two_arm", o + 2, &mut c2s), ("c_one_arm", o + 3, &mut c1s)] {
            let pa = j.mean(idx);
            let c = if dv <= 0.0 { 0.0 } else if pa > 0.0 { dv * iq / (rr * pa.sqrt()) } else { f64::INFINITY };
            let mut g = vec![0.0; j.sum.len()];
            if c.is_finite() && pa > 0.0 {
                g[o] = iq / (rr * pa.sqrt());
                g[idx] = -0.5 * c / pa;
            }
            rep.set(&format!("{name}(R={rr})"), Term { value: c, stderr: j.delta(&g) });
            list.push(c);
        }
    }
    for (name, cs) in [("c_two_arm", &c2s), ("c_one_arm", &c1s)] {
        if let Some((hi, lo)) = spread(cs) {
            rep.set(&format!("{name}_fit"), Term::exact(hi));
            rep.set(&format!("{name}_stability"), Term::exact(hi / lo));
        }
    }
    Ok(rep)
}

/// The two lower bounds on d⁻P_ℓ[Cross_k(R)]/dℓ, R ≥ 8r:
/// c/‖q‖₂ · P(1−P)/((r/R)Σ_{i=2}^{R/r} P[A₁(2r,ir)]) and
/// c/‖q‖₂ · P[Cross_{1/(8k)}(kR)]⁴(1−P[Cross_{8k}(R/8)])²/P[A₂(2r,R−2r)].
/// Reports c_R = derivative/(rhs without c) and c = min_R c_R for each.
pub fn check_lbgf(model: &ModelSpec, k: f64, radii: &[f64], h: f64, n: u64, seed: u64, workers: usize) -> Result<Report> {
    let (j, r) = crossing_family(model, k, radii, 8.0, h, n, seed, workers)?;
    let norm = parts(model)?.0.build()?.l2_norm_sq().sqrt();
    let mut rep = Report::new("lbgf").with("norm q", Term::exact(norm));
    let (mut c1s, mut c2s) = (Vec::new(), Vec::new());
    for (t, &rr) in radii.iter().enumerate() {
        let o = PER_R * t;
        let (dv, p, a2, s, th, fat) = (j.mean(o), j.mean(o + 1), j.mean(o + 2), j.mean(o + 4), j.mean(o + 5), j.mean(o + 6));
        rep.set(&format!("dP/dl(R={rr})"), j.term(o));
        rep.set(&format!("P[Cross](R={rr})"), j.term(o + 1));
        rep.set(&format!("sum P[A1(2r,ir)](R={rr})"), j.term(o + 4));
        rep.set(&format!("P[A2(2r,R-2r)](R={rr})"), j.term(o + 2));
        rep.set(&format!("P[Cross_1/8k(kR)](R={rr})"), j.term(o + 5));
        rep.set(&format!("P[Cross_8k(R/8)](R={rr})"), j.term(o + 6));
        // lbgf1
        let a = r / rr * s;
        let v = p * (1.0 - p);
        let c1 = if v > 0.0 { dv * norm * a / v } else { f64::INFINITY };
        let mut g = vec![0.0; j.sum.len()];
        if c1.is_finite() {
            g[o] = norm * a / v;
            g[o + 4] = dv * norm * (r / rr) / v;
            g[o + 1] = -c1 * (1.0 - 2.0 * p) / v;
        }
        rep.set(&format!("c1(R={rr})"), Term { value: c1, stderr: if c1.is_finite() { j.delta(&g) } else { 0.0 } });
        c1s.push(c1);
        // lbgf2
        let den = th.powi(4) * (1.0 - fat).powi(2);
        let c2 = if den > 0.0 { dv * norm * a2 / den } else { f64::INFINITY };
        let mut g = vec![0.0; j.sum.len()];
        if c2.is_finite() {
            g[o] = norm * a2 / den;
            g[o + 2] = dv * norm / den;
            g[o + 5] = -4.0 * c2 / th;
            g[o + 6] = 2.0 * c2 / (1.0 - fat);
        }
        rep.set(&format!("c2(R={rr})"), Term { value: c2, stderr: if c2.is_finite() { j.delta(&g) } else { 0.0 } });
        c2s.push(c2);
    }
    for (name, cs) in [("c1", &c1s), ("c2", &c2s)] {
        if let Some((hi, lo)) = spread(cs) {
            rep.set(&format!("{name}_fit"), Term::exact(lo));
            rep.set(&format!("{name}_stability"), Term::exact(hi / lo));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{mc_estimate, Verdict};

    fn model(mesh: f64, r: f64, level: f64) -> ModelSpec {
        ModelSpec::Gaussian { kernel: KernelSpec::bargmann_fock(mesh, Some(r)), level, scale: None }
    }

    #[test]
    fn arm_curve_monotone_and_consistent() {
        let m = model(0.5, 1.0, 0.0);
        let c = field_arm_curve(&m, 1.0, &[2.0, 4.0], false, 200, 3, 1).unwrap();
        assert!(c[0].mean >= c[1].mean);
        let two = field_arm_curve(&m, 1.0, &[2.0, 4.0], true, 200, 3, 2).unwrap();
        assert!(two.iter().zip(&c).all(|(a, b)| a.mean <= b.mean));
        let r = check_field_two_arm_square(&m, 1.0, 4.0, 300, 1, 1).unwrap();
        assert!(r.not_failed(), "{r:?}");
    }

    #[test]
    fn integral_of_bargmann_fock() {
        let q = Kernel::bargmann_fock(2, 0.1, 5.0).unwrap();
        assert!((kernel_integral(&q) - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn truncation_far_cutoff_is_exact() {
        let base = KernelSpec { name: "bargmann-fock".into(), mesh: 0.5, support: 2.0, truncate: None };
        // the cutoff is 1 up to half its radius, and the support corners sit at 2√2
        let ev = EventSpec::Crossing { k: 1.0, r: 3.0 };
        let rep = check_truncation(&base, &[1.0, 6.0], &ev, 0.0, 100, 1, 1).unwrap();
        assert_eq!(rep.get("discrepancy(r=6)"), Some(0.0));
        assert_eq!(rep.get("l2(r=6)"), Some(0.0));
        assert!(rep.get("l2(r=1)").unwrap() > 0.0);
        assert!(check_truncation(&base, &[2.0, 1.0], &ev, 0.0, 10, 1, 1).is_err());
    }

    #[test]
    fn perturbation_matches_full_recompute() {
        let m = model(0.5, 1.0, 0.0);
        let w = world(&m, 3.0, 3.0).unwrap();
        let st = ReplicaStream::new(4, 0);
        let noise = w.sample_noise(&st).unwrap();
        let f = w.field(&noise).unwrap();
        let id = w.partition().id_of_cell(0, 0).unwrap();
        let g = perturbed(&w, &f, &noise, id, &mut st.rng(lane::RESAMPLE)).unwrap();
        let fresh = resample_boxes(&noise, w.partition(), &[id], &mut st.rng(lane::RESAMPLE)).unwrap();
        let full = w.field(&fresh).unwrap();
        let err = g.values.iter().zip(&full.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn russo_locality_and_sign() {
        let m = model(0.5, 1.0, 0.0);
        let ev = EventSpec::Crossing { k: 1.0, r: 2.0 };
        let rep = check_gaussian_russo(&m, &ev, None, LEVEL_STEP, 200, 2, 1).unwrap();
        assert!(rep.get("dP/dl").unwrap() > 0.0);
        assert!(rep.terms.iter().filter(|(k, _)| k.starts_with("Infl")).all(|(_, t)| t.value >= 0.0));
        // a corner box of the partition does not reach the crossing box
        let w = FieldEventFn::new(&m, &ev).unwrap().world;
        let reach = w.boxes_influencing(&region_of(&ev, 0.5).unwrap());
        let far: Vec<usize> = (0..w.partition().len()).filter(|b| !reach.contains(b)).take(1).collect();
        if !far.is_empty() {
            let rep = check_gaussian_russo(&m, &ev, Some(&far), LEVEL_STEP, 50, 2, 1).unwrap();
            assert_eq!(rep.get("sum Infl"), Some(0.0));
        }
    }

    #[test]
    fn lbderiv_full_subset_is_plain_variance() {
        let m = model(0.5, 1.0, 0.0);
        let alg = FieldAlgorithm::LeftLine { k: 1.0, r: 4.0 };
        let rep = check_lbderiv(&m, &alg, None, LEVEL_STEP, 200, 5, 1).unwrap();
        assert_eq!(rep.get("mean_cond_var"), Some(0.0));
        assert!((rep.get("var_cond").unwrap() - rep.get("var_total").unwrap()).abs() < 1e-12);
        let w = target_event(&m, &alg.target()).unwrap().world;
        let half: Vec<usize> = (0..w.partition().len() / 2).collect();
        let rep = check_lbderiv(&m, &alg, Some(&half), LEVEL_STEP, 200, 5, 2).unwrap();
        let t = rep.terms["ltv_gap"];
        assert!(t.value.abs() <= 3.0 * t.stderr + 1e-2, "{t:?}");
        assert!(rep.get("var_cond").unwrap() <= rep.get("var_total").unwrap() + 1e-12);
    }

    #[test]
    fn ubgf_and_lbgf_terms() {
        let m = model(0.5, 1.0, 0.0);
        let r = check_ubgf1(&m, 0.1, 2.0, 100, 1, 1).unwrap();
        assert_ne!(r.verdict, Verdict::Reported);
        let same = check_ubgf1(&m, 0.0, 2.0, 50, 1, 1).unwrap();
        assert_eq!(same.get("lhs"), Some(0.0));
        assert!(check_ubgf1(&m, -0.1, 2.0, 10, 1, 1).is_err());
        let u = check_ubgf2(&m, 1.0, &[4.0], LEVEL_STEP, 100, 1, 1).unwrap();
        assert!(u.get("dP/dl(R=4)").is_some());
        assert!(matches!(check_ubgf2(&m, 1.0, &[3.0], LEVEL_STEP, 10, 1, 1), Err(crate::Error::InvalidParameter(_))));
        let l = check_lbgf(&m, 1.0, &[8.0], LEVEL_STEP, 100, 1, 1).unwrap();
        assert!(l.get("c1(R=8)").is_some());
        assert!(check_lbgf(&m, 1.0, &[4.0], LEVEL_STEP, 10, 1, 1).is_err());
    }

    #[test]
    fn theta_proxy_is_monotone_in_level() {
        let m = model(0.5, 1.0, 0.0);
        let ev = EventSpec::Theta { r: 3.0 };
        let a = mc_estimate(&m.with_param(-0.5), &ev, 100, 1, 1).unwrap();
        let b = mc_estimate(&m.with_param(0.5), &ev, 100, 1, 1).unwrap();
        assert!(a.mean <= b.mean);
    }
}
