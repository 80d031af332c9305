//! Connectivity events of excursion masks.
//!
//! Set points ({f + ℓ ≥ 0}) connect through the four axis neighbours, unset
//! points through all eight neighbours, so on a rectangle exactly one of a
//! set left-right crossing and an unset top-bottom crossing exists.

use std::collections::VecDeque;

use fixedbitset::FixedBitSet;

use super::field::{CellMask, Window};
use super::kernel::whole_steps;
use crate::error::{bail, Result};

const N4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const N8: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Breadth-first search over points of `region` with mask value `sign`,
/// from `sources`; returns true as soon as `stop` accepts a reached point.
pub fn flood(mask: &CellMask, region: &Window, sources: impl IntoIterator<Item = (i64, i64)>, sign: bool, eight: bool, mut stop: impl FnMut(i64, i64) -> bool) -> bool {
    let mut seen = FixedBitSet::with_capacity(region.len());
    let mut queue = VecDeque::new();
    for (x, y) in sources {
        if region.contains(x, y) && mask.get(x, y) == sign && !seen.put(region.index(x, y)) {
            queue.push_back((x, y));
        }
    }
    let nb: &[(i64, i64)] = if eight { &N8 } else { &N4 };
    while let Some((x, y)) = queue.pop_front() {
        if stop(x, y) {
            return true;
        }
        for &(dx, dy) in nb {
            let (u, v) = (x + dx, y + dy);
            if region.contains(u, v) && mask.get(u, v) == sign && !seen.put(region.index(u, v)) {
                queue.push_back((u, v));
            }
        }
    }
    false
}

fn require(mask: &CellMask, w: &Window) -> Result<()> {
    if !mask.window.contains_window(w) {
        bail!(InvalidQuery, "mask window {:?} does not cover {:?}", mask.window, w);
    }
    Ok(())
}

/// Points of B_k(R) = [−R,R]×[−kR,kR], with kR rounded up to the mesh.
pub fn crossing_window(mesh: f64, k: f64, r: f64) -> Result<Window> {
    let ri = whole_steps(r, mesh)?;
    let ki = (k * r / mesh - 1e-9).ceil() as i64;
    Ok(Window::centered(ri, ki))
}

/// Points of Λ_r.
pub fn ball_window(mesh: f64, r: f64) -> Result<Window> {
    let ri = whole_steps(r, mesh)?;
    Ok(Window::centered(ri, ri))
}

/// Left-right crossing of `w` by set points; `eight` switches the set
/// points to eight-neighbour connectivity.
pub fn crossing_in(mask: &CellMask, w: &Window, eight: bool) -> Result<bool> {
    require(mask, w)?;
    let x1 = w.x1;
    Ok(flood(mask, w, (w.y0..=w.y1).map(|y| (w.x0, y)), true, eight, |x, _| x == x1))
}

/// Top-bottom crossing of `w` by unset points (eight neighbours).
pub fn dual_crossing_in(mask: &CellMask, w: &Window) -> Result<bool> {
    require(mask, w)?;
    let y1 = w.y1;
    Ok(flood(mask, w, (w.x0..=w.x1).map(|x| (x, w.y0)), false, true, |_, y| y == y1))
}

/// Cross_k(R) for the excursion set.
pub fn field_crossing_event(mask: &CellMask, k: f64, r: f64) -> Result<bool> {
    crossing_in(mask, &crossing_window(mask.mesh, k, r)?, false)
}

/// Points with sup-norm at most `inner` (in points), i.e. the seed set of an arm event.
fn ball_points(inner: i64) -> impl Iterator<Item = (i64, i64)> {
    (-inner..=inner).flat_map(move |x| (-inner..=inner).map(move |y| (x, y)))
}

fn arm(mask: &CellMask, r: f64, big: f64, sign: bool, eight: bool) -> Result<bool> {
    let outer = ball_window(mask.mesh, big)?;
    let ri = whole_steps(r, mask.mesh)?;
    if ri > outer.x1 {
        bail!(InvalidQuery, "inner radius {r} exceeds outer radius {big}");
    }
    require(mask, &outer)?;
    let rb = outer.x1;
    Ok(flood(mask, &outer, ball_points(ri), sign, eight, |x, y| x.abs().max(y.abs()) == rb))
}

/// A₁(r, R): Λ_r joined to ∂Λ_R by set points inside Λ_R.
pub fn field_one_arm(mask: &CellMask, r: f64, big: f64) -> Result<bool> {
    arm(mask, r, big, true, false)
}

/// A₂(r, R): both a set path and an unset path join Λ_r to ∂Λ_R inside Λ_R.
pub fn field_two_arm(mask: &CellMask, r: f64, big: f64) -> Result<bool> {
    Ok(arm(mask, r, big, true, false)? && arm(mask, r, big, false, true)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_masks() {
        let w = Window::centered(8, 8);
        let full = CellMask::from_fn(w, 0.5, |_, _| true);
        let empty = CellMask::from_fn(w, 0.5, |_, _| false);
        assert!(field_crossing_event(&full, 1.0, 4.0).unwrap());
        assert!(!field_crossing_event(&empty, 1.0, 4.0).unwrap());
        assert!(field_one_arm(&full, 1.0, 4.0).unwrap());
        assert!(!field_two_arm(&full, 1.0, 4.0).unwrap());
        assert!(field_crossing_event(&full, 1.0, 5.0).is_err());
    }

    #[test]
    fn duality_on_random_masks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w = Window::new(0, 6, 0, 5);
        for _ in 0..2000 {
            let p: f64 = rng.gen();
            let bits: Vec<bool> = (0..w.len()).map(|_| rng.gen::<f64>() < p).collect();
            let mask = CellMask::from_fn(w, 1.0, |x, y| bits[w.index(x, y)]);
            assert_ne!(crossing_in(&mask, &w, false).unwrap(), dual_crossing_in(&mask, &w).unwrap());
        }
    }

    #[test]
    fn diagonal_pairs() {
        // set points touching only diagonally do not connect
        let w = Window::new(0, 1, 0, 1);
        let mask = CellMask::from_fn(w, 1.0, |x, y| x == y);
        assert!(!crossing_in(&mask, &w, false).unwrap());
        assert!(crossing_in(&mask, &w, true).unwrap());
        assert!(dual_crossing_in(&mask, &w).unwrap());
    }
}
