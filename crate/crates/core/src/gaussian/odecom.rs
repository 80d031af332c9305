//! Orthogonal decomposition of a box component f_S.
//!
//! With an orthonormal basis (φ_i) of L²(S) made of functions constant on
//! cells, f_S = Σ_i Z_i (q⋆φ_i) with Z_i i.i.d. standard normal. The basis
//! used here is the cosine basis of the cell grid, starting with the constant
//! 1_S/√Vol(S) and ordered by total frequency.

use serde::Serialize;

use super::field::{BoxPartition, Window};
use super::kernel::Kernel;
use crate::error::{bail, Result};

#[derive(Clone, Debug, Serialize)]
pub struct OdecomReport {
    pub n: usize,
    pub basis_size: usize,
    /// max over point pairs of |Cov f_S − Cov f_S^n|.
    pub max_cov_error: f64,
    /// max over points of Var f_S − Var f_S^n; non-increasing in n.
    pub max_variance_deficit: f64,
    pub points: usize,
}

/// Cosine basis vectors on an L×L cell grid, orthonormal in ℓ².
fn cosine_basis(l: usize) -> Vec<Vec<f64>> {
    let mut freqs: Vec<(usize, usize)> = (0..l).flat_map(|a| (0..l).map(move |b| (a, b))).collect();
    freqs.sort_by_key(|&(a, b)| (a + b, a));
    let c = |k: usize| if k == 0 { (1.0 / l as f64).sqrt() } else { (2.0 / l as f64).sqrt() };
    let pi = std::f64::consts::PI;
    freqs
        .into_iter()
        .map(|(a, b)| {
            let mut v = Vec::with_capacity(l * l);
            for i in 0..l {
                for j in 0..l {
                    let ci = (pi * (i as f64 + 0.5) * a as f64 / l as f64).cos();
                    let cj = (pi * (j as f64 + 0.5) * b as f64 / l as f64).cos();
                    v.push(c(a) * c(b) * ci * cj);
                }
            }
            v
        })
        .collect()
}

/// (q⋆φ_i)(x) for each basis vector i and point x.
fn basis_images(kernel: &Kernel, cells: &Window, basis: &[Vec<f64>], points: &[(i64, i64)]) -> Vec<Vec<f64>> {
    let eps = kernel.mesh();
    basis
        .iter()
        .map(|v| {
            points
                .iter()
                .map(|&(x, y)| {
                    let mut s = 0.0;
                    for (k, (cx, cy)) in cells.points().enumerate() {
                        s += kernel.at(x - cx, y - cy) * v[k];
                    }
                    s * eps
                })
                .collect()
        })
        .collect()
}

/// Sample points: every `stride`-th point of box `id` grown by the kernel support.
fn sample_points(kernel: &Kernel, partition: &BoxPartition, id: usize, stride: usize) -> Vec<(i64, i64)> {
    let w = partition.cell_window(id).grow(kernel.half_width() as i64);
    w.points().filter(|&(x, y)| (x - w.x0) as usize % stride == 0 && (y - w.y0) as usize % stride == 0).collect()
}

/// Compare Cov f_S with the covariance of the first `n` terms of the decomposition.
pub fn orthogonal_decomposition_check(kernel: &Kernel, partition: &BoxPartition, id: usize, n: usize, stride: usize) -> Result<OdecomReport> {
    let l = partition.cells as usize;
    if n > l * l {
        bail!(InvalidParameter, "n = {n} exceeds the {} cells of the box", l * l);
    }
    if stride == 0 {
        bail!(InvalidParameter, "stride must be positive");
    }
    let cells = partition.cell_window(id);
    let pts = sample_points(kernel, partition, id, stride);
    let basis = cosine_basis(l);
    let images = basis_images(kernel, &cells, &basis[..n], &pts);
    let eps2 = kernel.mesh() * kernel.mesh();
    let direct = |a: (i64, i64), b: (i64, i64)| {
        let mut s = 0.0;
        for (cx, cy) in cells.points() {
            s += kernel.at(a.0 - cx, a.1 - cy) * kernel.at(b.0 - cx, b.1 - cy);
        }
        s * eps2
    };
    let mut max_cov = 0.0f64;
    let mut max_def = 0.0f64;
    for i in 0..pts.len() {
        for j in i..pts.len() {
            let approx: f64 = images.iter().map(|g| g[i] * g[j]).sum();
            let err = direct(pts[i], pts[j]) - approx;
            max_cov = max_cov.max(err.abs());
            if i == j {
                max_def = max_def.max(err);
            }
        }
    }
    Ok(OdecomReport { n, basis_size: l * l, max_cov_error: max_cov, max_variance_deficit: max_def, points: pts.len() })
}

/// The first term's image q⋆φ₁ and (q⋆1_S)/√Vol(S) at the sample points.
pub fn first_component(kernel: &Kernel, partition: &BoxPartition, id: usize, stride: usize) -> (Vec<f64>, Vec<f64>) {
    let l = partition.cells as usize;
    let cells = partition.cell_window(id);
    let pts = sample_points(kernel, partition, id, stride);
    let basis = cosine_basis(l);
    let img = basis_images(kernel, &cells, &basis[..1], &pts).remove(0);
    let eps = kernel.mesh();
    let vol_sqrt = l as f64 * eps;
    let direct = pts
        .iter()
        .map(|&(x, y)| cells.points().map(|(cx, cy)| kernel.at(x - cx, y - cy)).sum::<f64>() * eps * eps / vol_sqrt)
        .collect();
    (img, direct)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Kernel, BoxPartition) {
        let q = Kernel::bargmann_fock(2, 0.5, 4.0).unwrap().truncate(2.0).unwrap();
        let p = BoxPartition::new(2.0, 0.5, Window::centered(1, 1)).unwrap();
        (q, p)
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = cosine_basis(4);
        for i in 0..16 {
            for j in 0..16 {
                let dot: f64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
                assert!((dot - (i == j) as u8 as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_basis_is_exact_and_errors_shrink() {
        let (q, p) = setup();
        let id = p.id(0, 0).unwrap();
        let full = orthogonal_decomposition_check(&q, &p, id, 16, 2).unwrap();
        assert!(full.max_cov_error <= 1e-10);
        let mut prev = f64::INFINITY;
        for n in 0..=16 {
            let r = orthogonal_decomposition_check(&q, &p, id, n, 2).unwrap();
            assert!(r.max_variance_deficit <= prev + 1e-15);
            prev = r.max_variance_deficit;
        }
        assert!(orthogonal_decomposition_check(&q, &p, id, 17, 2).is_err());
    }

    #[test]
    fn first_term_is_the_normalised_box_image() {
        let (q, p) = setup();
        let (img, direct) = first_component(&q, &p, p.id(0, 0).unwrap(), 1);
        for (a, b) in img.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
