//! Moving-average kernels q sampled on a planar mesh.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// q sampled at offsets (i·ε, j·ε) for |i|, |j| ≤ m; zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    mesh: f64,
    half: usize,
    values: Vec<f64>,
    name: String,
}

/// Number of mesh steps in `len`, which must be a whole multiple of `mesh`.
pub fn whole_steps(len: f64, mesh: f64) -> Result<i64> {
    let x = len / mesh;
    let n = x.round();
    if (x - n).abs() > 1e-6 {
        bail!(InvalidGeometry, "length {len} is not a multiple of the mesh {mesh}");
    }
    Ok(n as i64)
}

/// Smooth cutoff: 1 on |t| ≤ ½, 0 on |t| ≥ 1, monotone in between.
pub fn cutoff(t: f64) -> f64 {
    fn g(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (-1.0 / x).exp()
        }
    }
    let u = 2.0 * t.abs() - 1.0;
    if u <= 0.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    let (a, b) = (g(1.0 - u), g(u));
    a / (a + b)
}

impl Kernel {
    /// Kernel from a function of the offset, sampled on Λ_r.
    pub fn from_fn(mesh: f64, support_radius: f64, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !(mesh > 0.0) || !(support_radius >= 0.0) {
            bail!(InvalidParameter, "mesh {mesh} and support radius {support_radius} must be positive");
        }
        let half = (support_radius / mesh + 1e-9).floor() as usize;
        let w = 2 * half + 1;
        let mut values = vec![0.0; w * w];
        for i in 0..w {
            for j in 0..w {
                let x = (i as f64 - half as f64) * mesh;
                let y = (j as f64 - half as f64) * mesh;
                values[i * w + j] = f(x, y);
            }
        }
        let k = Self { mesh, half, values, name: name.to_string() };
        if k.l2_norm_sq() <= 0.0 {
            bail!(InvalidParameter, "kernel has zero norm");
        }
        Ok(k)
    }

    /// Bargmann-Fock: q(x) = (2/π)^{1/2} e^{−|x|²}, so q⋆q(x) = e^{−|x|²/2}.
    pub fn bargmann_fock(d: usize, mesh: f64, support_radius: f64) -> Result<Self> {
        if d != 2 {
            bail!(UnsupportedDimension, d);
        }
        let c = (2.0 / std::f64::consts::PI).powf(d as f64 / 4.0);
        Self::from_fn(mesh, support_radius, "bargmann-fock", |x, y| c * (-(x * x + y * y)).exp())
    }

    /// q_r(x) = q(x)·φ(|x|/r).
    pub fn truncate(&self, r_cut: f64) -> Result<Self> {
        if !(r_cut > 0.0) {
            bail!(InvalidParameter, "cutoff radius must be positive");
        }
        let half = self.half.min((r_cut / self.mesh + 1e-9).floor() as usize);
        let w = 2 * half + 1;
        let mut values = vec![0.0; w * w];
        for i in 0..w {
            for j in 0..w {
                let (di, dj) = (i as i64 - half as i64, j as i64 - half as i64);
                let x = di as f64 * self.mesh;
                let y = dj as f64 * self.mesh;
                values[i * w + j] = self.at(di, dj) * cutoff((x * x + y * y).sqrt() / r_cut);
            }
        }
        Ok(Self { mesh: self.mesh, half, values, name: format!("{}-trunc{}", self.name, r_cut) })
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    /// m, the half-width in mesh steps.
    pub fn half_width(&self) -> usize {
        self.half
    }

    pub fn support_radius(&self) -> f64 {
        self.half as f64 * self.mesh
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// q(i·ε, j·ε); zero outside the support.
    #[inline]
    pub fn at(&self, i: i64, j: i64) -> f64 {
        let h = self.half as i64;
        if i.abs() > h || j.abs() > h {
            return 0.0;
        }
        let w = 2 * self.half + 1;
        self.values[(i + h) as usize * w + (j + h) as usize]
    }

    /// Raw table, row-major in the first offset, side 2m+1.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Σ q² ε², the discrete ‖q‖₂² and K(0).
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.mesh * self.mesh
    }

    /// Discrete ‖q − other‖₂² over the union of supports.
    pub fn l2_distance_sq(&self, other: &Kernel) -> Result<f64> {
        if (self.mesh - other.mesh).abs() > 1e-12 {
            bail!(InvalidParameter, "mesh mismatch");
        }
        let h = self.half.max(other.half) as i64;
        let mut s = 0.0;
        for i in -h..=h {
            for j in -h..=h {
                let d = self.at(i, j) - other.at(i, j);
                s += d * d;
            }
        }
        Ok(s * self.mesh * self.mesh)
    }

    /// Whether q(x) = q(−x) on the mesh.
    pub fn is_symmetric(&self) -> bool {
        let h = self.half as i64;
        (-h..=h).all(|i| (-h..=h).all(|j| self.at(i, j) == self.at(-i, -j)))
    }

    /// K(iε, jε) = Σ_x q(x) q(x + (iε, jε)) ε².
    pub fn covariance_at(&self, i: i64, j: i64) -> f64 {
        let h = self.half as i64;
        let mut s = 0.0;
        for a in -h..=h {
            for b in -h..=h {
                s += self.at(a, b) * self.at(a + i, b + j);
            }
        }
        s * self.mesh * self.mesh
    }

    /// K = q⋆q on offsets |i|, |j| ≤ `max_offset`, row-major, side 2·max_offset+1.
    pub fn self_convolution(&self, max_offset: usize) -> Vec<f64> {
        let n = max_offset as i64;
        let mut out = Vec::with_capacity((2 * max_offset + 1).pow(2));
        for i in -n..=n {
            for j in -n..=n {
                out.push(self.covariance_at(i, j));
            }
        }
        out
    }

    /// CSV with columns ix, iy, x, y, value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let h = self.half as i64;
        let io = |e: csv::Error| crate::Error::InvalidData(e.to_string());
        for i in -h..=h {
            for j in -h..=h {
                wr.serialize(KernelRow { ix: i, iy: j, x: i as f64 * self.mesh, y: j as f64 * self.mesh, value: self.at(i, j) }).map_err(io)?;
            }
        }
        wr.flush().map_err(|e| crate::Error::InvalidData(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R, mesh: f64, name: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for row in rd.deserialize::<KernelRow>() {
            rows.push(row.map_err(|e| crate::Error::InvalidData(e.to_string()))?);
        }
        let half = rows.iter().map(|r| r.ix.abs().max(r.iy.abs())).max().unwrap_or(0) as usize;
        let w = 2 * half + 1;
        let mut values = vec![0.0; w * w];
        for r in rows {
            values[(r.ix + half as i64) as usize * w + (r.iy + half as i64) as usize] = r.value;
        }
        Ok(Self { mesh, half, values, name: name.to_string() })
    }
}

#[derive(Serialize, Deserialize)]
struct KernelRow {
    ix: i64,
    iy: i64,
    x: f64,
    y: f64,
    value: f64,
}

/// ∫_{|x| > t} q(x)² dx for Bargmann-Fock in the plane: (2/π)·(π/2)·e^{−2t²} = e^{−2t²}.
pub fn bargmann_fock_tail(t: f64) -> f64 {
    (-2.0 * t * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bargmann_fock_values() {
        let q = Kernel::bargmann_fock(2, 0.1, 5.0).unwrap();
        assert_abs_diff_eq!(q.at(0, 0), (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(q.at(0, 0), 0.7978845608, epsilon = 1e-9);
        assert!(q.is_symmetric());
        assert_eq!(q.half_width(), 50);
        assert_abs_diff_eq!(q.covariance_at(0, 0), 1.0, epsilon = 1e-3);
        assert!(Kernel::bargmann_fock(3, 0.1, 5.0).is_err());
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0), 1.0);
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(1.0), 0.0);
        assert_eq!(cutoff(-2.0), 0.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = cutoff(0.5 + i as f64 / 200.0);
            assert!(v <= prev);
            prev = v;
        }
        assert_abs_diff_eq!(cutoff(0.75), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn truncation() {
        let q = Kernel::bargmann_fock(2, 0.25, 4.0).unwrap();
        // φ ≡ 1 on the whole support: unchanged
        let same = q.truncate(12.0).unwrap();
        assert_eq!(same.values(), q.values());
        let t = q.truncate(2.0).unwrap();
        assert_eq!(t.half_width(), 8);
        for i in -8i64..=8 {
            for j in -8i64..=8 {
                let r = ((i * i + j * j) as f64).sqrt() * 0.25;
                if r >= 2.0 {
                    assert_eq!(t.at(i, j), 0.0);
                }
            }
        }
        let mut prev = f64::INFINITY;
        for r in [1.0, 1.5, 2.0, 2.5, 3.0, 3.5] {
            let d = q.l2_distance_sq(&q.truncate(r).unwrap()).unwrap();
            assert!(d <= prev);
            // bounded by the tail beyond r/2, up to discretisation
            assert!(d <= 1.05 * bargmann_fock_tail(r / 2.0) + 1e-12, "r={r} d={d}");
            prev = d;
        }
    }

    #[test]
    fn csv_round_trip() {
        let q = Kernel::bargmann_fock(2, 0.5, 2.0).unwrap();
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let back = Kernel::read_csv(&buf[..], 0.5, q.name()).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn whole_steps_rejects_fractions() {
        assert_eq!(whole_steps(3.0, 0.25).unwrap(), 12);
        assert!(whole_steps(3.1, 0.25).is_err());
    }
}
