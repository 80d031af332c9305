//! White noise on a planar mesh, the moving-average field f = q ⋆ W, box
//! partitions and excursion masks.
//!
//! Cell (i, j) is the square of side ε centred at (iε, jε); its weight is the
//! white-noise integral over it. The field is evaluated at the same points, so
//! "pixel" and "cell" share indices.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::kernel::{whole_steps, Kernel};
use crate::error::{bail, Result};
use crate::rng::{lane, ReplicaStream};

/// Index rectangle x0..=x1 × y0..=y1, row-major with x most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Window {
    pub x0: i64,
    pub x1: i64,
    pub y0: i64,
    pub y1: i64,
}

impl Window {
    pub fn new(x0: i64, x1: i64, y0: i64, y1: i64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    /// [−a, a] × [−b, b].
    pub fn centered(a: i64, b: i64) -> Self {
        Self::new(-a, a, -b, b)
    }

    pub fn nx(&self) -> usize {
        (self.x1 - self.x0 + 1).max(0) as usize
    }

    pub fn ny(&self) -> usize {
        (self.y1 - self.y0 + 1).max(0) as usize
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        self.x0 <= x && x <= self.x1 && self.y0 <= y && y <= self.y1
    }

    pub fn contains_window(&self, o: &Window) -> bool {
        self.x0 <= o.x0 && o.x1 <= self.x1 && self.y0 <= o.y0 && o.y1 <= self.y1
    }

    #[inline]
    pub fn index(&self, x: i64, y: i64) -> usize {
        debug_assert!(self.contains(x, y));
        (x - self.x0) as usize * self.ny() + (y - self.y0) as usize
    }

    #[inline]
    pub fn point(&self, idx: usize) -> (i64, i64) {
        let ny = self.ny();
        (self.x0 + (idx / ny) as i64, self.y0 + (idx % ny) as i64)
    }

    pub fn shrink(&self, m: i64) -> Self {
        Self::new(self.x0 + m, self.x1 - m, self.y0 + m, self.y1 - m)
    }

    pub fn grow(&self, m: i64) -> Self {
        self.shrink(-m)
    }

    pub fn points(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (self.x0..=self.x1).flat_map(move |x| (self.y0..=self.y1).map(move |y| (x, y)))
    }
}

/// White-noise cell weights, i.i.d. N(0, ε²).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseGrid {
    pub region: Window,
    pub mesh: f64,
    pub weights: Vec<f64>,
}

impl NoiseGrid {
    pub fn zeros(region: Window, mesh: f64) -> Self {
        Self { region, mesh, weights: vec![0.0; region.len()] }
    }

    #[inline]
    pub fn at(&self, x: i64, y: i64) -> f64 {
        self.weights[self.region.index(x, y)]
    }
}

/// Cell weights drawn in index order from `rng`.
pub fn white_noise_grid<R: Rng>(region: Window, mesh: f64, rng: &mut R) -> Result<NoiseGrid> {
    if !(mesh > 0.0) {
        bail!(InvalidParameter, "mesh must be positive, got {mesh}");
    }
    let weights = (0..region.len()).map(|_| mesh * rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(NoiseGrid { region, mesh, weights })
}

/// Field values on a window of points.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub window: Window,
    pub mesh: f64,
    pub values: Vec<f64>,
}

impl FieldSample {
    #[inline]
    pub fn at(&self, x: i64, y: i64) -> f64 {
        self.values[self.window.index(x, y)]
    }
}

/// Direct evaluation of f(x) = Σ_c q(x − c) W_c on the points whose whole
/// kernel support lies in the noise region.
pub fn moving_average_sample(kernel: &Kernel, noise: &NoiseGrid) -> Result<FieldSample> {
    if (kernel.mesh() - noise.mesh).abs() > 1e-12 {
        bail!(InvalidParameter, "kernel mesh {} differs from noise mesh {}", kernel.mesh(), noise.mesh);
    }
    let m = kernel.half_width() as i64;
    let window = noise.region.shrink(m);
    if window.x1 < window.x0 || window.y1 < window.y0 {
        bail!(InvalidGeometry, "noise region smaller than the kernel support");
    }
    let mut values = vec![0.0; window.len()];
    for (idx, (x, y)) in window.points().enumerate() {
        let mut s = 0.0;
        for i in -m..=m {
            for j in -m..=m {
                s += kernel.at(i, j) * noise.at(x - i, y - j);
            }
        }
        values[idx] = s;
    }
    Ok(FieldSample { window, mesh: noise.mesh, values })
}

/// FFT convolution for a fixed kernel and noise-region shape.
pub struct Convolver {
    nx: usize,
    ny: usize,
    half: i64,
    spectrum: Vec<Complex<f64>>,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
    mesh: f64,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Convolver({}x{}, m={})", self.nx, self.ny, self.half)
    }
}

impl Convolver {
    pub fn new(kernel: &Kernel, nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let fx = planner.plan_fft_forward(nx);
        let fy = planner.plan_fft_forward(ny);
        let ix = planner.plan_fft_inverse(nx);
        let iy = planner.plan_fft_inverse(ny);
        let m = kernel.half_width() as i64;
        let mut buf = vec![Complex::new(0.0, 0.0); nx * ny];
        for i in -m..=m {
            for j in -m..=m {
                let a = i.rem_euclid(nx as i64) as usize;
                let b = j.rem_euclid(ny as i64) as usize;
                buf[a * ny + b].re += kernel.at(i, j);
            }
        }
        let mut c = Self { nx, ny, half: m, spectrum: Vec::new(), fx, fy, ix, iy, mesh: kernel.mesh() };
        c.transform(&mut buf, false);
        c.spectrum = buf;
        c
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let (nx, ny) = (self.nx, self.ny);
        let (fx, fy) = if inverse { (&self.ix, &self.iy) } else { (&self.fx, &self.fy) };
        fy.process(buf);
        let mut col = vec![Complex::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                col[i] = buf[i * ny + j];
            }
            fx.process(&mut col);
            for i in 0..nx {
                buf[i * ny + j] = col[i];
            }
        }
    }

    /// Same values as [`moving_average_sample`] up to round-off.
    pub fn apply(&self, noise: &NoiseGrid) -> Result<FieldSample> {
        if noise.region.nx() != self.nx || noise.region.ny() != self.ny {
            bail!(InvalidParameter, "noise region shape differs from the convolver's");
        }
        if (noise.mesh - self.mesh).abs() > 1e-12 {
            bail!(InvalidParameter, "mesh mismatch");
        }
        let mut buf: Vec<Complex<f64>> = noise.weights.iter().map(|&w| Complex::new(w, 0.0)).collect();
        self.transform(&mut buf, false);
        for (b, k) in buf.iter_mut().zip(&self.spectrum) {
            *b *= k;
        }
        self.transform(&mut buf, true);
        let norm = 1.0 / (self.nx * self.ny) as f64;
        let window = noise.region.shrink(self.half);
        let mut values = Vec::with_capacity(window.len());
        for (x, y) in window.points() {
            let a = (x - noise.region.x0) as usize;
            let b = (y - noise.region.y0) as usize;
            values.push(buf[a * self.ny + b].re * norm);
        }
        Ok(FieldSample { window, mesh: noise.mesh, values })
    }
}

/// One bit per point: f + ℓ ≥ 0.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMask {
    pub window: Window,
    pub mesh: f64,
    pub bits: FixedBitSet,
}

impl CellMask {
    #[inline]
    pub fn get(&self, x: i64, y: i64) -> bool {
        self.bits.contains(self.window.index(x, y))
    }

    pub fn from_fn(window: Window, mesh: f64, f: impl Fn(i64, i64) -> bool) -> Self {
        let mut bits = FixedBitSet::with_capacity(window.len());
        for (i, (x, y)) in window.points().enumerate() {
            bits.set(i, f(x, y));
        }
        Self { window, mesh, bits }
    }

    pub fn set_fraction(&self) -> f64 {
        self.bits.count_ones(..) as f64 / self.window.len().max(1) as f64
    }
}

pub fn excursion_set(field: &FieldSample, level: f64) -> CellMask {
    let mut bits = FixedBitSet::with_capacity(field.values.len());
    for (i, v) in field.values.iter().enumerate() {
        bits.set(i, v + level >= 0.0);
    }
    CellMask { window: field.window, mesh: field.mesh, bits }
}

/// Tiling by boxes [a·s, (a+1)·s) × [b·s, (b+1)·s); box (a, b) holds cells
/// with index in [aL, (a+1)L) × [bL, (b+1)L) where L = s/ε. Only boxes with
/// a in a0..=a1 and b in b0..=b1 are kept; ids are row-major in (a, b).
#[derive(Clone, Debug, PartialEq)]
pub struct BoxPartition {
    pub scale: f64,
    pub cells: i64,
    pub boxes: Window,
}

impl BoxPartition {
    pub fn new(scale: f64, mesh: f64, boxes: Window) -> Result<Self> {
        let cells = whole_steps(scale, mesh)?;
        if cells <= 0 {
            bail!(InvalidParameter, "box scale must be positive");
        }
        Ok(Self { scale, cells, boxes })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Box coordinates (a, b) of cell (x, y).
    #[inline]
    pub fn box_of_cell(&self, x: i64, y: i64) -> (i64, i64) {
        (x.div_euclid(self.cells), y.div_euclid(self.cells))
    }

    #[inline]
    pub fn id(&self, a: i64, b: i64) -> Option<usize> {
        self.boxes.contains(a, b).then(|| self.boxes.index(a, b))
    }

    #[inline]
    pub fn id_of_cell(&self, x: i64, y: i64) -> Option<usize> {
        let (a, b) = self.box_of_cell(x, y);
        self.id(a, b)
    }

    pub fn coords(&self, id: usize) -> (i64, i64) {
        self.boxes.point(id)
    }

    /// Cells of box `id`.
    pub fn cell_window(&self, id: usize) -> Window {
        let (a, b) = self.coords(id);
        let l = self.cells;
        Window::new(a * l, a * l + l - 1, b * l, b * l + l - 1)
    }

    /// Boxes whose closures meet that of `id`, in id order.
    pub fn neighbors(&self, id: usize) -> Vec<usize> {
        let (a, b) = self.coords(id);
        let mut out = Vec::with_capacity(8);
        for da in -1..=1 {
            for db in -1..=1 {
                if (da, db) != (0, 0) {
                    if let Some(n) = self.id(a + da, b + db) {
                        out.push(n);
                    }
                }
            }
        }
        out
    }

    /// Union of all cells.
    pub fn cell_region(&self) -> Window {
        let l = self.cells;
        Window::new(self.boxes.x0 * l, self.boxes.x1 * l + l - 1, self.boxes.y0 * l, self.boxes.y1 * l + l - 1)
    }

    /// Boxes containing at least one point of `w`.
    pub fn boxes_meeting(&self, w: &Window) -> Vec<usize> {
        let (a0, b0) = self.box_of_cell(w.x0, w.y0);
        let (a1, b1) = self.box_of_cell(w.x1, w.y1);
        let mut out = Vec::new();
        for a in a0..=a1 {
            for b in b0..=b1 {
                if let Some(id) = self.id(a, b) {
                    out.push(id);
                }
            }
        }
        out
    }
}

/// Redraw the weights of `boxes` from `rng` (boxes in the given order, cells
/// in index order); all other weights are kept bit for bit.
pub fn resample_boxes<R: Rng>(noise: &NoiseGrid, partition: &BoxPartition, boxes: &[usize], rng: &mut R) -> Result<NoiseGrid> {
    let mut out = noise.clone();
    for &id in boxes {
        if id >= partition.len() {
            bail!(InvalidQuery, "box {id} not in the partition");
        }
        let w = partition.cell_window(id);
        if !noise.region.contains_window(&w) {
            bail!(InvalidQuery, "box {id} outside the noise region");
        }
        for (x, y) in w.points() {
            let k = noise.region.index(x, y);
            out.weights[k] = noise.mesh * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(out)
}

/// Field of the noise in one box, f_S = q ⋆ W|_S, on `window`; computed
/// directly and exactly zero at points farther than the kernel support.
pub fn box_component(kernel: &Kernel, noise: &NoiseGrid, partition: &BoxPartition, id: usize, window: Window) -> Result<FieldSample> {
    let cells = partition.cell_window(id);
    if !noise.region.contains_window(&cells) {
        bail!(InvalidQuery, "box {id} outside the noise region");
    }
    let m = kernel.half_width() as i64;
    let mut values = vec![0.0; window.len()];
    let reach = cells.grow(m);
    for (idx, (x, y)) in window.points().enumerate() {
        if !reach.contains(x, y) {
            continue;
        }
        let mut s = 0.0;
        for cx in (x - m).max(cells.x0)..=(x + m).min(cells.x1) {
            for cy in (y - m).max(cells.y0)..=(y + m).min(cells.y1) {
                s += kernel.at(x - cx, y - cy) * noise.at(cx, cy);
            }
        }
        values[idx] = s;
    }
    Ok(FieldSample { window, mesh: noise.mesh, values })
}

/// Geometry shared by the samples of one experiment: a finite-range kernel,
/// a box partition of scale s ≥ r, and the window where events are read.
/// The partition covers the window plus one ring of boxes, so every point
/// of the window sees its full kernel support.
#[derive(Clone, Debug)]
pub struct FieldWorld {
    inner: Arc<WorldInner>,
}

#[derive(Debug)]
struct WorldInner {
    kernel: Kernel,
    window: Window,
    partition: BoxPartition,
    convolver: Convolver,
}

impl FieldWorld {
    /// `window` in mesh points; `scale` = s in length units.
    pub fn new(kernel: Kernel, scale: f64, window: Window) -> Result<Self> {
        let partition = BoxPartition::new(scale, kernel.mesh(), Window::new(0, -1, 0, -1))?;
        if (partition.cells as usize) < kernel.half_width() {
            bail!(InvalidGeometry, "box scale {scale} is smaller than the kernel support radius {}", kernel.support_radius());
        }
        let (a0, b0) = partition.box_of_cell(window.x0, window.y0);
        let (a1, b1) = partition.box_of_cell(window.x1, window.y1);
        let partition = BoxPartition { boxes: Window::new(a0 - 1, a1 + 1, b0 - 1, b1 + 1), ..partition };
        let region = partition.cell_region();
        let convolver = Convolver::new(&kernel, region.nx(), region.ny());
        Ok(Self { inner: Arc::new(WorldInner { kernel, window, partition, convolver }) })
    }

    /// Window [−x, x] × [−y, y] in length units.
    pub fn centered(kernel: Kernel, scale: f64, x: f64, y: f64) -> Result<Self> {
        let mesh = kernel.mesh();
        let w = Window::centered(whole_steps(x, mesh)?, (y / mesh - 1e-9).ceil() as i64);
        Self::new(kernel, scale, w)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.inner.kernel
    }

    pub fn mesh(&self) -> f64 {
        self.inner.kernel.mesh()
    }

    pub fn window(&self) -> Window {
        self.inner.window
    }

    pub fn partition(&self) -> &BoxPartition {
        &self.inner.partition
    }

    pub fn noise_region(&self) -> Window {
        self.inner.partition.cell_region()
    }

    pub fn sample_noise(&self, stream: &ReplicaStream) -> Result<NoiseGrid> {
        white_noise_grid(self.noise_region(), self.mesh(), &mut stream.rng(lane::NOISE))
    }

    /// f on the noise region shrunk by the kernel support (contains the window).
    pub fn field(&self, noise: &NoiseGrid) -> Result<FieldSample> {
        if noise.region != self.noise_region() {
            bail!(InvalidParameter, "noise region does not match the world");
        }
        self.inner.convolver.apply(noise)
    }

    pub fn mask(&self, noise: &NoiseGrid, level: f64) -> Result<CellMask> {
        Ok(excursion_set(&self.field(noise)?, level))
    }

    /// f_S for box `id` on the same points as [`FieldWorld::field`].
    pub fn box_component(&self, noise: &NoiseGrid, id: usize) -> Result<FieldSample> {
        let w = self.noise_region().shrink(self.kernel().half_width() as i64);
        box_component(self.kernel(), noise, self.partition(), id, w)
    }

    /// Boxes whose noise influences some point of `w`.
    pub fn boxes_influencing(&self, w: &Window) -> Vec<usize> {
        self.partition().boxes_meeting(&w.grow(self.kernel().half_width() as i64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bf(mesh: f64, r: f64) -> Kernel {
        Kernel::bargmann_fock(2, mesh, 4.0).unwrap().truncate(r).unwrap()
    }

    #[test]
    fn noise_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = white_noise_grid(Window::centered(499, 499), 0.5, &mut rng).unwrap();
        let n = g.weights.len() as f64;
        let mean = g.weights.iter().sum::<f64>() / n;
        let var = g.weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (0.25 / n).sqrt());
        assert!((var / 0.25 - 1.0).abs() < 0.02);
        assert!(white_noise_grid(Window::centered(1, 1), 0.0, &mut rng).is_err());
        let a = white_noise_grid(Window::centered(5, 5), 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = white_noise_grid(Window::centered(5, 5), 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fft_matches_direct() {
        let q = bf(0.25, 2.0);
        let region = Window::new(-20, 17, -11, 25);
        let noise = white_noise_grid(region, 0.25, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let direct = moving_average_sample(&q, &noise).unwrap();
        let fast = Convolver::new(&q, region.nx(), region.ny()).apply(&noise).unwrap();
        assert_eq!(direct.window, fast.window);
        for (a, b) in direct.values.iter().zip(&fast.values) {
            assert!((a - b).abs() < 1e-10);
        }
        let zero = moving_average_sample(&q, &NoiseGrid::zeros(region, 0.25)).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let other = bf(0.5, 2.0);
        assert!(moving_average_sample(&other, &noise).is_err());
    }

    #[test]
    fn box_components_sum_to_field() {
        let world = FieldWorld::centered(bf(0.25, 2.0), 2.0, 4.0, 4.0).unwrap();
        let noise = world.sample_noise(&ReplicaStream::new(4, 0)).unwrap();
        let f = world.field(&noise).unwrap();
        let mut sum = vec![0.0; f.values.len()];
        for id in 0..world.partition().len() {
            let c = world.box_component(&noise, id).unwrap();
            for (s, v) in sum.iter_mut().zip(&c.values) {
                *s += v;
            }
            // locality
            let reach = world.partition().cell_window(id).grow(8);
            for (k, (x, y)) in c.window.points().enumerate() {
                if !reach.contains(x, y) {
                    assert_eq!(c.values[k], 0.0);
                }
            }
        }
        for (a, b) in sum.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn resampling_is_local() {
        let world = FieldWorld::centered(bf(0.25, 2.0), 2.0, 4.0, 4.0).unwrap();
        let p = world.partition();
        let noise = world.sample_noise(&ReplicaStream::new(4, 0)).unwrap();
        let same = resample_boxes(&noise, p, &[], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(same, noise);
        let id = p.id(0, 0).unwrap();
        let re = resample_boxes(&noise, p, &[id], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cells = p.cell_window(id);
        for (k, (x, y)) in noise.region.points().enumerate() {
            if !cells.contains(x, y) {
                assert_eq!(re.weights[k].to_bits(), noise.weights[k].to_bits());
            }
        }
        let (f0, f1) = (world.field(&noise).unwrap(), world.field(&re).unwrap());
        let reach = cells.grow(8);
        for (k, (x, y)) in f0.window.points().enumerate() {
            if !reach.contains(x, y) {
                assert!((f0.values[k] - f1.values[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mask_monotone_in_level() {
        let world = FieldWorld::centered(bf(0.25, 2.0), 2.0, 3.0, 3.0).unwrap();
        let noise = world.sample_noise(&ReplicaStream::new(1, 1)).unwrap();
        let lo = world.mask(&noise, -0.3).unwrap();
        let hi = world.mask(&noise, 0.2).unwrap();
        assert!(lo.bits.is_subset(&hi.bits));
        assert_eq!(world.mask(&noise, 1e9).unwrap().set_fraction(), 1.0);
    }

    #[test]
    fn world_rejects_small_boxes() {
        assert!(FieldWorld::centered(bf(0.25, 3.0), 2.0, 4.0, 4.0).is_err());
    }
}
