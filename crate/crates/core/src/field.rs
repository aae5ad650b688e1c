//! Uniform periodic box [-L, L)³, complex scalar and vector fields, and
//! spectral calculus on them.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{signed_freq, Fft3};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    n: usize,
    half_length: f64,
    spacing: f64,
}

impl Grid3 {
    /// Builds the grid. The stored half length is recomputed from the
    /// spacing so that `spacing * n == 2 * half_length` holds bitwise.
    pub fn new(n: usize, half_length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n must be even and >= 8, got {n}")));
        }
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::InvalidGrid(format!("L must be positive, got {half_length}")));
        }
        let spacing = 2.0 * half_length / n as f64;
        let half_length = spacing * n as f64 / 2.0;
        Ok(Grid3 { n, half_length, spacing })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn half_length(&self) -> f64 {
        self.half_length
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.spacing
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let (i, j, k) = self.unindex(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Angular wavenumber of FFT bin `m`.
    #[inline]
    pub fn wavenumber(&self, m: usize) -> f64 {
        std::f64::consts::PI * signed_freq(m, self.n) as f64 / self.half_length
    }

    /// Wavenumber for first derivatives: the Nyquist bin is zeroed.
    #[inline]
    pub fn derivative_wavenumber(&self, m: usize) -> f64 {
        if m == self.n / 2 {
            0.0
        } else {
            self.wavenumber(m)
        }
    }

    pub(crate) fn same(&self, other: &Grid3) -> bool {
        self == other
    }
}

pub fn make_grid(n: usize, half_length: f64) -> Result<Grid3> {
    Grid3::new(n, half_length)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid3,
    values: Vec<Complex64>,
    real: bool,
}

impl ScalarField {
    pub fn zeros(grid: Grid3) -> Self {
        ScalarField { grid, values: vec![Complex64::default(); grid.len()], real: true }
    }

    pub fn constant(grid: Grid3, c: f64) -> Self {
        ScalarField { grid, values: vec![Complex64::new(c, 0.0); grid.len()], real: true }
    }

    pub fn from_fn<F: Fn(Point) -> Complex64>(grid: Grid3, f: F) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        ScalarField { grid, values, real: false }
    }

    pub fn from_real_fn<F: Fn(Point) -> f64>(grid: Grid3, f: F) -> Self {
        let values = (0..grid.len()).map(|idx| Complex64::new(f(grid.point(idx)), 0.0)).collect();
        ScalarField { grid, values, real: true }
    }

    pub fn from_values(grid: Grid3, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ScalarField { grid, values, real: false })
    }

    pub fn from_real_values(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let values = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        Ok(ScalarField { grid, values, real: true })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Mutable access drops the real flag; call [`ScalarField::make_real`]
    /// to restore it.
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        self.real = false;
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Discard imaginary parts and flag the field real.
    pub fn make_real(mut self) -> Self {
        for v in &mut self.values {
            v.im = 0.0;
        }
        self.real = true;
        self
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn abs(&self) -> ScalarField {
        let values = self.values.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect();
        ScalarField { grid: self.grid, values, real: true }
    }

    pub fn density(&self) -> ScalarField {
        let values = self.values.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect();
        ScalarField { grid: self.grid, values, real: true }
    }

    pub fn scale(&self, c: Complex64) -> ScalarField {
        let values = self.values.iter().map(|v| v * c).collect();
        ScalarField { grid: self.grid, values, real: self.real && c.im == 0.0 }
    }

    pub fn scale_real(&self, c: f64) -> ScalarField {
        let values = self.values.iter().map(|v| v * c).collect();
        ScalarField { grid: self.grid, values, real: self.real }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: Complex64, other: &ScalarField) -> Result<ScalarField> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
            real: self.real && other.real && c.im == 0.0,
        })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(ScalarField { grid: self.grid, values, real: self.real && other.real })
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> ScalarField {
        let values = self.values.iter().map(|v| f(*v)).collect();
        ScalarField { grid: self.grid, values, real: false }
    }

    /// L² inner product ⟨self, other⟩ = ∫ conj(self)·other.
    pub fn inner(&self, other: &ScalarField) -> Result<Complex64> {
        self.check(other)?;
        let prod: Vec<Complex64> =
            self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).collect();
        Ok(pairwise_sum(&prod) * self.grid.cell_volume())
    }

    pub fn norm_l2_sq(&self) -> f64 {
        let d: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        pairwise_sum_real(&d) * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_l2_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.check(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    pub(crate) fn check(&self, other: &ScalarField) -> Result<()> {
        if self.grid.same(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Largest |u| on the outer faces of the box relative to max |u|.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.grid.n;
        let peak = self.max_abs();
        if peak == 0.0 {
            return 0.0;
        }
        let mut b: f64 = 0.0;
        for idx in 0..self.grid.len() {
            let (i, j, k) = self.grid.unindex(idx);
            if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                b = b.max(self.values[idx].norm());
            }
        }
        b / peak
    }

    /// Trigonometric interpolation at an arbitrary point. O(n³) per call.
    pub fn interpolate(&self, x: Point) -> Complex64 {
        let spec = spectrum(self);
        let g = self.grid;
        let n = g.n;
        let phase = |m: usize, xc: f64| -> Complex64 {
            let k = g.wavenumber(m);
            let t = k * (xc + g.half_length);
            if m == n / 2 {
                Complex64::new(t.cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, t)
            }
        };
        let px: Vec<Complex64> = (0..n).map(|m| phase(m, x[0])).collect();
        let py: Vec<Complex64> = (0..n).map(|m| phase(m, x[1])).collect();
        let pz: Vec<Complex64> = (0..n).map(|m| phase(m, x[2])).collect();
        let mut acc = Complex64::default();
        for a in 0..n {
            for b in 0..n {
                let pab = px[a] * py[b];
                let row = &spec[(a * n + b) * n..(a * n + b) * n + n];
                let mut s = Complex64::default();
                for (c, v) in row.iter().enumerate() {
                    s += v * pz[c];
                }
                acc += pab * s;
            }
        }
        let r = acc / g.len() as f64;
        if self.real {
            Complex64::new(r.re, 0.0)
        } else {
            r
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: [ScalarField; 3],
}

impl VectorField {
    pub fn new(components: [ScalarField; 3]) -> Result<Self> {
        let g = components[0].grid;
        if !components.iter().all(|c| c.grid.same(&g)) {
            return Err(Error::GridMismatch);
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: Grid3) -> Self {
        VectorField {
            components: [ScalarField::zeros(grid), ScalarField::zeros(grid), ScalarField::zeros(grid)],
        }
    }

    pub fn from_real_fn<F: Fn(Point) -> [f64; 3]>(grid: Grid3, f: F) -> Self {
        let vals: Vec<[f64; 3]> = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        let comp = |c: usize| ScalarField {
            grid,
            values: vals.iter().map(|v| Complex64::new(v[c], 0.0)).collect(),
            real: true,
        };
        VectorField { components: [comp(0), comp(1), comp(2)] }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.components[0].grid
    }
    pub fn component(&self, c: usize) -> &ScalarField {
        &self.components[c]
    }
    pub fn components(&self) -> &[ScalarField; 3] {
        &self.components
    }
    pub fn into_components(self) -> [ScalarField; 3] {
        self.components
    }

    /// Pointwise Euclidean norm |v(x)| (Hermitian for complex components).
    pub fn pointwise_norm(&self) -> Vec<f64> {
        let [a, b, c] = &self.components;
        a.values
            .iter()
            .zip(&b.values)
            .zip(&c.values)
            .map(|((x, y), z)| (x.norm_sqr() + y.norm_sqr() + z.norm_sqr()).sqrt())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.pointwise_norm().into_iter().fold(0.0, f64::max)
    }
}

/// Pairwise summation with a fixed split, so the result does not depend on
/// thread count.
pub(crate) fn pairwise_sum(v: &[Complex64]) -> Complex64 {
    if v.len() <= 128 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

pub(crate) fn pairwise_sum_real(v: &[f64]) -> f64 {
    if v.len() <= 128 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum_real(&v[..mid]) + pairwise_sum_real(&v[mid..])
    }
}

/// h³ Σ f.
pub fn integrate(f: &ScalarField) -> Complex64 {
    let s = pairwise_sum(&f.values) * f.grid.cell_volume();
    if f.real {
        Complex64::new(s.re, 0.0)
    } else {
        s
    }
}

/// h³ Σ f for a plain array sampled on `grid`.
pub fn integrate_real(grid: &Grid3, f: &[f64]) -> f64 {
    pairwise_sum_real(f) * grid.cell_volume()
}

/// Unnormalized forward DFT of the samples.
pub(crate) fn spectrum(f: &ScalarField) -> Vec<Complex64> {
    let mut data = f.values.clone();
    Fft3::get(f.grid.n).forward(&mut data);
    data
}

/// Apply a diagonal Fourier multiplier `mult(mx, my, mz)` to `f`.
pub(crate) fn apply_multiplier<M>(f: &ScalarField, mult: M) -> Vec<Complex64>
where
    M: Fn(usize, usize, usize) -> Complex64,
{
    let g = f.grid;
    let n = g.n;
    let plan = Fft3::get(n);
    let mut data = f.values.clone();
    plan.forward(&mut data);
    let norm = 1.0 / g.len() as f64;
    for (idx, v) in data.iter_mut().enumerate() {
        let (a, b, c) = g.unindex(idx);
        *v *= mult(a, b, c) * norm;
    }
    plan.inverse(&mut data);
    data
}

/// Spectral partial derivative along `axis`.
pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    let g = f.grid;
    let data = apply_multiplier(f, |a, b, c| {
        let m = [a, b, c][axis];
        Complex64::new(0.0, g.derivative_wavenumber(m))
    });
    let out = ScalarField { grid: g, values: data, real: false };
    if f.real {
        out.make_real()
    } else {
        out
    }
}

/// Spectral gradient: one forward transform, three inverse.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let plan = Fft3::get(g.n);
    let spec = spectrum(f);
    let norm = 1.0 / g.len() as f64;
    let k: Vec<f64> = (0..g.n).map(|m| g.derivative_wavenumber(m) * norm).collect();
    let comp = |axis: usize| {
        let mut d = spec.clone();
        for (idx, v) in d.iter_mut().enumerate() {
            let (a, b, c) = g.unindex(idx);
            let kk = k[[a, b, c][axis]];
            *v = Complex64::new(-v.im * kk, v.re * kk);
        }
        plan.inverse(&mut d);
        let out = ScalarField { grid: g, values: d, real: false };
        if f.real {
            out.make_real()
        } else {
            out
        }
    };
    VectorField { components: [comp(0), comp(1), comp(2)] }
}

/// Laplacian with the Nyquist modes keeping their −k² weight.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let data = apply_multiplier(f, |a, b, c| {
        let k2 = g.wavenumber(a).powi(2) + g.wavenumber(b).powi(2) + g.wavenumber(c).powi(2);
        Complex64::new(-k2, 0.0)
    });
    let out = ScalarField { grid: g, values: data, real: false };
    if f.real {
        out.make_real()
    } else {
        out
    }
}

/// Spectral divergence, the negative adjoint of [`gradient`].
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = *v.grid();
    let plan = Fft3::get(g.n);
    let norm = 1.0 / g.len() as f64;
    let k: Vec<f64> = (0..g.n).map(|m| g.derivative_wavenumber(m) * norm).collect();
    let mut acc = vec![Complex64::default(); g.len()];
    for axis in 0..3 {
        let spec = spectrum(&v.components[axis]);
        for (idx, (a, s)) in acc.iter_mut().zip(spec).enumerate() {
            let (i, j, l) = g.unindex(idx);
            let kk = k[[i, j, l][axis]];
            *a += Complex64::new(-s.im * kk, s.re * kk);
        }
    }
    plan.inverse(&mut acc);
    ScalarField { grid: g, values: acc, real: false }
}

/// Trigonometric interpolation of `f` onto an `n`-point grid over the same
/// box, n ≥ f's size. The Nyquist coefficient of each axis is split evenly
/// between ±n/2, so a real field stays real.
pub fn resample(f: &ScalarField, n: usize) -> Result<ScalarField> {
    let g = f.grid;
    let m = g.n;
    if n < m {
        return Err(Error::InvalidArgument(format!("resample to {n} points would drop modes of a {m}-point grid")));
    }
    let fine = Grid3::new(n, g.half_length)?;
    if n == m {
        return Ok(f.clone());
    }
    let targets: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|a| match a.cmp(&(m / 2)) {
            std::cmp::Ordering::Less => vec![(a, 1.0)],
            std::cmp::Ordering::Greater => vec![(a + n - m, 1.0)],
            std::cmp::Ordering::Equal => vec![(a, 0.5), (n - a, 0.5)],
        })
        .collect();
    let coarse = spectrum(f);
    let scale = (n as f64 / m as f64).powi(3) / fine.len() as f64;
    let mut data = vec![Complex64::default(); fine.len()];
    for (idx, v) in coarse.iter().enumerate() {
        let (a, b, c) = g.unindex(idx);
        for &(ta, wa) in &targets[a] {
            for &(tb, wb) in &targets[b] {
                for &(tc, wc) in &targets[c] {
                    data[fine.index(ta, tb, tc)] += v * (wa * wb * wc * scale);
                }
            }
        }
    }
    Fft3::get(n).inverse(&mut data);
    let out = ScalarField { grid: fine, values: data, real: false };
    Ok(if f.real { out.make_real() } else { out })
}

/// Unitary DFT: Σ |f|² = Σ |F|².
pub fn forward_transform(f: &ScalarField) -> ScalarField {
    let mut data = spectrum(f);
    let s = 1.0 / (f.grid.len() as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= s);
    ScalarField { grid: f.grid, values: data, real: false }
}

pub fn inverse_transform(f: &ScalarField) -> ScalarField {
    let mut data = f.values.clone();
    Fft3::get(f.grid.n).inverse(&mut data);
    let s = 1.0 / (f.grid.len() as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= s);
    ScalarField { grid: f.grid, values: data, real: false }
}

const MAGIC: &[u8; 4] = b"CHQF";
const VERSION: u32 = 1;

/// Header: magic, version u32, n u64, L f64, real flag u32, reserved u32.
pub fn write_field<W: Write>(f: &ScalarField, mut w: W) -> Result<()> {
    let mut header = Vec::with_capacity(32);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&(f.grid.n as u64).to_le_bytes());
    header.extend_from_slice(&f.grid.half_length.to_le_bytes());
    header.extend_from_slice(&(f.real as u32).to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    w.write_all(&header)?;
    let mut body = Vec::with_capacity(16 * f.values.len());
    for v in &f.values {
        body.extend_from_slice(&v.re.to_le_bytes());
        body.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&body)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<ScalarField> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let l = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let real = u32::from_le_bytes(header[24..28].try_into().unwrap()) != 0;
    let grid = Grid3::new(n, l)?;
    let mut body = vec![0u8; 16 * grid.len()];
    r.read_exact(&mut body)?;
    let values = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    let f = ScalarField { grid, values, real };
    if real && f.values.iter().any(|v| v.im != 0.0) {
        return Err(Error::Format("real-flagged field has imaginary parts".into()));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        assert_eq!(make_grid(8, 4.0).unwrap().spacing(), 1.0);
        assert_eq!(make_grid(64, 16.0).unwrap().spacing(), 0.5);
        assert!(make_grid(7, 4.0).is_err());
        assert!(make_grid(6, 4.0).is_err());
        assert!(make_grid(8, 0.0).is_err());
        let g = make_grid(96, 2.45).unwrap();
        assert_eq!(g.spacing() * 96.0, 2.0 * g.half_length());
    }

    #[test]
    fn constant_integral() {
        let g = make_grid(8, 4.0).unwrap();
        assert_eq!(integrate(&ScalarField::constant(g, 1.0)).re, 512.0);
        assert_eq!(integrate(&ScalarField::zeros(g)).re, 0.0);
    }

    #[test]
    fn gaussian_integral() {
        let g = make_grid(64, 8.0).unwrap();
        let f = ScalarField::from_real_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
        let exact = std::f64::consts::PI.powf(1.5);
        assert!((integrate(&f).re - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn sine_derivative() {
        let g = make_grid(16, 3.0).unwrap();
        let l = g.half_length();
        let w = std::f64::consts::PI / l;
        let f = ScalarField::from_real_fn(g, |x| (w * x[0]).sin());
        let d = gradient(&f);
        for idx in 0..g.len() {
            let x = g.point(idx);
            assert!((d.component(0).values()[idx].re - w * (w * x[0]).cos()).abs() < 1e-10);
            assert!(d.component(1).values()[idx].norm() < 1e-10);
        }
    }

    #[test]
    fn gaussian_gradient() {
        let g = make_grid(64, 8.0).unwrap();
        let f = ScalarField::from_real_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
        let d = gradient(&f);
        let mut err: f64 = 0.0;
        for idx in 0..g.len() {
            let x = g.point(idx);
            let e = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp();
            for a in 0..3 {
                err = err.max((d.component(a).values()[idx].re + 2.0 * x[a] * e).abs());
            }
        }
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn delta_spectrum_is_flat() {
        let g = make_grid(8, 1.0).unwrap();
        let mut v = vec![Complex64::default(); g.len()];
        v[g.index(4, 4, 4)] = Complex64::new(1.0, 0.0);
        let f = forward_transform(&ScalarField::from_values(g, v).unwrap());
        let m0 = f.values()[0].norm();
        assert!(f.values().iter().all(|c| (c.norm() - m0).abs() < 1e-14));
    }

    #[test]
    fn pure_mode_single_coefficient() {
        let g = make_grid(8, 1.0).unwrap();
        let k = [g.wavenumber(1), g.wavenumber(2), g.wavenumber(7)];
        let f = ScalarField::from_fn(g, |x| {
            Complex64::from_polar(1.0, k[0] * (x[0] + 1.0) + k[1] * (x[1] + 1.0) + k[2] * (x[2] + 1.0))
        });
        let s = forward_transform(&f);
        let big: Vec<usize> = (0..g.len()).filter(|&i| s.values()[i].norm() > 1e-9).collect();
        assert_eq!(big, vec![g.index(1, 2, 7)]);
    }

    #[test]
    fn serialization_round_trip() {
        let g = make_grid(8, 2.5).unwrap();
        let f = ScalarField::from_fn(g, |x| Complex64::new(x[0], x[1] * x[2]));
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 16 * 512);
        assert_eq!(read_field(&buf[..]).unwrap(), f);
        buf[0] = b'X';
        assert!(read_field(&buf[..]).is_err());
    }

    #[test]
    fn interpolation_reproduces_nodes_and_modes() {
        let g = make_grid(8, 2.0).unwrap();
        let w = std::f64::consts::PI / 2.0;
        let f = ScalarField::from_real_fn(g, |x| (w * x[0]).cos() * (2.0 * w * x[2]).sin() + 0.5);
        let p = [0.3, -0.7, 0.41];
        let exact = (w * p[0]).cos() * (2.0 * w * p[2]).sin() + 0.5;
        assert!((f.interpolate(p).re - exact).abs() < 1e-12);
        let node = g.point(123);
        assert!((f.interpolate(node) - f.values()[123]).norm() < 1e-12);
    }

    #[test]
    fn resample_interpolates_band_limited_fields() {
        let g = Grid3::new(12, 2.0).unwrap();
        let k = std::f64::consts::PI / 2.0;
        let f = |x: Point| Complex64::new((k * x[0]).cos() * (2.0 * k * x[1]).sin(), (3.0 * k * x[2]).cos());
        let u = ScalarField::from_fn(g, f);
        let v = resample(&u, 20).unwrap();
        assert_eq!(v.grid().n(), 20);
        for idx in 0..v.grid().len() {
            assert!((v.values()[idx] - f(v.grid().point(idx))).norm() < 1e-12);
        }
        // Nyquist along x: cos(π(x+L)/h) is the alternating sign pattern, and
        // its interpolant is the real cosine.
        let h = g.spacing();
        let nyq = ScalarField::from_real_fn(g, |x| (std::f64::consts::PI * (x[0] + 2.0) / h).cos());
        let w = resample(&nyq, 16).unwrap();
        assert!(w.is_real());
        for idx in 0..w.grid().len() {
            let x = w.grid().point(idx);
            assert!((w.values()[idx].re - (std::f64::consts::PI * (x[0] + 2.0) / h).cos()).abs() < 1e-12);
        }
        assert!(resample(&u, 8).is_err());
    }
}
