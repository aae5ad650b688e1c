//! Free-space Coulomb convolution 1/|x| ∗ ρ and the Hartree energy D(u).
//!
//! The box is zero-padded to (2n)³ so no periodic images reach the
//! physical box. The kernel is split as erf(αr)/r + erfc(αr)/r: the smooth
//! long-range part is sampled on the padded grid and transformed, the
//! short-range part enters as its exact Fourier multiplier
//! 4π(1 − e^{−k²/4α²})/k². Both pieces are spectrally accurate, so no
//! origin-cell regularization is needed.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftDirection};

use crate::error::{Error, Result};
use crate::fft::{plan_1d, transpose};
use crate::field::{integrate_real, pairwise_sum_real, Grid3, ScalarField};
use crate::par;

/// Sharp Hardy–Littlewood–Sobolev constant for D(u) ≤ C‖u‖⁴_{12/5}:
/// (4/3)(√π/4)^{−2/3}.
pub fn sharp_hls_constant() -> f64 {
    (4.0 / 3.0) * (PI.sqrt() / 4.0).powf(-2.0 / 3.0)
}

#[derive(Clone)]
pub struct CoulombKernel {
    grid: Grid3,
    alpha: f64,
    hls_constant: f64,
    // Multiplier folded to (n+1)³ by mirror symmetry, 1/(2n)³ included.
    table: Arc<Vec<f64>>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CoulombKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoulombKernel")
            .field("grid", &self.grid)
            .field("alpha", &self.alpha)
            .field("hls_constant", &self.hls_constant)
            .finish()
    }
}

fn erf(x: f64) -> f64 {
    1.0 - erfc(x)
}

/// Complementary error function, accurate to about 1e-15 relative.
pub(crate) fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        // Maclaurin series of erf.
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x2 / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() <= 1e-17 * sum.abs() || k > 200.0 {
                break;
            }
        }
        return 1.0 - 2.0 / PI.sqrt() * sum;
    }
    // Continued fraction x + (1/2)/(x + 1/(x + (3/2)/(x + ...))), Lentz.
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for i in 1..500 {
        let a = i as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

impl CoulombKernel {
    pub fn new(grid: Grid3) -> Self {
        Self::with_hls_constant(grid, sharp_hls_constant())
    }

    pub fn with_hls_constant(grid: Grid3, hls_constant: f64) -> Self {
        let n = grid.n();
        let m = 2 * n;
        let h = grid.spacing();
        let alpha = (0.5 / h).max(2.5 / grid.half_length());
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(m);
        let c2r = planner.plan_fft_inverse(m);
        let table = Arc::new(build_table(n, h, alpha, &r2c));
        CoulombKernel {
            grid,
            alpha,
            hls_constant,
            table,
            r2c,
            c2r,
            fwd: plan_1d(m, FftDirection::Forward),
            inv: plan_1d(m, FftDirection::Inverse),
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }
    pub fn splitting(&self) -> f64 {
        self.alpha
    }
    pub fn hls_constant(&self) -> f64 {
        self.hls_constant
    }

    /// Folded multiplier value at padded frequency indices (|kx|, |ky|, |kz|).
    pub fn multiplier(&self, a: usize, b: usize, c: usize) -> f64 {
        let n1 = self.grid.n() + 1;
        let m3 = (2 * self.grid.n()).pow(3) as f64;
        self.table[(a * n1 + b) * n1 + c] * m3
    }

    pub fn min_multiplier(&self) -> f64 {
        let m3 = (2 * self.grid.n()).pow(3) as f64;
        self.table.iter().fold(f64::INFINITY, |a, &b| a.min(b)) * m3
    }

    /// U = 1/|x| ∗ ρ on the grid nodes.
    pub(crate) fn convolve(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let m = 2 * n;
        let nz = n + 1;
        let plane_len = nz * m;
        let zero = Complex64::default();
        let mut s = vec![zero; n * plane_len];

        // z by real FFT, then y; planes stored as [kz][y].
        par::for_each_chunk(&mut s, plane_len, |x, plane| {
            let mut line = self.r2c.make_input_vec();
            let mut out = self.r2c.make_output_vec();
            let mut scratch = self.r2c.make_scratch_vec();
            let mut tmp = vec![zero; m * nz];
            for y in 0..n {
                line[..n].copy_from_slice(&rho[(x * n + y) * n..(x * n + y) * n + n]);
                line[n..].iter_mut().for_each(|v| *v = 0.0);
                self.r2c.process_with_scratch(&mut line, &mut out, &mut scratch).unwrap();
                tmp[y * nz..(y + 1) * nz].copy_from_slice(&out);
            }
            transpose(&tmp, plane, m, nz);
            let mut sc = vec![zero; self.fwd.get_inplace_scratch_len()];
            self.fwd.process_with_scratch(plane, &mut sc);
        });

        // x forward, multiply, x inverse, one kz slab at a time.
        let mut buf = vec![zero; m * m];
        let mut sc = vec![zero; self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];
        let fold = |a: usize| if a <= n { a } else { m - a };
        for kz in 0..nz {
            buf.iter_mut().for_each(|v| *v = zero);
            for x in 0..n {
                let row = &s[x * plane_len + kz * m..x * plane_len + kz * m + m];
                for (y, v) in row.iter().enumerate() {
                    buf[y * m + x] = *v;
                }
            }
            self.fwd.process_with_scratch(&mut buf, &mut sc);
            for y in 0..m {
                let fy = fold(y);
                for a in 0..m {
                    buf[y * m + a] *= self.table[(fold(a) * nz + fy) * nz + kz];
                }
            }
            self.inv.process_with_scratch(&mut buf, &mut sc);
            for x in 0..n {
                let row = &mut s[x * plane_len + kz * m..x * plane_len + kz * m + m];
                for (y, v) in row.iter_mut().enumerate() {
                    *v = buf[y * m + x];
                }
            }
        }

        // y inverse, then z by real inverse FFT.
        let mut out = vec![0.0; n * n * n];
        par::for_each_chunk(&mut out, n * n, |x, oplane| {
            let mut local = s[x * plane_len..(x + 1) * plane_len].to_vec();
            let mut sc = vec![zero; self.inv.get_inplace_scratch_len()];
            self.inv.process_with_scratch(&mut local, &mut sc);
            let mut tmp = vec![zero; m * nz];
            transpose(&local, &mut tmp, nz, m);
            let mut spec = self.c2r.make_input_vec();
            let mut real = self.c2r.make_output_vec();
            let mut scratch = self.c2r.make_scratch_vec();
            for y in 0..n {
                spec.copy_from_slice(&tmp[y * nz..(y + 1) * nz]);
                spec[0].im = 0.0;
                spec[n].im = 0.0;
                self.c2r.process_with_scratch(&mut spec, &mut real, &mut scratch).unwrap();
                oplane[y * n..(y + 1) * n].copy_from_slice(&real[..n]);
            }
        });
        out
    }
}

fn build_table(n: usize, h: f64, alpha: f64, r2c: &Arc<dyn RealToComplex<f64>>) -> Vec<f64> {
    let m = 2 * n;
    let n1 = n + 1;
    let h3 = h * h * h;
    let mut t = vec![0.0; n1 * n1 * n1];
    for a in 0..n1 {
        for b in 0..n1 {
            for c in 0..n1 {
                let r = h * ((a * a + b * b + c * c) as f64).sqrt();
                t[(a * n1 + b) * n1 + c] = if r == 0.0 {
                    h3 * 2.0 * alpha / PI.sqrt()
                } else {
                    h3 * erf(alpha * r) / r
                };
            }
        }
    }
    // Even extension along each axis turns the padded DFT into a real
    // transform of length 2n on the folded data.
    let mut line = r2c.make_input_vec();
    let mut spec = r2c.make_output_vec();
    let mut dct = |t: &mut Vec<f64>, stride: usize, starts: &mut dyn Iterator<Item = usize>| {
        for s0 in starts {
            for i in 0..m {
                let f = if i <= n { i } else { m - i };
                line[i] = t[s0 + f * stride];
            }
            r2c.process(&mut line, &mut spec).unwrap();
            for (f, v) in spec.iter().enumerate() {
                t[s0 + f * stride] = v.re;
            }
        }
    };
    dct(&mut t, 1, &mut (0..n1 * n1).map(|p| p * n1));
    dct(&mut t, n1, &mut (0..n1 * n1).map(|p| (p / n1) * n1 * n1 + p % n1));
    dct(&mut t, n1 * n1, &mut (0..n1 * n1));
    let dk = PI / (n as f64 * h);
    let scale = 1.0 / (m as f64).powi(3);
    for a in 0..n1 {
        for b in 0..n1 {
            for c in 0..n1 {
                let k2 = dk * dk * ((a * a + b * b + c * c) as f64);
                let short = if k2 == 0.0 {
                    PI / (alpha * alpha)
                } else {
                    4.0 * PI * (-(-k2 / (4.0 * alpha * alpha)).exp_m1()) / k2
                };
                let v = &mut t[(a * n1 + b) * n1 + c];
                *v = (*v + short) * scale;
            }
        }
    }
    t
}

fn check_grid(f: &ScalarField, kernel: &CoulombKernel) -> Result<()> {
    if f.grid() != kernel.grid() {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// U = 1/|x| ∗ ρ for a real density.
pub fn hartree_potential(rho: &ScalarField, kernel: &CoulombKernel) -> Result<ScalarField> {
    check_grid(rho, kernel)?;
    if !rho.is_real() {
        return Err(Error::InvalidArgument("density must be a real field".into()));
    }
    let u = kernel.convolve(&rho.re());
    ScalarField::from_real_values(*rho.grid(), u)
}

/// Hartree potential of |u|² as a plain array.
pub(crate) fn hartree_of(u: &ScalarField, kernel: &CoulombKernel) -> Vec<f64> {
    let rho: Vec<f64> = u.values().iter().map(|v| v.norm_sqr()).collect();
    kernel.convolve(&rho)
}

/// D(u) = ∫ |u|² (1/|x| ∗ |u|²).
pub fn hartree_energy(u: &ScalarField, kernel: &CoulombKernel) -> Result<f64> {
    check_grid(u, kernel)?;
    let phi = hartree_of(u, kernel);
    Ok(hartree_energy_with(u, &phi))
}

pub(crate) fn hartree_energy_with(u: &ScalarField, phi: &[f64]) -> f64 {
    let prod: Vec<f64> = u.values().iter().zip(phi).map(|(v, p)| v.norm_sqr() * p).collect();
    integrate_real(u.grid(), &prod)
}

/// (D(u), C‖u‖⁴_{12/5}).
pub fn hls_check(u: &ScalarField, kernel: &CoulombKernel) -> Result<(f64, f64)> {
    let lhs = hartree_energy(u, kernel)?;
    let p: Vec<f64> = u.values().iter().map(|v| v.norm().powf(2.4)).collect();
    let lp = pairwise_sum_real(&p) * u.grid().cell_volume();
    Ok((lhs, kernel.hls_constant * lp.powf(5.0 / 3.0)))
}
