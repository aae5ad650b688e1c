//! Radial ground state ω_λ of −Δu + λu = (1/|x| ∗ u²)u and its energy E_λ.
//!
//! The solver works with v = r·u on a uniform mesh, where the radial
//! Laplacian becomes v''. A fourth-order stencil with odd reflection at
//! r = 0 gives a symmetric pentadiagonal operator; the Coulomb term uses
//! the radial Newton formula. Iteration is Petviashvili's stabilized
//! fixed point, followed by a Nehari rescale.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid3, Point, ScalarField};

/// E_1 from the independent shooting oracle (`examples/shooting_oracle.rs`).
pub const GOLDEN_E1: f64 = 1.168_443_234;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundStateOptions {
    pub nr: usize,
    /// r_max = r_max_factor / √λ.
    pub r_max_factor: f64,
    /// Sup-norm tolerance on the relative update and the u-residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        GroundStateOptions { nr: 4096, r_max_factor: 40.0, tol: 1e-10, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub lambda: f64,
    pub r_max: f64,
    pub nr: usize,
    pub values: Vec<f64>,
    pub energy: f64,
    #[serde(skip)]
    spline: Vec<f64>,
}

impl RadialProfile {
    pub fn new(lambda: f64, r_max: f64, values: Vec<f64>, energy: f64) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::InvalidArgument("profile needs at least 4 samples".into()));
        }
        if !(lambda > 0.0) || !(r_max > 0.0) {
            return Err(Error::InvalidArgument("lambda and r_max must be positive".into()));
        }
        let nr = values.len();
        let dr = r_max / (nr - 1) as f64;
        let spline = spline_second_derivatives(&values, dr);
        Ok(RadialProfile { lambda, r_max, nr, values, energy, spline })
    }

    pub fn dr(&self) -> f64 {
        self.r_max / (self.nr - 1) as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.dr()
    }

    /// Cubic-spline value; zero beyond r_max.
    pub fn eval(&self, r: f64) -> f64 {
        self.eval_both(r).0
    }

    /// (ω(r), ω'(r)); zero beyond r_max.
    pub fn eval_both(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        if r >= self.r_max {
            return (0.0, 0.0);
        }
        let h = self.dr();
        let i = ((r / h) as usize).min(self.nr - 2);
        let a = (i + 1) as f64 * h - r;
        let b = r - i as f64 * h;
        let (m0, m1) = (self.spline[i], self.spline[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let v = m0 * a * a * a / (6.0 * h)
            + m1 * b * b * b / (6.0 * h)
            + (y0 - m0 * h * h / 6.0) * a / h
            + (y1 - m1 * h * h / 6.0) * b / h;
        let d = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) + (y1 - y0) / h - (m1 - m0) * h / 6.0;
        (v, d)
    }

    /// ω_μ(r) = (μ/λ) ω_λ(√(μ/λ) r), the exact scaling of the limit problem.
    pub fn eval_at_lambda(&self, mu: f64, r: f64) -> (f64, f64) {
        let s = mu / self.lambda;
        let q = s.sqrt();
        let (v, d) = self.eval_both(q * r);
        (s * v, s * q * d)
    }

    /// The profile rescaled to λ = μ on the correspondingly scaled mesh.
    pub fn rescaled(&self, mu: f64) -> Result<RadialProfile> {
        let s = mu / self.lambda;
        RadialProfile::new(
            mu,
            self.r_max / s.sqrt(),
            self.values.iter().map(|v| v * s).collect(),
            self.energy * s.powf(1.5),
        )
    }

    /// Count of mesh points (beyond the first) where the profile fails to
    /// decrease strictly, ignoring the round-off floor in the tail.
    pub fn monotonicity_violations(&self) -> usize {
        let floor = 1e-13 * self.values[0];
        self.values
            .windows(2)
            .skip(1)
            .filter(|w| w[0] > floor && w[1] >= w[0])
            .count()
    }

    /// ∫ω² d³x.
    pub fn mass(&self) -> f64 {
        let h = self.dr();
        4.0 * PI * h * self.values.iter().enumerate().map(|(i, v)| (i as f64 * h).powi(2) * v * v).sum::<f64>()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,energy,nr,r_max")?;
        writeln!(w, "{},{},{},{}", fmt12(self.lambda), fmt12(self.energy), self.nr, fmt12(self.r_max))?;
        writeln!(w, "r,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", fmt12(self.radius(i)), fmt12(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<RadialProfile> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Format("truncated profile CSV".into()))?.map_err(Error::from)
        };
        if next()?.trim() != "lambda,energy,nr,r_max" {
            return Err(Error::Format("bad profile header".into()));
        }
        let meta = next()?;
        let f: Vec<&str> = meta.trim().split(',').collect();
        if f.len() != 4 {
            return Err(Error::Format("bad profile metadata row".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(e.to_string()));
        let (lambda, energy, r_max) = (num(f[0])?, num(f[1])?, num(f[3])?);
        let nr: usize = f[2].parse().map_err(|_| Error::Format("bad nr".into()))?;
        if next()?.trim() != "r,value" {
            return Err(Error::Format("bad profile row header".into()));
        }
        let mut values = Vec::with_capacity(nr);
        for _ in 0..nr {
            let row = next()?;
            let v = row.trim().split(',').nth(1).ok_or_else(|| Error::Format("bad profile row".into()))?;
            values.push(num(v)?);
        }
        RadialProfile::new(lambda, r_max, values, energy)
    }
}

/// Twelve significant digits, the output convention for all floats.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..12).contains(&e) {
        let decimals = (11 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

fn spline_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    // Clamped ω'(0) = 0, natural at r_max.
    let n = y.len();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    b[0] = 2.0;
    c[0] = 1.0;
    d[0] = 6.0 / h * ((y[1] - y[0]) / h);
    for i in 1..n - 1 {
        a[i] = 1.0;
        b[i] = 4.0;
        c[i] = 1.0;
        d[i] = 6.0 / (h * h) * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
    }
    b[n - 1] = 1.0;
    d[n - 1] = 0.0;
    // Thomas algorithm.
    for i in 1..n {
        let w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        d[i] -= w * d[i - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 1] = d[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
    }
    m
}

/// LDLᵀ factor of the symmetric pentadiagonal (A + λ) acting on v₁..v_N.
struct Penta {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl Penta {
    fn new(n: usize, dr: f64, lambda: f64) -> Penta {
        let s = 1.0 / (12.0 * dr * dr);
        let diag = |i: usize| if i == 0 { 29.0 * s + lambda } else { 30.0 * s + lambda };
        let e = -16.0 * s;
        let f = s;
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            let mut di = diag(i);
            if i >= 1 {
                di -= l1[i] * l1[i] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i] * l2[i] * d[i - 2];
            }
            d[i] = di;
            if i + 2 < n {
                l2[i + 2] = f / di;
            }
            if i + 1 < n {
                let corr = if i >= 1 { l2[i + 1] * l1[i] * d[i - 1] } else { 0.0 };
                l1[i + 1] = (e - corr) / di;
            }
        }
        Penta { d, l1, l2 }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = b[i];
            if i >= 1 {
                v -= self.l1[i] * y[i - 1];
            }
            if i >= 2 {
                v -= self.l2[i] * y[i - 2];
            }
            y[i] = v;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            if i + 1 < n {
                v -= self.l1[i + 1] * y[i + 1];
            }
            if i + 2 < n {
                v -= self.l2[i + 2] * y[i + 2];
            }
            y[i] = v;
        }
        y
    }
}

/// (A v) for v₁..v_N with v₀ = 0, v₋₁ = −v₁ and zeros past the end.
fn apply_a(v: &[f64], dr: f64) -> Vec<f64> {
    let n = v.len();
    let s = 1.0 / (12.0 * dr * dr);
    // Index k of v corresponds to r_{k+1}.
    let get = |k: isize| -> f64 {
        if k == -1 {
            0.0
        } else if k == -2 {
            -v[0]
        } else if (k as usize) < n {
            v[k as usize]
        } else {
            0.0
        }
    };
    (0..n as isize)
        .map(|k| {
            s * (get(k - 2) - 16.0 * get(k - 1) + 30.0 * get(k) - 16.0 * get(k + 1) + get(k + 2))
        })
        .collect()
}

/// Cumulative ∫₀^{r_i} f with Euler–Maclaurin endpoint correction. `f`
/// holds samples at r₀ = 0..r_N; `even` selects the parity used for the
/// ghost values at r < 0. Samples past r_N are taken as zero.
pub(crate) fn cumulative(f: &[f64], dr: f64, even: bool) -> Vec<f64> {
    let n = f.len();
    let sign = if even { 1.0 } else { -1.0 };
    let get = |i: isize| -> f64 {
        if i < 0 {
            sign * f[(-i) as usize]
        } else if (i as usize) < n {
            f[i as usize]
        } else {
            0.0
        }
    };
    let deriv = |i: isize| (8.0 * (get(i + 1) - get(i - 1)) - (get(i + 2) - get(i - 2))) / (12.0 * dr);
    let d0 = deriv(0);
    let mut out = vec![0.0; n];
    let mut trap = 0.0;
    for i in 1..n {
        trap += 0.5 * dr * (f[i - 1] + f[i]);
        out[i] = trap - dr * dr / 12.0 * (deriv(i as isize) - d0);
    }
    out
}

struct Radial {
    dr: f64,
    lambda: f64,
    n: usize,
}

impl Radial {
    fn r(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.dr
    }

    /// Φ at r₁..r_N for v (indexed from r₁), plus Φ(0).
    fn potential(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let mut f = vec![0.0; self.n + 1];
        let mut g = vec![0.0; self.n + 1];
        for k in 0..self.n {
            f[k + 1] = v[k] * v[k];
            g[k + 1] = v[k] * v[k] / self.r(k);
        }
        let cf = cumulative(&f, self.dr, true);
        let cg = cumulative(&g, self.dr, false);
        let total = cg[self.n];
        let phi = (0..self.n).map(|k| 4.0 * PI * (cf[k + 1] / self.r(k) + total - cg[k + 1])).collect();
        (phi, 4.0 * PI * total)
    }

    /// (‖u‖²_λ, D(u)).
    fn norms(&self, v: &[f64], av: &[f64], phi: &[f64]) -> (f64, f64) {
        let w = 4.0 * PI * self.dr;
        let mut q = 0.0;
        let mut d = 0.0;
        for k in 0..self.n {
            q += v[k] * (av[k] + self.lambda * v[k]);
            d += v[k] * v[k] * phi[k];
        }
        (w * q, w * d)
    }
}

/// Full diagnostics of a radial solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateReport {
    pub iterations: usize,
    /// sup |−Δu + λu − Φu| / sup u.
    pub residual: f64,
    /// |‖u‖²_λ − D| / ‖u‖²_λ.
    pub nehari_defect: f64,
    pub norm_sq: f64,
    pub hartree: f64,
    pub monotone: bool,
}

pub fn solve_limit(lambda: f64, opts: &GroundStateOptions) -> Result<RadialProfile> {
    solve_limit_from(lambda, opts, |r| (-lambda * r * r / 2.0).exp()).map(|(p, _)| p)
}

/// Solve from a caller-supplied initial radial profile u₀(r) > 0.
pub fn solve_limit_from<F: Fn(f64) -> f64>(
    lambda: f64,
    opts: &GroundStateOptions,
    init: F,
) -> Result<(RadialProfile, GroundStateReport)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if opts.nr < 16 || !(opts.r_max_factor > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("invalid ground state options".into()));
    }
    let r_max = opts.r_max_factor / lambda.sqrt();
    let n = opts.nr - 1;
    let dr = r_max / n as f64;
    let rad = Radial { dr, lambda, n };
    let fac = Penta::new(n, dr, lambda);
    let mut v: Vec<f64> = (0..n).map(|k| rad.r(k) * init(rad.r(k))).collect();
    if v.iter().any(|x| !x.is_finite()) || v.iter().all(|x| *x == 0.0) {
        return Err(Error::InvalidArgument("initial profile must be finite and nonzero".into()));
    }
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (phi, _) = rad.potential(&v);
        let av = apply_a(&v, dr);
        let (q, d) = rad.norms(&v, &av, &phi);
        let m = q / d;
        let rhs: Vec<f64> = v.iter().zip(&phi).map(|(a, b)| a * b).collect();
        let mut next = fac.solve(&rhs);
        let scale = m.powf(1.5);
        next.iter_mut().for_each(|x| *x *= scale);
        let vmax = next.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        change = next.iter().zip(&v).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / vmax;
        v = next;
        if change < opts.tol {
            break;
        }
    }
    // Nehari rescale and diagnostics.
    let (phi, _) = rad.potential(&v);
    let av = apply_a(&v, dr);
    let (q, d) = rad.norms(&v, &av, &phi);
    let t = (q / d).sqrt();
    v.iter_mut().for_each(|x| *x *= t);
    let (phi, phi0) = rad.potential(&v);
    let av = apply_a(&v, dr);
    let (q, d) = rad.norms(&v, &av, &phi);
    let mut values = Vec::with_capacity(n + 1);
    values.push((8.0 * v[0] - v[1]) / (6.0 * dr));
    values.extend((0..n).map(|k| v[k] / rad.r(k)));
    let umax = values[0].abs();
    let residual = (0..n)
        .map(|k| ((av[k] + lambda * v[k] - phi[k] * v[k]) / rad.r(k)).abs())
        .fold(0.0f64, f64::max)
        / umax;
    let _ = phi0;
    let profile = RadialProfile::new(lambda, r_max, values, q / 4.0)?;
    let report = GroundStateReport {
        iterations,
        residual,
        nehari_defect: (q - d).abs() / q,
        norm_sq: q,
        hartree: d,
        monotone: profile.monotonicity_violations() == 0,
    };
    if change >= opts.tol && residual >= opts.tol {
        return Err(Error::NotConverged { iterations, residual });
    }
    if profile.values.iter().any(|x| !(*x > 0.0)) && profile.values[..n / 2].iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Precondition("ground state lost positivity".into()));
    }
    Ok((profile, report))
}

/// Samples ω(|x − center|) on the grid; errors when the grid reaches past
/// r_max.
pub fn embed_3d(p: &RadialProfile, grid: &Grid3, center: Point) -> Result<ScalarField> {
    let l = grid.half_length();
    let reach = (0..3)
        .map(|a| {
            let lo = (-l - center[a]).abs();
            let hi = (l - grid.spacing() - center[a]).abs();
            lo.max(hi).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    if reach > p.r_max {
        return Err(Error::Resolution(format!("grid reach {reach} exceeds profile r_max {}", p.r_max)));
    }
    Ok(ScalarField::from_real_fn(*grid, |x| {
        let r = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) + (x[2] - center[2]).powi(2)).sqrt();
        p.eval(r).max(0.0)
    }))
}

/// (E_λ/E₁ from an independent solve at λ, sup-norm gap between the
/// rescaled p1 and that solve).
pub fn scaling_check(p1: &RadialProfile, lambda: f64, opts: &GroundStateOptions) -> Result<(f64, f64)> {
    if (p1.lambda - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("reference profile must have lambda = 1, got {}", p1.lambda)));
    }
    let direct = solve_limit(lambda, opts)?;
    let ratio = direct.energy / p1.energy;
    let gap = (0..direct.nr)
        .map(|i| {
            let r = direct.radius(i);
            (direct.values[i] - lambda * p1.eval(lambda.sqrt() * r)).abs()
        })
        .fold(0.0f64, f64::max);
    Ok((ratio, gap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pentadiagonal_solve_matches_apply() {
        let n = 50;
        let dr = 0.1;
        let lam = 1.3;
        let fac = Penta::new(n, dr, lam);
        let x: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37).sin() + 0.1).collect();
        let ax = apply_a(&x, dr);
        let b: Vec<f64> = ax.iter().zip(&x).map(|(a, v)| a + lam * v).collect();
        let y = fac.solve(&b);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn cumulative_integral_is_fourth_order() {
        let dr = 0.05;
        let f: Vec<f64> = (0..400).map(|i| (i as f64 * dr).powi(2) * (-(i as f64 * dr).powi(2)).exp()).collect();
        let c = cumulative(&f, dr, true);
        let exact = PI.sqrt() / 4.0;
        assert!((c[399] - exact).abs() < 1e-9, "{}", c[399] - exact);
    }

    #[test]
    fn spline_reproduces_smooth_function() {
        let vals: Vec<f64> = (0..200).map(|i| (-(i as f64 * 0.05).powi(2)).exp()).collect();
        let p = RadialProfile::new(1.0, 199.0 * 0.05, vals, 0.0).unwrap();
        for &r in &[0.0, 0.013, 0.5, 1.234, 3.0] {
            let (v, d) = p.eval_both(r);
            assert!((v - (-r * r).exp()).abs() < 1e-6);
            assert!((d + 2.0 * r * (-r * r).exp()).abs() < 1e-4);
        }
        assert_eq!(p.eval(100.0), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let p = RadialProfile::new(2.0, 3.0, vec![1.0, 0.5, 0.25, 0.125], 0.75).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = RadialProfile::read_csv(&buf[..]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn fmt12_digits() {
        assert_eq!(fmt12(1.0), "1");
        assert_eq!(fmt12(1.168443231234567), "1.16844323123");
        assert_eq!(fmt12(-0.5), "-0.5");
        assert_eq!(fmt12(1.5e-9), "1.50000000000e-9");
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(solve_limit(0.0, &GroundStateOptions::default()).is_err());
        assert!(solve_limit(-1.0, &GroundStateOptions::default()).is_err());
    }
}
