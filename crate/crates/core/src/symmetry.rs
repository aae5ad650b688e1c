//! Cyclic rotation groups G_m about the third axis, the twisted action
//! (u_g)(x) = τ(g)u(g⁻¹x) with τ_j(g) = g^j, orbits, and ℓ_{G,V} / M_τ.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{plan_1d, transpose};
use crate::field::{Grid3, Point, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymmetrySector {
    m: u32,
    j: u32,
}

impl SymmetrySector {
    pub fn new(m: u32, j: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("group order m must be >= 1".into()));
        }
        if j >= m {
            return Err(Error::InvalidArgument(format!("twist j must lie in [0, {m}), got {j}")));
        }
        Ok(SymmetrySector { m, j })
    }

    pub fn trivial() -> Self {
        SymmetrySector { m: 1, j: 0 }
    }
    pub fn m(&self) -> u32 {
        self.m
    }
    pub fn j(&self) -> u32 {
        self.j
    }

    /// τ(g^k) = e^{2πijk/m}.
    pub fn tau(&self, k: i64) -> Complex64 {
        let r = (self.j as i64 * k).rem_euclid(self.m as i64);
        if r == 0 {
            return Complex64::new(1.0, 0.0);
        }
        Complex64::from_polar(1.0, 2.0 * PI * r as f64 / self.m as f64)
    }

    /// g^k x, rotation by 2πk/m about the third axis.
    pub fn rotate_point(&self, x: Point, k: i64) -> Point {
        let r = k.rem_euclid(self.m as i64);
        let th = 2.0 * PI * r as f64 / self.m as f64;
        let (s, c) = th.sin_cos();
        [c * x[0] - s * x[1], s * x[0] + c * x[1], x[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitInfo {
    pub representative: Point,
    pub cardinality: u32,
    pub isotropy_in_kernel: bool,
}

/// Orbit cardinality is m off the axis and 1 on it (|planar radius| < tol_axis).
pub fn orbit_info(x: Point, s: &SymmetrySector, tol_axis: f64) -> OrbitInfo {
    let on_axis = x[0].hypot(x[1]) < tol_axis;
    let cardinality = if on_axis { 1 } else { s.m };
    OrbitInfo {
        representative: x,
        cardinality,
        isotropy_in_kernel: cardinality == s.m || s.j == 0,
    }
}

/// The distinct points of Gx.
pub fn orbit_points(x: Point, s: &SymmetrySector, tol_axis: f64) -> Vec<Point> {
    let info = orbit_info(x, s, tol_axis);
    if info.cardinality == 1 {
        vec![x]
    } else {
        (0..s.m as i64).map(|k| s.rotate_point(x, k)).collect()
    }
}

/// u(R_{−θ}x) for θ = 2πk/m, without the τ factor.
fn rotate_field(u: &ScalarField, s: &SymmetrySector, k: i64) -> ScalarField {
    let m = s.m as i64;
    let r = k.rem_euclid(m);
    if r == 0 {
        return u.clone();
    }
    // θ = qπ/2 + residual with |residual| ≤ π/4.
    let num = 4 * r; // θ/(π/2) = 4r/m
    let q = ((num as f64 / m as f64).round() as i64).rem_euclid(4);
    let residual = 2.0 * PI * r as f64 / m as f64 - q as f64 * PI / 2.0;
    let residual = residual - 2.0 * PI * (residual / (2.0 * PI)).round();
    let mut w = rotate_quarter(u, q as usize);
    if num % m != 0 {
        w = shear_rotate(&w, residual);
    }
    w
}

/// Exact u(R_{−qπ/2}x) by index permutation.
fn rotate_quarter(u: &ScalarField, q: usize) -> ScalarField {
    if q == 0 {
        return u.clone();
    }
    let g = *u.grid();
    let n = g.n();
    let src = u.values();
    let neg = |i: usize| (n - i) % n;
    let mut out = vec![Complex64::default(); g.len()];
    for i in 0..n {
        for j in 0..n {
            let (si, sj) = match q {
                1 => (j, neg(i)),
                2 => (neg(i), neg(j)),
                _ => (neg(j), i),
            };
            let d = g.index(i, j, 0);
            let sidx = g.index(si, sj, 0);
            out[d..d + n].copy_from_slice(&src[sidx..sidx + n]);
        }
    }
    let f = ScalarField::from_values(g, out).expect("same length");
    if u.is_real() {
        f.make_real()
    } else {
        f
    }
}

/// u(R_{−φ}x) for |φ| ≤ π/4 by three spectral shears:
/// R_{−φ} = Sx(a)·Sy(b)·Sx(a) with a = tan(φ/2), b = −sin φ, where
/// Sx(a)(x, y) = (x + ay, y).
fn shear_rotate(u: &ScalarField, phi: f64) -> ScalarField {
    let a = (phi / 2.0).tan();
    let b = -phi.sin();
    let real = u.is_real();
    let mut data = u.values().to_vec();
    let g = *u.grid();
    shear_x(&mut data, &g, a);
    shear_y(&mut data, &g, b);
    shear_x(&mut data, &g, a);
    let f = ScalarField::from_values(g, data).expect("same length");
    if real {
        f.make_real()
    } else {
        f
    }
}

/// Phase factors e^{ik·shift} for fractional shifts; Nyquist uses cos.
fn shift_phases(g: &Grid3, shift: f64) -> Vec<Complex64> {
    let n = g.n();
    (0..n)
        .map(|m| {
            let t = g.wavenumber(m) * shift;
            if m == n / 2 {
                Complex64::new(t.cos() / n as f64, 0.0)
            } else {
                Complex64::from_polar(1.0 / n as f64, t)
            }
        })
        .collect()
}

/// f(x, y, z) ← f(x + a·y, y, z).
fn shear_x(data: &mut [Complex64], g: &Grid3, a: f64) {
    let n = g.n();
    let fwd = plan_1d(n, rustfft::FftDirection::Forward);
    let inv = plan_1d(n, rustfft::FftDirection::Inverse);
    let mut buf = vec![Complex64::default(); n * n];
    let mut scratch = vec![Complex64::default(); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
    for j in 0..n {
        let ph = shift_phases(g, a * g.coord(j));
        for i in 0..n {
            let row = &data[g.index(i, j, 0)..g.index(i, j, 0) + n];
            for (k, v) in row.iter().enumerate() {
                buf[k * n + i] = *v;
            }
        }
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for line in buf.chunks_mut(n) {
            for (v, p) in line.iter_mut().zip(&ph) {
                *v *= p;
            }
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        for i in 0..n {
            let row = &mut data[g.index(i, j, 0)..g.index(i, j, 0) + n];
            for (k, v) in row.iter_mut().enumerate() {
                *v = buf[k * n + i];
            }
        }
    }
}

/// f(x, y, z) ← f(x, y + b·x, z).
fn shear_y(data: &mut [Complex64], g: &Grid3, b: f64) {
    let n = g.n();
    let fwd = plan_1d(n, rustfft::FftDirection::Forward);
    let inv = plan_1d(n, rustfft::FftDirection::Inverse);
    let mut buf = vec![Complex64::default(); n * n];
    let mut scratch = vec![Complex64::default(); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
    for (i, plane) in data.chunks_mut(n * n).enumerate() {
        let ph = shift_phases(g, b * g.coord(i));
        transpose(plane, &mut buf, n, n);
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for line in buf.chunks_mut(n) {
            for (v, p) in line.iter_mut().zip(&ph) {
                *v *= p;
            }
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        transpose(&buf, plane, n, n);
    }
}

/// e^{2πijk/m}·u(R_{−2πk/m}x).
pub fn act(k: i64, u: &ScalarField, s: &SymmetrySector) -> ScalarField {
    let w = rotate_field(u, s, k);
    let t = s.tau(k);
    if t == Complex64::new(1.0, 0.0) {
        w
    } else {
        w.scale(t)
    }
}

/// (1/m)Σ_k act(k, u), the projector onto τ-equivariant fields.
pub fn symmetrize(u: &ScalarField, s: &SymmetrySector) -> ScalarField {
    if s.m == 1 {
        return u.clone();
    }
    let real = u.is_real() && s.j == 0;
    let mut acc = u.values().to_vec();
    for k in 1..s.m as i64 {
        let a = act(k, u, s);
        for (x, y) in acc.iter_mut().zip(a.values()) {
            *x += y;
        }
    }
    let inv = 1.0 / s.m as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    let f = ScalarField::from_values(*u.grid(), acc).expect("same length");
    if real {
        f.make_real()
    } else {
        f
    }
}

/// max_k ‖act(k,u) − u‖ / ‖u‖; zero for the zero field.
pub fn equivariance_defect(u: &ScalarField, s: &SymmetrySector) -> f64 {
    let norm = u.norm_l2();
    if norm == 0.0 {
        return 0.0;
    }
    (1..s.m as i64)
        .map(|k| act(k, u, s).sub(u).expect("same grid").norm_l2() / norm)
        .fold(0.0, f64::max)
}

pub fn is_equivariant(u: &ScalarField, s: &SymmetrySector, tol: f64) -> bool {
    equivariance_defect(u, s) <= tol
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtauPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub orbit_cardinality: u32,
    pub value: f64,
}

impl MtauPoint {
    pub fn point(&self) -> Point {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllReport {
    pub ell: f64,
    pub m_tau: Vec<MtauPoint>,
}

pub const DEFAULT_BAND: f64 = 1e-3;

/// ℓ_{G,V} = min (#Gx)V^{3/2} over the candidates and the admissible
/// minimizers M_τ within a relative band. Candidates default to the grid
/// nodes; off-node candidates use trigonometric interpolation of V.
pub fn ell_and_mtau(v: &ScalarField, s: &SymmetrySector, candidates: Option<&[Point]>) -> Result<EllReport> {
    let g = *v.grid();
    match candidates {
        None => {
            let pts: Vec<Point> = (0..g.len()).map(|i| g.point(i)).collect();
            let vals: Vec<f64> = v.values().iter().map(|c| c.re).collect();
            ell_and_mtau_values(&pts, &vals, s, g.spacing() / 2.0, DEFAULT_BAND)
        }
        Some(c) => {
            let vals: Vec<f64> = c.iter().map(|x| v.interpolate(*x).re).collect();
            ell_and_mtau_values(c, &vals, s, g.spacing() / 2.0, DEFAULT_BAND)
        }
    }
}

/// Core of [`ell_and_mtau`] on explicit (point, V) samples.
pub fn ell_and_mtau_values(
    pts: &[Point],
    vals: &[f64],
    s: &SymmetrySector,
    tol_axis: f64,
    band: f64,
) -> Result<EllReport> {
    if pts.is_empty() {
        return Err(Error::InvalidArgument("empty candidate list".into()));
    }
    let weighted: Vec<(u32, f64)> = pts
        .iter()
        .zip(vals)
        .map(|(x, v)| {
            let c = orbit_info(*x, s, tol_axis).cardinality;
            (c, c as f64 * v.max(0.0).powf(1.5))
        })
        .collect();
    let ell = weighted.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    let mut m_tau: Vec<MtauPoint> = Vec::new();
    for ((x, v), (c, w)) in pts.iter().zip(vals).zip(&weighted) {
        if *w <= ell * (1.0 + band) && orbit_info(*x, s, tol_axis).isotropy_in_kernel {
            for y in orbit_points(*x, s, tol_axis) {
                let dup = m_tau.iter().any(|p| {
                    (p.x - y[0]).abs() < 1e-9 && (p.y - y[1]).abs() < 1e-9 && (p.z - y[2]).abs() < 1e-9
                });
                if !dup {
                    m_tau.push(MtauPoint { x: y[0], y: y[1], z: y[2], orbit_cardinality: *c, value: *v });
                }
            }
        }
    }
    Ok(EllReport { ell, m_tau })
}

/// Box version of the compactness condition: the minimum V₀ lies below V on
/// the box faces (a stand-in for liminf V at infinity), and ℓ lies below
/// V^{3/2} on the axis, where orbits are single points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionV {
    pub v0: f64,
    pub face_min: f64,
    pub ell: f64,
    pub axis_min: f64,
    pub holds: bool,
}

pub fn condition_v(v: &ScalarField, s: &SymmetrySector) -> Result<ConditionV> {
    let g = *v.grid();
    let n = g.n();
    let ell = ell_and_mtau(v, s, None)?.ell;
    let (mut v0, mut face_min, mut axis_min) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for idx in 0..g.len() {
        let val = v.values()[idx].re;
        let (i, j, k) = g.unindex(idx);
        let x = g.point(idx);
        v0 = v0.min(val);
        if [i, j, k].iter().any(|&a| a == 0 || a == n - 1) {
            face_min = face_min.min(val);
        }
        if s.m > 1 && x[0].hypot(x[1]) < g.spacing() / 2.0 {
            axis_min = axis_min.min(val);
        }
    }
    let holds = v0 < face_min && ell < axis_min.max(0.0).powf(1.5);
    Ok(ConditionV { v0, face_min, ell, axis_min, holds })
}

/// Groups M_τ points into connected components (distance ≤ link).
pub fn components(points: &[Point], link: f64) -> Vec<Vec<Point>> {
    let n = points.len();
    let mut label = vec![usize::MAX; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut stack = vec![start];
        label[start] = id;
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(points[i]);
            for j in 0..n {
                if label[j] == usize::MAX {
                    let d2: f64 = (0..3).map(|a| (points[i][a] - points[j][a]).powi(2)).sum();
                    if d2 <= link * link {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        comps.push(comp);
    }
    comps
}

/// Max relative deviation of V from G-invariance at the nodes, using an
/// analytic evaluator at rotated points.
pub fn potential_invariance_defect<F: Fn(Point) -> f64>(grid: &Grid3, s: &SymmetrySector, v: F) -> f64 {
    let mut worst: f64 = 0.0;
    for idx in 0..grid.len() {
        let x = grid.point(idx);
        let v0 = v(x);
        for k in 1..s.m as i64 {
            let vk = v(s.rotate_point(x, k));
            worst = worst.max((vk - v0).abs() / v0.abs().max(1e-300));
        }
    }
    worst
}

/// Max deviation of A(gx) − gA(x) over the nodes, relative to max |A|.
pub fn magnetic_equivariance_defect<F: Fn(Point) -> [f64; 3]>(grid: &Grid3, s: &SymmetrySector, a: F) -> f64 {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for idx in 0..grid.len() {
        let x = grid.point(idx);
        let a0 = a(x);
        scale = scale.max((a0[0] * a0[0] + a0[1] * a0[1] + a0[2] * a0[2]).sqrt());
        for k in 1..s.m as i64 {
            let lhs = a(s.rotate_point(x, k));
            let rhs = s.rotate_point(a0, k);
            let d = ((lhs[0] - rhs[0]).powi(2) + (lhs[1] - rhs[1]).powi(2) + (lhs[2] - rhs[2]).powi(2)).sqrt();
            worst = worst.max(d);
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid3 {
        Grid3::new(48, 8.0).unwrap()
    }

    fn blob(g: Grid3, c: Point) -> ScalarField {
        ScalarField::from_fn(g, move |x| {
            let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
            Complex64::new((-r2 / 2.0).exp(), 0.3 * x[0] * (-r2 / 2.0).exp())
        })
    }

    #[test]
    fn sector_validation() {
        assert!(SymmetrySector::new(0, 0).is_err());
        assert!(SymmetrySector::new(3, 3).is_err());
        assert!(SymmetrySector::new(3, 2).is_ok());
    }

    #[test]
    fn act_zero_is_identity() {
        let g = grid();
        let u = blob(g, [1.0, 0.5, 0.0]);
        let s = SymmetrySector::new(3, 1).unwrap();
        assert_eq!(act(0, &u, &s), u);
    }

    #[test]
    fn quarter_turn_moves_blob() {
        let g = grid();
        let u = ScalarField::from_real_fn(g, |x| (-((x[0] - 1.5).powi(2) + x[1] * x[1] + x[2] * x[2])).exp());
        let s = SymmetrySector::new(4, 0).unwrap();
        let w = act(1, &u, &s);
        let expect = ScalarField::from_real_fn(g, |x| (-(x[0] * x[0] + (x[1] - 1.5).powi(2) + x[2] * x[2])).exp());
        assert!(w.max_abs_diff(&expect).unwrap() < 1e-14);
    }

    #[test]
    fn shear_rotation_matches_analytic() {
        let g = grid();
        let s = SymmetrySector::new(6, 0).unwrap();
        let c = [1.5, 0.0, 0.0];
        let u = ScalarField::from_real_fn(g, |x| (-((x[0] - c[0]).powi(2) + x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
        let w = act(1, &u, &s);
        let d = s.rotate_point(c, 1);
        let expect = ScalarField::from_real_fn(g, |x| {
            (-((x[0] - d[0]).powi(2) + (x[1] - d[1]).powi(2) + x[2] * x[2]) / 2.0).exp()
        });
        let err = w.sub(&expect).unwrap().norm_l2() / expect.norm_l2();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn group_law_and_projector() {
        let g = grid();
        let u = blob(g, [1.0, 0.4, 0.2]);
        for &m in &[2u32, 3, 4, 6] {
            let s = SymmetrySector::new(m, 1).unwrap();
            let lhs = act(1, &act(2, &u, &s), &s);
            let rhs = act(3, &u, &s);
            let err = lhs.sub(&rhs).unwrap().norm_l2() / u.norm_l2();
            assert!(err < 1e-8, "m={m}: {err}");
            let p = symmetrize(&u, &s);
            assert!(is_equivariant(&p, &s, 1e-8), "m={m}");
            let pp = symmetrize(&p, &s);
            assert!(pp.sub(&p).unwrap().norm_l2() / p.norm_l2() < 1e-8);
        }
    }

    #[test]
    fn radial_field_annihilated_by_twist() {
        let g = grid();
        let u = ScalarField::from_real_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
        for &m in &[2u32, 3, 4] {
            let s = SymmetrySector::new(m, 1).unwrap();
            assert!(symmetrize(&u, &s).norm_l2() < 1e-8 * u.norm_l2());
            let s0 = SymmetrySector::new(m, 0).unwrap();
            assert!(act(1, &u, &s0).sub(&u).unwrap().norm_l2() < 1e-8 * u.norm_l2());
        }
    }

    #[test]
    fn odd_field_is_twisted_fixed_point() {
        let g = grid();
        let u = ScalarField::from_real_fn(g, |x| x[0] * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
        let s = SymmetrySector::new(2, 1).unwrap();
        assert!(act(1, &u, &s).sub(&u).unwrap().norm_l2() < 1e-8 * u.norm_l2());
    }

    #[test]
    fn orbit_examples() {
        let s = SymmetrySector::new(3, 1).unwrap();
        let a = orbit_info([0.0, 0.0, 1.0], &s, 0.1);
        assert_eq!((a.cardinality, a.isotropy_in_kernel), (1, false));
        let b = orbit_info([1.0, 0.0, 0.0], &s, 0.1);
        assert_eq!((b.cardinality, b.isotropy_in_kernel), (3, true));
        let s5 = SymmetrySector::new(5, 0).unwrap();
        let c = orbit_info([0.0; 3], &s5, 0.1);
        assert_eq!((c.cardinality, c.isotropy_in_kernel), (1, true));
    }

    #[test]
    fn ell_constant_potential() {
        let g = Grid3::new(8, 2.0).unwrap();
        let v = ScalarField::constant(g, 1.0);
        let s0 = SymmetrySector::new(3, 0).unwrap();
        let r = ell_and_mtau(&v, &s0, None).unwrap();
        assert_eq!(r.ell, 1.0);
        assert!(r.m_tau.iter().all(|p| p.orbit_cardinality == 1));
        let s1 = SymmetrySector::new(3, 1).unwrap();
        let r1 = ell_and_mtau(&v, &s1, None).unwrap();
        assert_eq!(r1.ell, 1.0);
        assert!(r1.m_tau.is_empty());
        assert!(ell_and_mtau_values(&[], &[], &s1, 0.1, 1e-3).is_err());
    }

    #[test]
    fn condition_v_on_ring_well_and_constant() {
        let g = Grid3::new(24, 3.0).unwrap();
        let ring = ScalarField::from_real_fn(g, |x| 1.0 + (x[0].hypot(x[1]) - 1.0).powi(2) + x[2] * x[2]);
        let s = SymmetrySector::new(2, 0).unwrap();
        let c = condition_v(&ring, &s).unwrap();
        assert!(c.holds, "{c:?}");
        assert!((c.axis_min - 2.0).abs() < 1e-12);
        // m = 3 puts ℓ = 3 above 2^{3/2}: the axis wins.
        assert!(!condition_v(&ring, &SymmetrySector::new(3, 0).unwrap()).unwrap().holds);
        assert!(!condition_v(&ScalarField::constant(g, 1.0), &s).unwrap().holds);
    }
}
