//! Cutoff ground-state bumps υ_{λ,ε} and the symmetric entrance map ψ_{ε,ξ}.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coulomb::CoulombKernel;
use crate::error::{Error, Result};
use crate::field::{Grid3, Point, ScalarField};
use crate::groundstate::{cumulative, RadialProfile};
use crate::magnetic::{energy, project_with, projected_energy, ElectricPreset, MagneticPreset, Potentials};
use crate::symmetry::{orbit_info, orbit_points, SymmetrySector};

/// ϱ_ε(y) = ϱ(ε^p y); p = ½ gives the support radius 1/√ε.
pub const DEFAULT_CUTOFF_EXPONENT: f64 = 0.5;

/// Radial nodes for the 1D bump quadrature.
const RADIAL_NODES: usize = 16384;

fn smooth_step(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else {
        let f = (-1.0 / x).exp();
        (f, f / (x * x))
    }
}

/// ϱ(s) and ϱ'(s): 1 on s ≤ ½, 0 on s ≥ 1, C^∞ in between.
pub fn cutoff(s: f64) -> (f64, f64) {
    let s = s.abs();
    if s <= 0.5 {
        return (1.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let t = 2.0 * s - 1.0;
    let (a, da) = smooth_step(1.0 - t);
    let (b, db) = smooth_step(t);
    let den = a + b;
    let dt = (-da * b - a * db) / (den * den);
    (a / den, 2.0 * dt)
}

/// υ(y) = c·ϱ(ε^p|y|)·ω_λ(|y|), with c placing υ on the λ-Nehari manifold
/// by 1D radial quadrature.
#[derive(Debug, Clone)]
pub struct CutoffBump {
    profile: RadialProfile,
    lambda: f64,
    epsilon: f64,
    exponent: f64,
    scale: f64,
    norm_sq: f64,
    hartree: f64,
}

impl CutoffBump {
    pub fn new(profile: &RadialProfile, lambda: f64, epsilon: f64) -> Result<Self> {
        Self::with_exponent(profile, lambda, epsilon, DEFAULT_CUTOFF_EXPONENT)
    }

    pub fn with_exponent(profile: &RadialProfile, lambda: f64, epsilon: f64, exponent: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(lambda > 0.0) {
            return Err(Error::InvalidArgument("epsilon and lambda must be positive".into()));
        }
        if !(exponent > 0.0) {
            return Err(Error::InvalidArgument("cutoff exponent must be positive".into()));
        }
        let mut b = CutoffBump {
            profile: profile.clone(),
            lambda,
            epsilon,
            exponent,
            scale: 1.0,
            norm_sq: 0.0,
            hartree: 0.0,
        };
        let (q, d) = b.radial_norms();
        if !(d > 0.0) {
            return Err(Error::Degenerate("cutoff bump has no Coulomb energy".into()));
        }
        b.scale = (q / d).sqrt();
        b.norm_sq = q * b.scale * b.scale;
        b.hartree = d * b.scale.powi(4);
        Ok(b)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Support radius ε^{−p} in the rescaled variable.
    pub fn support_radius(&self) -> f64 {
        self.epsilon.powf(-self.exponent)
    }

    /// Unscaled ϱ_ε·ω_λ and its radial derivative.
    fn raw(&self, r: f64) -> (f64, f64) {
        let k = self.epsilon.powf(self.exponent);
        let (c, dc) = cutoff(k * r);
        if c == 0.0 {
            return (0.0, 0.0);
        }
        let (w, dw) = self.profile.eval_at_lambda(self.lambda, r);
        (c * w, k * dc * w + c * dw)
    }

    /// υ(r).
    pub fn eval(&self, r: f64) -> f64 {
        self.scale * self.raw(r).0
    }

    /// (‖·‖²_λ, D) of the unscaled bump.
    fn radial_norms(&self) -> (f64, f64) {
        let r_end = self.support_radius().min(self.profile.r_max * (self.profile.lambda / self.lambda).sqrt());
        let n = RADIAL_NODES;
        let dr = r_end / (n - 1) as f64;
        let mut kin = vec![0.0; n];
        let mut rho_r2 = vec![0.0; n];
        let mut rho_r = vec![0.0; n];
        for i in 0..n {
            let r = i as f64 * dr;
            let (w, dw) = self.raw(r);
            kin[i] = (dw * dw + self.lambda * w * w) * r * r;
            rho_r2[i] = w * w * r * r;
            rho_r[i] = w * w * r;
        }
        let q = 4.0 * PI * cumulative(&kin, dr, true)[n - 1];
        let inner = cumulative(&rho_r2, dr, true);
        let outer = cumulative(&rho_r, dr, false);
        let total = outer[n - 1];
        let mut integrand = vec![0.0; n];
        for i in 0..n {
            let r = i as f64 * dr;
            let u = if i == 0 {
                4.0 * PI * total
            } else {
                4.0 * PI * (inner[i] / r + total - outer[i])
            };
            integrand[i] = u * rho_r2[i];
        }
        let d = 4.0 * PI * cumulative(&integrand, dr, true)[n - 1];
        (q, d)
    }

    /// J_λ(υ) = ¼‖υ‖²_λ on the Nehari manifold.
    pub fn energy(&self) -> f64 {
        0.25 * self.norm_sq
    }

    /// |‖υ‖²_λ − D(υ)| / D(υ) from the radial quadrature.
    pub fn nehari_defect(&self) -> f64 {
        (self.norm_sq - self.hartree).abs() / self.hartree
    }
}

/// υ_{λ,ε} sampled on a grid centred at the origin (rescaled variables) and
/// rescaled so that ‖υ‖²_λ = D(υ) holds for the discrete forms.
pub fn cutoff_bump(p: &RadialProfile, epsilon: f64, grid: &Grid3) -> Result<ScalarField> {
    cutoff_bump_with(p, epsilon, DEFAULT_CUTOFF_EXPONENT, grid, &CoulombKernel::new(*grid))
}

pub fn cutoff_bump_with(
    p: &RadialProfile,
    epsilon: f64,
    exponent: f64,
    grid: &Grid3,
    kernel: &CoulombKernel,
) -> Result<ScalarField> {
    let bump = CutoffBump::with_exponent(p, p.lambda, epsilon, exponent)?;
    let reach = grid.half_length() - grid.spacing();
    if bump.support_radius() > reach {
        return Err(Error::Resolution(format!(
            "bump support radius {} exceeds grid reach {reach}",
            bump.support_radius()
        )));
    }
    let f = ScalarField::from_real_fn(*grid, |x| bump.eval((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()));
    let pot = Potentials::from_presets(*grid, &MagneticPreset::Zero, &ElectricPreset::Constant(p.lambda), 1.0)?;
    let e = energy(&f, &pot, kernel)?;
    project_with(&f, &e, 1.0)
}

/// Concentration site, scale, symmetry sector and λ = V(ξ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntranceSpec {
    pub xi: Point,
    pub epsilon: f64,
    pub sector: SymmetrySector,
    pub lambda: f64,
}

impl EntranceSpec {
    pub fn new(xi: Point, epsilon: f64, sector: SymmetrySector, lambda: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(lambda > 0.0) {
            return Err(Error::InvalidArgument("epsilon and lambda must be positive".into()));
        }
        Ok(EntranceSpec { xi, epsilon, sector, lambda })
    }

    /// λ taken from the electric potential at ξ.
    pub fn at(xi: Point, sector: SymmetrySector, p: &Potentials) -> Result<Self> {
        Self::new(xi, p.epsilon(), sector, p.electric_at(xi))
    }
}

/// Support radius of one bump in physical units, ε·ε^{−p}.
fn physical_radius(bump: &CutoffBump) -> f64 {
    bump.epsilon() * bump.support_radius()
}

fn check_support(centres: &[Point], radius: f64, grid: &Grid3) -> Result<()> {
    let lo = -grid.half_length();
    let hi = grid.half_length() - grid.spacing();
    for c in centres {
        for a in 0..3 {
            if c[a] - radius < lo || c[a] + radius > hi {
                return Err(Error::Resolution(format!(
                    "bump at ({:.4}, {:.4}, {:.4}) with radius {radius:.4} leaves the box",
                    c[0], c[1], c[2]
                )));
            }
        }
    }
    Ok(())
}

/// Pairwise disjointness of the orbit supports with a 10% margin.
pub fn check_overlap(centres: &[Point], radius: f64) -> Result<()> {
    for (i, a) in centres.iter().enumerate() {
        for b in &centres[i + 1..] {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            if d <= 2.0 * radius * 1.1 {
                return Err(Error::Precondition(format!(
                    "orbit bumps overlap: distance {d:.4} vs support radius {radius:.4}"
                )));
            }
        }
    }
    Ok(())
}

/// Adds τ·υ(|x−c|/ε)·e^{−iA(c)·(x−c)/ε} to `out` over the bump support.
fn add_bump(out: &mut [Complex64], grid: &Grid3, bump: &CutoffBump, c: Point, a: [f64; 3], tau: Complex64) {
    let eps = bump.epsilon();
    let rad = physical_radius(bump);
    let n = grid.n();
    let h = grid.spacing();
    let l = grid.half_length();
    let range = |ca: f64| {
        let lo = (((ca - rad + l) / h).floor().max(0.0)) as usize;
        let hi = ((((ca + rad + l) / h).ceil()) as usize).min(n - 1);
        lo..=hi
    };
    for i in range(c[0]) {
        let dx = grid.coord(i) - c[0];
        for j in range(c[1]) {
            let dy = grid.coord(j) - c[1];
            for k in range(c[2]) {
                let dz = grid.coord(k) - c[2];
                let r = (dx * dx + dy * dy + dz * dz).sqrt();
                if r >= rad {
                    continue;
                }
                let v = bump.eval(r / eps);
                if v == 0.0 {
                    continue;
                }
                let phase = -(a[0] * dx + a[1] * dy + a[2] * dz) / eps;
                out[grid.index(i, j, k)] += tau * Complex64::from_polar(v, phase);
            }
        }
    }
}

/// ψ_{ε,ξ}(x) = Σ_{gξ∈Gξ} τ(g)·υ(|x−gξ|/ε)·e^{−iA(gξ)·(x−gξ)/ε}.
/// A(gξ) is the analytic magnetic potential when available.
pub fn entrance(spec: &EntranceSpec, bump: &CutoffBump, p: &Potentials) -> Result<ScalarField> {
    let grid = *p.grid();
    let tol_axis = grid.spacing() / 2.0;
    let info = orbit_info(spec.xi, &spec.sector, tol_axis);
    if !info.isotropy_in_kernel {
        return Err(Error::Precondition("isotropy of xi is not contained in ker tau".into()));
    }
    if (bump.epsilon() - spec.epsilon).abs() > 1e-12 * spec.epsilon || (bump.lambda() - spec.lambda).abs() > 1e-12 * spec.lambda {
        return Err(Error::InvalidArgument("bump built for a different (epsilon, lambda)".into()));
    }
    let centres = orbit_points(spec.xi, &spec.sector, tol_axis);
    let rad = physical_radius(bump);
    check_overlap(&centres, rad)?;
    check_support(&centres, rad, &grid)?;
    let mut out = vec![Complex64::default(); grid.len()];
    for (k, c) in centres.iter().enumerate() {
        add_bump(&mut out, &grid, bump, *c, p.magnetic_at(*c), spec.sector.tau(k as i64));
    }
    let f = ScalarField::from_values(grid, out)?;
    let real = spec.sector.j() == 0 && centres.iter().all(|c| p.magnetic_at(*c) == [0.0; 3]);
    Ok(if real { f.make_real() } else { f })
}

/// φ_{ε,ξ}: one bump at ξ with its magnetic phase, no symmetrization.
pub fn single_bump(xi: Point, bump: &CutoffBump, p: &Potentials) -> Result<ScalarField> {
    let grid = *p.grid();
    check_support(&[xi], physical_radius(bump), &grid)?;
    let mut out = vec![Complex64::default(); grid.len()];
    add_bump(&mut out, &grid, bump, xi, p.magnetic_at(xi), Complex64::new(1.0, 0.0));
    ScalarField::from_values(grid, out)
}

/// ε⁻³·J_{ε,A,V}(π(u)).
pub fn scaled_projected_energy(u: &ScalarField, p: &Potentials, kernel: &CoulombKernel) -> Result<f64> {
    let e = energy(u, p, kernel)?;
    if !(e.hartree > 0.0) {
        return Err(Error::Degenerate("field has no Coulomb energy".into()));
    }
    Ok(projected_energy(&e, p.epsilon()) / p.epsilon().powi(3))
}

/// ε⁻³·J_{ε,A,V}(π(ψ_{ε,ξ})).
pub fn entrance_energy(
    spec: &EntranceSpec,
    bump: &CutoffBump,
    p: &Potentials,
    kernel: &CoulombKernel,
) -> Result<f64> {
    scaled_projected_energy(&entrance(spec, bump, p)?, p, kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::{solve_limit, GroundStateOptions};
    use crate::symmetry::{act, is_equivariant};

    fn profile() -> RadialProfile {
        solve_limit(1.0, &GroundStateOptions::default()).unwrap()
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.3), (1.0, 0.0));
        assert_eq!(cutoff(1.2), (0.0, 0.0));
        assert!((cutoff(0.75).0 - 0.5).abs() < 1e-15);
        let h = 1e-6;
        for &s in &[0.55, 0.7, 0.9] {
            let fd = (cutoff(s + h).0 - cutoff(s - h).0) / (2.0 * h);
            assert!((fd - cutoff(s).1).abs() < 1e-6);
        }
    }

    #[test]
    fn bump_is_on_nehari_and_converges() {
        let p = profile();
        let big = CutoffBump::new(&p, 1.0, 1e-4).unwrap();
        assert!(big.nehari_defect() < 1e-12);
        assert!((big.energy() / p.energy - 1.0).abs() < 1e-6);
        let l2 = CutoffBump::new(&p, 2.0, 1e-4).unwrap();
        assert!((l2.energy() / (2f64.powf(1.5) * p.energy) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn entrance_equivariant_with_phase() {
        let g = Grid3::new(48, 2.0).unwrap();
        let p = Potentials::from_presets(g, &MagneticPreset::Standard, &ElectricPreset::ring_well_default(), 0.25).unwrap();
        let prof = profile();
        let s = SymmetrySector::new(4, 1).unwrap();
        let spec = EntranceSpec::at([1.0, 0.0, 0.0], s, &p).unwrap();
        let bump = CutoffBump::new(&prof, spec.lambda, spec.epsilon).unwrap();
        let psi = entrance(&spec, &bump, &p).unwrap();
        assert!(is_equivariant(&psi, &s, 1e-12));
        let moved = EntranceSpec { xi: s.rotate_point(spec.xi, 1), ..spec };
        let psi2 = entrance(&moved, &bump, &p).unwrap();
        let lhs = psi2.scale(s.tau(1));
        assert!(lhs.sub(&psi).unwrap().norm_l2() < 1e-12 * psi.norm_l2());
        assert!(act(1, &psi.abs(), &SymmetrySector::new(4, 0).unwrap()).sub(&psi.abs()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn entrance_preconditions() {
        let g = Grid3::new(32, 2.0).unwrap();
        let p = Potentials::from_presets(g, &MagneticPreset::Zero, &ElectricPreset::Constant(1.0), 0.25).unwrap();
        let prof = profile();
        let bump = CutoffBump::new(&prof, 1.0, 0.25).unwrap();
        let axis = EntranceSpec::new([0.0, 0.0, 0.5], 0.25, SymmetrySector::new(3, 1).unwrap(), 1.0).unwrap();
        assert!(matches!(entrance(&axis, &bump, &p), Err(Error::Precondition(_))));
        let close = EntranceSpec::new([0.3, 0.0, 0.0], 0.25, SymmetrySector::new(2, 0).unwrap(), 1.0).unwrap();
        assert!(matches!(entrance(&close, &bump, &p), Err(Error::Precondition(_))));
        let edge = EntranceSpec::new([1.8, 0.0, 0.0], 0.25, SymmetrySector::trivial(), 1.0).unwrap();
        assert!(matches!(entrance(&edge, &bump, &p), Err(Error::Resolution(_))));
    }

    #[test]
    fn trivial_group_single_real_bump() {
        let g = Grid3::new(32, 2.0).unwrap();
        let p = Potentials::from_presets(g, &MagneticPreset::Zero, &ElectricPreset::Constant(1.0), 0.25).unwrap();
        let bump = CutoffBump::new(&profile(), 1.0, 0.25).unwrap();
        let spec = EntranceSpec::new([0.25, 0.0, 0.0], 0.25, SymmetrySector::trivial(), 1.0).unwrap();
        let psi = entrance(&spec, &bump, &p).unwrap();
        assert!(psi.is_real());
        assert_eq!(psi.max_abs_diff(&single_bump(spec.xi, &bump, &p).unwrap()).unwrap(), 0.0);
    }
}
