//! Magnetic energy J_{ε,A,V}, its L² gradient, the Nehari projection and
//! the pointwise/rescaling identities.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coulomb::{hartree_energy_with, hartree_of, CoulombKernel};
use crate::error::{Error, Result};
use crate::field::{divergence, gradient, integrate_real, resample, Grid3, Point, ScalarField, VectorField};

type VecFn = Arc<dyn Fn(Point) -> [f64; 3] + Send + Sync>;
type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MagneticPreset {
    Zero,
    /// A(x₁, x₂, x₃) = (−x₂, x₁, 0).
    Standard,
}

impl MagneticPreset {
    pub fn eval(&self, x: Point) -> [f64; 3] {
        match self {
            MagneticPreset::Zero => [0.0; 3],
            MagneticPreset::Standard => [-x[1], x[0], 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ElectricPreset {
    Constant(f64),
    /// V = v0 + a(|z| − r0)² + b t², with z = (x₁, x₂) and t = x₃.
    RingWell { v0: f64, a: f64, b: f64, r0: f64 },
    /// Expression in `x`, `y`, `z` (Cartesian), `rho` (planar radius) and
    /// `r` (3D radius), evaluated by evalexpr.
    Expression(String),
}

impl ElectricPreset {
    pub fn ring_well_default() -> Self {
        ElectricPreset::RingWell { v0: 1.0, a: 1.0, b: 1.0, r0: 1.0 }
    }

    /// Compiles the preset into a pointwise evaluator.
    pub fn evaluator(&self) -> Result<ScalarFn> {
        Ok(match self.clone() {
            ElectricPreset::Constant(c) => Arc::new(move |_| c),
            ElectricPreset::RingWell { v0, a, b, r0 } => Arc::new(move |x: Point| {
                let rho = x[0].hypot(x[1]);
                v0 + a * (rho - r0).powi(2) + b * x[2] * x[2]
            }),
            ElectricPreset::Expression(src) => {
                let tree = evalexpr::build_operator_tree(&src).map_err(|e| Error::Config {
                    key: "potential.expr".into(),
                    msg: e.to_string(),
                })?;
                let probe = eval_expr(&tree, [0.1, 0.2, 0.3]);
                if let Err(msg) = probe {
                    return Err(Error::Config { key: "potential.expr".into(), msg });
                }
                Arc::new(move |x: Point| eval_expr(&tree, x).unwrap_or(f64::NAN))
            }
        })
    }
}

fn eval_expr(tree: &evalexpr::Node, x: Point) -> std::result::Result<f64, String> {
    use evalexpr::{ContextWithMutableVariables, HashMapContext, Value};
    let mut ctx = HashMapContext::new();
    let vars = [
        ("x", x[0]),
        ("y", x[1]),
        ("z", x[2]),
        ("rho", x[0].hypot(x[1])),
        ("r", (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()),
    ];
    for (k, v) in vars {
        ctx.set_value(k.into(), Value::Float(v)).map_err(|e| e.to_string())?;
    }
    match tree.eval_with_context(&ctx).map_err(|e| e.to_string())? {
        Value::Float(f) => Ok(f),
        Value::Int(i) => Ok(i as f64),
        other => Err(format!("expression must be numeric, got {other:?}")),
    }
}

/// A, V and ε on a grid. Analytic evaluators are kept when the potentials
/// came from presets, so off-grid values need no interpolation.
#[derive(Clone)]
pub struct Potentials {
    a: VectorField,
    v: ScalarField,
    epsilon: f64,
    a_fn: Option<VecFn>,
    v_fn: Option<ScalarFn>,
}

impl fmt::Debug for Potentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potentials")
            .field("grid", self.grid())
            .field("epsilon", &self.epsilon)
            .field("analytic", &(self.a_fn.is_some() && self.v_fn.is_some()))
            .finish()
    }
}

impl Potentials {
    pub fn new(a: VectorField, v: ScalarField, epsilon: f64) -> Result<Self> {
        if a.grid() != v.grid() {
            return Err(Error::GridMismatch);
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        if !v.is_real() {
            return Err(Error::InvalidArgument("V must be real".into()));
        }
        if let Some(bad) = v.values().iter().find(|x| !(x.re > 0.0) || !x.re.is_finite()) {
            return Err(Error::InvalidArgument(format!("V must be positive and finite, found {}", bad.re)));
        }
        if a.components().iter().any(|c| !c.is_real() || c.values().iter().any(|x| !x.re.is_finite())) {
            return Err(Error::InvalidArgument("A must be real and finite".into()));
        }
        Ok(Potentials { a, v, epsilon, a_fn: None, v_fn: None })
    }

    pub fn from_presets(grid: Grid3, a: &MagneticPreset, v: &ElectricPreset, epsilon: f64) -> Result<Self> {
        let ap = a.clone();
        let a_fn: VecFn = Arc::new(move |x| ap.eval(x));
        let v_fn = v.evaluator()?;
        Self::from_fns(grid, a_fn, v_fn, epsilon)
    }

    pub fn from_fns(grid: Grid3, a_fn: VecFn, v_fn: ScalarFn, epsilon: f64) -> Result<Self> {
        let af = a_fn.clone();
        let vf = v_fn.clone();
        let a = VectorField::from_real_fn(grid, move |x| af(x));
        let v = ScalarField::from_real_fn(grid, move |x| vf(x));
        let mut p = Self::new(a, v, epsilon)?;
        p.a_fn = Some(a_fn);
        p.v_fn = Some(v_fn);
        Ok(p)
    }

    /// The same potentials sampled on `grid`: exact for analytic potentials,
    /// trigonometric interpolation otherwise (grid must be at least as fine).
    pub fn on_grid(&self, grid: Grid3) -> Result<Self> {
        if grid == *self.grid() {
            return Ok(self.clone());
        }
        match (&self.a_fn, &self.v_fn) {
            (Some(a), Some(v)) => Self::from_fns(grid, a.clone(), v.clone(), self.epsilon),
            _ => {
                if grid.half_length() != self.grid().half_length() {
                    return Err(Error::GridMismatch);
                }
                let n = grid.n();
                let comps = self.a.components().clone().map(|c| resample(&c, n));
                let [ax, ay, az] = comps;
                let a = VectorField::new([ax?, ay?, az?])?;
                Self::new(a, resample(&self.v, n)?, self.epsilon)
            }
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut p = self.clone();
        p.epsilon = epsilon;
        Ok(p)
    }

    pub fn grid(&self) -> &Grid3 {
        self.v.grid()
    }
    pub fn magnetic(&self) -> &VectorField {
        &self.a
    }
    pub fn electric(&self) -> &ScalarField {
        &self.v
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn analytic_magnetic(&self) -> Option<&VecFn> {
        self.a_fn.as_ref()
    }
    pub fn analytic_electric(&self) -> Option<&ScalarFn> {
        self.v_fn.as_ref()
    }

    /// A at an arbitrary point: analytic when known, else trigonometric
    /// interpolation of the samples.
    pub fn magnetic_at(&self, x: Point) -> [f64; 3] {
        match &self.a_fn {
            Some(f) => f(x),
            None => [0, 1, 2].map(|c| self.a.component(c).interpolate(x).re),
        }
    }

    pub fn electric_at(&self, x: Point) -> f64 {
        match &self.v_fn {
            Some(f) => f(x),
            None => self.v.interpolate(x).re,
        }
    }

    pub fn min_electric(&self) -> f64 {
        self.v.values().iter().fold(f64::INFINITY, |m, v| m.min(v.re))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic_magnetic: f64,
    pub potential: f64,
    pub hartree: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn norm_sq(&self) -> f64 {
        self.kinetic_magnetic + self.potential
    }
}

fn check(u: &ScalarField, p: &Potentials) -> Result<()> {
    if u.grid() != p.grid() {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// ∇_{ε,A}u = ε∇u + iAu.
pub fn covariant_gradient(u: &ScalarField, p: &Potentials) -> Result<VectorField> {
    check(u, p)?;
    let eps = p.epsilon;
    let g = gradient(u);
    let comps = g.into_components();
    let mut out = Vec::with_capacity(3);
    for (c, d) in comps.into_iter().enumerate() {
        let a = p.a.component(c).values();
        let vals: Vec<Complex64> = d
            .values()
            .iter()
            .zip(u.values())
            .zip(a)
            .map(|((dv, uv), av)| dv * eps + Complex64::new(0.0, av.re) * uv)
            .collect();
        out.push(ScalarField::from_values(*u.grid(), vals)?);
    }
    let [a, b, c]: [ScalarField; 3] = out.try_into().unwrap();
    VectorField::new([a, b, c])
}

fn kinetic_of(cg: &VectorField) -> f64 {
    let s: Vec<f64> = cg.pointwise_norm().iter().map(|v| v * v).collect();
    integrate_real(cg.grid(), &s)
}

fn potential_of(u: &ScalarField, p: &Potentials) -> f64 {
    let s: Vec<f64> = u.values().iter().zip(p.v.values()).map(|(a, v)| a.norm_sqr() * v.re).collect();
    integrate_real(u.grid(), &s)
}

/// ‖u‖²_{ε,A,V}, always from the quadratic form.
pub fn norm_sq(u: &ScalarField, p: &Potentials) -> Result<f64> {
    let cg = covariant_gradient(u, p)?;
    Ok(kinetic_of(&cg) + potential_of(u, p))
}

fn breakdown(kin: f64, pot: f64, hart: f64, eps: f64) -> EnergyBreakdown {
    EnergyBreakdown {
        kinetic_magnetic: kin,
        potential: pot,
        hartree: hart,
        total: 0.5 * (kin + pot) - hart / (4.0 * eps * eps),
    }
}

pub fn energy(u: &ScalarField, p: &Potentials, kernel: &CoulombKernel) -> Result<EnergyBreakdown> {
    check(u, p)?;
    if u.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    let cg = covariant_gradient(u, p)?;
    let phi = hartree_of(u, kernel);
    Ok(breakdown(kinetic_of(&cg), potential_of(u, p), hartree_energy_with(u, &phi), p.epsilon))
}

/// Energy and L² gradient sharing one covariant gradient and one Coulomb
/// convolution.
pub fn energy_and_residual(
    u: &ScalarField,
    p: &Potentials,
    kernel: &CoulombKernel,
) -> Result<(EnergyBreakdown, ScalarField)> {
    let parts = evaluate_parts(u, p, kernel)?;
    let r = parts.residual(1.0, p.epsilon)?;
    Ok((parts.e, r))
}

/// Energy breakdown with Hu = (−εi∇+A)²u + Vu and Φu = (1/|x| ∗ |u|²)u kept
/// apart, so that the residual at any multiple tu is available without
/// re-evaluation.
pub(crate) struct Parts {
    pub e: EnergyBreakdown,
    pub hu: ScalarField,
    pub phi_u: ScalarField,
}

impl Parts {
    /// Residual at tu: tHu − t³ε⁻²Φu.
    pub fn residual(&self, t: f64, eps: f64) -> Result<ScalarField> {
        let c = t * t * t / (eps * eps);
        let vals = self.hu.values().iter().zip(self.phi_u.values()).map(|(h, f)| h * t - f * c).collect();
        ScalarField::from_values(*self.hu.grid(), vals)
    }

    /// The parts at tu.
    pub fn scaled(&self, t: f64, eps: f64) -> Parts {
        Parts {
            e: breakdown(
                self.e.kinetic_magnetic * t * t,
                self.e.potential * t * t,
                self.e.hartree * t.powi(4),
                eps,
            ),
            hu: self.hu.scale_real(t),
            phi_u: self.phi_u.scale_real(t * t * t),
        }
    }
}

pub(crate) fn evaluate_parts(u: &ScalarField, p: &Potentials, kernel: &CoulombKernel) -> Result<Parts> {
    check(u, p)?;
    if u.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    let cg = covariant_gradient(u, p)?;
    let phi = hartree_of(u, kernel);
    let e = breakdown(kinetic_of(&cg), potential_of(u, p), hartree_energy_with(u, &phi), p.epsilon);
    let mo = magnetic_operator_from(&cg, p)?;
    let hu: Vec<Complex64> =
        mo.values().iter().zip(u.values()).zip(p.v.values()).map(|((h, a), v)| h + a * v.re).collect();
    let phi_u: Vec<Complex64> = u.values().iter().zip(&phi).map(|(a, f)| a * f).collect();
    Ok(Parts { e, hu: ScalarField::from_values(*u.grid(), hu)?, phi_u: ScalarField::from_values(*u.grid(), phi_u)? })
}

/// (−εi∇ + A)²u in divergence form, −ε∇·w − iA·w with w = ∇_{ε,A}u, the
/// exact adjoint of the discrete quadratic form.
fn magnetic_operator_from(cg: &VectorField, p: &Potentials) -> Result<ScalarField> {
    let eps = p.epsilon;
    let div = divergence(cg);
    let n = cg.grid().len();
    let mut vals = Vec::with_capacity(n);
    for idx in 0..n {
        let mut aw = Complex64::default();
        for c in 0..3 {
            aw += cg.component(c).values()[idx] * p.a.component(c).values()[idx].re;
        }
        vals.push(-div.values()[idx] * eps - Complex64::new(0.0, 1.0) * aw);
    }
    ScalarField::from_values(*cg.grid(), vals)
}

/// (−εi∇ + A)²u + Vu.
pub fn linear_operator(u: &ScalarField, p: &Potentials) -> Result<ScalarField> {
    let cg = covariant_gradient(u, p)?;
    let hu = magnetic_operator_from(&cg, p)?;
    let vals = hu.values().iter().zip(u.values()).zip(p.v.values()).map(|((h, a), v)| h + a * v.re).collect();
    ScalarField::from_values(*u.grid(), vals)
}

/// (−εi∇+A)²u + Vu − ε⁻²(1/|x| ∗ |u|²)u.
pub fn euler_lagrange_residual(u: &ScalarField, p: &Potentials, kernel: &CoulombKernel) -> Result<ScalarField> {
    Ok(energy_and_residual(u, p, kernel)?.1)
}

/// Radial projection onto the Nehari manifold ε²‖w‖² = D(w).
pub fn nehari_project(u: &ScalarField, p: &Potentials, kernel: &CoulombKernel) -> Result<ScalarField> {
    if u.is_zero() {
        return Err(Error::Degenerate("cannot project the zero field".into()));
    }
    let e = energy(u, p, kernel)?;
    project_with(u, &e, p.epsilon)
}

pub(crate) fn project_with(u: &ScalarField, e: &EnergyBreakdown, eps: f64) -> Result<ScalarField> {
    if !(e.hartree >= 1e-300) {
        return Err(Error::Degenerate(format!("D(u) = {:e} too small to project", e.hartree)));
    }
    let t = eps * e.norm_sq().sqrt() / e.hartree.sqrt();
    Ok(u.scale_real(t))
}

/// |ε²‖u‖² − D(u)| / D(u).
pub fn nehari_residual(e: &EnergyBreakdown, eps: f64) -> f64 {
    (eps * eps * e.norm_sq() - e.hartree).abs() / e.hartree
}

/// J(π(u)) = ε²‖u‖⁴ / (4D(u)).
pub fn projected_energy(e: &EnergyBreakdown, eps: f64) -> f64 {
    eps * eps * e.norm_sq().powi(2) / (4.0 * e.hartree)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamagneticReport {
    pub violations: usize,
    pub max_gap: f64,
    pub tolerance: f64,
}

/// Pointwise ε|∇|u|| ≤ |ε∇u + iAu| with tolerance 4h·max|A|·max|u|.
pub fn diamagnetic_check(u: &ScalarField, p: &Potentials) -> Result<DiamagneticReport> {
    check(u, p)?;
    let h = u.grid().spacing();
    let lhs = gradient(&u.abs()).pointwise_norm();
    let rhs = covariant_gradient(u, p)?.pointwise_norm();
    let scale = rhs.iter().fold(0.0f64, |a, &b| a.max(b));
    // The round-off floor only matters when A = 0.
    let tol = 4.0 * h * p.a.max_abs() * u.max_abs() + 1e-12 * scale;
    let mut violations = 0;
    let mut max_gap = f64::NEG_INFINITY;
    for (l, r) in lhs.iter().zip(&rhs) {
        let gap = p.epsilon * l - r;
        max_gap = max_gap.max(gap);
        if gap > tol {
            violations += 1;
        }
    }
    Ok(DiamagneticReport { violations, max_gap, tolerance: tol })
}

/// Boundary/peak ratio above which fields are considered unresolved by the box.
pub const BOUNDARY_DECAY_TOL: f64 = 1e-6;

/// (ε⁻³J_{ε,A,V}(u), J_{1,A_ε,V_ε}(u_ε)) with u_ε(x) = u(εx) sampled on the
/// box [−L/ε, L/ε)³ using the same node values.
pub fn rescale_identity_check(u: &ScalarField, p: &Potentials, kernel: &CoulombKernel) -> Result<(f64, f64)> {
    check(u, p)?;
    let ratio = u.boundary_ratio();
    if ratio > BOUNDARY_DECAY_TOL {
        return Err(Error::Resolution(format!("boundary/peak ratio {ratio:e} exceeds {BOUNDARY_DECAY_TOL:e}")));
    }
    let eps = p.epsilon;
    let lhs = energy(u, p, kernel)?.total / eps.powi(3);
    let g = *u.grid();
    let g2 = Grid3::new(g.n(), g.half_length() / eps)?;
    let u2 = ScalarField::from_values(g2, u.values().to_vec())?;
    let comps = p.a.components().clone().map(|c| {
        ScalarField::from_real_values(g2, c.re()).expect("same length")
    });
    let a2 = VectorField::new(comps)?;
    let v2 = ScalarField::from_real_values(g2, p.v.re())?;
    let p2 = Potentials::new(a2, v2, 1.0)?;
    let k2 = CoulombKernel::with_hls_constant(g2, kernel.hls_constant());
    let rhs = energy(&u2, &p2, &k2)?.total;
    Ok((lhs, rhs))
}
