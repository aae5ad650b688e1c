//! Minimization of J_{ε,A,V} on the Nehari manifold inside a τ-equivariant
//! sector, multistart over M_τ and deduplication modulo a global phase.
//!
//! The iteration descends F(u) = J(π(u)), which is invariant under
//! u ↦ tu and whose L² gradient on the Nehari manifold is the residual
//! of the Euler–Lagrange equation. Directions are preconditioned by
//! P = −ε²Δ + c and each trial point is retracted by symmetrize and π.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{entrance, CutoffBump, EntranceSpec, DEFAULT_CUTOFF_EXPONENT};
use crate::coulomb::CoulombKernel;
use crate::error::{Error, Result};
use crate::field::{apply_multiplier, Point, ScalarField};
use crate::groundstate::{RadialProfile, GOLDEN_E1};
use crate::magnetic::{evaluate_parts, linear_operator, nehari_residual, Parts, Potentials};
use crate::par::map_range;
use crate::symmetry::{
    components, ell_and_mtau, equivariance_defect, orbit_info, orbit_points, symmetrize, OrbitInfo, SymmetrySector,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    Fixed,
    AdaptiveBb,
    /// Limited-memory BFGS with P⁻¹ as the initial inverse Hessian.
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop when ε⁻³‖∇_N J‖²_{ε,A,V} < tol_grad.
    pub tol_grad: f64,
    pub max_iter: usize,
    pub step_rule: StepRule,
    /// Initial step, and the step of the fixed rule.
    pub step: f64,
    pub sweep: Vec<f64>,
    /// Relative residual for the conjugate-gradient solves with H.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub dedup_tol: f64,
    /// Half-width δ of the energy window; `None` means 0.1·E₁.
    pub window: Option<f64>,
    /// Random start perturbations per seed.
    pub perturbations: usize,
    pub seed: u64,
    pub cutoff_exponent: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_grad: 1e-6,
            max_iter: 3000,
            step_rule: StepRule::Lbfgs,
            step: 1.0,
            sweep: vec![0.4, 0.2, 0.1],
            cg_tol: 1e-6,
            cg_max_iter: 200,
            dedup_tol: 1e-2,
            window: None,
            perturbations: 3,
            seed: 0,
            cutoff_exponent: DEFAULT_CUTOFF_EXPONENT,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_grad > 0.0) {
            return Err(Error::InvalidArgument("tol_grad must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.step > 0.0) || !(self.cg_tol > 0.0) || !(self.dedup_tol > 0.0) {
            return Err(Error::InvalidArgument("step, cg_tol and dedup_tol must be positive".into()));
        }
        if self.sweep.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidArgument("sweep values must be positive".into()));
        }
        Ok(())
    }

    pub fn window_delta(&self) -> f64 {
        self.window.unwrap_or(0.1 * GOLDEN_E1)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: ScalarField,
    /// ε⁻³J.
    pub energy_scaled: f64,
    pub nehari_residual: f64,
    /// ε⁻³‖∇_N J‖²_{ε,A,V} at the last certification.
    pub grad_norm_scaled: f64,
    /// ¼∫(1/|x| ∗ |u|²)|u|².
    pub hartree_window: f64,
    pub sector: SymmetrySector,
    pub epsilon: f64,
    pub orbit: Option<OrbitInfo>,
    pub iterations: usize,
    pub converged: bool,
    pub energy_history: Vec<f64>,
    /// Largest equivariance defect seen at the monitored iterates.
    pub equivariance_defect: f64,
    pub seed: Option<usize>,
    pub in_window: Option<bool>,
    pub ps_safe: Option<bool>,
}

/// The scalar part of a [`SolveResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub epsilon: f64,
    pub m: u32,
    pub j: u32,
    pub energy_scaled: f64,
    pub nehari_residual: f64,
    pub grad_norm_scaled: f64,
    pub hartree_window: f64,
    pub iterations: usize,
    pub converged: bool,
    pub equivariance_defect: f64,
    pub seed: Option<usize>,
    pub in_window: Option<bool>,
    pub ps_safe: Option<bool>,
    pub orbit: Option<OrbitInfo>,
}

impl SolveResult {
    pub fn record(&self) -> SolveRecord {
        SolveRecord {
            epsilon: self.epsilon,
            m: self.sector.m(),
            j: self.sector.j(),
            energy_scaled: self.energy_scaled,
            nehari_residual: self.nehari_residual,
            grad_norm_scaled: self.grad_norm_scaled,
            hartree_window: self.hartree_window,
            iterations: self.iterations,
            converged: self.converged,
            equivariance_defect: self.equivariance_defect,
            seed: self.seed,
            in_window: self.in_window,
            ps_safe: self.ps_safe,
            orbit: self.orbit,
        }
    }

    /// ε⁻⁵·hartree_window, equal to energy_scaled on the Nehari manifold.
    pub fn window_value(&self) -> f64 {
        self.hartree_window / self.epsilon.powi(5)
    }
}

fn re_inner(a: &ScalarField, b: &ScalarField) -> f64 {
    a.inner(b).expect("same grid").re
}

/// P⁻¹ = (ε²|k|² + c)⁻¹.
#[derive(Debug, Clone, Copy)]
struct Preconditioner {
    eps: f64,
    shift: f64,
}

impl Preconditioner {
    /// c is the |u|²-weighted mean of V + |A|², the local size of H.
    fn for_field(u: &ScalarField, p: &Potentials) -> Self {
        let a = p.magnetic();
        let mut num = 0.0;
        let mut den = 0.0;
        for (idx, uv) in u.values().iter().enumerate() {
            let w = uv.norm_sqr();
            let a2: f64 = (0..3).map(|c| a.component(c).values()[idx].re.powi(2)).sum();
            num += w * (p.electric().values()[idx].re + a2);
            den += w;
        }
        let shift = if den > 0.0 { num / den } else { p.min_electric() };
        Preconditioner { eps: p.epsilon(), shift: shift.max(p.min_electric()) }
    }

    fn multiplier(&self, u: &ScalarField, inverse: bool) -> ScalarField {
        let g = *u.grid();
        let e2 = self.eps * self.eps;
        let c = self.shift;
        let vals = apply_multiplier(u, |a, b, d| {
            let k2 = g.wavenumber(a).powi(2) + g.wavenumber(b).powi(2) + g.wavenumber(d).powi(2);
            let m = e2 * k2 + c;
            Complex64::new(if inverse { 1.0 / m } else { m }, 0.0)
        });
        ScalarField::from_values(g, vals).expect("same length")
    }

    fn solve(&self, u: &ScalarField) -> ScalarField {
        self.multiplier(u, true)
    }

    fn apply(&self, u: &ScalarField) -> ScalarField {
        self.multiplier(u, false)
    }
}

/// Preconditioned conjugate gradients for Hx = b in Re⟨·,·⟩.
fn solve_h(
    b: &ScalarField,
    p: &Potentials,
    pre: &Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<(ScalarField, f64)> {
    let bnorm = b.norm_l2();
    let mut x = ScalarField::zeros(*b.grid());
    if bnorm == 0.0 {
        return Ok((x, 0.0));
    }
    let mut r = b.clone();
    let mut z = pre.solve(&r);
    let mut d = z.clone();
    let mut rz = re_inner(&r, &z);
    let mut rel = 1.0;
    for _ in 0..max_iter {
                let hd = linear_operator(&d, p)?;
        let curv = re_inner(&d, &hd);
        if !(curv > 0.0) {
            return Err(Error::Degenerate("operator lost positivity in conjugate gradients".into()));
        }
        let alpha = rz / curv;
        x = x.axpy(Complex64::new(alpha, 0.0), &d)?;
        r = r.axpy(Complex64::new(-alpha, 0.0), &hd)?;
        rel = r.norm_l2() / bnorm;
        if rel <= tol {
            return Ok((x, rel));
        }
        z = pre.solve(&r);
        let rz_new = re_inner(&r, &z);
        d = z.axpy(Complex64::new(rz_new / rz, 0.0), &d)?;
        rz = rz_new;
    }
    Ok((x, rel))
}

/// A point on the Nehari manifold with its residual.
struct State {
    u: ScalarField,
    parts: Parts,
    r: ScalarField,
}

impl State {
    fn energy(&self) -> f64 {
        self.parts.e.total
    }
}

/// L²-orthogonal projection onto the τ-equivariant subspace. On a periodic
/// box a linear A is equivariant only up to the boundary nodes, so the full
/// residual can carry a small component outside the sector.
fn sector_part(f: &ScalarField, s: &SymmetrySector) -> ScalarField {
    if s.m() == 1 {
        f.clone()
    } else {
        symmetrize(f, s)
    }
}

fn retract(w: &ScalarField, p: &Potentials, s: &SymmetrySector, kernel: &CoulombKernel) -> Result<State> {
    let ws = if s.m() == 1 { w.clone() } else { symmetrize(w, s) };
    let norm = ws.norm_l2();
    if !(norm > 1e-12 * w.norm_l2()) || norm == 0.0 {
        return Err(Error::Degenerate("symmetrization annihilates start".into()));
    }
    let parts = evaluate_parts(&ws, p, kernel)?;
    if !(parts.e.hartree > 1e-300) {
        return Err(Error::Degenerate("field has no Coulomb energy".into()));
    }
    let eps = p.epsilon();
    let t = eps * parts.e.norm_sq().sqrt() / parts.e.hartree.sqrt();
    let parts = parts.scaled(t, eps);
    let r = sector_part(&parts.residual(1.0, eps)?, s);
    Ok(State { u: ws.scale_real(t), parts, r })
}

#[derive(Debug, Clone)]
pub struct TangentGradient {
    pub field: ScalarField,
    /// ε⁻³‖∇_N J‖²_{ε,A,V}.
    pub norm_sq_scaled: f64,
    /// |⟨∇_N J, ∇g⟩_{ε,A,V}| relative to the norms of the two vectors.
    pub orthogonality: f64,
    pub cg_residual: f64,
}

fn tangent_from_parts(
    parts: &Parts,
    r: &ScalarField,
    p: &Potentials,
    s: &SymmetrySector,
    pre: &Preconditioner,
    opts: &SolveOptions,
) -> Result<TangentGradient> {
    let eps = p.epsilon();
    // x is the metric gradient of J and y that of the constraint
    // g(u) = ε²‖u‖² − D(u), whose L² gradient is 2ε²Hu − 4Φu; both are
    // taken within the sector.
    let (x, cg_x) = solve_h(r, p, pre, opts.cg_tol, opts.cg_max_iter)?;
    let x = sector_part(&x, s);
    let gprime = sector_part(
        &parts.hu.scale_real(2.0 * eps * eps).axpy(Complex64::new(-4.0, 0.0), &parts.phi_u)?,
        s,
    );
    let (y, cg_y) = solve_h(&gprime, p, pre, opts.cg_tol, opts.cg_max_iter)?;
    let y = sector_part(&y, s);
    let xy = re_inner(&x, &gprime);
    let yy = re_inner(&y, &gprime);
    let xx = re_inner(&x, r);
    let coef = if yy > 0.0 { xy / yy } else { 0.0 };
    let t = x.axpy(Complex64::new(-coef, 0.0), &y)?;
    let tt = (xx - 2.0 * coef * xy + coef * coef * yy).max(0.0);
    let ortho = re_inner(&t, &gprime).abs() / (tt.sqrt() * yy.max(0.0).sqrt()).max(1e-300);
    Ok(TangentGradient {
        field: t,
        norm_sq_scaled: tt / eps.powi(3),
        orthogonality: ortho,
        cg_residual: cg_x.max(cg_y),
    })
}

/// H-orthogonal projection of the metric gradient of J onto the tangent
/// space of the Nehari manifold at u.
pub fn tangent_gradient(
    u: &ScalarField,
    p: &Potentials,
    s: &SymmetrySector,
    kernel: &CoulombKernel,
    opts: &SolveOptions,
) -> Result<TangentGradient> {
    let parts = evaluate_parts(u, p, kernel)?;
    let nr = nehari_residual(&parts.e, p.epsilon());
    if !(nr <= 1e-6) {
        return Err(Error::Precondition(format!("field is off the Nehari manifold (residual {nr:e})")));
    }
    let r = sector_part(&parts.residual(1.0, p.epsilon())?, s);
    let pre = Preconditioner::for_field(u, p);
    tangent_from_parts(&parts, &r, p, s, &pre, opts)
}

/// Equivariance is sampled every this many iterations.
const MONITOR_EVERY: usize = 50;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;

const LBFGS_MEMORY: usize = 6;

/// Two-loop recursion; the initial inverse Hessian is γP⁻¹ with the usual
/// scaling from the newest pair.
fn lbfgs_direction(
    r: &ScalarField,
    memory: &VecDeque<(ScalarField, ScalarField, f64)>,
    pre: &Preconditioner,
) -> Result<ScalarField> {
    let mut q = r.clone();
    let mut coef = Vec::with_capacity(memory.len());
    for (sv, yv, sy) in memory.iter().rev() {
        let a = re_inner(sv, &q) / sy;
        q = q.axpy(Complex64::new(-a, 0.0), yv)?;
        coef.push(a);
    }
    let mut d = pre.solve(&q);
    if let Some((_, yv, sy)) = memory.back() {
        let yhy = re_inner(yv, &pre.solve(yv));
        if yhy > 0.0 {
            d = d.scale_real(sy / yhy);
        }
    }
    for ((sv, yv, sy), a) in memory.iter().zip(coef.iter().rev()) {
        let b = re_inner(yv, &d) / sy;
        d = d.axpy(Complex64::new(a - b, 0.0), sv)?;
    }
    Ok(d)
}

/// Projected descent from `start` within the sector `s`.
pub fn minimize(
    start: &ScalarField,
    p: &Potentials,
    s: &SymmetrySector,
    kernel: &CoulombKernel,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    if start.is_zero() {
        return Err(Error::Degenerate("start field is zero".into()));
    }
    let eps = p.epsilon();
    let scale = eps.powi(3);
    let mut cur = retract(start, p, s, kernel)?;
    let pre = Preconditioner::for_field(&cur.u, p);
    let mut history = vec![cur.energy() / scale];
    let mut eq_defect = equivariance_defect(&cur.u, s);
    let mut prev: Option<(ScalarField, ScalarField)> = None;
    let mut memory: VecDeque<(ScalarField, ScalarField, f64)> = VecDeque::new();
    let mut alpha_last = opts.step;
    let mut next_check = opts.tol_grad;
    let mut grad;
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let z = pre.solve(&cur.r);
        let proxy = re_inner(&cur.r, &z) / scale;
        if proxy <= next_check || iterations >= opts.max_iter {
            let tg = tangent_from_parts(&cur.parts, &cur.r, p, s, &pre, opts)?;
            grad = tg.norm_sq_scaled;
            if grad < opts.tol_grad {
                converged = true;
                break;
            }
            if iterations >= opts.max_iter {
                break;
            }
            next_check = proxy * 0.25;
        }
        if let Some((up, rp)) = &prev {
            let sdir = cur.u.sub(up)?;
            let ydir = cur.r.sub(rp)?;
            let sy = re_inner(&sdir, &ydir);
            if opts.step_rule == StepRule::Lbfgs && sy > 0.0 {
                if memory.len() == LBFGS_MEMORY {
                    memory.pop_front();
                }
                memory.push_back((sdir, ydir, sy));
            }
        }
        let (dir, alpha0) = match opts.step_rule {
            StepRule::Fixed => (z, opts.step),
            StepRule::AdaptiveBb => {
                let a = match &prev {
                    None => alpha_last,
                    Some((up, rp)) => {
                        let sdir = cur.u.sub(up)?;
                        let sy = re_inner(&sdir, &cur.r.sub(rp)?);
                        let sps = re_inner(&sdir, &pre.apply(&sdir));
                        if sy > 0.0 && sps > 0.0 {
                            (sps / sy).clamp(1e-3 * opts.step, 1e3 * opts.step)
                        } else {
                            (2.0 * alpha_last).min(1e3 * opts.step)
                        }
                    }
                };
                (z, a)
            }
            StepRule::Lbfgs => {
                let d = lbfgs_direction(&cur.r, &memory, &pre)?;
                if re_inner(&cur.r, &d) > 0.0 {
                    (d, if memory.is_empty() { opts.step } else { 1.0 })
                } else {
                    memory.clear();
                    (z, opts.step)
                }
            }
        };
        let gp = re_inner(&cur.r, &dir);
        let mut alpha = alpha0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let w = cur.u.axpy(Complex64::new(-alpha, 0.0), &dir)?;
            let cand = retract(&w, p, s, kernel)?;
            let dj = cand.energy() - cur.energy();
            if dj <= -ARMIJO * alpha * gp {
                accepted = Some(cand);
                break;
            }
            // Minimizer of the quadratic through J(0), J'(0) = −gp and J(α).
            let q = gp * alpha * alpha / (2.0 * (dj + gp * alpha));
            alpha = if q.is_finite() && q > 0.0 { q.clamp(0.1 * alpha, 0.5 * alpha) } else { 0.5 * alpha };
        }
        iterations += 1;
        match accepted {
            Some(next) => {
                prev = Some((cur.u, cur.r));
                cur = next;
                alpha_last = alpha;
                history.push(cur.energy() / scale);
                if iterations % MONITOR_EVERY == 0 {
                    eq_defect = eq_defect.max(equivariance_defect(&cur.u, s));
                }
            }
            None => {
                // No decrease left above round-off: certify where we stand.
                let tg = tangent_from_parts(&cur.parts, &cur.r, p, s, &pre, opts)?;
                grad = tg.norm_sq_scaled;
                converged = grad < opts.tol_grad;
                break;
            }
        }
    }
    eq_defect = eq_defect.max(equivariance_defect(&cur.u, s));
    let e = cur.parts.e;
    Ok(SolveResult {
        energy_scaled: e.total / scale,
        nehari_residual: nehari_residual(&e, eps),
        grad_norm_scaled: grad,
        hartree_window: 0.25 * e.hartree,
        sector: *s,
        epsilon: eps,
        orbit: None,
        iterations,
        converged,
        energy_history: history,
        equivariance_defect: eq_defect,
        seed: None,
        in_window: None,
        ps_safe: None,
        u: cur.u,
    })
}

/// ‖e^{iθ*}u − v‖/‖v‖ with θ* = arg⟨u, v⟩.
pub fn phase_aligned_distance(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    if u.is_zero() || v.is_zero() {
        return Err(Error::InvalidArgument("geometric distinctness needs nonzero fields".into()));
    }
    let c = u.inner(v)?;
    let rot = if c.norm() > 0.0 { c / c.norm() } else { Complex64::new(1.0, 0.0) };
    Ok(u.scale(rot).sub(v)?.norm_l2() / v.norm_l2())
}

pub fn geometrically_distinct(u: &ScalarField, v: &ScalarField, tol: f64) -> Result<bool> {
    Ok(phase_aligned_distance(u, v)? > tol)
}

/// Box stand-in for min(#Gx)·V_∞^{3/2}·E₁, with V_∞ the smallest value of V
/// on the faces of the box.
pub fn ps_threshold(p: &Potentials, s: &SymmetrySector) -> f64 {
    let g = p.grid();
    let n = g.n();
    let mut vmin = f64::INFINITY;
    let mut card = s.m();
    for idx in 0..g.len() {
        let (i, j, k) = g.unindex(idx);
        if [i, j, k].iter().any(|&a| a == 0 || a == n - 1) {
            vmin = vmin.min(p.electric().values()[idx].re);
        }
        card = card.min(orbit_info(g.point(idx), s, g.spacing() / 2.0).cardinality);
    }
    card as f64 * vmin.powf(1.5) * GOLDEN_E1
}

#[derive(Debug, Clone)]
pub struct MultistartReport {
    /// Geometrically distinct results in seed order.
    pub results: Vec<SolveResult>,
    /// (seed index, index in `results` it duplicated).
    pub duplicates: Vec<(usize, usize)>,
    /// (seed index, error message).
    pub failures: Vec<(usize, String)>,
    pub target: f64,
    pub ps_threshold: f64,
}

/// One start point per connected component of M_τ/G (nodes linked within 2h),
/// the lowest (#Gx)V^{3/2} in each, ties to the first node. Also returns ℓ.
pub fn default_seeds(p: &Potentials, s: &SymmetrySector) -> Result<(Vec<Point>, f64)> {
    let rep = ell_and_mtau(p.electric(), s, None)?;
    let pts: Vec<Point> = rep.m_tau.iter().map(|q| q.point()).collect();
    let mut seeds = Vec::new();
    for comp in components(&pts, 2.0 * p.grid().spacing()) {
        let best = comp
            .iter()
            .map(|c| {
                let q = rep.m_tau.iter().find(|q| q.point() == *c).expect("component point from m_tau");
                (*c, q.value)
            })
            .fold(None, |acc: Option<(Point, f64)>, (c, v)| match acc {
                Some((_, bv)) if bv <= v => acc,
                _ => Some((c, v)),
            });
        if let Some((c, _)) = best {
            // Components that are images of one another give the same start.
            let h = p.grid().spacing();
            let seen = seeds.iter().any(|q: &Point| {
                orbit_points(*q, s, h / 2.0)
                    .iter()
                    .any(|y| (0..3).map(|k| (y[k] - c[k]).powi(2)).sum::<f64>() <= (2.0 * h).powi(2))
            });
            if !seen {
                seeds.push(c);
            }
        }
    }
    Ok((seeds, rep.ell))
}

/// Starting points: each seed followed by its random perturbations.
pub fn expand_seeds(seeds: &[Point], opts: &SolveOptions, spacing: f64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(seeds.len() * (1 + opts.perturbations));
    for x in seeds {
        out.push(*x);
        for _ in 0..opts.perturbations {
            let d: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(-2.0..2.0) * spacing);
            out.push([x[0] + d[0], x[1] + d[1], x[2] + d[2]]);
        }
    }
    out
}

/// Runs [`minimize`] from the entrance field of every start point and keeps
/// the geometrically distinct results. `ell` is ℓ_{G,V}.
pub fn multistart(
    p: &Potentials,
    s: &SymmetrySector,
    kernel: &CoulombKernel,
    opts: &SolveOptions,
    seeds: &[Point],
    profile: &RadialProfile,
    ell: f64,
) -> Result<MultistartReport> {
    opts.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("multistart needs at least one seed".into()));
    }
    let starts = expand_seeds(seeds, opts, p.grid().spacing());
    let outcomes: Vec<Result<SolveResult>> = map_range(starts.len(), |i| {
        let spec = EntranceSpec::at(starts[i], *s, p)?;
        let bump = CutoffBump::with_exponent(profile, spec.lambda, spec.epsilon, opts.cutoff_exponent)?;
        let psi = entrance(&spec, &bump, p)?;
        let mut r = minimize(&psi, p, s, kernel, opts)?;
        r.seed = Some(i);
        Ok(r)
    });
    let target = ell * GOLDEN_E1;
    let threshold = ps_threshold(p, s);
    let delta = opts.window_delta();
    let mut report = MultistartReport {
        results: Vec::new(),
        duplicates: Vec::new(),
        failures: Vec::new(),
        target,
        ps_threshold: threshold,
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Err(e) => report.failures.push((i, e.to_string())),
            Ok(mut r) => {
                r.in_window = Some(r.converged && (r.window_value() - target).abs() < delta);
                r.ps_safe = Some(r.energy_scaled < threshold);
                let mut dup = None;
                for (k, kept) in report.results.iter().enumerate() {
                    if !geometrically_distinct(&r.u, &kept.u, opts.dedup_tol)? {
                        dup = Some(k);
                        break;
                    }
                }
                match dup {
                    Some(k) => report.duplicates.push((i, k)),
                    None => report.results.push(r),
                }
            }
        }
    }
    Ok(report)
}

/// max over the directions of ε⁻³|Re⟨R(u), w⟩| with ε⁻³‖w‖²_{ε,A,V} = 1, for
/// `count` random smooth τ-equivariant directions w.
pub fn weak_form_check(
    u: &ScalarField,
    p: &Potentials,
    s: &SymmetrySector,
    kernel: &CoulombKernel,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let eps = p.epsilon();
    let scale = eps.powi(3);
    let parts = evaluate_parts(u, p, kernel)?;
    let r = parts.residual(1.0, eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = *u.grid();
    let width = u.abs();
    let peak = width.max_abs();
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let coef: Vec<(f64, f64, [f64; 3])> = (0..6)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0) / eps.sqrt()),
                )
            })
            .collect();
        // Smooth random modulations of the envelope |u|, so that w lives
        // where the solution does.
        let raw = ScalarField::from_fn(g, |x| {
            let mut acc = Complex64::default();
            for (a, b, k) in &coef {
                let ph = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                acc += Complex64::new(*a, *b) * Complex64::from_polar(1.0, ph);
            }
            acc
        });
        let w = raw.mul(&width.scale_real(1.0 / peak))?;
        let w = if s.m() == 1 { w } else { symmetrize(&w, s) };
        let wn = crate::magnetic::norm_sq(&w, p)?;
        if !(wn > 0.0) {
            continue;
        }
        let w = w.scale_real((scale / wn).sqrt());
        worst = worst.max(re_inner(&r, &w).abs() / scale);
    }
    Ok(worst)
}
