//! Concentration diagnostics: orbit templates θ_{ε,ξ}, discrete localization
//! of the concentration orbit, the concentration residual and the
//! truncated-potential inequality chain.

use serde::{Deserialize, Serialize};

use crate::coulomb::CoulombKernel;
use crate::error::{Error, Result};
use crate::field::{gradient, integrate_real, laplacian, resample, Grid3, Point, ScalarField, VectorField};
use crate::groundstate::RadialProfile;
use crate::magnetic::{energy, projected_energy, Potentials};
use crate::symmetry::{orbit_info, orbit_points, OrbitInfo, SymmetrySector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub orbit: OrbitInfo,
    pub xi: Point,
    /// ε⁻³‖|u| − θ_{ε,ξ}‖²_ε.
    pub residual_scaled: f64,
    pub candidates_considered: usize,
    /// Gap in the scaled localization objective to the runner-up orbit, or
    /// to the empty template when there is no runner-up.
    pub margin: f64,
}

fn dist2(a: Point, b: Point) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Σ_{gξ∈Gξ} ω_λ(|x − gξ|/ε), with ω_λ obtained from `profile` by exact
/// scaling.
pub fn theta_template(
    xi: Point,
    epsilon: f64,
    lambda: f64,
    s: &SymmetrySector,
    profile: &RadialProfile,
    grid: &Grid3,
) -> Result<ScalarField> {
    if !(epsilon >= 4.0 * grid.spacing()) {
        return Err(Error::Resolution(format!(
            "epsilon {epsilon} is below 4h = {} on this grid",
            4.0 * grid.spacing()
        )));
    }
    let pts = orbit_points(xi, s, grid.spacing() / 2.0);
    let vals = (0..grid.len())
        .map(|idx| {
            let x = grid.point(idx);
            pts.iter().map(|c| profile.eval_at_lambda(lambda, dist2(x, *c).sqrt() / epsilon).0).sum()
        })
        .collect();
    ScalarField::from_real_values(*grid, vals)
}

/// W = min{V, λ_cap} on the grid.
pub fn truncated_potential(p: &Potentials, lambda_cap: f64) -> ScalarField {
    let vals = p.electric().values().iter().map(|v| v.re.min(lambda_cap)).collect();
    ScalarField::from_real_values(*p.grid(), vals).expect("same grid")
}

/// 90th percentile of V over the faces of the box.
pub fn default_lambda_cap(p: &Potentials) -> f64 {
    let g = p.grid();
    let n = g.n();
    let mut b: Vec<f64> = (0..g.len())
        .filter(|&idx| {
            let (i, j, k) = g.unindex(idx);
            [i, j, k].iter().any(|&a| a == 0 || a == n - 1)
        })
        .map(|idx| p.electric().values()[idx].re)
        .collect();
    b.sort_by(|a, c| a.partial_cmp(c).expect("finite potential"));
    let pos = ((b.len() - 1) as f64 * 0.9).round() as usize;
    b[pos]
}

/// ∫ ε²|∇v|² + w·v² for real v; `w = None` is the plain ε-norm.
fn eps_norm_sq(v: &ScalarField, epsilon: f64, w: Option<&ScalarField>) -> f64 {
    let g = gradient(v);
    let grid = *v.grid();
    let vals: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let grad2: f64 = (0..3).map(|c| g.component(c).values()[idx].norm_sqr()).sum();
            let weight = w.map_or(1.0, |w| w.values()[idx].re);
            epsilon * epsilon * grad2 + weight * v.values()[idx].norm_sqr()
        })
        .collect();
    integrate_real(&grid, &vals)
}

fn five_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

/// Smallest even 5-smooth point count, at least the current one, whose
/// spacing resolves bumps of width ε (ε ≥ 4h).
pub fn template_grid_size(grid: &Grid3, epsilon: f64) -> usize {
    let l = grid.half_length();
    let mut n = grid.n().max((8.0 * l / epsilon).ceil() as usize);
    while n % 2 == 1 || !five_smooth(n) || epsilon < 4.0 * (2.0 * l / n as f64) {
        n += 1;
    }
    n
}

/// `u` and `p` on a grid fine enough for [`theta_template`] at p's ε. The
/// field is trigonometrically interpolated, which is exact for its discrete
/// representation; nothing changes when the grid already resolves ε.
pub fn resolve_for_template(u: &ScalarField, p: &Potentials) -> Result<(ScalarField, Potentials)> {
    if u.grid() != p.grid() {
        return Err(Error::GridMismatch);
    }
    let n = template_grid_size(p.grid(), p.epsilon());
    if n == p.grid().n() {
        return Ok((u.clone(), p.clone()));
    }
    let fine = Grid3::new(n, p.grid().half_length())?;
    Ok((resample(u, n)?, p.on_grid(fine)?))
}

/// ε⁻³‖|u| − θ_{ε,ξ}‖²_ε with the plain norm ∫(ε²|∇v|² + v²); the profile
/// must be the ground state at λ = V(ξ).
pub fn concentration_residual(
    u: &ScalarField,
    xi: Point,
    s: &SymmetrySector,
    profile: &RadialProfile,
    p: &Potentials,
) -> Result<f64> {
    let eps = p.epsilon();
    let v_xi = p.electric_at(xi);
    if (profile.lambda - v_xi).abs() > 1e-6 * v_xi.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "profile solved at lambda = {} but V(xi) = {v_xi}",
            profile.lambda
        )));
    }
    let theta = theta_template(xi, eps, profile.lambda, s, profile, u.grid())?;
    let diff = u.abs().sub(&theta)?.make_real();
    Ok(eps_norm_sq(&diff, eps, None) / eps.powi(3))
}

fn apply_l(v: &ScalarField, w: &ScalarField, eps: f64) -> Vec<f64> {
    let lap = laplacian(v);
    (0..v.grid().len())
        .map(|i| -eps * eps * lap.values()[i].re + w.values()[i].re * v.values()[i].re)
        .collect()
}

fn dot(grid: &Grid3, a: &[f64], b: &[f64]) -> f64 {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    integrate_real(grid, &prod)
}

/// Local maxima of a real field above `floor`, over the 26-neighbourhood
/// with periodic wrap, ties broken towards the lower index.
fn local_maxima(f: &[f64], grid: &Grid3, floor: f64) -> Vec<usize> {
    let n = grid.n() as isize;
    let mut out = Vec::new();
    for idx in 0..grid.len() {
        let v = f[idx];
        if v <= floor {
            continue;
        }
        let (i, j, k) = grid.unindex(idx);
        let mut is_max = true;
        'scan: for di in -1isize..=1 {
            for dj in -1isize..=1 {
                for dk in -1isize..=1 {
                    if di == 0 && dj == 0 && dk == 0 {
                        continue;
                    }
                    let a = (i as isize + di).rem_euclid(n) as usize;
                    let b = (j as isize + dj).rem_euclid(n) as usize;
                    let c = (k as isize + dk).rem_euclid(n) as usize;
                    let o = grid.index(a, b, c);
                    let w = f[o];
                    if w > v || (w == v && o < idx) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
        }
        if is_max {
            out.push(idx);
        }
    }
    out
}

/// Vertex of the parabola through the peak and its two neighbours on each
/// axis.
fn refine_peak(f: &[f64], grid: &Grid3, idx: usize) -> Point {
    let n = grid.n();
    let (i, j, k) = grid.unindex(idx);
    let mut x = grid.point(idx);
    let ijk = [i, j, k];
    for a in 0..3 {
        let mut lo = ijk;
        let mut hi = ijk;
        lo[a] = (ijk[a] + n - 1) % n;
        hi[a] = (ijk[a] + 1) % n;
        let fm = f[grid.index(lo[0], lo[1], lo[2])];
        let f0 = f[idx];
        let fp = f[grid.index(hi[0], hi[1], hi[2])];
        let den = fm - 2.0 * f0 + fp;
        if den < 0.0 {
            x[a] += 0.5 * grid.spacing() * (fm - fp) / den;
        }
    }
    x
}

/// The localization objective ⟨v, Lv⟩ with v = |u| − θ and
/// L = −ε²Δ + W, expanded so the |u| terms are computed once. Using the same
/// spectral Laplacian on both sides keeps it an exact quadratic form.
struct Objective<'a> {
    grid: Grid3,
    eps: f64,
    s: SymmetrySector,
    profile: &'a RadialProfile,
    p: &'a Potentials,
    w: ScalarField,
    lambda_cap: f64,
    /// L|u|.
    t_abs: Vec<f64>,
    abs_norm: f64,
}

impl<'a> Objective<'a> {
    fn new(
        u: &ScalarField,
        s: SymmetrySector,
        profile: &'a RadialProfile,
        p: &'a Potentials,
        lambda_cap: f64,
    ) -> Self {
        let eps = p.epsilon();
        let w = truncated_potential(p, lambda_cap);
        let a = u.abs();
        let t_abs = apply_l(&a, &w, eps);
        let av: Vec<f64> = a.values().iter().map(|c| c.re).collect();
        let abs_norm = dot(u.grid(), &av, &t_abs);
        Objective { grid: *u.grid(), eps, s, profile, p, w, lambda_cap, t_abs, abs_norm }
    }

    fn lambda_at(&self, xi: Point) -> f64 {
        self.p.electric_at(xi).min(self.lambda_cap)
    }

    fn eval(&self, xi: Point) -> Result<f64> {
        let theta = theta_template(xi, self.eps, self.lambda_at(xi), &self.s, self.profile, &self.grid)?;
        let tv: Vec<f64> = theta.values().iter().map(|c| c.re).collect();
        let lt = apply_l(&theta, &self.w, self.eps);
        Ok(self.abs_norm - 2.0 * dot(&self.grid, &self.t_abs, &tv) + dot(&self.grid, &tv, &lt))
    }

    /// Coordinate descent from `x0`, step h/10, at most 50 accepted or
    /// halving steps.
    fn refine(&self, x0: Point) -> Result<(Point, f64)> {
        let mut x = x0;
        let mut best = self.eval(x)?;
        let mut step = self.grid.spacing() / 10.0;
        for _ in 0..50 {
            let mut improved = false;
            for a in 0..3 {
                for sgn in [1.0, -1.0] {
                    let mut y = x;
                    y[a] += sgn * step;
                    let v = self.eval(y)?;
                    if v < best {
                        best = v;
                        x = y;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
                if step < 1e-4 * self.grid.spacing() {
                    break;
                }
            }
        }
        Ok((x, best))
    }
}

/// Discrete baryorbit map. Candidates default to the refined local maxima of
/// |u|; each distinct orbit is refined by coordinate descent and the orbit
/// with the smallest ‖|u| − θ_{ε,ξ}‖²_{ε,W} wins. θ uses λ = W(ξ).
pub fn localize(
    u: &ScalarField,
    s: &SymmetrySector,
    profile: &RadialProfile,
    p: &Potentials,
    lambda_cap: f64,
    candidates: Option<&[Point]>,
) -> Result<ConcentrationReport> {
    if u.is_zero() {
        return Err(Error::Degenerate("cannot localize the zero field".into()));
    }
    let grid = *u.grid();
    let eps = p.epsilon();
    let abs = u.abs();
    let absv: Vec<f64> = abs.values().iter().map(|c| c.re).collect();
    let peak = abs.max_abs();
    let seeds: Vec<Point> = match candidates {
        Some(c) => c.to_vec(),
        None => local_maxima(&absv, &grid, 1e-3 * peak)
            .into_iter()
            .map(|idx| refine_peak(&absv, &grid, idx))
            .collect(),
    };
    if seeds.is_empty() {
        return Err(Error::Degenerate("no local maxima found".into()));
    }
    // One representative per orbit.
    let tol_axis = grid.spacing() / 2.0;
    let link = (2.0 * grid.spacing()).powi(2);
    let mut reps: Vec<Point> = Vec::new();
    for x in &seeds {
        let known = reps.iter().any(|r| orbit_points(*r, s, tol_axis).iter().any(|y| dist2(*x, *y) <= link));
        if !known {
            reps.push(*x);
        }
    }
    let obj = Objective::new(u, *s, profile, p, lambda_cap);
    let mut scored: Vec<(Point, f64)> = Vec::with_capacity(reps.len());
    for r in &reps {
        scored.push(obj.refine(*r)?);
    }
    // Lowest objective wins; ties go to the lower candidate index.
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|a, b| scored[*a].1.partial_cmp(&scored[*b].1).expect("finite objective").then(a.cmp(b)));
    let (xi, best) = scored[order[0]];
    let runner = if order.len() > 1 { scored[order[1]].1 } else { obj.abs_norm };
    let scale = eps.powi(3);
    let lam = obj.lambda_at(xi);
    let theta = theta_template(xi, eps, lam, s, profile, &grid)?;
    let diff = abs.sub(&theta)?.make_real();
    Ok(ConcentrationReport {
        orbit: orbit_info(xi, s, tol_axis),
        xi,
        residual_scaled: eps_norm_sq(&diff, eps, None) / scale,
        candidates_considered: seeds.len(),
        margin: ((runner - best) / scale).max(0.0),
    })
}

/// The three energies of the truncated-potential chain
/// J_{ε,W}(π_W(|u|)) ≤ J_{ε,V}(π_V(|u|)) ≤ J_{ε,A,V}(u), all scaled by ε⁻³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityChain {
    pub j_truncated: f64,
    pub j_nonmagnetic: f64,
    pub j_magnetic: f64,
    pub holds: bool,
}

pub const CHAIN_SLACK: f64 = 1e-8;

pub fn inequality_chain(
    u: &ScalarField,
    p: &Potentials,
    kernel: &CoulombKernel,
    lambda_cap: f64,
) -> Result<InequalityChain> {
    let eps = p.epsilon();
    let scale = eps.powi(3);
    let grid = *p.grid();
    let abs = u.abs();
    let zero_a = VectorField::zeros(grid);
    let pv = Potentials::new(zero_a.clone(), p.electric().clone(), eps)?;
    let pw = Potentials::new(zero_a, truncated_potential(p, lambda_cap), eps)?;
    let jw = projected_energy(&energy(&abs, &pw, kernel)?, eps) / scale;
    let jv = projected_energy(&energy(&abs, &pv, kernel)?, eps) / scale;
    let ja = projected_energy(&energy(u, p, kernel)?, eps) / scale;
    let le = |a: f64, b: f64| a <= b + CHAIN_SLACK * b.abs();
    Ok(InequalityChain { j_truncated: jw, j_nonmagnetic: jv, j_magnetic: ja, holds: le(jw, jv) && le(jv, ja) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::{solve_limit, GroundStateOptions};
    use crate::magnetic::{ElectricPreset, MagneticPreset};
    use crate::symmetry::act;

    const EPS: f64 = 0.5;

    fn setup(m: u32) -> (RadialProfile, Potentials, SymmetrySector) {
        let g = Grid3::new(48, 3.0).unwrap();
        let p = Potentials::from_presets(g, &MagneticPreset::Zero, &ElectricPreset::Constant(1.0), EPS).unwrap();
        (solve_limit(1.0, &GroundStateOptions::default()).unwrap(), p, SymmetrySector::new(m, 0).unwrap())
    }

    #[test]
    fn template_symmetry_and_linearity() {
        let (prof, p, s) = setup(2);
        let th = theta_template([1.0, 0.0, 0.0], EPS, 1.0, &s, &prof, p.grid()).unwrap();
        let flipped = act(1, &th, &s);
        assert!(flipped.max_abs_diff(&th).unwrap() < 1e-12);
        let single = theta_template([1.0, 0.0, 0.0], EPS, 1.0, &SymmetrySector::trivial(), &prof, p.grid()).unwrap();
        let mirror = theta_template([-1.0, 0.0, 0.0], EPS, 1.0, &SymmetrySector::trivial(), &prof, p.grid()).unwrap();
        assert!(single.add(&mirror).unwrap().max_abs_diff(&th).unwrap() < 1e-12);
        let g = Grid3::new(16, 2.0).unwrap();
        assert!(theta_template([0.0; 3], EPS, 1.0, &s, &prof, &g).is_err());
    }

    #[test]
    fn self_match() {
        let (prof, p, s) = setup(2);
        let xi0 = [1.0, 0.0, 0.0];
        let th = theta_template(xi0, EPS, 1.0, &s, &prof, p.grid()).unwrap();
        let rep = localize(&th, &s, &prof, &p, 10.0, None).unwrap();
        assert!(rep.residual_scaled < 1e-6, "{rep:?}");
        assert!(rep.margin > 0.0);
        let d = orbit_points(rep.xi, &s, 0.01).iter().map(|y| dist2(*y, xi0).sqrt()).fold(f64::INFINITY, f64::min);
        assert!(d < p.grid().spacing(), "{rep:?}");
        assert!(concentration_residual(&th, xi0, &s, &prof, &p).unwrap() < 1e-8);
        let bigger = th.scale_real(1.1);
        assert!(concentration_residual(&bigger, xi0, &s, &prof, &p).unwrap() > 0.0);
    }

    #[test]
    fn residual_rejects_wrong_lambda() {
        let (prof, p, s) = setup(1);
        let two = prof.rescaled(2.0).unwrap();
        let th = theta_template([0.0; 3], EPS, 1.0, &s, &prof, p.grid()).unwrap();
        assert!(matches!(concentration_residual(&th, [0.0; 3], &s, &two, &p), Err(Error::Precondition(_))));
    }

    #[test]
    fn cap_is_percentile_of_boundary() {
        let g = Grid3::new(16, 2.0).unwrap();
        let p = Potentials::from_presets(g, &MagneticPreset::Zero, &ElectricPreset::Constant(3.0), 0.5).unwrap();
        assert_eq!(default_lambda_cap(&p), 3.0);
    }

    #[test]
    fn chain_on_ring_well() {
        let g = Grid3::new(48, 3.0).unwrap();
        let p = Potentials::from_presets(g, &MagneticPreset::Standard, &ElectricPreset::ring_well_default(), EPS).unwrap();
        let k = CoulombKernel::new(g);
        let prof = solve_limit(1.0, &GroundStateOptions::default()).unwrap();
        let s = SymmetrySector::new(2, 0).unwrap();
        let th = theta_template([1.0, 0.0, 0.0], EPS, 1.0, &s, &prof, &g).unwrap();
        let cap = default_lambda_cap(&p);
        let c = inequality_chain(&th, &p, &k, cap).unwrap();
        assert!(c.holds, "{c:?}");
        assert!(c.j_truncated <= c.j_nonmagnetic && c.j_nonmagnetic < c.j_magnetic);
    }

    #[test]
    fn template_mass_by_change_of_variables() {
        let g = Grid3::new(128, 4.0).unwrap();
        let prof = solve_limit(1.0, &GroundStateOptions::default()).unwrap();
        // Bumps 16ε apart; the Coulomb-modified tail still overlaps at 10ε.
        let s = SymmetrySector::new(2, 1).unwrap();
        let th = theta_template([2.0, 0.0, 0.0], 0.25, 1.0, &s, &prof, &g).unwrap();
        let ratio = th.norm_l2_sq() / (2.0 * 0.25f64.powi(3) * prof.mass());
        assert!((ratio - 1.0).abs() < 1e-2, "{ratio}");
    }

    #[test]
    fn template_grid_resolves_epsilon() {
        let g = Grid3::new(128, 2.4).unwrap();
        let n = template_grid_size(&g, 0.1);
        assert_eq!(n, 192);
        assert!(0.1 >= 4.0 * Grid3::new(n, 2.4).unwrap().spacing());
        assert_eq!(template_grid_size(&Grid3::new(64, 4.5).unwrap(), 0.4), 90);
        assert_eq!(template_grid_size(&g, 0.5), 128);
    }
}
