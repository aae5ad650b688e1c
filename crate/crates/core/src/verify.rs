//! The invariant suite behind `verify`: cheap discrete identities on the
//! configured potentials plus one small end-to-end solve, reported as a
//! pass/fail table.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{entrance, CutoffBump, EntranceSpec};
use crate::baryorbit::{concentration_residual, default_lambda_cap, inequality_chain, localize};
use crate::config::ExperimentConfig;
use crate::coulomb::{hartree_energy, hls_check, CoulombKernel};
use crate::error::Result;
use crate::field::{forward_transform, integrate, Grid3, Point, ScalarField};
use crate::groundstate::{fmt12, scaling_check, solve_limit, RadialProfile, GOLDEN_E1};
use crate::magnetic::{
    diamagnetic_check, energy, euler_lagrange_residual, nehari_project, nehari_residual, projected_energy,
    Potentials,
};
use crate::solver::{default_seeds, minimize, tangent_gradient, weak_form_check};
use crate::symmetry::{act, equivariance_defect, symmetrize, SymmetrySector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl VerifyRow {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        VerifyRow { name: name.into(), value, threshold, pass: value <= threshold }
    }
}

pub fn all_pass(rows: &[VerifyRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

pub fn format_table(rows: &[VerifyRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>18}  {:>18}  {}\n",
            r.name,
            fmt12(r.value),
            fmt12(r.threshold),
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out
}

/// A smooth random complex field: random plane waves of wavelength about
/// `width` under a Gaussian envelope of that width, centred at `centre`.
pub fn random_smooth_field(grid: Grid3, rng: &mut ChaCha8Rng, centre: Point, width: f64) -> ScalarField {
    let waves: Vec<(Complex64, [f64; 3])> = (0..4)
        .map(|_| {
            (
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0) / width),
            )
        })
        .collect();
    ScalarField::from_fn(grid, |x| {
        let d = [x[0] - centre[0], x[1] - centre[1], x[2] - centre[2]];
        let env = (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * width * width)).exp();
        let mut acc = Complex64::new(1.5, 0.0);
        for (c, k) in &waves {
            acc += c * Complex64::from_polar(1.0, k[0] * d[0] + k[1] * d[1] + k[2] * d[2]);
        }
        acc * env
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Runs the suite on the `verify.*` grid with the configured potentials and
/// sector.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<Vec<VerifyRow>> {
    let grid = Grid3::new(cfg.verify_n, cfg.verify_l)?;
    let eps = cfg.verify_epsilon;
    let p = cfg.potentials(grid, eps)?;
    let s = cfg.sector()?;
    let kernel = cfg.kernel(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = 0.25 * cfg.verify_l;
    let mut rows = Vec::new();
    let samples: Vec<ScalarField> = (0..cfg.verify_samples.max(1))
        .map(|_| random_smooth_field(grid, &mut rng, [0.0; 3], width))
        .collect();

    // field
    let mut parseval: f64 = 0.0;
    for u in &samples {
        let spec = forward_transform(u).norm_l2_sq() / grid.cell_volume();
        parseval = parseval.max(rel(u.norm_l2_sq() / grid.cell_volume(), spec));
    }
    rows.push(VerifyRow::at_most("field: Parseval", parseval, 1e-10));
    let (u0, u1) = (&samples[0], &samples[samples.len() - 1]);
    let lin = integrate(&u0.scale_real(2.0).axpy(Complex64::new(-3.0, 0.0), u1)?);
    let lin_ref = 2.0 * integrate(u0) - 3.0 * integrate(u1);
    rows.push(VerifyRow::at_most("field: integral linearity", (lin - lin_ref).norm() / lin_ref.norm().max(1e-300), 1e-12));

    // coulomb
    let mut quartic: f64 = 0.0;
    let mut phase: f64 = 0.0;
    let mut hls_margin = f64::NEG_INFINITY;
    for u in &samples {
        let d = hartree_energy(u, &kernel)?;
        quartic = quartic.max(rel(hartree_energy(&u.scale_real(2.0), &kernel)?, 16.0 * d));
        phase = phase.max(rel(hartree_energy(&u.scale(Complex64::from_polar(1.0, 0.7)), &kernel)?, d));
        let (lhs, rhs) = hls_check(u, &kernel)?;
        hls_margin = hls_margin.max(lhs / rhs);
    }
    rows.push(VerifyRow::at_most("coulomb: quartic homogeneity", quartic, 1e-12));
    rows.push(VerifyRow::at_most("coulomb: phase invariance", phase, 1e-12));
    rows.push(VerifyRow::at_most("coulomb: HLS ratio D/(C|u|^4)", hls_margin, 1.0));

    // magnetic
    let mut nehari: f64 = 0.0;
    let mut closed_form: f64 = 0.0;
    let mut gateaux: f64 = 0.0;
    let mut dia = 0usize;
    for (i, u) in samples.iter().enumerate() {
        let e = energy(u, &p, &kernel)?;
        let w = nehari_project(u, &p, &kernel)?;
        let ew = energy(&w, &p, &kernel)?;
        nehari = nehari.max(nehari_residual(&ew, eps));
        closed_form = closed_form.max(rel(ew.total, projected_energy(&e, eps)));
        let v = &samples[(i + 1) % samples.len()];
        let r = euler_lagrange_residual(u, &p, &kernel)?;
        let pairing = r.inner(v)?.re;
        let t = 1e-5;
        let jp = energy(&u.axpy(Complex64::new(t, 0.0), v)?, &p, &kernel)?.total;
        let jm = energy(&u.axpy(Complex64::new(-t, 0.0), v)?, &p, &kernel)?.total;
        gateaux = gateaux.max(rel(pairing, (jp - jm) / (2.0 * t)));
        dia += diamagnetic_check(u, &p)?.violations;
    }
    rows.push(VerifyRow::at_most("magnetic: Nehari residual after projection", nehari, 1e-10));
    rows.push(VerifyRow::at_most("magnetic: J(pi(u)) closed form", closed_form, 1e-10));
    rows.push(VerifyRow::at_most("magnetic: Gateaux vs central difference", gateaux, 1e-6));
    rows.push(VerifyRow::at_most("magnetic: diamagnetic violations", dia as f64, 0.0));

    // symmetry
    let sym_u = symmetrize(u0, &s);
    rows.push(VerifyRow::at_most(
        "symmetry: projector idempotence",
        symmetrize(&sym_u, &s).sub(&sym_u)?.norm_l2() / sym_u.norm_l2().max(1e-300),
        1e-8,
    ));
    let mut law: f64 = 0.0;
    let mut inv: f64 = 0.0;
    let e0 = energy(u0, &p, &kernel)?.total;
    for k in 1..s.m() as i64 {
        let a = act(1, &act(k, u0, &s), &s);
        let b = act(k + 1, u0, &s);
        law = law.max(a.sub(&b)?.norm_l2() / u0.norm_l2());
        inv = inv.max(rel(energy(&act(k, u0, &s), &p, &kernel)?.total, e0));
    }
    rows.push(VerifyRow::at_most("symmetry: group law", law, 1e-8));
    rows.push(VerifyRow::at_most("symmetry: energy invariance", inv, 1e-8));

    // groundstate
    let profile = solve_limit(1.0, &cfg.ground)?;
    rows.push(VerifyRow::at_most("groundstate: E_1 vs golden value", rel(profile.energy, GOLDEN_E1), 1e-5));
    let (ratio, _) = scaling_check(&profile, 4.0, &cfg.ground)?;
    rows.push(VerifyRow::at_most("groundstate: E_4/E_1 vs 8", rel(ratio, 8.0), 1e-3));

    // ansatz, solver and baryorbit on one seed
    let (seeds, _) = default_seeds(&p, &s)?;
    let xi = cfg.xi.unwrap_or(seeds[0]);
    let spec = EntranceSpec::at(xi, s, &p)?;
    let bump = CutoffBump::with_exponent(&profile, spec.lambda, eps, cfg.solver.cutoff_exponent)?;
    let psi = entrance(&spec, &bump, &p)?;
    rows.push(VerifyRow::at_most("ansatz: entrance equivariance", equivariance_defect(&psi, &s), 1e-6));
    solver_rows(cfg, &p, &s, &kernel, &psi, &profile, &mut rows)?;
    Ok(rows)
}

fn solver_rows(
    cfg: &ExperimentConfig,
    p: &Potentials,
    s: &SymmetrySector,
    kernel: &CoulombKernel,
    start: &ScalarField,
    profile: &RadialProfile,
    rows: &mut Vec<VerifyRow>,
) -> Result<()> {
    let eps = p.epsilon();
    let opts = cfg.solve_options();
    let u = nehari_project(start, p, kernel)?;
    let tg = tangent_gradient(&u, p, s, kernel, &opts)?;
    rows.push(VerifyRow::at_most("solver: tangent orthogonality", tg.orthogonality, 1e-8));
    let res = minimize(start, p, s, kernel, &opts)?;
    rows.push(VerifyRow {
        name: "solver: converged".into(),
        value: res.grad_norm_scaled,
        threshold: opts.tol_grad,
        pass: res.converged,
    });
    rows.push(VerifyRow::at_most("solver: Nehari residual", res.nehari_residual, 1e-8));
    let rises = res.energy_history.windows(2).filter(|w| w[1] > w[0]).count();
    rows.push(VerifyRow::at_most("solver: energy increases", rises as f64, 0.0));
    rows.push(VerifyRow::at_most("solver: equivariance defect", res.equivariance_defect, 1e-6));
    let weak = weak_form_check(&res.u, p, s, kernel, 5, cfg.seed)?;
    rows.push(VerifyRow::at_most("solver: weak-form residual", weak, 10.0 * opts.tol_grad.sqrt()));
    rows.push(VerifyRow::at_most(
        "solver: hartree window vs eps^2 J",
        rel(res.hartree_window, eps.powi(5) * res.energy_scaled),
        1e-6,
    ));
    let cap = cfg.lambda_cap.unwrap_or_else(|| default_lambda_cap(p));
    let w_inf = p.min_electric().min(cap);
    let floor = w_inf.powf(1.5) * GOLDEN_E1 * (1.0 - 1e-2);
    rows.push(VerifyRow {
        name: "solver: energy above (inf W)^1.5 E_1".into(),
        value: res.energy_scaled,
        threshold: floor,
        pass: res.energy_scaled >= floor,
    });
    let chain = inequality_chain(&res.u, p, kernel, cap)?;
    rows.push(VerifyRow {
        name: "baryorbit: inequality chain".into(),
        value: chain.j_nonmagnetic - chain.j_magnetic,
        threshold: 0.0,
        pass: chain.holds,
    });
    let rep = localize(&res.u, s, profile, p, cap, None)?;
    rows.push(VerifyRow {
        name: "baryorbit: localization margin".into(),
        value: rep.margin,
        threshold: 0.0,
        pass: rep.margin > 0.0,
    });
    let local = profile.rescaled(p.electric_at(rep.xi))?;
    let resid = concentration_residual(&res.u, rep.xi, s, &local, p)?;
    rows.push(VerifyRow {
        name: "baryorbit: concentration residual finite".into(),
        value: resid,
        threshold: 0.0,
        pass: resid.is_finite() && resid >= 0.0,
    });
    Ok(())
}
