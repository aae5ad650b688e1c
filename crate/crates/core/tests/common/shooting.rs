//! Independent ground-state oracle: shooting on the radial system
//! −Δu = Ψu, −ΔΨ = 4πu², Ψ(0) = 1, with bisection on u(0). The solution
//! solves the limit problem for λ = lim(−Ψ − rΨ'), and is rescaled to λ = 1.

use ode_solvers::dop_shared::OutputType;
use ode_solvers::{Dopri5, System, Vector6};
use std::f64::consts::PI;

type State = Vector6<f64>;

struct Radial {
    stop_on_sign: bool,
}

impl System<f64, State> for Radial {
    fn system(&self, r: f64, y: &State, dy: &mut State) {
        let (u, up, p, pp) = (y[0], y[1], y[2], y[3]);
        dy[0] = up;
        dy[1] = -p * u - 2.0 * up / r;
        dy[2] = pp;
        dy[3] = -4.0 * PI * u * u - 2.0 * pp / r;
        dy[4] = r * r * up * up;
        dy[5] = r * r * u * u;
    }

    fn solout(&mut self, _r: f64, y: &State, _dy: &State) -> bool {
        self.stop_on_sign && (y[0] < 0.0 || y[1] > 0.0)
    }
}

/// Returns (r, state) samples. Series start at small r.
fn integrate(a: f64, r_end: f64, stop: bool) -> (Vec<f64>, Vec<State>) {
    // Fourth-order series at r0 keeps the 2/r terms away from the stepper.
    let r0: f64 = 1e-2;
    let u2 = -a / 6.0;
    let p2 = -4.0 * PI * a * a / 6.0;
    let u4 = -(p2 * a + u2) / 20.0;
    let p4 = -2.0 * PI * a * u2 / 5.0;
    let y0 = State::new(
        a + u2 * r0.powi(2) + u4 * r0.powi(4),
        2.0 * u2 * r0 + 4.0 * u4 * r0.powi(3),
        1.0 + p2 * r0.powi(2) + p4 * r0.powi(4),
        2.0 * p2 * r0 + 4.0 * p4 * r0.powi(3),
        4.0 * u2 * u2 * r0.powi(5) / 5.0,
        a * a * r0.powi(3) / 3.0,
    );
    // Dopri5: the Dop853 stiffness heuristic misfires on the 2/r terms.
    let mut stepper = Dopri5::from_param(
        Radial { stop_on_sign: stop },
        r0,
        r_end,
        1e-3,
        y0,
        1e-12,
        1e-14,
        0.9,
        0.04,
        0.2,
        10.0,
        r_end - r0,
        0.0,
        50_000_000,
        1000,
        OutputType::Dense,
    );
    stepper.integrate().expect("shooting integration failed");
    (stepper.x_out().clone(), stepper.y_out().clone())
}

/// True when the trajectory from u(0) = a crosses zero before turning up.
fn crosses(a: f64) -> bool {
    let (_, ys) = integrate(a, 60.0, true);
    ys.last().map(|y| y[0] < 0.0).unwrap_or(false)
}

pub struct ShootingResult {
    /// E_1 for the λ = 1 problem.
    pub e1: f64,
    /// Relative Nehari defect |‖u‖² − D| / D at the shooting λ.
    pub nehari_defect: f64,
    /// ω_1 samples (r, value).
    pub profile: Vec<(f64, f64)>,
}

pub fn shoot() -> ShootingResult {
    let (mut lo, mut hi) = (0.2, 0.5);
    assert!(crosses(lo) && !crosses(hi));
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if crosses(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = lo;
    let (rs, ys) = integrate(a, 60.0, true);
    // Truncate where u has decayed by 1e-6: the tail beyond is lost to the
    // bisection error anyway and contributes below 1e-12.
    let k = ys.iter().position(|y| y[0] < 1e-6 * a).unwrap_or(ys.len() - 1);
    let r = rs[k];
    let y = ys[k];
    let lambda = -y[2] - r * y[3];
    // ∫r²Ψu² is not carried as a state; compute it by Simpson on the samples.
    let mut i3 = a * a * rs[0].powi(3) / 3.0;
    let mut j = 0;
    while j + 2 <= k {
        let f = |i: usize| rs[i] * rs[i] * ys[i][2] * ys[i][0] * ys[i][0];
        let h = rs[j + 2] - rs[j];
        i3 += h / 6.0 * (f(j) + 4.0 * f(j + 1) + f(j + 2));
        j += 2;
    }
    let (i1, i2) = (y[4], y[5]);
    let norm = 4.0 * PI * (i1 + lambda * i2);
    let d = 4.0 * PI * (i3 + lambda * i2);
    let e_lambda = d / 4.0;
    let s = lambda.sqrt();
    let profile = rs[..=k].iter().zip(&ys[..=k]).map(|(r, y)| (r * s, y[0] / lambda)).collect();
    ShootingResult {
        e1: e_lambda / lambda.powf(1.5),
        nehari_defect: (norm - d).abs() / d,
        profile,
    }
}
