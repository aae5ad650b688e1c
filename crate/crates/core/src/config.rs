//! Experiment configuration: plain `key = value` text with dotted sections.
//!
//! Every key has a default and unknown keys are errors. `grid.n` and
//! `grid.L` hold either one value or one value per entry of
//! `epsilon.sweep`. [`ExperimentConfig::to_text`] writes every key with
//! shortest round-trip float formatting, so a written config reloads to the
//! identical experiment.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::coulomb::{sharp_hls_constant, CoulombKernel};
use crate::error::{Error, Result};
use crate::field::{Grid3, Point};
use crate::groundstate::GroundStateOptions;
use crate::magnetic::{ElectricPreset, MagneticPreset, Potentials};
use crate::solver::{SolveOptions, StepRule};
use crate::symmetry::{magnetic_equivariance_defect, potential_invariance_defect, SymmetrySector};

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum VKind {
    Constant,
    RingWell,
    Expression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid_n: Vec<usize>,
    pub grid_l: Vec<f64>,
    pub magnetic: MagneticPreset,
    pub v_kind: VKind,
    pub lambda: f64,
    pub v0: f64,
    pub a: f64,
    pub b: f64,
    pub r0: f64,
    pub expr: String,
    pub m: u32,
    pub j: u32,
    pub sweep: Vec<f64>,
    pub solver: SolveOptions,
    /// Explicit multistart seeds; empty means one per component of M_τ.
    pub seeds: Vec<Point>,
    /// Concentration site for `ansatz`; `None` picks the first M_τ point.
    pub xi: Option<Point>,
    pub lambda_cap: Option<f64>,
    pub hls_constant: f64,
    pub ground: GroundStateOptions,
    pub ground_lambda: f64,
    pub verify_n: usize,
    pub verify_l: f64,
    pub verify_epsilon: f64,
    pub verify_samples: usize,
    pub output_dir: String,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid_n: vec![64, 80, 128],
            grid_l: vec![4.5, 3.2, 2.4],
            magnetic: MagneticPreset::Standard,
            v_kind: VKind::RingWell,
            lambda: 1.0,
            v0: 1.0,
            a: 1.0,
            b: 1.0,
            r0: 1.0,
            expr: String::new(),
            m: 2,
            j: 0,
            sweep: vec![0.4, 0.2, 0.1],
            solver: SolveOptions::default(),
            seeds: Vec::new(),
            xi: None,
            lambda_cap: None,
            hls_constant: sharp_hls_constant(),
            ground: GroundStateOptions::default(),
            ground_lambda: 1.0,
            verify_n: 32,
            verify_l: 3.0,
            verify_epsilon: 0.75,
            verify_samples: 5,
            output_dir: "runs".into(),
            seed: 0,
        }
    }
}

fn err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config { key: key.into(), msg: msg.into() }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| err(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(err(key, "must be finite"));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| err(key, format!("`{v}` is not a nonnegative integer")))
}

fn parse_list<T>(key: &str, v: &str, f: fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = v.split(',').map(|s| f(key, s)).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(err(key, "empty list"));
    }
    Ok(items)
}

fn parse_point(key: &str, v: &str) -> Result<Point> {
    let c: Vec<f64> = v.split_whitespace().map(|s| parse_f64(key, s)).collect::<Result<_>>()?;
    <[f64; 3]>::try_from(c).map_err(|_| err(key, format!("`{v}` is not a point `x y z`")))
}

fn parse_auto(key: &str, v: &str) -> Result<Option<f64>> {
    if v.trim() == "auto" {
        Ok(None)
    } else {
        parse_f64(key, v).map(Some)
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn point_str(p: &Point) -> String {
    format!("{} {} {}", p[0], p[1], p[2])
}

fn auto_str(x: Option<f64>) -> String {
    x.map_or("auto".into(), |v| v.to_string())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line, format!("line {} is not `key = value`", lineno + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(key, "given twice"));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "grid.n" => self.grid_n = parse_list(key, v, parse_usize)?,
            "grid.L" => self.grid_l = parse_list(key, v, parse_f64)?,
            "potential.A" => {
                self.magnetic = match v {
                    "zero" => MagneticPreset::Zero,
                    "standard" => MagneticPreset::Standard,
                    _ => return Err(err(key, format!("`{v}` is not one of zero, standard"))),
                }
            }
            "potential.V" => {
                self.v_kind = match v {
                    "constant" => VKind::Constant,
                    "ring-well" => VKind::RingWell,
                    "expression" => VKind::Expression,
                    _ => return Err(err(key, format!("`{v}` is not one of constant, ring-well, expression"))),
                }
            }
            "potential.lambda" => self.lambda = parse_f64(key, v)?,
            "potential.V0" => self.v0 = parse_f64(key, v)?,
            "potential.a" => self.a = parse_f64(key, v)?,
            "potential.b" => self.b = parse_f64(key, v)?,
            "potential.r0" => self.r0 = parse_f64(key, v)?,
            "potential.expr" => self.expr = v.trim_matches('"').to_string(),
            "symmetry.m" => self.m = parse_usize(key, v)? as u32,
            "symmetry.j" => self.j = parse_usize(key, v)? as u32,
            "epsilon.sweep" => self.sweep = parse_list(key, v, parse_f64)?,
            "solver.tol_grad" => self.solver.tol_grad = parse_f64(key, v)?,
            "solver.max_iter" => self.solver.max_iter = parse_usize(key, v)?,
            "solver.step_rule" => {
                self.solver.step_rule = match v {
                    "fixed" => StepRule::Fixed,
                    "adaptive-bb" => StepRule::AdaptiveBb,
                    "lbfgs" => StepRule::Lbfgs,
                    _ => return Err(err(key, format!("`{v}` is not one of fixed, adaptive-bb, lbfgs"))),
                }
            }
            "solver.step" => self.solver.step = parse_f64(key, v)?,
            "solver.cg_tol" => self.solver.cg_tol = parse_f64(key, v)?,
            "solver.cg_max_iter" => self.solver.cg_max_iter = parse_usize(key, v)?,
            "solver.dedup_tol" => self.solver.dedup_tol = parse_f64(key, v)?,
            "solver.window" => self.solver.window = parse_auto(key, v)?,
            "solver.perturbations" => self.solver.perturbations = parse_usize(key, v)?,
            "solver.seeds" => {
                self.seeds = if v == "auto" {
                    Vec::new()
                } else {
                    v.split(';').map(|p| parse_point(key, p)).collect::<Result<_>>()?
                }
            }
            "ansatz.cutoff_exponent" => self.solver.cutoff_exponent = parse_f64(key, v)?,
            "ansatz.xi" => self.xi = if v == "auto" { None } else { Some(parse_point(key, v)?) },
            "concentration.lambda_cap" => self.lambda_cap = parse_auto(key, v)?,
            "coulomb.hls_constant" => self.hls_constant = parse_f64(key, v)?,
            "ground.lambda" => self.ground_lambda = parse_f64(key, v)?,
            "ground.nr" => self.ground.nr = parse_usize(key, v)?,
            "ground.r_max_factor" => self.ground.r_max_factor = parse_f64(key, v)?,
            "ground.tol" => self.ground.tol = parse_f64(key, v)?,
            "ground.max_iter" => self.ground.max_iter = parse_usize(key, v)?,
            "verify.n" => self.verify_n = parse_usize(key, v)?,
            "verify.L" => self.verify_l = parse_f64(key, v)?,
            "verify.epsilon" => self.verify_epsilon = parse_f64(key, v)?,
            "verify.samples" => self.verify_samples = parse_usize(key, v)?,
            "output.dir" => self.output_dir = v.to_string(),
            "rng.seed" => self.seed = v.trim().parse().map_err(|_| err(key, format!("`{v}` is not a seed")))?,
            _ => return Err(err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.sweep.len();
        if self.grid_n.len() != 1 && self.grid_n.len() != k {
            return Err(err("grid.n", "needs one value or one per epsilon.sweep entry"));
        }
        if self.grid_l.len() != 1 && self.grid_l.len() != k {
            return Err(err("grid.L", "needs one value or one per epsilon.sweep entry"));
        }
        for i in 0..k {
            self.grid(i)?;
        }
        Grid3::new(self.verify_n, self.verify_l).map_err(|e| err("verify.n", e.to_string()))?;
        if self.m == 0 {
            return Err(err("symmetry.m", "must be at least 1"));
        }
        if self.j >= self.m {
            return Err(err("symmetry.j", "must be below symmetry.m"));
        }
        if self.sweep.iter().any(|e| !(*e > 0.0)) {
            return Err(err("epsilon.sweep", "values must be positive"));
        }
        if self.v_kind == VKind::Expression && self.expr.is_empty() {
            return Err(err("potential.expr", "required when potential.V = expression"));
        }
        self.check_symmetry()?;
        self.solver.validate().map_err(|e| err("solver", e.to_string()))?;
        Ok(())
    }

    /// Invariance of V and equivariance of A under the configured group,
    /// checked on the verify grid.
    pub fn check_symmetry(&self) -> Result<()> {
        let g = Grid3::new(self.verify_n, self.verify_l).map_err(|e| err("verify.n", e.to_string()))?;
        let s = self.sector()?;
        let v = self.electric().evaluator()?;
        let dv = potential_invariance_defect(&g, &s, |x| v(x));
        if !(dv <= SYMMETRY_TOL) {
            return Err(err("potential.V", format!("not invariant under the rotation group (defect {dv:e})")));
        }
        let a = self.magnetic.clone();
        let da = magnetic_equivariance_defect(&g, &s, |x| a.eval(x));
        if !(da <= SYMMETRY_TOL) {
            return Err(err("potential.A", format!("not equivariant under the rotation group (defect {da:e})")));
        }
        Ok(())
    }

    /// Grid for the i-th sweep entry.
    pub fn grid(&self, i: usize) -> Result<Grid3> {
        let n = self.grid_n[i.min(self.grid_n.len() - 1)];
        let l = self.grid_l[i.min(self.grid_l.len() - 1)];
        Grid3::new(n, l).map_err(|e| err("grid", e.to_string()))
    }

    pub fn electric(&self) -> ElectricPreset {
        match self.v_kind {
            VKind::Constant => ElectricPreset::Constant(self.lambda),
            VKind::RingWell => ElectricPreset::RingWell { v0: self.v0, a: self.a, b: self.b, r0: self.r0 },
            VKind::Expression => ElectricPreset::Expression(self.expr.clone()),
        }
    }

    pub fn sector(&self) -> Result<SymmetrySector> {
        SymmetrySector::new(self.m, self.j)
    }

    pub fn potentials(&self, grid: Grid3, epsilon: f64) -> Result<Potentials> {
        Potentials::from_presets(grid, &self.magnetic, &self.electric(), epsilon)
    }

    pub fn kernel(&self, grid: Grid3) -> CoulombKernel {
        CoulombKernel::with_hls_constant(grid, self.hls_constant)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { sweep: self.sweep.clone(), seed: self.seed, ..self.solver.clone() }
    }

    /// Every key with its effective value.
    pub fn to_text(&self) -> String {
        let s = &self.solver;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("grid.n", join(&self.grid_n));
        kv("grid.L", join(&self.grid_l));
        kv(
            "potential.A",
            match self.magnetic {
                MagneticPreset::Zero => "zero",
                MagneticPreset::Standard => "standard",
            }
            .into(),
        );
        kv(
            "potential.V",
            match self.v_kind {
                VKind::Constant => "constant",
                VKind::RingWell => "ring-well",
                VKind::Expression => "expression",
            }
            .into(),
        );
        kv("potential.lambda", self.lambda.to_string());
        kv("potential.V0", self.v0.to_string());
        kv("potential.a", self.a.to_string());
        kv("potential.b", self.b.to_string());
        kv("potential.r0", self.r0.to_string());
        kv("potential.expr", format!("\"{}\"", self.expr));
        kv("symmetry.m", self.m.to_string());
        kv("symmetry.j", self.j.to_string());
        kv("epsilon.sweep", join(&self.sweep));
        kv("solver.tol_grad", s.tol_grad.to_string());
        kv("solver.max_iter", s.max_iter.to_string());
        kv(
            "solver.step_rule",
            match s.step_rule {
                StepRule::Fixed => "fixed",
                StepRule::AdaptiveBb => "adaptive-bb",
                StepRule::Lbfgs => "lbfgs",
            }
            .into(),
        );
        kv("solver.step", s.step.to_string());
        kv("solver.cg_tol", s.cg_tol.to_string());
        kv("solver.cg_max_iter", s.cg_max_iter.to_string());
        kv("solver.dedup_tol", s.dedup_tol.to_string());
        kv("solver.window", auto_str(s.window));
        kv("solver.perturbations", s.perturbations.to_string());
        kv(
            "solver.seeds",
            if self.seeds.is_empty() {
                "auto".into()
            } else {
                self.seeds.iter().map(point_str).collect::<Vec<_>>().join("; ")
            },
        );
        kv("ansatz.cutoff_exponent", s.cutoff_exponent.to_string());
        kv("ansatz.xi", self.xi.as_ref().map_or("auto".into(), point_str));
        kv("concentration.lambda_cap", auto_str(self.lambda_cap));
        kv("coulomb.hls_constant", self.hls_constant.to_string());
        kv("ground.lambda", self.ground_lambda.to_string());
        kv("ground.nr", self.ground.nr.to_string());
        kv("ground.r_max_factor", self.ground.r_max_factor.to_string());
        kv("ground.tol", self.ground.tol.to_string());
        kv("ground.max_iter", self.ground.max_iter.to_string());
        kv("verify.n", self.verify_n.to_string());
        kv("verify.L", self.verify_l.to_string());
        kv("verify.epsilon", self.verify_epsilon.to_string());
        kv("verify.samples", self.verify_samples.to_string());
        kv("output.dir", self.output_dir.clone());
        kv("rng.seed", self.seed.to_string());
        out
    }
}
