//! `choquard`: experiment driver for the magnetic Choquard solver.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 a solve did not
//! converge, 3 an invariant failed in `verify`.

mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use choquard::ansatz::{entrance_energy, CutoffBump, EntranceSpec};
use choquard::baryorbit::{
    concentration_residual, default_lambda_cap, inequality_chain, localize, resolve_for_template,
};
use choquard::config::ExperimentConfig;
use choquard::field::{read_field, write_field, Grid3, Point};
use choquard::groundstate::{fmt12, solve_limit, GroundStateOptions, GOLDEN_E1};
use choquard::solver::{default_seeds, multistart};
use choquard::symmetry::condition_v;
use choquard::verify::{all_pass, format_table, run_verify};
use choquard::Error;

use output::{round12, RunDir};

#[derive(Parser)]
#[command(name = "choquard", version, about = "Semiclassical magnetic Choquard solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Radial ground state of the limit problem as CSV.
    Ground {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Scaled energy of the projected entrance field over an ε sweep.
    Ansatz {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        xi: Option<Vec<f64>>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        j: Option<u32>,
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Multistart solves over the configured ε sweep.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Localize the concentration orbit of a stored field.
    Concentrate {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        j: Option<u32>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the invariant suite and print a pass/fail table.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    /// Output closed early, e.g. piped into `head`.
    BrokenPipe,
    Config(String),
    NotConverged(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } => Failure::NotConverged(e.to_string()),
            Error::Io(io) => io.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return Failure::BrokenPipe;
        }
        Failure::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn with_sector(mut cfg: ExperimentConfig, m: Option<u32>, j: Option<u32>) -> Result<ExperimentConfig, Failure> {
    if let Some(m) = m {
        cfg.m = m;
    }
    if let Some(j) = j {
        cfg.j = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The configured grid for `eps`: the sweep entry it matches, or the single
/// configured grid.
fn grid_for(cfg: &ExperimentConfig, eps: f64) -> Result<Grid3, Failure> {
    if let Some(i) = cfg.sweep.iter().position(|e| *e == eps) {
        return Ok(cfg.grid(i)?);
    }
    if cfg.grid_n.len() == 1 && cfg.grid_l.len() == 1 {
        return Ok(cfg.grid(0)?);
    }
    Err(Failure::Config(format!(
        "config error in key `grid.n`: no grid configured for epsilon {eps}; give one grid or include it in epsilon.sweep"
    )))
}

fn threads_from_env() -> Outcome {
    if let Ok(v) = std::env::var("CHQ_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Failure::Config(format!("CHQ_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(())
}

fn ground(lambda: f64, tol: Option<f64>, out: Option<&Path>, config: Option<&Path>) -> Outcome {
    let cfg = load_config(config)?;
    let opts = GroundStateOptions { tol: tol.unwrap_or(cfg.ground.tol), ..cfg.ground };
    let profile = solve_limit(lambda, &opts)?;
    let bumps = profile.monotonicity_violations();
    if bumps > 0 {
        eprintln!("warning: profile is not radially decreasing at {bumps} mesh points");
    }
    match out {
        Some(path) => profile.write_csv(fs::File::create(path)?)?,
        None => profile.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn ansatz(
    xi: Option<Vec<f64>>,
    eps: Option<f64>,
    m: Option<u32>,
    j: Option<u32>,
    sweep: Option<Vec<f64>>,
    config: Option<&Path>,
) -> Outcome {
    let cfg = with_sector(load_config(config)?, m, j)?;
    let s = cfg.sector()?;
    let eps_list = sweep.or(eps.map(|e| vec![e])).unwrap_or_else(|| cfg.sweep.clone());
    let xi: Option<Point> = match xi {
        Some(v) => Some(
            <[f64; 3]>::try_from(v)
                .map_err(|_| Failure::Config("--xi needs three comma-separated coordinates".into()))?,
        ),
        None => cfg.xi,
    };
    let profile = solve_limit(1.0, &cfg.ground)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "epsilon,energy_scaled,ell,ratio")?;
    for eps in eps_list {
        let grid = grid_for(&cfg, eps)?;
        let p = cfg.potentials(grid, eps)?;
        let kernel = cfg.kernel(grid);
        let (seeds, ell) = default_seeds(&p, &s)?;
        let x = xi.unwrap_or(seeds[0]);
        let spec = EntranceSpec::at(x, s, &p)?;
        let bump = CutoffBump::with_exponent(&profile, spec.lambda, eps, cfg.solver.cutoff_exponent)?;
        let e = entrance_energy(&spec, &bump, &p, &kernel)?;
        writeln!(out, "{},{},{},{}", fmt12(eps), fmt12(e), fmt12(ell), fmt12(e / (ell * GOLDEN_E1)))?;
    }
    Ok(())
}

fn solve(config: Option<&Path>) -> Outcome {
    let cfg = load_config(config)?;
    let s = cfg.sector()?;
    let opts = cfg.solve_options();
    let profile = solve_limit(1.0, &cfg.ground)?;
    let run = RunDir::create(Path::new(&cfg.output_dir))?;
    fs::write(run.path().join("config.txt"), cfg.to_text())?;
    let mut summary = String::from("epsilon,j,seed,energy_scaled,grad_norm_scaled,converged,in_window,orbit_x,orbit_y,orbit_z\n");
    let mut runs = Vec::new();
    let mut unconverged = Vec::new();
    for (i, &eps) in cfg.sweep.iter().enumerate() {
        let grid = cfg.grid(i)?;
        let p = cfg.potentials(grid, eps)?;
        let kernel = cfg.kernel(grid);
        let (auto, ell) = default_seeds(&p, &s)?;
        let seeds = if cfg.seeds.is_empty() { auto } else { cfg.seeds.clone() };
        let report = multistart(&p, &s, &kernel, &opts, &seeds, &profile, ell)?;
        let cap = cfg.lambda_cap.unwrap_or_else(|| default_lambda_cap(&p));
        let mut records = Vec::new();
        for mut r in report.results {
            let seed = r.seed.unwrap_or(0);
            let (uf, pf) = resolve_for_template(&r.u, &p)?;
            let conc = localize(&uf, &s, &profile, &pf, cap, None)?;
            r.orbit = Some(conc.orbit);
            let local = profile.rescaled(p.electric_at(conc.xi))?;
            let residual = concentration_residual(&uf, conc.xi, &s, &local, &pf)?;
            let chain = inequality_chain(&r.u, &p, &kernel, cap)?;
            let name = format!("eps{i}_j{}_seed{seed}.chqf", s.j());
            write_field(&r.u, fs::File::create(run.fields().join(&name))?)?;
            if !r.converged {
                unconverged.push(format!("epsilon {eps} seed {seed}"));
            }
            summary.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                fmt12(eps),
                s.j(),
                seed,
                fmt12(r.energy_scaled),
                fmt12(r.grad_norm_scaled),
                r.converged,
                r.in_window.unwrap_or(false),
                fmt12(conc.xi[0]),
                fmt12(conc.xi[1]),
                fmt12(conc.xi[2]),
            ));
            let record = json!({
                "result": r.record(),
                "field": format!("fields/{name}"),
                "concentration": conc,
                "concentration_residual": residual,
                "inequality_chain": chain,
            });
            println!("{}", serde_json::to_string(&round12(record.clone()))?);
            records.push(record);
        }
        runs.push(json!({
            "epsilon": eps,
            "grid": { "n": grid.n(), "L": grid.half_length() },
            "ell": ell,
            "target": report.target,
            "ps_threshold": report.ps_threshold,
            "condition_v": condition_v(p.electric(), &s)?,
            "results": records,
            "duplicates": report.duplicates,
            "failures": report.failures,
        }));
        if records_empty(&runs) {
            unconverged.push(format!("epsilon {eps}: every seed failed"));
        }
    }
    fs::write(run.path().join("summary.csv"), summary)?;
    let report = json!({ "runs": runs });
    fs::write(run.path().join("report.json"), serde_json::to_string_pretty(&round12(report))?)?;
    eprintln!("results in {}", run.path().display());
    if unconverged.is_empty() {
        Ok(())
    } else {
        Err(Failure::NotConverged(unconverged.join("; ")))
    }
}

fn records_empty(runs: &[serde_json::Value]) -> bool {
    runs.last().and_then(|r| r["results"].as_array()).is_some_and(|a| a.is_empty())
}

fn concentrate(field: &Path, eps: f64, m: Option<u32>, j: Option<u32>, config: Option<&Path>) -> Outcome {
    let cfg = with_sector(load_config(config)?, m, j)?;
    let s = cfg.sector()?;
    let u = read_field(fs::File::open(field)?)?;
    let p = cfg.potentials(*u.grid(), eps)?;
    let profile = solve_limit(1.0, &cfg.ground)?;
    let cap = cfg.lambda_cap.unwrap_or_else(|| default_lambda_cap(&p));
    let (u, p) = resolve_for_template(&u, &p)?;
    let report = localize(&u, &s, &profile, &p, cap, None)?;
    println!("{}", serde_json::to_string_pretty(&round12(serde_json::to_value(report)?))?);
    Ok(())
}

fn verify(config: Option<&Path>) -> Outcome {
    let cfg = load_config(config)?;
    let rows = run_verify(&cfg)?;
    print!("{}", format_table(&rows));
    if all_pass(&rows) {
        Ok(())
    } else {
        let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
        Err(Failure::Invariant(failed.join(", ")))
    }
}

fn run(cli: Cli) -> Outcome {
    threads_from_env()?;
    match cli.cmd {
        Cmd::Ground { lambda, tol, out, config } => ground(lambda, tol, out.as_deref(), config.as_deref()),
        Cmd::Ansatz { xi, eps, m, j, sweep, config } => ansatz(xi, eps, m, j, sweep, config.as_deref()),
        Cmd::Solve { config } => solve(config.as_deref()),
        Cmd::Concentrate { field, eps, m, j, config } => concentrate(&field, eps, m, j, config.as_deref()),
        Cmd::Verify { config } => verify(config.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) | Err(Failure::BrokenPipe) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("not converged: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant failed: {msg}");
            ExitCode::from(3)
        }
    }
}
