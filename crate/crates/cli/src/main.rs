use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slipflow::bounds::{
    dimension_bound, floor_partial_sums, majorant, measure_shape_constants, regime_table, scale_roundtrip, RegimeGrid,
};
use slipflow::evolution::{energy_budget, run_trajectory, Stepper};
use slipflow::io::{self, RunConfig};
use slipflow::linearized::{lieb_thirring_ratio, trace_qn};
use slipflow::spectrum::solve_eigenbasis;
use slipflow::{build_disk_mesh, build_spaces, Error};

#[derive(Parser)]
#[command(name = "slipflow", version, about = "2D incompressible flow with dynamic slip boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the disk triangulation
    Mesh(Common),
    /// Stokes eigenvalues
    Eigen(Common),
    /// Time integration with energy diagnostics
    Run(Common),
    /// N-trace q(N) and Lieb–Thirring ratios
    Linearize(Common),
    /// Attractor dimension report
    Dimension(Common),
    /// Nondimensionalization round trip
    Scalecheck(Common),
    /// Regime table over a parameter grid
    Sweep(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    refine: Option<usize>,
    #[arg(long)]
    nev: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tend: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, PathBuf), Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.refine {
            cfg.refinement = r;
        }
        if let Some(n) = self.nev {
            cfg.nev = n;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(t) = self.tend {
            cfg.t_end = t;
        }
        if let Some(o) = &self.out {
            cfg.out = o.to_string_lossy().into_owned();
        }
        cfg.validate()?;
        let out = PathBuf::from(&cfg.out);
        Ok((cfg, out))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Mesh(c) => ("mesh", c),
        Command::Eigen(c) => ("eigen", c),
        Command::Run(c) => ("run", c),
        Command::Linearize(c) => ("linearize", c),
        Command::Dimension(c) => ("dimension", c),
        Command::Scalecheck(c) => ("scalecheck", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let result = common.resolve().and_then(|(cfg, out)| match &cli.command {
        Command::Mesh(_) => cmd_mesh(&cfg, &out),
        Command::Eigen(_) => cmd_eigen(&cfg, &out),
        Command::Run(_) => cmd_run(&cfg, &out),
        Command::Linearize(_) => cmd_linearize(&cfg, &out),
        Command::Dimension(_) => cmd_dimension(&cfg, &out),
        Command::Scalecheck(_) => cmd_scalecheck(&cfg, &out),
        Command::Sweep(_) => cmd_sweep(&cfg, &out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_validation() || matches!(e, Error::Io(_)) => {
            eprintln!("slipflow {name}: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("slipflow {name}: numerical failure: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_mesh(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let mesh = build_disk_mesh(cfg.refinement, cfg.ell)?;
    io::write_file(out, "mesh.txt", mesh.to_text()?)
}

fn cmd_eigen(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let sys = build_spaces(&build_disk_mesh(cfg.refinement, cfg.ell)?, cfg.alpha, cfg.beta)?;
    let basis = solve_eigenbasis(&sys, cfg.nev, cfg.seed)?;
    io::write_file(out, "eigen.csv", io::eigen_csv(&basis.mu))?;
    io::write_file(out, "basis.bin", basis.to_bytes())
}

fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let sys = build_spaces(&build_disk_mesh(cfg.refinement, cfg.ell)?, cfg.alpha, cfg.beta)?;
    let traj = run_trajectory(&sys, &cfg.problem())?;
    let budget = energy_budget(&traj);
    io::write_file(out, "trajectory.csv", io::trajectory_csv(&traj, &budget))?;
    let t = *traj.times.last().unwrap();
    io::write_file(out, "checkpoint.bin", io::checkpoint_bytes(cfg, t, traj.last_state()))
}

fn cmd_linearize(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let problem = cfg.problem();
    let sys = build_spaces(&build_disk_mesh(cfg.refinement, cfg.ell)?, cfg.alpha, cfg.beta)?;
    let traj = run_trajectory(&sys, &problem)?;
    let stepper = Stepper::new(&sys, &problem)?;
    let trace = trace_qn(&stepper, &traj, cfg.nev, cfg.stride, cfg.discard, cfg.seed)?;
    let shape = measure_shape_constants(cfg.refinement, cfg.seed)?;
    let sums = floor_partial_sums(&sys, &problem, cfg.nev, cfg.seed)?;
    let b1 = trace.sample_indices.iter().map(|&i| traj.diagnostics[i].du_sq).sum::<f64>()
        / trace.sample_indices.len() as f64;
    let bound = majorant(&shape, &problem, cfg.ell, &sums, b1);
    io::write_file(out, "qn.csv", io::qn_csv(&trace.q, &bound))?;
    let basis = solve_eigenbasis(&sys, cfg.nev, cfg.seed)?;
    let ratios = (1..=cfg.nev).map(|n| lieb_thirring_ratio(&sys, &basis.omega[..n])).collect::<Result<Vec<_>, _>>()?;
    io::write_file(out, "lt.csv", io::lt_csv(&ratios))
}

fn cmd_dimension(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let sys = build_spaces(&build_disk_mesh(cfg.refinement, cfg.ell)?, cfg.alpha, cfg.beta)?;
    let shape = measure_shape_constants(cfg.refinement, cfg.seed)?;
    let analysis = dimension_bound(&sys, &cfg.problem(), &shape, &cfg.analysis())?;
    if analysis.report.n_star_numeric.is_none() {
        eprintln!("slipflow dimension: N_star exceeds desk-scale window (N <= {})", cfg.nev);
    }
    io::write_file(out, "report.json", io::report_json(&analysis.report))
}

fn cmd_scalecheck(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let gap = scale_roundtrip(cfg.refinement, &cfg.problem(), cfg.ell)?;
    let pass = gap < 1e-8;
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("scalecheck {verdict}: relative H gap {gap:e}");
    let body = serde_json::to_string_pretty(&serde_json::json!({ "gap": gap, "pass": pass })).expect("json");
    io::write_file(out, "scalecheck.json", body + "\n")?;
    if pass {
        Ok(())
    } else {
        Err(Error::Numerical(format!("scalecheck: relative gap {gap:e} exceeds 1e-8")))
    }
}

fn default_grid() -> RegimeGrid {
    RegimeGrid {
        alphas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        betas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        nus: vec![1.0],
        amplitudes: vec![0.0, 1.0],
    }
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let mesh = build_disk_mesh(cfg.refinement, cfg.ell)?;
    let shape = measure_shape_constants(cfg.refinement, cfg.seed)?;
    let grid = cfg.grid.clone().unwrap_or_else(default_grid);
    let table = regime_table(&mesh, &cfg.problem(), &grid, &shape, Some(&cfg.analysis()))?;
    let c = table.checks;
    eprintln!(
        "slipflow sweep: alpha structure {}, beta structure {}, zero forcing {}",
        c.alpha_structure, c.beta_structure, c.zero_forcing_zero
    );
    io::write_file(out, "regime_table.csv", io::regime_csv(&table.rows))
}
