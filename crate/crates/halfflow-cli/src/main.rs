//! Batch driver for half-harmonic map flow runs: identity verification,
//! flow simulation, blow-up rate computation and inner-outer gluing.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 sign-condition failure, 5 consistency failure.

mod checks;
mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use halfflow::diagnostics::fit_decay_rate;
use halfflow::flow::{diagnose, step, DiagRecord, FlowConfig, Scheme};
use halfflow::gluing::{kappa0, sign_functional, GluingConfig, GluingProblem, NoiseSpec, ParamState};
use halfflow::grid::{make_grid, GridSpec};
use halfflow::profiles::{scaled_bubble, BubbleParams};
use halfflow::{Error as HfError, SphereMapField};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "halfflow", about = "Half-harmonic map flow toolbox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the internal data parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity suites and emit a JSON-lines report.
    Verify {
        /// Only run checks whose suite or name contains this substring.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Integrate the flow and emit trajectory CSV plus a JSON summary.
    Simulate,
    /// Compute the blow-up rate for the configured noise.
    Kappa,
    /// Run the coupled inner-outer co-evolution and stream its CSV.
    Glue,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Thread count only affects speed; outputs stay bit-identical.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output directory: {e}");
        return ExitCode::from(2);
    }
    let cfg = match &cli.config {
        Some(path) => match config::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };

    let code = match cli.command {
        Command::Verify { filter } => cmd_verify(&cfg, &out_dir, filter.as_deref()),
        Command::Simulate => cmd_simulate(&cfg, &out_dir),
        Command::Kappa => cmd_kappa(&cfg),
        Command::Glue => cmd_glue(&cfg, &out_dir),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &HfError) -> u8 {
    match e {
        HfError::InvalidArgument(_) => 2,
        HfError::Numeric(_) | HfError::Domain(_) | HfError::Resolution(_) => 3,
        HfError::SignCondition(_) => 4,
        HfError::Consistency(_) | HfError::NoBubble(_) => 5,
    }
}

fn noise_from(cfg: &RunConfig) -> Result<Option<NoiseSpec>, HfError> {
    match &cfg.noise {
        None => Ok(None),
        Some(n) if n.epsilon == 0.0 => Ok(None),
        Some(n) => Ok(Some(NoiseSpec::default_family(n.epsilon, n.center)?)),
    }
}

fn cmd_verify(cfg: &RunConfig, out_dir: &Path, filter: Option<&str>) -> Result<ExitCode, HfError> {
    if cfg.verify.points < 4 || !(cfg.verify.half_width > 0.0) {
        return Err(HfError::InvalidArgument("invalid verify grid".into()));
    }
    let mut report = String::new();
    let mut all_pass = true;
    let mut ran = 0usize;
    for chk in checks::registry() {
        if let Some(f) = filter {
            if !chk.suite.contains(f) && !chk.name.contains(f) {
                continue;
            }
        }
        let result = chk.run(cfg)?;
        all_pass &= result.pass;
        ran += 1;
        let line = format!(
            "{{\"suite\":\"{}\",\"check\":\"{}\",\"value\":{:.16e},\"tolerance\":{:.16e},\"pass\":{}}}",
            result.suite, result.name, result.value, result.tolerance, result.pass
        );
        println!("{line}");
        report.push_str(&line);
        report.push('\n');
    }
    std::fs::write(out_dir.join("verify_report.jsonl"), report)
        .map_err(|e| HfError::Numeric(format!("cannot write report: {e}")))?;
    if ran == 0 {
        eprintln!("warning: filter matched no checks");
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn initial_state(cfg: &RunConfig, grid: GridSpec) -> Result<SphereMapField, HfError> {
    let noise = noise_from(cfg)?;
    let p = BubbleParams::new(cfg.initial.mu, cfg.initial.xi)?;
    match cfg.initial.kind.as_str() {
        "constant" => SphereMapField::constant(grid, [0.0, 1.0]),
        "bubble" => SphereMapField::sample(grid, |x| scaled_bubble(p, x)),
        "bubble-noise" => {
            let ns = noise.ok_or_else(|| {
                HfError::InvalidArgument(
                    "initial kind bubble-noise needs a [noise] section with epsilon > 0".into(),
                )
            })?;
            SphereMapField::new_renormalized(
                grid,
                grid.points()
                    .map(|x| scaled_bubble(p, x)[0] + ns.z1(x))
                    .collect(),
                grid.points()
                    .map(|x| scaled_bubble(p, x)[1] + ns.z2(x))
                    .collect(),
            )
        }
        other => Err(HfError::InvalidArgument(format!(
            "unknown initial kind '{other}'"
        ))),
    }
}

fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode, HfError> {
    let grid = make_grid(cfg.grid.half_width, cfg.grid.points)?;
    let scheme = match cfg.flow.scheme.as_str() {
        "semi-implicit-spectral" => Scheme::SemiImplicitSpectral,
        "explicit-pv" => Scheme::ExplicitPv,
        other => {
            return Err(HfError::InvalidArgument(format!(
                "unknown scheme '{other}'"
            )))
        }
    };
    let dt = cfg.flow.dt_factor * grid.spacing;
    let flow_cfg = FlowConfig::new(dt, cfg.flow.t_end)?.with_scheme(scheme);
    let stride = cfg.flow.sample_stride.max(1);
    let steps = (cfg.flow.t_end / dt).round() as usize;

    let mut u = initial_state(cfg, grid)?;
    let mut records: Vec<DiagRecord> = vec![diagnose(&u, 0.0)];
    let mut failure: Option<HfError> = None;
    for k in 1..=steps {
        match step(&u, &flow_cfg) {
            Ok(next) => u = next,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        let t = k as f64 * dt;
        if k % stride == 0 || k == steps {
            records.push(diagnose(&u, t));
            if cfg.flow.field_stride > 0 && (k / stride) % cfg.flow.field_stride == 0 {
                let path = out_dir.join(format!("field_{k:08}.csv"));
                std::fs::write(path, u.to_csv())
                    .map_err(|e| HfError::Numeric(format!("cannot write field: {e}")))?;
            }
        }
    }

    let mut csv = String::from(DiagRecord::CSV_HEADER);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    std::fs::write(out_dir.join("trajectory.csv"), csv)
        .map_err(|e| HfError::Numeric(format!("cannot write trajectory: {e}")))?;

    let mu_series: Vec<(f64, f64)> = records
        .iter()
        .filter(|d| d.mu.is_finite())
        .map(|d| (d.t, d.mu))
        .collect();
    let fit = if mu_series.len() >= 10 {
        fit_decay_rate(&mu_series).ok()
    } else {
        None
    };
    let final_energy = records.last().map(|d| d.energy).unwrap_or(f64::NAN);
    let mut summary = String::from("{");
    let _ = write!(summary, "\"final_energy\":{final_energy:.16e}");
    match fit {
        Some((kappa, r2)) => {
            let _ = write!(summary, ",\"kappa_fit\":{kappa:.16e},\"r_squared\":{r2:.16e}");
        }
        None => summary.push_str(",\"kappa_fit\":null,\"r_squared\":null"),
    }
    let _ = write!(summary, ",\"samples\":{}", records.len());
    summary.push_str("}\n");
    std::fs::write(out_dir.join("summary.json"), summary)
        .map_err(|e| HfError::Numeric(format!("cannot write summary: {e}")))?;

    match failure {
        Some(e) => {
            eprintln!("numeric failure mid-run: {e}; partial outputs written");
            Ok(ExitCode::from(3))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_kappa(cfg: &RunConfig) -> Result<ExitCode, HfError> {
    let section = cfg
        .noise
        .as_ref()
        .ok_or_else(|| HfError::InvalidArgument("kappa needs a [noise] section".into()))?;
    let noise = NoiseSpec::default_family(section.epsilon, section.center)?;
    let functional = sign_functional(&noise);
    let k = kappa0(&noise)?;
    println!("functional = {functional:.10}");
    println!("kappa0 = {k:.10}");
    Ok(ExitCode::SUCCESS)
}

fn write_glue_state(
    out_dir: &Path,
    problem: &GluingProblem,
    st: &halfflow::gluing::GluingState,
) -> Result<(), HfError> {
    let fmt = |grid: &GridSpec, a: &[f64], b: &[f64], h1: &str| {
        let mut s = format!("x,{h1}1,{h1}2\n");
        for (i, x) in grid.points().enumerate() {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", x, a[i], b[i]);
        }
        s
    };
    std::fs::write(
        out_dir.join("last_state_psi.csv"),
        fmt(&problem.outer_grid, &st.psi.c1, &st.psi.c2, "psi"),
    )
    .map_err(|e| HfError::Numeric(format!("cannot write state: {e}")))?;
    std::fs::write(
        out_dir.join("last_state_phi.csv"),
        fmt(&problem.inner_grid, &st.phi.v1, &st.phi.v2, "phi"),
    )
    .map_err(|e| HfError::Numeric(format!("cannot write state: {e}")))?;
    Ok(())
}

fn cmd_glue(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode, HfError> {
    let g = &cfg.gluing;
    let mut glue_cfg = GluingConfig::new(g.t0, g.rho, g.dt)?;
    glue_cfg.sigma = g.sigma;
    glue_cfg.alpha = g.alpha;
    glue_cfg.inner_points = g.inner_points;
    let noise = noise_from(cfg)?;
    let ps = match &noise {
        Some(ns) => ParamState::from_noise(ns)?,
        None => ParamState::stationary(cfg.noise.as_ref().map(|n| n.center).unwrap_or(0.0)),
    };
    let outer_grid = make_grid(cfg.grid.half_width, cfg.grid.points)?;
    let problem = GluingProblem::new(glue_cfg, ps, noise, outer_grid)?;

    let mut st = problem.initial_state();
    let mut csv = String::from("t,tau,lambda,xi1,proj_Z2,proj_Z3,inner_sup,outer_sup\n");
    let mut worst_projection = 0.0f64;
    for _ in 0..g.steps {
        match problem.step_with_report(&st) {
            Ok(rep) => {
                worst_projection = worst_projection
                    .max(rep.proj_z2.abs())
                    .max(rep.proj_z3.abs());
                let _ = writeln!(
                    csv,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    rep.state.t,
                    rep.state.tau,
                    rep.state.lambda,
                    rep.state.xi1,
                    rep.proj_z2,
                    rep.proj_z3,
                    rep.state.phi.sup_norm(),
                    rep.state.psi.sup_norm()
                );
                st = rep.state;
            }
            Err(e @ HfError::Consistency(_)) => {
                std::fs::write(out_dir.join("glue.csv"), &csv)
                    .map_err(|io| HfError::Numeric(format!("cannot write glue csv: {io}")))?;
                write_glue_state(out_dir, &problem, &st)?;
                eprintln!("consistency failure: {e}; last valid state dumped");
                return Ok(ExitCode::from(5));
            }
            Err(e) => return Err(e),
        }
    }
    std::fs::write(out_dir.join("glue.csv"), &csv)
        .map_err(|e| HfError::Numeric(format!("cannot write glue csv: {e}")))?;
    println!(
        "worst raw mode projection = {worst_projection:.10e} (bound {:.3e})",
        g.projection_tol
    );

    if g.cross_check {
        // Evolve the reconstructed map directly and compare over the horizon.
        let u0 = problem.reconstruct(&problem.initial_state())?;
        let flow_cfg = FlowConfig::new(g.dt, g.dt * g.steps as f64)?;
        let mut u = u0;
        for _ in 0..g.steps {
            u = step(&u, &flow_cfg)?;
        }
        let rec = problem.reconstruct(&st)?;
        let mut sup = 0.0f64;
        for i in 0..outer_grid.point_count {
            sup = sup
                .max((u.u1[i] - rec.u1[i]).abs())
                .max((u.u2[i] - rec.u2[i]).abs());
        }
        println!("reconstruction cross-check sup difference = {sup:.10e}");
    }
    Ok(if worst_projection <= g.projection_tol {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
