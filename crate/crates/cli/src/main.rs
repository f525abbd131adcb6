//! `bbmlab`: experiments and module-level tools for near-critical branching
//! Brownian motion with absorption.
//!
//! Exit codes: 0 success, 2 completed with flagged results, 1 error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bbmlab::config::ExperimentConfig;
use bbmlab::{emit_all, run};
use bbmlab_core::coalescent::bs_sample;
use bbmlab_core::csbp::{sample_path, CsbpParams};
use bbmlab_core::engine::{BarrierSpec, ParticleSystem, StopSpec};
use bbmlab_core::functionals::FunctionalSample;
use bbmlab_core::wave::{
    solve_kolmogorov_bvp_on, solve_traveling_wave, tail_fit, GridSpec, TailSide, WaveKind,
    WaveSolution,
};
use bbmlab_core::{ModelParams, SeedSpec};

#[derive(Parser)]
#[command(
    name = "bbmlab",
    version,
    about = "Monte Carlo and numerical experiments for branching Brownian motion with absorption"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file (JSON or TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Theta-vs-MC wave matching over an alpha grid.
    #[command(name = "thm1_wave_match")]
    Thm1WaveMatch(ExperimentArgs),
    /// Survival-shape ratio over an interior x grid.
    #[command(name = "thm2_asymptotic")]
    Thm2Asymptotic(ExperimentArgs),
    /// Functional scaling at t = c L^2.
    #[command(name = "prop_ic_scaling")]
    PropIcScaling(ExperimentArgs),
    /// Genealogical partitions vs the Bolthausen-Sznitman reference.
    #[command(name = "coalescent_compare")]
    CoalescentCompare(ExperimentArgs),
    /// Survival probability curve over starting points.
    #[command(name = "survival_curve")]
    SurvivalCurve(ExperimentArgs),
    /// Solve a wave boundary-value problem and export it.
    Wave(WaveArgs),
    /// Sample CSBP paths and export them.
    Csbp(CsbpArgs),
    /// Sample Bolthausen-Sznitman coalescents and export them.
    Coalesce(CoalesceArgs),
    /// Run raw particle-system replicas and dump genealogies.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct WaveArgs {
    /// Which problem: "theta" or "q".
    #[arg(long, default_value = "theta")]
    kind: String,
    /// Drift for the q problem.
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long)]
    domain_min: Option<f64>,
    #[arg(long)]
    domain_max: Option<f64>,
    #[arg(long, default_value_t = 4096)]
    points: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Tail-fit window (two values).
    #[arg(long, num_args = 2)]
    tail_window: Option<Vec<f64>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CsbpArgs {
    /// Mechanism drift constant.
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    z0: f64,
    /// Comma-separated time grid starting at 0.
    #[arg(long, default_value = "0,0.5,1,2,3,6")]
    times: String,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CoalesceArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, conflicts_with = "n")]
    epsilon: Option<f64>,
    /// Population-size parameterization.
    #[arg(long, short = 'N')]
    n: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    /// Initial particle position.
    #[arg(long)]
    x: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = bbmlab_core::engine::DEFAULT_POP_CAP)]
    pop_cap: usize,
    /// Also write a functional time series per replica.
    #[arg(long)]
    series: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Thm1WaveMatch(args)
        | Command::Thm2Asymptotic(args)
        | Command::PropIcScaling(args)
        | Command::CoalescentCompare(args)
        | Command::SurvivalCurve(args) => run_experiment(args),
        Command::Wave(args) => run_wave(args).map(|_| false),
        Command::Csbp(args) => run_csbp(args).map(|_| false),
        Command::Coalesce(args) => run_coalesce(args).map(|_| false),
        Command::Simulate(args) => run_simulate(args).map(|_| false),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_experiment(args: ExperimentArgs) -> anyhow_free::Result<bool> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.model.master_seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let output = run(&config)?;
    let dir = config.output_dir.join(config.experiment.name());
    let flagged = emit_all(&output, &dir)?;
    println!(
        "{}: {} table(s) written to {}{}",
        config.experiment.name(),
        output.tables.len(),
        dir.display(),
        if flagged { " (flagged rows present)" } else { "" }
    );
    Ok(flagged)
}

/// Tiny local error glue so main can mix core and cli errors.
mod anyhow_free {
    pub type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;
}

fn write(path: &PathBuf, body: String) -> anyhow_free::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn wave_csv(solution: &WaveSolution) -> String {
    let mut out = String::from("grid,value\n");
    for (x, v) in solution.grid.iter().zip(&solution.values) {
        out.push_str(&format!("{x},{v}\n"));
    }
    out
}

fn run_wave(args: WaveArgs) -> anyhow_free::Result<()> {
    let (solution, name) = match args.kind.as_str() {
        "theta" => {
            let spec = GridSpec::new(
                args.domain_min.unwrap_or(-18.0),
                args.domain_max.unwrap_or(15.0),
                args.points,
            );
            (solve_traveling_wave(&spec, args.tol)?, "theta")
        }
        "q" => {
            let rate = (args.mu * args.mu + 2.0f64).sqrt() - args.mu;
            let spec = GridSpec::new(
                0.0,
                args.domain_max.unwrap_or((20.0 / rate).max(30.0) * 1.2),
                args.points,
            );
            (
                solve_kolmogorov_bvp_on(args.mu, &spec, args.tol)?,
                "q_bvp",
            )
        }
        other => return Err(format!("unknown wave kind {other:?} (theta|q)").into()),
    };
    let mut solution = solution;
    if let Some(w) = &args.tail_window {
        let side = match solution.kind {
            WaveKind::ThetaWave => TailSide::LeftOfTheta,
            WaveKind::QBvp => TailSide::RightOfQ,
        };
        solution.tail_fit = Some(tail_fit(&solution, side, (w[0], w[1]))?);
    }
    write(&args.out.join(format!("{name}.csv")), wave_csv(&solution))?;
    let sidecar = serde_json::json!({
        "kind": solution.kind,
        "normalization": solution.normalization,
        "tail_fit": solution.tail_fit,
        "residual": solution.residual,
        "points": solution.grid.len(),
        "domain": [solution.grid[0], solution.grid[solution.grid.len() - 1]],
    });
    write(&args.out.join(format!("{name}.json")), format!("{sidecar:#}\n"))?;
    println!("wave {name}: residual {:.3e}", solution.residual);
    Ok(())
}

fn run_csbp(args: CsbpArgs) -> anyhow_free::Result<()> {
    let times: Vec<f64> = args
        .times
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()?;
    let params = CsbpParams::new(args.a);
    let mut csv = String::from("time,value,log_value,path_id\n");
    for i in 0..args.paths {
        let mut rng = SeedSpec::new(args.seed, i as u64).rng();
        let path = sample_path(args.z0, &times, &params, &mut rng)?;
        for (t, l) in path.times.iter().zip(&path.log_values) {
            csv.push_str(&format!("{t},{},{l},{i}\n", l.exp()));
        }
    }
    write(&args.out.join("csbp_paths.csv"), csv)?;
    let sidecar = serde_json::json!({
        "a": args.a,
        "alpha_root": params.alpha_root,
        "z0": args.z0,
        "paths": args.paths,
        "times": times,
        "master_seed": args.seed,
    });
    write(&args.out.join("csbp_paths.json"), format!("{sidecar:#}\n"))?;
    println!("csbp: {} paths on {} times", args.paths, times.len());
    Ok(())
}

fn run_coalesce(args: CoalesceArgs) -> anyhow_free::Result<()> {
    let ensemble: Vec<_> = (0..args.replicas)
        .map(|i| {
            let mut rng = SeedSpec::new(args.seed, i as u64).rng();
            bs_sample(args.n, args.horizon, &mut rng)
        })
        .collect::<bbmlab_core::Result<_>>()?;
    write(
        &args.out.join("bs_partitions.json"),
        format!("{:#}\n", serde_json::to_value(&ensemble)?),
    )?;
    println!("coalesce: {} replicas at n = {}", args.replicas, args.n);
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> anyhow_free::Result<()> {
    let params = match (args.epsilon, args.n) {
        (Some(eps), None) => ModelParams::from_epsilon(eps, args.a)?,
        (None, Some(n)) => ModelParams::from_population_size(n, args.a)?,
        _ => return Err("exactly one of --epsilon / -N required".into()),
    };
    let dt = args.dt.unwrap_or_else(|| bbmlab_core::engine::default_dt(&params));
    let mut outcomes = String::from("replica,outcome,time,alive,frozen,nodes\n");
    for i in 0..args.replicas {
        let mut rng = SeedSpec::new(args.seed, i as u64).rng();
        let mut system = ParticleSystem::new(
            params,
            BarrierSpec::origin_only(),
            &[args.x],
            true,
            args.pop_cap,
            &mut rng,
        )?;
        let stop = StopSpec { horizon: args.horizon, dt, z_threshold: None };
        let mut series: Vec<FunctionalSample> = Vec::new();
        let outcome = if args.series {
            // Sample the functionals every 0.1 time units along the run.
            let mut out = None;
            while system.time() < args.horizon {
                let t_next = (system.time() + 0.1).min(args.horizon);
                let leg = StopSpec { horizon: t_next, dt, z_threshold: None };
                let o = system.run_until(&leg, &mut rng)?;
                series.push(system.sample_functionals());
                if !matches!(o, bbmlab_core::engine::Outcome::AliveAtHorizon) {
                    out = Some(o);
                    break;
                }
            }
            out.unwrap_or(bbmlab_core::engine::Outcome::AliveAtHorizon)
        } else {
            system.run_until(&stop, &mut rng)?
        };
        let (label, time) = match outcome {
            bbmlab_core::engine::Outcome::Extinct { time } => ("extinct", time),
            bbmlab_core::engine::Outcome::AliveAtHorizon => ("alive_at_horizon", args.horizon),
            bbmlab_core::engine::Outcome::PopulationCap { time } => ("population_cap", time),
            bbmlab_core::engine::Outcome::ZThreshold { time } => ("z_threshold", time),
        };
        outcomes.push_str(&format!(
            "{i},{label},{time},{},{},{}\n",
            system.alive_count(),
            system.frozen_count(),
            system.genealogy.len()
        ));
        let mut dump = Vec::new();
        system.dump_genealogy(&mut dump)?;
        write(
            &args.out.join(format!("genealogy_{i:04}.csv")),
            String::from_utf8(dump).expect("dump is utf-8"),
        )?;
        if args.series {
            let mut buf = Vec::new();
            bbmlab_core::functionals::write_series(&mut buf, &[(i as u64, series)])?;
            write(
                &args.out.join(format!("series_{i:04}.csv")),
                String::from_utf8(buf).expect("series is utf-8"),
            )?;
        }
    }
    write(&args.out.join("outcomes.csv"), outcomes)?;
    println!("simulate: {} replica(s), dt = {dt}", args.replicas);
    Ok(())
}
