//! The experiment runners. Each is a pure function of (config, master seed):
//! replica streams are allocated in deterministic blocks, aggregation is
//! order-fixed, and the output tables serialize byte-identically on reruns.

use rayon::prelude::*;

use bbmlab_core::coalescent::{
    bs_sample, compare_coalescents, extract_partition, Partition, PartitionProcess,
    PartitionSource,
};
use bbmlab_core::engine::{
    estimate_survival, BarrierSpec, McSettings, Outcome, ParticleSystem, StopSpec,
};
use bbmlab_core::stats;
use bbmlab_core::wave::{solve_traveling_wave, GridSpec, WaveSolution};
use bbmlab_core::{ModelParams, SeedSpec};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;
use crate::table::{Cell, OutputFormat, Provenance, ResultTable};

/// Disjoint replica-stream blocks, handed out in declared order.
struct StreamAllocator {
    next: u64,
}

impl StreamAllocator {
    fn new() -> Self {
        StreamAllocator { next: 0 }
    }

    fn take(&mut self, count: usize) -> u64 {
        let base = self.next;
        self.next += count as u64;
        base
    }
}

/// Tables plus JSON sidecar documents (name, value).
pub struct ExperimentOutput {
    pub tables: Vec<ResultTable>,
    pub sidecars: Vec<(String, serde_json::Value)>,
}

impl ExperimentOutput {
    fn tables(tables: Vec<ResultTable>) -> Self {
        ExperimentOutput { tables, sidecars: Vec::new() }
    }

    pub fn flagged(&self) -> bool {
        self.tables.iter().any(|t| t.flagged)
    }
}

/// Run the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (params, seed) = config.model.resolve()?;
    let provenance = Provenance {
        experiment: config.experiment.name().to_string(),
        config_hash: config.hash(),
        master_seed: seed.master_seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    match config.experiment {
        ExperimentKind::Thm1WaveMatch => Ok(ExperimentOutput::tables(run_thm1(config, seed, provenance)?)),
        ExperimentKind::Thm2Asymptotic => {
            Ok(ExperimentOutput::tables(run_thm2(config, params, seed, provenance)?))
        }
        ExperimentKind::PropIcScaling => {
            Ok(ExperimentOutput::tables(run_prop_ic(config, seed, provenance)?))
        }
        ExperimentKind::CoalescentCompare => run_coalescent(config, params, seed, provenance),
        ExperimentKind::SurvivalCurve => {
            Ok(ExperimentOutput::tables(run_survival_curve(config, params, seed, provenance)?))
        }
    }
}

/// Write every table (both formats) and sidecar; returns whether any table
/// was flagged.
pub fn emit_all(output: &ExperimentOutput, dir: &std::path::Path) -> Result<bool> {
    for t in &output.tables {
        t.emit(dir, OutputFormat::Csv)?;
        t.emit(dir, OutputFormat::Json)?;
    }
    for (name, value) in &output.sidecars {
        std::fs::create_dir_all(dir)
            .map_err(|e| crate::error::CliError::Io(format!("create {}: {e}", dir.display())))?;
        let path = dir.join(name);
        std::fs::write(&path, format!("{value:#}\n"))
            .map_err(|e| crate::error::CliError::Io(format!("write {}: {e}", path.display())))?;
    }
    Ok(output.flagged())
}

/// Shape factor of the sharp survival asymptotics, `L e^{−μ(L−x)} sin(πx/L)`.
pub fn survival_shape(params: &ModelParams, x: f64) -> f64 {
    params.l * (-params.mu * (params.l - x)).exp() * (std::f64::consts::PI * x / params.l).sin()
}

/// Weighted least-squares translation fit of `curve(α + s)` to points
/// `(α_i, q_i, w_i)`; returns `(s, weighted RMS at s)`.
fn fit_shift(points: &[(f64, f64, f64)], curve: &WaveSolution) -> (f64, f64) {
    let objective = |s: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(alpha, q, w) in points {
            let d = q - curve.eval(alpha + s);
            num += w * d * d;
            den += w;
        }
        (num / den).sqrt()
    };
    let mut best_s = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..=800 {
        let s = -4.0 + 8.0 * k as f64 / 800.0;
        let v = objective(s);
        if v < best {
            best = v;
            best_s = s;
        }
    }
    let (mut lo, mut hi) = (best_s - 0.01, best_s + 0.01);
    for _ in 0..50 {
        let m1 = hi - 0.618_033_988_749_894_9 * (hi - lo);
        let m2 = lo + 0.618_033_988_749_894_9 * (hi - lo);
        if objective(m1) <= objective(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, objective(s))
}

fn run_thm1(
    config: &ExperimentConfig,
    seed: SeedSpec,
    provenance: Provenance,
) -> Result<Vec<ResultTable>> {
    let cfg = &config.thm1;
    let theta = solve_traveling_wave(&GridSpec::theta_default(), 1e-10)?;
    let mut table = ResultTable::new(
        "thm1_wave_match",
        provenance,
        &[
            ("epsilon", "1"),
            ("alpha", "space"),
            ("x", "space"),
            ("q_hat", "probability"),
            ("ci", "probability"),
            ("decided_fraction", "1"),
            ("theta_fitted", "probability"),
            ("shift", "space"),
            ("weighted_rms", "probability"),
            ("replicas", "count"),
            ("stream_base", "id"),
            ("endpoint", "flag"),
            ("flagged", "flag"),
        ],
    );
    let mut streams = StreamAllocator::new();
    for &eps in &cfg.epsilon_list {
        let params = ModelParams::from_epsilon(eps, config.model.a)?;
        // Interior grid: simulated estimates feeding the shift fit.
        let mut fit_points = Vec::new();
        let mut rows = Vec::new();
        for &alpha in &cfg.alpha_grid {
            let x = params.l + alpha;
            let base = streams.take(config.mc.replicas);
            let (q, ci, decided, flagged) = if x <= 0.0 {
                // Below the absorbing origin: survival is exactly 0.
                (0.0, 0.0, 1.0, false)
            } else {
                let est = estimate_survival(
                    x,
                    &params,
                    &config.mc.settings(),
                    seed.replica(base),
                )?;
                fit_points.push((alpha, est.p_hat, 1.0 / est.ci_halfwidth.max(1e-4).powi(2)));
                (est.p_hat, est.ci_halfwidth, est.decided_fraction, est.flagged)
            };
            rows.push((eps, alpha, x, q, ci, decided, base, config.mc.replicas, false, flagged));
        }
        for &alpha in &cfg.endpoint_alphas {
            let x = params.l + alpha;
            let base = streams.take(cfg.endpoint_replicas);
            let (q, ci, decided, flagged) = if x <= 0.0 {
                (0.0, 0.0, 1.0, false)
            } else {
                let mc = McSettings {
                    replicas: cfg.endpoint_replicas,
                    ..config.mc.settings()
                };
                let est = estimate_survival(x, &params, &mc, seed.replica(base))?;
                (est.p_hat, est.ci_halfwidth, est.decided_fraction, est.flagged)
            };
            rows.push((
                eps,
                alpha,
                x,
                q,
                ci,
                decided,
                base,
                cfg.endpoint_replicas,
                true,
                flagged,
            ));
        }
        let (shift, rms) = fit_shift(&fit_points, &theta);
        for (eps, alpha, x, q, ci, decided, base, replicas, endpoint, flagged) in rows {
            table.flagged |= flagged;
            table.push_row(vec![
                eps.into(),
                alpha.into(),
                x.into(),
                q.into(),
                ci.into(),
                decided.into(),
                theta.eval(alpha + shift).into(),
                shift.into(),
                rms.into(),
                replicas.into(),
                Cell::Int(base as i64),
                Cell::Int(endpoint as i64),
                Cell::Int(flagged as i64),
            ]);
        }
    }
    Ok(vec![table])
}

fn run_thm2(
    config: &ExperimentConfig,
    params: ModelParams,
    seed: SeedSpec,
    provenance: Provenance,
) -> Result<Vec<ResultTable>> {
    let cfg = &config.thm2;
    let mut points = ResultTable::new(
        "thm2_points",
        provenance.clone(),
        &[
            ("x", "space"),
            ("x_over_l", "1"),
            ("q_hat", "probability"),
            ("ci", "probability"),
            ("decided_fraction", "1"),
            ("shape", "probability_scale"),
            ("ratio", "1"),
            ("replicas", "count"),
            ("stream_base", "id"),
            ("flagged", "flag"),
        ],
    );
    let mut streams = StreamAllocator::new();
    let mut ratios = Vec::new();
    for &rel in &cfg.x_grid_rel {
        let x = rel * params.l;
        let base = streams.take(config.mc.replicas);
        let est = estimate_survival(x, &params, &config.mc.settings(), seed.replica(base))?;
        let shape = survival_shape(&params, x);
        // Table-assembly identity: shape(x) = e^{−μ(L−2x)} shape(L−x).
        debug_assert!(
            (survival_shape(&params, params.l - x)
                - shape * (params.mu * (params.l - 2.0 * x)).exp())
            .abs()
                < 1e-9 * shape.abs().max(1.0)
        );
        let degenerate = est.p_hat == 0.0;
        let ratio = if degenerate { f64::NAN } else { est.p_hat / shape };
        if !degenerate {
            ratios.push(ratio);
        }
        let flagged = est.flagged || degenerate;
        points.flagged |= flagged;
        points.push_row(vec![
            x.into(),
            rel.into(),
            est.p_hat.into(),
            est.ci_halfwidth.into(),
            est.decided_fraction.into(),
            shape.into(),
            ratio.into(),
            config.mc.replicas.into(),
            Cell::Int(base as i64),
            Cell::Int(flagged as i64),
        ]);
    }
    let mut summary = ResultTable::new(
        "thm2_summary",
        provenance,
        &[
            ("epsilon", "1"),
            ("points", "count"),
            ("ratio_min", "1"),
            ("ratio_max", "1"),
            ("max_over_min", "1"),
        ],
    );
    if !ratios.is_empty() {
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        summary.push_row(vec![
            params.epsilon.into(),
            ratios.len().into(),
            min.into(),
            max.into(),
            (max / min).into(),
        ]);
    }
    Ok(vec![points, summary])
}

fn run_prop_ic(
    config: &ExperimentConfig,
    seed: SeedSpec,
    provenance: Provenance,
) -> Result<Vec<ResultTable>> {
    let cfg = &config.prop_ic;
    let mut samples = ResultTable::new(
        "prop_ic_samples",
        provenance.clone(),
        &[
            ("epsilon", "1"),
            ("replica", "count"),
            ("stream", "id"),
            ("t", "time"),
            ("m", "count"),
            ("z_hat", "normalized"),
            ("y_hat", "normalized"),
            ("outcome", "text"),
        ],
    );
    let mut quantiles = ResultTable::new(
        "prop_ic_quantiles",
        provenance.clone(),
        &[
            ("epsilon", "1"),
            ("statistic", "text"),
            ("q10", "normalized"),
            ("q25", "normalized"),
            ("q50", "normalized"),
            ("q75", "normalized"),
            ("q90", "normalized"),
        ],
    );
    let mut laplace = ResultTable::new(
        "prop_ic_laplace",
        provenance.clone(),
        &[
            ("epsilon", "1"),
            ("lambda", "1"),
            ("lt_mean", "1"),
            ("lt_sem", "1"),
            ("psi_fitted", "1"),
            ("shift", "space"),
        ],
    );
    let theta = solve_traveling_wave(&GridSpec::theta_default(), 1e-10)?;
    let mut streams = StreamAllocator::new();
    for &eps in &cfg.epsilon_list {
        let params = ModelParams::from_epsilon(eps, config.model.a)?;
        let t_end = cfg.c * params.l * params.l;
        let start = params.l + cfg.alpha;
        let dt = cfg.dt.unwrap_or_else(|| bbmlab_core::engine::default_dt(&params));
        let base = streams.take(cfg.replicas);
        let norm = (std::f64::consts::PI * std::f64::consts::SQRT_2 / eps.sqrt()).exp();
        let runs: Vec<(usize, f64, f64, &'static str)> = (0..cfg.replicas)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.replica(base + i as u64).rng();
                let mut system = ParticleSystem::new(
                    params,
                    BarrierSpec::origin_only(),
                    &[start],
                    true,
                    cfg.pop_cap,
                    &mut rng,
                )?;
                let stop = StopSpec { horizon: t_end, dt, z_threshold: None };
                let outcome = system.run_until(&stop, &mut rng)?;
                let s = system.sample_functionals();
                let label = match outcome {
                    Outcome::Extinct { .. } => "extinct",
                    Outcome::AliveAtHorizon => "alive",
                    Outcome::PopulationCap { .. } => "pop_cap",
                    Outcome::ZThreshold { .. } => "z_threshold",
                };
                Ok((s.m, s.z, s.y, label))
            })
            .collect::<Result<_>>()?;

        let mut z_hats = Vec::with_capacity(cfg.replicas);
        let mut y_hats = Vec::with_capacity(cfg.replicas);
        for (i, (m, z, y, label)) in runs.iter().enumerate() {
            let z_hat = z / (eps.sqrt() * norm);
            let y_hat = y / norm;
            z_hats.push(z_hat);
            y_hats.push(y_hat);
            samples.push_row(vec![
                eps.into(),
                i.into(),
                Cell::Int((base + i as u64) as i64),
                t_end.into(),
                (*m).into(),
                z_hat.into(),
                y_hat.into(),
                (*label).into(),
            ]);
            if *label == "pop_cap" {
                samples.flagged = true;
            }
        }
        let quantile = |xs: &[f64], q: f64| -> f64 {
            let mut v = xs.to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pos = q * (v.len() - 1) as f64;
            let i = pos.floor() as usize;
            let w = pos - i as f64;
            if i + 1 < v.len() {
                v[i] * (1.0 - w) + v[i + 1] * w
            } else {
                v[i]
            }
        };
        for (name, xs) in [("z_hat", &z_hats), ("y_hat", &y_hats)] {
            quantiles.push_row(vec![
                eps.into(),
                name.into(),
                quantile(xs, 0.10).into(),
                quantile(xs, 0.25).into(),
                quantile(xs, 0.50).into(),
                quantile(xs, 0.75).into(),
                quantile(xs, 0.90).into(),
            ]);
        }

        // Empirical Laplace transform of W ≈ ẑ/(2π² e^{√2 α}), matched to the
        // wave via E[e^{−λW}] = ψ(log λ/√2 + shift), ψ = 1 − θ.
        let scale = 2.0
            * std::f64::consts::PI
            * std::f64::consts::PI
            * (std::f64::consts::SQRT_2 * cfg.alpha).exp();
        let w_vals: Vec<f64> = z_hats.iter().map(|z| z / scale).collect();
        let mut lt = Vec::new();
        for &lambda in &cfg.lambda_grid {
            let vals: Vec<f64> = w_vals.iter().map(|w| (-lambda * w).exp()).collect();
            let (mean, sem) = stats::mean_sem(&vals);
            lt.push((lambda, mean, sem));
        }
        let fit_points: Vec<(f64, f64, f64)> = lt
            .iter()
            .map(|&(lambda, mean, sem)| {
                // ψ(u) = 1 − θ(u): fit 1 − mean against θ(u + s).
                (lambda.ln() / std::f64::consts::SQRT_2, 1.0 - mean, 1.0 / sem.max(1e-4).powi(2))
            })
            .collect();
        let (shift, _) = fit_shift(&fit_points, &theta);
        for &(lambda, mean, sem) in &lt {
            let u = lambda.ln() / std::f64::consts::SQRT_2;
            laplace.push_row(vec![
                eps.into(),
                lambda.into(),
                mean.into(),
                sem.into(),
                (1.0 - theta.eval(u + shift)).into(),
                shift.into(),
            ]);
        }
    }
    Ok(vec![samples, quantiles, laplace])
}

/// Outcome of extracting one replica's partitions.
struct CoalescentReplica {
    process: Option<PartitionProcess>,
    alive: usize,
}

fn run_coalescent(
    config: &ExperimentConfig,
    params: ModelParams,
    seed: SeedSpec,
    provenance: Provenance,
) -> Result<ExperimentOutput> {
    let cfg = &config.coalescent;
    if cfg.n < 2 || cfg.n > 8 {
        return Err(crate::error::CliError::config("coalescent n must lie in 2..=8"));
    }
    let rescale = cfg.time_rescale.unwrap_or(
        1.0 / (std::f64::consts::PI * std::f64::consts::PI * std::f64::consts::SQRT_2),
    );
    let t_phys = cfg.t_horizon * params.epsilon.powf(-1.5);
    let start = params.l + cfg.alpha;
    let dt = cfg.dt.unwrap_or_else(|| bbmlab_core::engine::default_dt(&params));
    let mut streams = StreamAllocator::new();
    let base = streams.take(cfg.replicas);
    let replicas: Vec<CoalescentReplica> = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.replica(base + i as u64).rng();
            let mut system = ParticleSystem::new(
                params,
                BarrierSpec::origin_only(),
                &[start],
                true,
                cfg.pop_cap,
                &mut rng,
            )?;
            let stop = StopSpec { horizon: t_phys, dt, z_threshold: None };
            system.run_until(&stop, &mut rng)?;
            let alive = system.alive_count();
            if alive < cfg.n {
                return Ok(CoalescentReplica { process: None, alive });
            }
            let picked = rand::seq::index::sample(&mut rng, alive, cfg.n);
            let sampled: Vec<u32> =
                picked.iter().map(|k| system.active_nodes()[k]).collect();
            let mut events: Vec<(f64, Partition)> = Vec::new();
            for &s in &cfg.s_grid {
                let p = extract_partition(
                    &system.genealogy,
                    &sampled,
                    t_phys,
                    s * params.epsilon.powf(-1.5),
                )?;
                match events.last() {
                    Some((_, prev)) if prev.block_count() <= p.block_count() => {}
                    _ => events.push((s, p)),
                }
            }
            let process =
                PartitionProcess { n: cfg.n, events, source: PartitionSource::EmpiricalBbm };
            process.check_coarsening()?;
            Ok(CoalescentReplica { process: Some(process), alive })
        })
        .collect::<Result<_>>()?;

    let empirical: Vec<PartitionProcess> =
        replicas.iter().filter_map(|r| r.process.clone()).collect();
    let dropped = cfg.replicas - empirical.len();

    let bs_base = streams.take(cfg.bs_replicas);
    let reference: Vec<PartitionProcess> = (0..cfg.bs_replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.replica(bs_base + i as u64).rng();
            bs_sample(cfg.n, cfg.t_horizon * rescale, &mut rng)
        })
        .collect::<bbmlab_core::Result<_>>()?;

    let mut summary = ResultTable::new(
        "coalescent_summary",
        provenance.clone(),
        &[
            ("n", "count"),
            ("replicas", "count"),
            ("kept", "count"),
            ("dropped", "count"),
            ("drop_rate", "1"),
            ("bs_replicas", "count"),
            ("time_rescale", "1"),
            ("first_merge_ks_d", "1"),
            ("first_merge_ks_p", "probability"),
            ("partition_tv", "1"),
            ("tv_at_s", "time"),
        ],
    );
    let mut curves = ResultTable::new(
        "coalescent_block_counts",
        provenance.clone(),
        &[
            ("s", "time"),
            ("empirical_mean_blocks", "count"),
            ("bs_mean_blocks", "count"),
        ],
    );
    if !empirical.is_empty() {
        let report = compare_coalescents(&empirical, &reference, rescale, &cfg.s_grid)?;
        for (s, e, b) in &report.block_count_curves {
            curves.push_row(vec![(*s).into(), (*e).into(), (*b).into()]);
        }
        let (ks_d, ks_p) = report
            .first_merge_ks
            .map(|k| (k.statistic, k.p_value))
            .unwrap_or((f64::NAN, f64::NAN));
        let (tv_s, tv) = report.partition_tv.map(|(s, tv)| (s, tv)).unwrap_or((f64::NAN, f64::NAN));
        summary.push_row(vec![
            cfg.n.into(),
            cfg.replicas.into(),
            empirical.len().into(),
            dropped.into(),
            (dropped as f64 / cfg.replicas as f64).into(),
            cfg.bs_replicas.into(),
            rescale.into(),
            ks_d.into(),
            ks_p.into(),
            tv.into(),
            tv_s.into(),
        ]);
    } else {
        summary.flagged = true;
    }

    // Partition ensembles as JSON sidecars are emitted by the CLI layer; the
    // per-replica table keeps block counts per grid time.
    let mut partitions = ResultTable::new(
        "coalescent_partitions",
        provenance,
        &[
            ("replica", "count"),
            ("stream", "id"),
            ("alive", "count"),
            ("s", "time"),
            ("blocks", "count"),
            ("partition", "text"),
        ],
    );
    for (i, r) in replicas.iter().enumerate() {
        if let Some(p) = &r.process {
            for &s in &cfg.s_grid {
                let state = p.at(s);
                let text = state
                    .blocks()
                    .iter()
                    .map(|b| {
                        b.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
                    })
                    .collect::<Vec<_>>()
                    .join("|");
                partitions.push_row(vec![
                    i.into(),
                    Cell::Int((base + i as u64) as i64),
                    r.alive.into(),
                    s.into(),
                    state.block_count().into(),
                    Cell::Text(text),
                ]);
            }
        }
    }
    let sidecars = vec![
        (
            "empirical_partitions.json".to_string(),
            serde_json::to_value(&empirical).expect("partition ensemble serializes"),
        ),
        (
            "bs_partitions.json".to_string(),
            serde_json::to_value(&reference).expect("partition ensemble serializes"),
        ),
    ];
    Ok(ExperimentOutput { tables: vec![summary, curves, partitions], sidecars })
}

fn run_survival_curve(
    config: &ExperimentConfig,
    params: ModelParams,
    seed: SeedSpec,
    provenance: Provenance,
) -> Result<Vec<ResultTable>> {
    let cfg = &config.survival;
    let mut table = ResultTable::new(
        "survival_curve",
        provenance,
        &[
            ("x", "space"),
            ("p_hat", "probability"),
            ("ci", "probability"),
            ("decided_fraction", "1"),
            ("n_extinct", "count"),
            ("n_z_threshold", "count"),
            ("n_pop_cap", "count"),
            ("n_alive_at_horizon", "count"),
            ("replicas", "count"),
            ("stream_base", "id"),
            ("flagged", "flag"),
        ],
    );
    let mut streams = StreamAllocator::new();
    for &x in &cfg.x_grid {
        let base = streams.take(config.mc.replicas);
        let est = estimate_survival(x, &params, &config.mc.settings(), seed.replica(base))?;
        table.flagged |= est.flagged;
        table.push_row(vec![
            x.into(),
            est.p_hat.into(),
            est.ci_halfwidth.into(),
            est.decided_fraction.into(),
            est.n_extinct.into(),
            est.n_z_threshold.into(),
            est.n_pop_cap.into(),
            est.n_alive_at_horizon.into(),
            est.replicas.into(),
            Cell::Int(base as i64),
            Cell::Int(est.flagged as i64),
        ]);
    }
    Ok(vec![table])
}
