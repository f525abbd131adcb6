//! Particle-configuration functionals and their martingale contracts.
//!
//! For a configuration `x_1, …, x_M` and drift `μ`:
//!
//! * `Z = Σ e^{μ x_i} sin(π x_i / L) 1{x_i ≤ L}` — the critical-eigenfunction
//!   weight. With killing at both 0 and `L` (and `L = π/√ε`) it is a
//!   martingale; [`z_killed`] is the variant without the indicator for
//!   configurations already confined to `[0, L]`.
//! * `Y = Σ e^{μ x_i}` — the raw exponential weight.
//! * `V = Σ x_i e^{μ x_i + (μ²/2 − 1) t}` — a martingale under killing at 0
//!   only, and a supermartingale when particles are additionally stopped at
//!   an upper level.
//!
//! Sums are compensated: `e^{μx}` spans several orders of magnitude across an
//! occupied interval.

use serde::{Deserialize, Serialize};

use crate::real::{KahanSum, Real};
use crate::stats;
use crate::{Error, Result};

/// `Z` with the indicator: particles above `l` contribute zero.
pub fn z_indicator<F: Real>(positions: &[F], mu: F, l: F) -> F {
    let mut acc = KahanSum::new();
    let pi_over_l = F::PI() / l;
    for &x in positions {
        if x <= l {
            acc.add((mu * x).exp() * (pi_over_l * x).sin());
        }
    }
    acc.total()
}

/// `Z` without the indicator, for configurations confined to `[0, l]` by an
/// absorbing upper barrier.
pub fn z_killed<F: Real>(positions: &[F], mu: F, l: F) -> F {
    let mut acc = KahanSum::new();
    let pi_over_l = F::PI() / l;
    for &x in positions {
        acc.add((mu * x).exp() * (pi_over_l * x).sin());
    }
    acc.total()
}

/// `Y = Σ e^{μ x_i}`.
pub fn compute_y<F: Real>(positions: &[F], mu: F) -> F {
    let mut acc = KahanSum::new();
    for &x in positions {
        acc.add((mu * x).exp());
    }
    acc.total()
}

/// `V = Σ x_i e^{μ x_i + (μ²/2 − 1) t}`.
pub fn compute_v<F: Real>(positions: &[F], mu: F, t: F) -> F {
    let decay = (mu * mu / F::lit(2.0) - F::one()) * t;
    let mut acc = KahanSum::new();
    for &x in positions {
        acc.add(x * (mu * x + decay).exp());
    }
    acc.total()
}

/// One time-slice of the functionals on a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub time: f64,
    pub z: f64,
    pub y: f64,
    pub v: f64,
    /// Particle count (active plus stopped).
    pub m: usize,
}

impl FunctionalSample {
    /// Evaluate all functionals on a position slice.
    pub fn measure(positions: &[f64], mu: f64, l: f64, time: f64) -> Self {
        FunctionalSample {
            time,
            z: z_indicator(positions, mu, l),
            y: compute_y(positions, mu),
            v: compute_v(positions, mu, time),
            m: positions.len(),
        }
    }
}

/// Which functional contract an ensemble is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MartingaleKind {
    /// `Z̄` with killing at 0 and at the upper level: a martingale.
    ZKilledAtUpper,
    /// `V` with particles frozen at the upper level: a supermartingale.
    VStoppedAtUpper,
}

/// How the upper barrier was treated in the runs that produced an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpperTreatment {
    Absent,
    Kill,
    Freeze,
}

/// Ensemble drift diagnostics for a martingale / supermartingale contract.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftReport {
    pub kind: MartingaleKind,
    pub initial: f64,
    pub replicas: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    /// `(mean(t) − initial)/sem(t)` per grid time.
    pub z_vs_initial: Vec<f64>,
    /// Paired one-sided z-scores of consecutive increments,
    /// `mean(X(t_{k+1}) − X(t_k))/sem(diff)`; positive values indicate upward
    /// drift and contradict a supermartingale.
    pub step_z: Vec<f64>,
}

impl DriftReport {
    /// Largest |z| against the initial value.
    pub fn max_abs_z(&self) -> f64 {
        self.z_vs_initial.iter().fold(0.0, |m, z| m.max(z.abs()))
    }

    /// Largest upward increment z-score.
    pub fn max_step_z(&self) -> f64 {
        self.step_z.iter().fold(f64::NEG_INFINITY, |m, z| m.max(*z))
    }
}

/// Build a [`DriftReport`] from per-replica time series sampled on a common
/// grid. `upper` must match `kind`: killing for `Z̄`, freezing for `V`.
pub fn martingale_report(
    ensemble: &[Vec<FunctionalSample>],
    kind: MartingaleKind,
    initial: f64,
    upper: UpperTreatment,
) -> Result<DriftReport> {
    match (kind, upper) {
        (MartingaleKind::ZKilledAtUpper, UpperTreatment::Kill) => {}
        (MartingaleKind::VStoppedAtUpper, UpperTreatment::Freeze) => {}
        _ => {
            return Err(Error::BarrierMismatch(format!(
                "{kind:?} requires {} at the upper barrier",
                match kind {
                    MartingaleKind::ZKilledAtUpper => "killing",
                    MartingaleKind::VStoppedAtUpper => "freezing",
                }
            )))
        }
    }
    let replicas = ensemble.len();
    if replicas == 0 {
        return Err(Error::domain("empty ensemble"));
    }
    let n_times = ensemble[0].len();
    if ensemble.iter().any(|s| s.len() != n_times) {
        return Err(Error::domain("ragged ensemble: unequal sample grids"));
    }
    let pick = |s: &FunctionalSample| match kind {
        MartingaleKind::ZKilledAtUpper => s.z,
        MartingaleKind::VStoppedAtUpper => s.v,
    };

    let mut times = Vec::with_capacity(n_times);
    let mut mean = Vec::with_capacity(n_times);
    let mut sem = Vec::with_capacity(n_times);
    let mut z_vs_initial = Vec::with_capacity(n_times);
    for k in 0..n_times {
        let vals: Vec<f64> = ensemble.iter().map(|s| pick(&s[k])).collect();
        let (m, se) = stats::mean_sem(&vals);
        times.push(ensemble[0][k].time);
        mean.push(m);
        sem.push(se);
        z_vs_initial.push(if se > 0.0 { (m - initial) / se } else { 0.0 });
    }
    let mut step_z = Vec::new();
    for k in 1..n_times {
        let diffs: Vec<f64> =
            ensemble.iter().map(|s| pick(&s[k]) - pick(&s[k - 1])).collect();
        let (m, se) = stats::mean_sem(&diffs);
        step_z.push(if se > 0.0 { m / se } else { 0.0 });
    }
    Ok(DriftReport { kind, initial, replicas, times, mean, sem, z_vs_initial, step_z })
}

/// CSV time series of functional samples: `time,M,Z,Y,V,replica_id`.
pub fn write_series<W: std::io::Write>(
    mut w: W,
    ensemble: &[(u64, Vec<FunctionalSample>)],
) -> Result<()> {
    writeln!(w, "time,M,Z,Y,V,replica_id")?;
    for (replica, series) in ensemble {
        for s in series {
            writeln!(w, "{},{},{},{},{},{}", s.time, s.m, s.z, s.y, s.v, replica)?;
        }
    }
    Ok(())
}
