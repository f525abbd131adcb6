//! Branching Brownian motion with drift `−μ`, binary branching at unit rate,
//! absorption at a lower barrier, and an optional absorbing or freezing upper
//! barrier. Full genealogy is recorded in an append-only arena.
//!
//! Time marches on a uniform grid of width `dt`. Each alive particle receives
//! the Euler displacement `−μ dt + √dt G`; barrier crossings *between* grid
//! points are recovered exactly by the Brownian-bridge correction
//! `P(cross) = exp(−2 d₀ d₁/dt)` on the endpoint distances. Branching uses
//! per-particle exponential clocks re-armed at step boundaries, which
//! reproduces the per-step Bernoulli law `P(branch) = 1 − e^{−dt}` exactly
//! (at most one branch per particle per step, the child placed at the
//! parent's post-move position).

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::functionals::{self, FunctionalSample, MartingaleKind, UpperTreatment};
use crate::model::{ModelParams, SeedSpec};
use crate::real::Real;
use crate::{Error, Result};

/// Default population cap.
pub const DEFAULT_POP_CAP: usize = 1_000_000;

/// Bridge exponents above this are treated as non-crossings
/// (`exp(−45) ≈ 3e−20`, far below any replica budget here).
const BRIDGE_EXP_CUTOFF: f64 = 45.0;

/// Time between Z-threshold evaluations inside [`ParticleSystem::run_until`].
const Z_CHECK_INTERVAL: f64 = 0.1;

/// Default step: `1e−3 · min(1, L²/100)`.
pub fn default_dt(params: &ModelParams<f64>) -> f64 {
    1e-3 * (params.l * params.l / 100.0).min(1.0)
}

/// Probability that a Brownian bridge over `[0, dt]` with endpoint distances
/// `d_start`, `d_end` from a barrier touches it.
pub fn bridge_crossing_prob<F: Real>(d_start: F, d_end: F, dt: F) -> Result<F> {
    if dt <= F::zero() {
        return Err(Error::domain(format!("dt must be positive, got {dt}")));
    }
    if d_start < F::zero() || d_end < F::zero() {
        return Err(Error::domain("endpoint distances must be nonnegative"));
    }
    Ok((-F::lit(2.0) * d_start * d_end / dt).exp())
}

/// Why a genealogy node was closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeathCause {
    AbsorbedLower,
    AbsorbedUpper,
    Branched,
    AliveAtEnd,
}

impl DeathCause {
    /// Stable label used in genealogy dumps.
    pub fn label(&self) -> &'static str {
        match self {
            DeathCause::AbsorbedLower => "absorbed_0",
            DeathCause::AbsorbedUpper => "absorbed_upper",
            DeathCause::Branched => "branched",
            DeathCause::AliveAtEnd => "alive_at_end",
        }
    }
}

/// Sentinel parent id for roots.
pub const ROOT: u32 = u32::MAX;

/// Append-only genealogy arena. Node ids are insertion indices; a branch
/// closes the parent (cause `Branched`) and opens two children.
#[derive(Clone, Debug, Default)]
pub struct Genealogy {
    parent: Vec<u32>,
    birth_time: Vec<f64>,
    death_time: Vec<f64>,
    death_cause: Vec<DeathCause>,
    death_position: Vec<f64>,
}

impl Genealogy {
    fn new_node(&mut self, parent: u32, birth: f64) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(parent);
        self.birth_time.push(birth);
        self.death_time.push(f64::INFINITY);
        self.death_cause.push(DeathCause::AliveAtEnd);
        self.death_position.push(f64::NAN);
        id
    }

    fn close(&mut self, node: u32, time: f64, cause: DeathCause, position: f64) {
        let i = node as usize;
        debug_assert!(self.death_time[i].is_infinite(), "closing a closed node");
        self.death_time[i] = time;
        self.death_cause[i] = cause;
        self.death_position[i] = position;
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, node: u32) -> Option<u32> {
        let p = self.parent[node as usize];
        (p != ROOT).then_some(p)
    }

    pub fn birth_time(&self, node: u32) -> f64 {
        self.birth_time[node as usize]
    }

    /// `None` while the node is open (alive or frozen).
    pub fn death_time(&self, node: u32) -> Option<f64> {
        let t = self.death_time[node as usize];
        t.is_finite().then_some(t)
    }

    pub fn death_cause(&self, node: u32) -> DeathCause {
        self.death_cause[node as usize]
    }

    /// Node interval contains `t`: `birth ≤ t < death`.
    pub fn is_alive_at(&self, node: u32, t: f64) -> bool {
        self.birth_time[node as usize] <= t && t < self.death_time[node as usize]
    }

    /// The unique ancestor of `node` whose lifetime contains `t`.
    pub fn ancestor_at(&self, node: u32, t: f64) -> Result<u32> {
        if t > self.death_time[node as usize] || t < 0.0 {
            return Err(Error::domain(format!(
                "time {t} is outside the node's past (death at {})",
                self.death_time[node as usize]
            )));
        }
        let mut cur = node;
        while self.birth_time[cur as usize] > t {
            match self.parent(cur) {
                Some(p) => cur = p,
                None => break, // root born after t: the root is the ancestor
            }
        }
        Ok(cur)
    }

    /// Forest sanity: children born no earlier than parents, branched parents
    /// closed exactly at the children's birth.
    pub fn check_forest(&self) -> Result<()> {
        for i in 0..self.len() {
            let p = self.parent[i];
            if p != ROOT {
                let p = p as usize;
                if p >= i {
                    return Err(Error::domain(format!("node {i} has non-prior parent {p}")));
                }
                if self.birth_time[i] < self.birth_time[p] {
                    return Err(Error::domain(format!("node {i} born before parent {p}")));
                }
                if self.death_cause[p] != DeathCause::Branched
                    || (self.death_time[p] - self.birth_time[i]).abs() > 0.0
                {
                    return Err(Error::domain(format!(
                        "node {i}'s parent {p} did not branch at the child's birth"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Where a frozen or absorbing upper barrier sits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum UpperMode {
    /// Particles are killed on contact (counted).
    Kill,
    /// Particles are stopped on contact and held at the barrier (counted).
    Freeze,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    /// Absorbing lower barrier level (0 for the origin).
    pub lower: f64,
    pub upper: Option<(f64, UpperMode)>,
}

impl BarrierSpec {
    pub fn origin_only() -> Self {
        BarrierSpec { lower: 0.0, upper: None }
    }

    pub fn lower_only(level: f64) -> Self {
        BarrierSpec { lower: level, upper: None }
    }

    pub fn killed_between(lower: f64, upper: f64) -> Self {
        BarrierSpec { lower, upper: Some((upper, UpperMode::Kill)) }
    }

    pub fn frozen_at(lower: f64, upper: f64) -> Self {
        BarrierSpec { lower, upper: Some((upper, UpperMode::Freeze)) }
    }

    pub fn upper_treatment(&self) -> UpperTreatment {
        match self.upper {
            None => UpperTreatment::Absent,
            Some((_, UpperMode::Kill)) => UpperTreatment::Kill,
            Some((_, UpperMode::Freeze)) => UpperTreatment::Freeze,
        }
    }
}

/// Barrier hit census: count and (nondecreasing) hit times.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BarrierCounts {
    pub n_hits: u64,
    pub hit_times: Vec<f64>,
    /// Set when a census run was cut short by its time or population cap.
    pub truncated: bool,
}

/// View of one particle (storage is struct-of-arrays internally).
#[derive(Clone, Copy, Debug)]
pub struct Particle {
    pub id: u64,
    pub position: f64,
    pub birth_time: f64,
    pub parent_id: Option<u64>,
    pub alive: bool,
}

/// Stop rule for [`ParticleSystem::run_until`].
#[derive(Clone, Copy, Debug)]
pub struct StopSpec {
    pub horizon: f64,
    pub dt: f64,
    /// Stop (classify as survival) once `Z` reaches this value.
    pub z_threshold: Option<f64>,
}

/// Terminal state of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Extinct { time: f64 },
    AliveAtHorizon,
    PopulationCap { time: f64 },
    ZThreshold { time: f64 },
}

/// The live particle system plus its genealogy.
#[derive(Clone, Debug)]
pub struct ParticleSystem {
    pub params: ModelParams<f64>,
    pub barriers: BarrierSpec,
    pub genealogy: Genealogy,
    time: f64,
    pos: Vec<f64>,
    next_branch: Vec<f64>,
    node: Vec<u32>,
    frozen: Vec<u32>,
    scratch_children: Vec<(f64, f64, u32)>,
    lower_hits: BarrierCounts,
    upper_hits: BarrierCounts,
    branching: bool,
    pop_cap: usize,
    overflowed: bool,
    births: u64,
    branch_events: u64,
    absorptions: u64,
}

impl ParticleSystem {
    /// Build a system with one root per initial position. Positions must lie
    /// strictly between the barriers. Branch clocks are armed from `rng`.
    pub fn new<R: Rng>(
        params: ModelParams<f64>,
        barriers: BarrierSpec,
        initial: &[f64],
        branching: bool,
        pop_cap: usize,
        rng: &mut R,
    ) -> Result<Self> {
        for &x in initial {
            if x <= barriers.lower {
                return Err(Error::domain(format!(
                    "initial position {x} not above the lower barrier {}",
                    barriers.lower
                )));
            }
            if let Some((upper, _)) = barriers.upper {
                if x >= upper {
                    return Err(Error::domain(format!(
                        "initial position {x} not below the upper barrier {upper}"
                    )));
                }
                if upper <= barriers.lower {
                    return Err(Error::domain("upper barrier not above lower barrier"));
                }
            }
        }
        let mut genealogy = Genealogy::default();
        let mut pos = Vec::with_capacity(initial.len());
        let mut next_branch = Vec::with_capacity(initial.len());
        let mut node = Vec::with_capacity(initial.len());
        for &x in initial {
            pos.push(x);
            let e: f64 = Exp1.sample(rng);
            next_branch.push(e);
            node.push(genealogy.new_node(ROOT, 0.0));
        }
        Ok(ParticleSystem {
            params,
            barriers,
            genealogy,
            time: 0.0,
            pos,
            next_branch,
            node,
            frozen: Vec::new(),
            scratch_children: Vec::new(),
            lower_hits: BarrierCounts::default(),
            upper_hits: BarrierCounts::default(),
            branching,
            pop_cap,
            overflowed: false,
            births: initial.len() as u64,
            branch_events: 0,
            absorptions: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn alive_count(&self) -> usize {
        self.pos.len()
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.len()
    }

    /// Active (diffusing) particle positions.
    pub fn positions(&self) -> &[f64] {
        &self.pos
    }

    pub fn lower_hits(&self) -> &BarrierCounts {
        &self.lower_hits
    }

    pub fn upper_hits(&self) -> &BarrierCounts {
        &self.upper_hits
    }

    pub fn overflowed(&self) -> bool {
        self.overflowed
    }

    /// Particle views (active first, then frozen).
    pub fn particles(&self) -> impl Iterator<Item = Particle> + '_ {
        let upper_level = self.barriers.upper.map(|(l, _)| l).unwrap_or(f64::NAN);
        self.pos
            .iter()
            .zip(&self.node)
            .map(move |(&x, &n)| Particle {
                id: n as u64,
                position: x,
                birth_time: self.genealogy.birth_time(n),
                parent_id: self.genealogy.parent(n).map(u64::from),
                alive: true,
            })
            .chain(self.frozen.iter().map(move |&n| Particle {
                id: n as u64,
                position: upper_level,
                birth_time: self.genealogy.birth_time(n),
                parent_id: self.genealogy.parent(n).map(u64::from),
                alive: true,
            }))
    }

    /// Node ids of active particles.
    pub fn active_nodes(&self) -> &[u32] {
        &self.node
    }

    /// `Z` of the current configuration (active plus frozen).
    pub fn current_z(&self) -> f64 {
        let mut z = functionals::z_indicator(&self.pos, self.params.mu, self.params.l);
        if let Some((level, _)) = self.barriers.upper {
            if !self.frozen.is_empty() && level <= self.params.l {
                z += self.frozen.len() as f64
                    * (self.params.mu * level).exp()
                    * (std::f64::consts::PI * level / self.params.l).sin();
            }
        }
        z
    }

    /// All functionals of the current configuration (active plus frozen).
    pub fn sample_functionals(&self) -> FunctionalSample {
        let mut s = FunctionalSample::measure(&self.pos, self.params.mu, self.params.l, self.time);
        if let Some((level, _)) = self.barriers.upper {
            let k = self.frozen.len() as f64;
            if k > 0.0 {
                let mu = self.params.mu;
                if level <= self.params.l {
                    s.z += k
                        * (mu * level).exp()
                        * (std::f64::consts::PI * level / self.params.l).sin();
                }
                s.y += k * (mu * level).exp();
                s.v += k * level * (mu * level + (mu * mu / 2.0 - 1.0) * self.time).exp();
                s.m += self.frozen.len();
            }
        }
        s
    }

    /// Advance the system by one step of width `dt`.
    pub fn step<R: Rng>(&mut self, dt: f64, rng: &mut R) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!("dt must be positive, got {dt}")));
        }
        let t1 = self.time + dt;
        let mu = self.params.mu;
        let drift = -mu * dt;
        let sqrt_dt = dt.sqrt();
        let lower = self.barriers.lower;
        let upper = self.barriers.upper;
        let branching = self.branching;

        debug_assert!(self.scratch_children.is_empty());
        let mut i = 0usize;
        while i < self.pos.len() {
            let x0 = self.pos[i];
            let g: f64 = StandardNormal.sample(rng);
            let x1 = x0 + drift + sqrt_dt * g;

            // Lower barrier: endpoint test, then intra-step bridge test.
            let d1 = x1 - lower;
            let crossed_lower = if d1 <= 0.0 {
                true
            } else {
                let q = 2.0 * (x0 - lower) * d1 / dt;
                q < BRIDGE_EXP_CUTOFF && rng.gen::<f64>() < (-q).exp()
            };
            if crossed_lower {
                let node = self.node[i];
                self.genealogy.close(node, t1, DeathCause::AbsorbedLower, lower);
                self.lower_hits.n_hits += 1;
                self.lower_hits.hit_times.push(t1);
                self.absorptions += 1;
                self.remove_slot(i);
                continue; // slot i now holds a yet-unstepped particle
            }

            if let Some((level, mode)) = upper {
                let u1 = level - x1;
                let crossed_upper = if u1 <= 0.0 {
                    true
                } else {
                    let q = 2.0 * (level - x0) * u1 / dt;
                    q < BRIDGE_EXP_CUTOFF && rng.gen::<f64>() < (-q).exp()
                };
                if crossed_upper {
                    let node = self.node[i];
                    self.upper_hits.n_hits += 1;
                    self.upper_hits.hit_times.push(t1);
                    match mode {
                        UpperMode::Kill => {
                            self.genealogy.close(node, t1, DeathCause::AbsorbedUpper, level);
                            self.absorptions += 1;
                        }
                        UpperMode::Freeze => self.frozen.push(node),
                    }
                    self.remove_slot(i);
                    continue;
                }
            }

            self.pos[i] = x1;
            if branching && self.next_branch[i] <= t1 {
                // Parent closes; both children start at the post-move position
                // with fresh clocks from the end of the step.
                let parent = self.node[i];
                self.genealogy.close(parent, t1, DeathCause::Branched, x1);
                let c1 = self.genealogy.new_node(parent, t1);
                let c2 = self.genealogy.new_node(parent, t1);
                self.births += 2;
                self.branch_events += 1;
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                self.node[i] = c1;
                self.next_branch[i] = t1 + e1;
                self.scratch_children.push((x1, t1 + e2, c2));
            }
            i += 1;
        }
        // Children join after the sweep so they are not stepped at birth.
        for (x, clock, node) in self.scratch_children.drain(..) {
            self.pos.push(x);
            self.next_branch.push(clock);
            self.node.push(node);
        }
        if self.pos.len() > self.pop_cap {
            self.overflowed = true;
        }
        self.time = t1;
        // Conservation: every node ever created is a birth; a branch closes
        // one node and opens two.
        debug_assert_eq!(self.births, self.genealogy.len() as u64);
        debug_assert_eq!(
            self.pos.len() + self.frozen.len(),
            (self.births - self.branch_events - self.absorptions) as usize
        );
        Ok(())
    }

    #[inline]
    fn remove_slot(&mut self, i: usize) {
        self.pos.swap_remove(i);
        self.next_branch.swap_remove(i);
        self.node.swap_remove(i);
    }

    /// Run until extinction, `Z`-threshold, population cap, or the horizon.
    /// The final partial step is shortened so the run ends exactly at the
    /// horizon.
    pub fn run_until<R: Rng>(&mut self, stop: &StopSpec, rng: &mut R) -> Result<Outcome> {
        let z_check_every = ((Z_CHECK_INTERVAL / stop.dt).round() as usize).max(1);
        let mut steps = 0usize;
        while self.time < stop.horizon {
            if self.pos.is_empty() {
                if self.frozen.is_empty() {
                    return Ok(Outcome::Extinct { time: self.time });
                }
                // Only frozen particles remain: nothing evolves.
                self.time = stop.horizon;
                return Ok(Outcome::AliveAtHorizon);
            }
            let dt = stop.dt.min(stop.horizon - self.time);
            self.step(dt, rng)?;
            steps += 1;
            if self.overflowed {
                return Ok(Outcome::PopulationCap { time: self.time });
            }
            if let Some(thr) = stop.z_threshold {
                if steps % z_check_every == 0 && self.current_z() >= thr {
                    return Ok(Outcome::ZThreshold { time: self.time });
                }
            }
        }
        if self.pos.is_empty() && self.frozen.is_empty() {
            Ok(Outcome::Extinct { time: self.time })
        } else {
            Ok(Outcome::AliveAtHorizon)
        }
    }

    /// Dump the genealogy as newline-delimited records:
    /// `id,parent_id,birth_time,death_time,death_cause,death_position`.
    /// Open nodes (alive or frozen) have an empty `death_time`, cause
    /// `alive_at_end`, and their current position.
    pub fn dump_genealogy<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut live_pos: std::collections::HashMap<u32, f64> = self
            .node
            .iter()
            .zip(&self.pos)
            .map(|(&n, &x)| (n, x))
            .collect();
        if let Some((level, _)) = self.barriers.upper {
            for &n in &self.frozen {
                live_pos.insert(n, level);
            }
        }
        writeln!(w, "id,parent_id,birth_time,death_time,death_cause,death_position")?;
        let g = &self.genealogy;
        for i in 0..g.len() {
            let id = i as u32;
            let parent =
                g.parent(id).map(|p| p.to_string()).unwrap_or_default();
            match g.death_time(id) {
                Some(t) => writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    id,
                    parent,
                    g.birth_time(id),
                    t,
                    g.death_cause(id).label(),
                    g.death_position[i],
                )?,
                None => writeln!(
                    w,
                    "{},{},{},,{},{}",
                    id,
                    parent,
                    g.birth_time(id),
                    DeathCause::AliveAtEnd.label(),
                    live_pos.get(&id).copied().unwrap_or(f64::NAN),
                )?,
            }
        }
        Ok(())
    }
}

/// Monte Carlo settings for survival estimation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct McSettings {
    pub replicas: usize,
    pub horizon: f64,
    pub pop_cap: usize,
    /// `None`: `min(50 N̄ (log N̄)², 10⁴ Z₀)` with `N̄` the equivalent
    /// population size (the second term only when `Z₀ > 0`).
    pub z_threshold: Option<f64>,
    /// `None`: [`default_dt`].
    pub dt: Option<f64>,
    /// Flag the estimate when the decided fraction falls below this.
    pub decided_floor: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            replicas: 10_000,
            horizon: 100.0,
            pop_cap: DEFAULT_POP_CAP,
            z_threshold: None,
            dt: None,
            decided_floor: 0.5,
        }
    }
}

/// Default survival-classification threshold on `Z` for a start at `x`.
pub fn default_z_threshold(params: &ModelParams<f64>, x: f64) -> f64 {
    let n = params.equivalent_population_size();
    let bulk = 50.0 * n * n.ln() * n.ln();
    let z0 = functionals::z_indicator(&[x], params.mu, params.l);
    if z0 > 0.0 {
        bulk.min(1e4 * z0)
    } else {
        bulk
    }
}

/// Survival estimate with its classification diagnostics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub p_hat: f64,
    pub ci_halfwidth: f64,
    /// Fraction of replicas classified without the alive-at-horizon proxy.
    pub decided_fraction: f64,
    pub replicas: usize,
    pub n_extinct: usize,
    pub n_z_threshold: usize,
    pub n_pop_cap: usize,
    pub n_alive_at_horizon: usize,
    /// Set when `decided_fraction` is below the configured floor.
    pub flagged: bool,
}

/// Estimate the survival probability from `x` by independent replicas.
/// Extinction counts as death; reaching the `Z` threshold or the population
/// cap counts as survival; still alive at the horizon counts as survival but
/// is tracked as undecided.
pub fn estimate_survival(
    x: f64,
    params: &ModelParams<f64>,
    mc: &McSettings,
    seed: SeedSpec,
) -> Result<SurvivalEstimate> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("start must be positive, got {x}")));
    }
    if mc.replicas == 0 {
        return Err(Error::domain("at least one replica required"));
    }
    let dt = mc.dt.unwrap_or_else(|| default_dt(params));
    let z_threshold = mc.z_threshold.unwrap_or_else(|| default_z_threshold(params, x));
    let stop = StopSpec { horizon: mc.horizon, dt, z_threshold: Some(z_threshold) };
    let outcomes: Vec<Outcome> = (0..mc.replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.replica(i as u64).rng();
            let mut system = ParticleSystem::new(
                *params,
                BarrierSpec::origin_only(),
                &[x],
                true,
                mc.pop_cap,
                &mut rng,
            )?;
            system.run_until(&stop, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut est = SurvivalEstimate {
        p_hat: 0.0,
        ci_halfwidth: 0.0,
        decided_fraction: 0.0,
        replicas: mc.replicas,
        n_extinct: 0,
        n_z_threshold: 0,
        n_pop_cap: 0,
        n_alive_at_horizon: 0,
        flagged: false,
    };
    for o in &outcomes {
        match o {
            Outcome::Extinct { .. } => est.n_extinct += 1,
            Outcome::ZThreshold { .. } => est.n_z_threshold += 1,
            Outcome::PopulationCap { .. } => est.n_pop_cap += 1,
            Outcome::AliveAtHorizon => est.n_alive_at_horizon += 1,
        }
    }
    let survived = est.n_z_threshold + est.n_pop_cap + est.n_alive_at_horizon;
    est.p_hat = survived as f64 / mc.replicas as f64;
    est.ci_halfwidth = crate::stats::binomial_ci_halfwidth(est.p_hat, mc.replicas);
    est.decided_fraction = 1.0 - est.n_alive_at_horizon as f64 / mc.replicas as f64;
    est.flagged = est.decided_fraction < mc.decided_floor;
    Ok(est)
}

/// Settings for a first-passage census run.
#[derive(Clone, Copy, Debug)]
pub struct CensusSettings {
    pub time_cap: f64,
    pub pop_cap: usize,
    pub dt: Option<f64>,
}

impl Default for CensusSettings {
    fn default() -> Self {
        CensusSettings { time_cap: 1_000.0, pop_cap: DEFAULT_POP_CAP, dt: None }
    }
}

/// Count the particles ever hitting `barrier_level` when particles are killed
/// there, starting from one particle at `x_start`. The count may be infinite
/// in principle; the caps bound the run and set the truncation flag.
pub fn first_passage_census(
    x_start: f64,
    barrier_level: f64,
    params: &ModelParams<f64>,
    settings: &CensusSettings,
    seed: SeedSpec,
) -> Result<BarrierCounts> {
    if !(barrier_level > 0.0 && barrier_level < x_start) {
        return Err(Error::domain(format!(
            "need 0 < barrier_level < x_start, got {barrier_level} vs {x_start}"
        )));
    }
    let dt = settings.dt.unwrap_or_else(|| default_dt(params));
    let mut rng = seed.rng();
    let mut system = ParticleSystem::new(
        *params,
        BarrierSpec::lower_only(barrier_level),
        &[x_start],
        true,
        settings.pop_cap,
        &mut rng,
    )?;
    let stop = StopSpec { horizon: settings.time_cap, dt, z_threshold: None };
    let outcome = system.run_until(&stop, &mut rng)?;
    let mut counts = system.lower_hits.clone();
    counts.truncated = !matches!(outcome, Outcome::Extinct { .. });
    Ok(counts)
}

/// Simulate the ensemble for a martingale / supermartingale contract and
/// report ensemble drift: `Z̄` (killed at 0 and `L`) or `V` (frozen at `L`).
pub fn martingale_ensemble(
    params: &ModelParams<f64>,
    start: f64,
    kind: MartingaleKind,
    sample_times: &[f64],
    replicas: usize,
    dt: f64,
    seed: SeedSpec,
) -> Result<functionals::DriftReport> {
    if sample_times.is_empty() || sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("sample times must be strictly increasing"));
    }
    let barriers = match kind {
        MartingaleKind::ZKilledAtUpper => BarrierSpec::killed_between(0.0, params.l),
        MartingaleKind::VStoppedAtUpper => BarrierSpec::frozen_at(0.0, params.l),
    };
    let ensemble: Vec<Vec<FunctionalSample>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.replica(i as u64).rng();
            let mut system =
                ParticleSystem::new(*params, barriers, &[start], true, DEFAULT_POP_CAP, &mut rng)?;
            let mut series = Vec::with_capacity(sample_times.len());
            for &t in sample_times {
                while system.time() < t {
                    let step = dt.min(t - system.time());
                    system.step(step, &mut rng)?;
                }
                series.push(system.sample_functionals());
            }
            Ok(series)
        })
        .collect::<Result<_>>()?;
    let initial = match kind {
        MartingaleKind::ZKilledAtUpper => functionals::z_killed(&[start], params.mu, params.l),
        MartingaleKind::VStoppedAtUpper => functionals::compute_v(&[start], params.mu, 0.0),
    };
    functionals::martingale_report(&ensemble, kind, initial, barriers.upper_treatment())
}
