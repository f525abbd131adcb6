//! Continuous-state branching process with mechanism
//! `ψ(u) = a·u + 2π²·u·log u`.
//!
//! The Laplace flow `∂_t u = −ψ(u)`, `u_0 = λ` has the closed form
//!
//! ```text
//! u_t(λ) = exp( e^{−2π²t} (log λ + a/2π²) − a/2π² ),
//! ```
//!
//! giving `E[e^{−λ Z_t} | Z_0 = z] = e^{−z u_t(λ)}`. Transitions are exact:
//! given `Z_t = z` and a step `s`, the next value is a one-sided stable
//! variable of index `β = e^{−2π²s}` scaled so its Laplace transform is
//! `exp(−z α^{1−β} λ^β)` with `α = e^{−a/2π²}`. Because `log Z_t` grows like
//! `e^{2π²t}`, paths are carried in log space; `exp` saturates beyond
//! `t ≈ 35` while the log representation stays exact.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};
use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::{Error, Result};

/// Steps with `β > 1 − 1e−12` are index-degenerate and merged with their
/// neighbor.
const BETA_DEGENERATE: f64 = 1.0 - 1e-12;

/// Mechanism parameters: drift `a` and the derived largest root of `ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsbpParams<F: Real = f64> {
    pub a: F,
    /// `α = exp(−a/2π²)`, the largest root of `ψ(u) = 0`.
    pub alpha_root: F,
}

impl<F: Real> CsbpParams<F> {
    pub fn new(a: F) -> Self {
        let two_pi_sq = F::lit(2.0) * F::PI() * F::PI();
        Self { a, alpha_root: (-a / two_pi_sq).exp() }
    }

    /// `ψ(u) = a·u + 2π²·u·log u`.
    pub fn mechanism(&self, u: F) -> F {
        self.a * u + F::lit(2.0) * F::PI() * F::PI() * u * u.ln()
    }
}

/// Closed-form Laplace flow `u_t(λ)`.
pub fn laplace_flow<F: Real>(lambda: F, t: F, params: &CsbpParams<F>) -> Result<F> {
    if lambda <= F::zero() || !lambda.is_finite() {
        return Err(Error::domain(format!("lambda must be positive, got {lambda}")));
    }
    if t < F::zero() {
        return Err(Error::domain(format!("t must be nonnegative, got {t}")));
    }
    if t == F::zero() {
        return Ok(lambda); // flow identity, exactly
    }
    let two_pi_sq = F::lit(2.0) * F::PI() * F::PI();
    let shift = params.a / two_pi_sq;
    Ok((((-two_pi_sq * t).exp()) * (lambda.ln() + shift) - shift).exp())
}

/// `P(lim_{t→∞} Z_t = 0 | Z_0 = x) = e^{−x α}`.
pub fn extinction_prob<F: Real>(x: F, params: &CsbpParams<F>) -> Result<F> {
    if x < F::zero() {
        return Err(Error::domain(format!("initial mass must be nonnegative, got {x}")));
    }
    Ok((-x * params.alpha_root).exp())
}

/// A sampled trajectory on a time grid, carried in log space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsbpPath {
    pub times: Vec<f64>,
    /// `log Z` at each grid time; always finite.
    pub log_values: Vec<f64>,
    pub z0: f64,
}

impl CsbpPath {
    /// Values `Z_t = exp(log Z_t)`. Saturates to `0`/`inf` once `|log Z|`
    /// exceeds the `f64` exponent range; the log representation stays exact.
    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|&l| l.exp()).collect()
    }
}

/// Standard one-sided stable variable of index `beta` in log space:
/// `log S` with `E[e^{−λS}] = exp(−λ^β)` (Kanter's representation).
fn log_stable<R: Rng>(beta: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let u = u * std::f64::consts::PI;
    let e: f64 = Exp1.sample(rng);
    let one_m = 1.0 - beta;
    // log A(u) for A(u) = sin(βu)^{β/(1−β)} sin((1−β)u) / sin(u)^{1/(1−β)}
    let log_a = (beta / one_m) * (beta * u).sin().ln() + (one_m * u).sin().ln()
        - u.sin().ln() / one_m;
    (one_m / beta) * (log_a - e.ln())
}

/// Exact path sampling by stable increments. `times` must be strictly
/// increasing and start at 0.
pub fn sample_path<R: Rng>(
    z0: f64,
    times: &[f64],
    params: &CsbpParams<f64>,
    rng: &mut R,
) -> Result<CsbpPath> {
    if !(z0 > 0.0) || !z0.is_finite() {
        return Err(Error::domain(format!("initial mass must be positive, got {z0}")));
    }
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::domain("time grid must start at 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("time grid must be strictly increasing"));
    }
    let two_pi_sq = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let log_alpha = -params.a / two_pi_sq;

    let mut log_values = Vec::with_capacity(times.len());
    let mut log_z = z0.ln();
    log_values.push(log_z);
    for w in times.windows(2) {
        let s = w[1] - w[0];
        let beta = (-two_pi_sq * s).exp();
        if beta > BETA_DEGENERATE {
            // Index-degenerate step: merge with the neighbor (Z unchanged at
            // this resolution).
            log_values.push(log_z);
            continue;
        }
        // Z' = (z α^{1−β})^{1/β} S_β.
        log_z = (log_z + (1.0 - beta) * log_alpha) / beta + log_stable(beta, rng);
        log_values.push(log_z);
    }
    Ok(CsbpPath { times: times.to_vec(), log_values, z0 })
}

/// Terminal classification of a path against `(lo, hi)` thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitClass {
    ToZero,
    ToInfinity,
    Undecided,
}

/// Classify the final value of `path` against `thresholds = (lo, hi)`.
pub fn limit_classifier(path: &CsbpPath, thresholds: (f64, f64)) -> LimitClass {
    let (lo, hi) = thresholds;
    debug_assert!(lo < hi && lo > 0.0);
    let last = *path.log_values.last().expect("path has at least the initial point");
    if last < lo.ln() {
        LimitClass::ToZero
    } else if last > hi.ln() {
        LimitClass::ToInfinity
    } else {
        LimitClass::Undecided
    }
}

/// Default classifier thresholds.
pub const DEFAULT_THRESHOLDS: (f64, f64) = (1e-6, 1e6);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use crate::SeedSpec;

    const TWO_PI_SQ: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;

    /// Adaptive Dormand-Prince 5(4) for du/dt = −ψ(u): the independent oracle
    /// for the closed-form flow.
    fn flow_ode_oracle(lambda: f64, t_end: f64, params: &CsbpParams<f64>, tol: f64) -> f64 {
        let f = |u: f64| -params.mechanism(u);
        let mut t = 0.0;
        let mut u = lambda;
        let mut h = (t_end / 16.0).min(1e-3).max(1e-10);
        // Dormand-Prince coefficients.
        const A: [[f64; 6]; 6] = [
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] =
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        while t < t_end {
            h = h.min(t_end - t);
            let mut k = [0.0f64; 7];
            k[0] = f(u);
            for stage in 0..6 {
                let mut acc = 0.0;
                for j in 0..=stage {
                    acc += A[stage][j] * k[j];
                }
                k[stage + 1] = f(u + h * acc);
            }
            let u5 = u + h * (0..7).map(|i| B5[i] * k[i]).sum::<f64>();
            let u4 = u + h * (0..7).map(|i| B4[i] * k[i]).sum::<f64>();
            let err = (u5 - u4).abs() / (tol + tol * u5.abs());
            if err <= 1.0 {
                t += h;
                u = u5;
            }
            let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
            h *= factor.clamp(0.2, 5.0);
            h = h.max(1e-14);
        }
        u
    }

    #[test]
    fn flow_identity_at_zero_time() {
        let p = CsbpParams::<f64>::new(0.7);
        for lambda in [1e-3, 0.5, 1.0, 42.0] {
            assert_eq!(laplace_flow(lambda, 0.0, &p).unwrap(), lambda);
        }
    }

    #[test]
    fn flow_converges_to_alpha_root() {
        for a in [-5.0f64, 0.0, 5.0] {
            let p = CsbpParams::<f64>::new(a);
            assert!((p.mechanism(p.alpha_root)).abs() < 1e-12);
            for lambda in [0.1, 1.0, 10.0] {
                let u = laplace_flow(lambda, 5.0, &p).unwrap();
                assert!((u - p.alpha_root).abs() < 1e-10, "a={a} lambda={lambda}: {u}");
            }
        }
    }

    #[test]
    fn flow_half_life_reference_value() {
        // a = 0, lambda = e, t = log 2/(2 pi^2): u = e^{1/2}.
        let p = CsbpParams::<f64>::new(0.0);
        let t = std::f64::consts::LN_2 / TWO_PI_SQ;
        let u = laplace_flow(std::f64::consts::E, t, &p).unwrap();
        assert!((u - 1.648_721_270_700_128).abs() < 1e-12);
    }

    #[test]
    fn flow_matches_ode_oracle() {
        // Coarse lattice here; the acceptance suite runs the full one.
        for a in [-5.0, 0.0, 5.0] {
            let p = CsbpParams::<f64>::new(a);
            for lambda in [1e-3, 1.0, 1e3] {
                for t in [0.05, 0.5, 2.0] {
                    let closed = laplace_flow(lambda, t, &p).unwrap();
                    let ode = flow_ode_oracle(lambda, t, &p, 1e-12);
                    let rel = (closed - ode).abs() / closed.abs().max(1e-300);
                    assert!(rel < 1e-8, "a={a} lambda={lambda} t={t}: rel={rel:e}");
                }
            }
        }
    }

    #[test]
    fn flow_semigroup_property() {
        let p = CsbpParams::<f64>::new(-1.5);
        for lambda in [0.01, 1.0, 100.0] {
            for s in [0.1, 0.7] {
                for t in [0.2, 1.3] {
                    let two_step =
                        laplace_flow(laplace_flow(lambda, s, &p).unwrap(), t, &p).unwrap();
                    let one_step = laplace_flow(lambda, s + t, &p).unwrap();
                    assert!((two_step - one_step).abs() < 1e-10 * one_step.max(1.0));
                }
            }
        }
    }

    #[test]
    fn extinction_reference_values() {
        let p = CsbpParams::<f64>::new(0.0);
        assert_eq!(extinction_prob(0.0, &p).unwrap(), 1.0);
        assert!((extinction_prob(1.0, &p).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-12);
        assert!(extinction_prob(-0.1, &p).is_err());
        // Flow consistency: lim_{lambda→∞, t→∞} e^{−x u_t(λ)} = e^{−x α}.
        let u = laplace_flow(1e6, 5.0, &p).unwrap();
        assert!(((-1.7 * u).exp() - extinction_prob(1.7, &p).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn sampled_paths_match_closed_form_laplace_transform() {
        let p = CsbpParams::<f64>::new(0.0);
        let mut rng = SeedSpec::new(2024, 0).rng();
        let t = 0.1;
        let n = 100_000;
        let mut weights = vec![[0.0f64; 3]; n];
        for w in weights.iter_mut() {
            let path = sample_path(1.0, &[0.0, t], &p, &mut rng).unwrap();
            let z = path.values()[1];
            for (j, lambda) in [0.5, 1.0, 2.0].into_iter().enumerate() {
                w[j] = (-lambda * z).exp();
            }
        }
        for (j, lambda) in [0.5, 1.0, 2.0].into_iter().enumerate() {
            let vals: Vec<f64> = weights.iter().map(|w| w[j]).collect();
            let (mean, sem) = stats::mean_sem(&vals);
            let expected = (-laplace_flow(lambda, t, &p).unwrap()).exp();
            assert!(
                (mean - expected).abs() < 3.0 * sem,
                "lambda={lambda}: mean={mean} expected={expected} sem={sem}"
            );
        }
    }

    #[test]
    fn multi_step_sampling_is_consistent_with_single_step() {
        // Same marginal law at t: empirical LT through a refined grid must
        // agree with the closed form (Markov consistency of the increments).
        let p = CsbpParams::<f64>::new(1.0);
        let mut rng = SeedSpec::new(77, 0).rng();
        let t = 0.2;
        let grid = [0.0, 0.05, 0.1, 0.15, 0.2];
        let n = 50_000;
        let lambda = 1.0;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let path = sample_path(0.8, &grid, &p, &mut rng).unwrap();
                (-lambda * path.values().last().unwrap()).exp()
            })
            .collect();
        let (mean, sem) = stats::mean_sem(&vals);
        let expected = (-0.8 * laplace_flow(lambda, t, &p).unwrap()).exp();
        assert!((mean - expected).abs() < 3.0 * sem, "mean={mean} expected={expected} sem={sem}");
    }

    #[test]
    fn log_values_stay_finite_at_long_horizons() {
        let p = CsbpParams::<f64>::new(0.0);
        let mut rng = SeedSpec::new(5, 0).rng();
        for _ in 0..200 {
            let path = sample_path(1.0, &[0.0, 1.0, 3.0, 6.0], &p, &mut rng).unwrap();
            assert!(path.log_values.iter().all(|l| l.is_finite()));
        }
    }

    #[test]
    fn degenerate_steps_are_merged() {
        let p = CsbpParams::<f64>::new(0.0);
        let mut rng = SeedSpec::new(6, 0).rng();
        let path = sample_path(2.0, &[0.0, 1e-15, 1.0], &p, &mut rng).unwrap();
        assert_eq!(path.log_values[0], path.log_values[1]);
        assert!(path.log_values[2] != path.log_values[1]);
    }

    #[test]
    fn long_horizon_classification_matches_extinction_probability() {
        let p = CsbpParams::<f64>::new(0.0);
        let mut rng = SeedSpec::new(31, 0).rng();
        let n = 10_000;
        let mut to_zero = 0;
        let mut undecided_by_t = [0usize; 4];
        let grid = [0.0, 0.1, 0.3, 1.0, 3.0];
        for _ in 0..n {
            let path = sample_path(1.0, &grid, &p, &mut rng).unwrap();
            if limit_classifier(&path, DEFAULT_THRESHOLDS) == LimitClass::ToZero {
                to_zero += 1;
            }
            for (k, idx) in (1..grid.len()).enumerate() {
                let partial = CsbpPath {
                    times: grid[..=idx].to_vec(),
                    log_values: path.log_values[..=idx].to_vec(),
                    z0: 1.0,
                };
                if limit_classifier(&partial, DEFAULT_THRESHOLDS) == LimitClass::Undecided {
                    undecided_by_t[k] += 1;
                }
            }
        }
        let frac = to_zero as f64 / n as f64;
        let expected = extinction_prob(1.0, &p).unwrap();
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((frac - expected).abs() < 3.0 * sigma, "frac={frac} expected={expected}");
        // Undecided fraction is nonincreasing in horizon and collapses fast.
        for w in undecided_by_t.windows(2) {
            assert!(w[1] <= w[0], "undecided counts: {undecided_by_t:?}");
        }
        assert!(undecided_by_t[2] as f64 / n as f64 <= 0.05);
        assert!(undecided_by_t[3] as f64 / n as f64 <= 0.005);
    }

    #[test]
    fn branching_property() {
        // Sum of independent paths from z1 and z2 vs one path from z1+z2.
        let p = CsbpParams::<f64>::new(0.0);
        let mut rng = SeedSpec::new(404, 0).rng();
        let (z1, z2, t, lambda) = (0.7, 1.3, 0.15, 0.8);
        let n = 50_000;
        let sum_lt: Vec<f64> = (0..n)
            .map(|_| {
                let a = sample_path(z1, &[0.0, t], &p, &mut rng).unwrap().values()[1];
                let b = sample_path(z2, &[0.0, t], &p, &mut rng).unwrap().values()[1];
                (-lambda * (a + b)).exp()
            })
            .collect();
        let single_lt: Vec<f64> = (0..n)
            .map(|_| {
                let z = sample_path(z1 + z2, &[0.0, t], &p, &mut rng).unwrap().values()[1];
                (-lambda * z).exp()
            })
            .collect();
        let (m1, s1) = stats::mean_sem(&sum_lt);
        let (m2, s2) = stats::mean_sem(&single_lt);
        let sem = (s1 * s1 + s2 * s2).sqrt();
        assert!((m1 - m2).abs() < 3.0 * sem, "m1={m1} m2={m2} sem={sem}");
    }

    #[test]
    fn classifier_reference_cases() {
        let mk = |log_last: f64| CsbpPath {
            times: vec![0.0, 1.0],
            log_values: vec![0.0, log_last],
            z0: 1.0,
        };
        assert_eq!(limit_classifier(&mk(1e-9f64.ln()), (1e-6, 1e6)), LimitClass::ToZero);
        assert_eq!(limit_classifier(&mk(1e9f64.ln()), (1e-6, 1e6)), LimitClass::ToInfinity);
        assert_eq!(limit_classifier(&mk(0.0), (1e-6, 1e6)), LimitClass::Undecided);
    }

    #[test]
    fn generic_f32_flow() {
        let p = CsbpParams::<f32>::new(0.0);
        let u = laplace_flow(1.0f32, 1.0, &p).unwrap();
        assert!((u - 1.0).abs() < 1e-6); // log 1 = 0 fixed point at a = 0
    }

    #[test]
    fn invalid_inputs_rejected() {
        let p = CsbpParams::<f64>::new(0.0);
        assert!(laplace_flow(0.0, 1.0, &p).is_err());
        assert!(laplace_flow(-1.0, 1.0, &p).is_err());
        assert!(laplace_flow(1.0, -0.1, &p).is_err());
        let mut rng = SeedSpec::new(1, 0).rng();
        assert!(sample_path(0.0, &[0.0, 1.0], &p, &mut rng).is_err());
        assert!(sample_path(1.0, &[0.5, 1.0], &p, &mut rng).is_err());
        assert!(sample_path(1.0, &[0.0, 1.0, 1.0], &p, &mut rng).is_err());
    }
}
