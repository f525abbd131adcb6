//! Galton-Watson utilities: extinction probabilities via the generating
//! function, and the second-moment survival lower bound
//! `1 − q ≥ 2(E[X] − 1)/E[X(X−1)]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::{Error, Result};

/// An offspring law: explicit finite support, or a named family with an
/// analytic generating function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffspringDistribution<F: Real = f64> {
    /// `P(X = k) = probs[k]`, `k = 0..=K`.
    Finite { probs: Vec<F> },
    /// Poisson with the given mean.
    Poisson { mean: F },
    /// `P(X = k) = (1−p)^k p` for `k ≥ 0`; mean `(1−p)/p`.
    Geometric { p: F },
}

impl<F: Real> OffspringDistribution<F> {
    /// Finite-support law; validates nonnegativity and normalization to 1e-12.
    pub fn finite(probs: Vec<F>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("empty offspring distribution"));
        }
        if probs.iter().any(|p| *p < F::zero() || !p.is_finite()) {
            return Err(Error::domain("offspring probabilities must be nonnegative"));
        }
        let total: F = probs.iter().copied().sum();
        let tol = F::lit(1e-12).max(F::epsilon() * F::of_usize(16 * probs.len()));
        if (total - F::one()).abs() > tol {
            return Err(Error::domain(format!(
                "offspring probabilities sum to {total}, expected 1"
            )));
        }
        Ok(OffspringDistribution::Finite { probs })
    }

    pub fn poisson(mean: F) -> Result<Self> {
        if mean <= F::zero() || !mean.is_finite() {
            return Err(Error::domain("Poisson mean must be positive"));
        }
        Ok(OffspringDistribution::Poisson { mean })
    }

    pub fn geometric(p: F) -> Result<Self> {
        if p <= F::zero() || p > F::one() {
            return Err(Error::domain("geometric parameter must lie in (0, 1]"));
        }
        Ok(OffspringDistribution::Geometric { p })
    }

    /// Mean `E[X]`.
    pub fn mean(&self) -> F {
        match self {
            OffspringDistribution::Finite { probs } => probs
                .iter()
                .enumerate()
                .map(|(k, p)| F::of_usize(k) * *p)
                .sum(),
            OffspringDistribution::Poisson { mean } => *mean,
            OffspringDistribution::Geometric { p } => (F::one() - *p) / *p,
        }
    }

    /// Factorial second moment `E[X(X−1)] = g''(1)`.
    pub fn factorial_second_moment(&self) -> F {
        match self {
            OffspringDistribution::Finite { probs } => probs
                .iter()
                .enumerate()
                .map(|(k, p)| F::of_usize(k) * F::of_usize(k.saturating_sub(1)) * *p)
                .sum(),
            OffspringDistribution::Poisson { mean } => *mean * *mean,
            OffspringDistribution::Geometric { p } => {
                let q = F::one() - *p;
                F::lit(2.0) * q * q / (*p * *p)
            }
        }
    }

    /// Generating function `g(s) = E[s^X]` on `[0, 1]`.
    pub fn pgf(&self, s: F) -> F {
        match self {
            OffspringDistribution::Finite { probs } => {
                // Horner, highest degree first.
                let mut acc = F::zero();
                for p in probs.iter().rev() {
                    acc = acc * s + *p;
                }
                acc
            }
            OffspringDistribution::Poisson { mean } => (*mean * (s - F::one())).exp(),
            OffspringDistribution::Geometric { p } => *p / (F::one() - (F::one() - *p) * s),
        }
    }

    /// Draw one offspring count.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        match self {
            OffspringDistribution::Finite { probs } => {
                let u = F::lit(rng.gen::<f64>());
                let mut acc = F::zero();
                for (k, p) in probs.iter().enumerate() {
                    acc += *p;
                    if u < acc {
                        return k as u64;
                    }
                }
                (probs.len() - 1) as u64
            }
            OffspringDistribution::Poisson { mean } => {
                // Inversion by sequential search; means used here are small.
                let m = mean.to_f64().unwrap();
                let mut k = 0u64;
                let mut p = (-m).exp();
                let mut cdf = p;
                let u = rng.gen::<f64>();
                while u > cdf && k < 10_000 {
                    k += 1;
                    p *= m / k as f64;
                    cdf += p;
                }
                k
            }
            OffspringDistribution::Geometric { p } => {
                let pf = p.to_f64().unwrap();
                if pf >= 1.0 {
                    return 0;
                }
                let u: f64 = rng.gen::<f64>();
                (u.ln() / (1.0 - pf).ln()).floor() as u64
            }
        }
    }
}

/// Smallest fixed point of the generating function in `[0, 1]`: the extinction
/// probability. Monotone iteration from 0 with Steffensen (Aitken Δ²)
/// acceleration; accelerated steps are rejected unless they stay below the
/// smallest root (`g(s) ≥ s` must keep holding), so convergence to the
/// correct root is preserved.
pub fn gw_extinction<F: Real>(dist: &OffspringDistribution<F>, tol: F) -> F {
    let mut s = F::zero();
    for _ in 0..200_000 {
        let g1 = dist.pgf(s);
        if (g1 - s).abs() < tol {
            return s.clamp(F::zero(), F::one());
        }
        let g2 = dist.pgf(g1);
        let denom = g2 - F::lit(2.0) * g1 + s;
        let mut next = g1;
        if denom.abs() > F::epsilon() {
            let accel = s - (g1 - s) * (g1 - s) / denom;
            // Accept only monotone moves that stay weakly below the target root.
            if accel > g1 && accel <= F::one() && dist.pgf(accel) >= accel {
                next = accel;
            }
        }
        s = next.clamp(F::zero(), F::one());
    }
    s
}

/// `2(E[X] − 1)/E[X(X−1)]`; may be ≤ 0 (vacuous) for subcritical laws.
pub fn survival_lower_bound<F: Real>(dist: &OffspringDistribution<F>) -> Result<F> {
    let fm2 = dist.factorial_second_moment();
    if fm2 <= F::zero() {
        return Err(Error::domain(
            "factorial second moment is zero: offspring supported on {0, 1}",
        ));
    }
    Ok(F::lit(2.0) * (dist.mean() - F::one()) / fm2)
}

/// Parse a JSON corpus: a list of entries, each either `[p0, p1, ...]` or a
/// named-family object as serialized by [`OffspringDistribution`].
pub fn corpus_from_json(text: &str) -> Result<Vec<OffspringDistribution<f64>>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Probs(Vec<f64>),
        Named(OffspringDistribution<f64>),
    }
    let entries: Vec<Entry> =
        serde_json::from_str(text).map_err(|e| Error::config(format!("bad corpus JSON: {e}")))?;
    entries
        .into_iter()
        .map(|e| match e {
            Entry::Probs(p) => OffspringDistribution::finite(p),
            Entry::Named(d) => Ok(d),
        })
        .collect()
}

/// Fraction of `trees` GW populations extinct within `max_generations`,
/// treating populations that reach `survival_cap` as survived.
pub fn simulate_extinction_fraction<R: Rng>(
    dist: &OffspringDistribution<f64>,
    trees: usize,
    max_generations: usize,
    survival_cap: u64,
    rng: &mut R,
) -> f64 {
    let mut extinct = 0usize;
    for _ in 0..trees {
        let mut pop: u64 = 1;
        for _ in 0..max_generations {
            if pop == 0 || pop >= survival_cap {
                break;
            }
            let mut next = 0u64;
            for _ in 0..pop {
                next += dist.sample(rng);
                if next >= survival_cap {
                    break;
                }
            }
            pop = next;
        }
        if pop == 0 {
            extinct += 1;
        }
    }
    extinct as f64 / trees as f64
}
