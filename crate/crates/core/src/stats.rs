//! Small statistical helpers shared by tests, experiments, and reports:
//! normal CDF, Kolmogorov-Smirnov tests, and binomial confidence intervals.

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Survival function of the Kolmogorov distribution,
/// `P(K > lambda) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test outcome.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample KS test of `samples` against the CDF `cdf`. Sorts a copy.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / nf).abs());
        d = d.max(((i + 1) as f64 / nf - f).abs());
    }
    // Stephens' finite-n adjustment before the asymptotic tail.
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    KsResult { statistic: d, p_value: kolmogorov_sf(lambda), n }
}

/// Two-sample KS test. Effective sample size `n1 n2/(n1+n2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|u, v| u.partial_cmp(v).unwrap());
    xb.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsResult { statistic: d, p_value: kolmogorov_sf(lambda), n: ne as usize }
}

/// 95% half-width for a binomial proportion, `1.96 sqrt(p(1-p)/n)`.
pub fn binomial_ci_halfwidth(p_hat: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    1.96 * (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        // 2 Phi(-1), frozen from 30-digit arithmetic.
        assert!((2.0 * normal_cdf(-1.0) - 0.317_310_507_862_914_1).abs() < 1e-12);
        assert!((normal_cdf(3.0) - 0.998_650_101_968_369_9).abs() < 1e-12);
    }

    #[test]
    fn ks_accepts_true_uniform_rejects_shifted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.gen::<f64>()).collect();
        let ok = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ok.p_value > 0.01, "p = {}", ok.p_value);
        let bad = ks_test(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(bad.p_value < 1e-6);
    }

    #[test]
    fn two_sample_ks_self_consistency() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
    }

    #[test]
    fn kolmogorov_sf_known_point() {
        // P(K > 1.3581) ≈ 0.05 (standard table).
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 5e-4);
    }
}
