//! Shooting fallbacks for the two boundary-value problems. Diagnostics only:
//! the collocation solver is the production path, and a double-precision
//! shot drifts off the connecting orbit after roughly ten units, so
//! comparisons should stay within the early window.

use crate::real::Real;
use crate::{Error, Result};

/// One RK4 step of `u″ = 2(c u′ − u(1 − u))` as a first-order system.
fn rk4_step<F: Real>(c: F, u: F, v: F, h: F) -> (F, F) {
    let two = F::lit(2.0);
    let f = |u: F, v: F| (v, two * (c * v - u * (F::one() - u)));
    let (k1u, k1v) = f(u, v);
    let (k2u, k2v) = f(u + h * k1u / two, v + h * k1v / two);
    let (k3u, k3v) = f(u + h * k2u / two, v + h * k2v / two);
    let (k4u, k4v) = f(u + h * k3u, v + h * k3v);
    let six = F::lit(6.0);
    (
        u + h * (k1u + two * k2u + two * k3u + k4u) / six,
        v + h * (k1v + two * k2v + two * k3v + k4v) / six,
    )
}

/// Shoot `Q_μ` from the origin: bisect the unknown slope `Q′(0)` until the
/// trajectory neither overshoots 1 nor turns back down. Returns `(grid,
/// values)` on `[0, x_max]`.
pub fn shoot_q<F: Real>(mu: F, x_max: F, steps: usize) -> Result<(Vec<F>, Vec<F>)> {
    if mu < F::zero() || mu >= F::SQRT_2() {
        return Err(Error::domain("drift outside [0, sqrt(2))"));
    }
    let h = x_max / F::of_usize(steps);
    // Classify a slope: +1 overshoots above 1, -1 turns down below 1.
    let classify = |slope: F| -> i32 {
        let mut u = F::zero();
        let mut v = slope;
        for _ in 0..steps {
            let (nu, nv) = rk4_step(mu, u, v, h);
            u = nu;
            v = nv;
            if u > F::one() + F::lit(1e-9) {
                return 1;
            }
            if v < F::zero() && u < F::one() - F::lit(1e-6) {
                return -1;
            }
        }
        0
    };
    let mut lo = F::zero();
    let mut hi = F::lit(2.0);
    if classify(hi) != 1 {
        return Err(Error::domain("shooting bracket failed at the upper slope"));
    }
    for _ in 0..200 {
        let mid = (lo + hi) * F::lit(0.5);
        match classify(mid) {
            1 => hi = mid,
            _ => lo = mid,
        }
        if hi - lo < F::epsilon() * F::lit(4.0) {
            break;
        }
    }
    let slope = (lo + hi) * F::lit(0.5);
    let mut grid = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut u = F::zero();
    let mut v = slope;
    grid.push(F::zero());
    values.push(u);
    for i in 1..=steps {
        let (nu, nv) = rk4_step(mu, u, v, h);
        u = nu.clamp(F::zero(), F::one());
        v = nv;
        grid.push(F::of_usize(i) * h);
        values.push(u);
    }
    Ok((grid, values))
}

/// Shoot the traveling wave backward from the right: start on the decaying
/// linear mode `1 − θ ≈ δ e^{(√2−2)x}` and integrate leftward, which follows
/// the connecting orbit stably. Returns `(grid, values)` on `[x_min, x_max]`
/// in ascending order, un-anchored.
pub fn shoot_theta<F: Real>(x_min: F, x_max: F, steps: usize) -> Result<(Vec<F>, Vec<F>)> {
    if x_min >= x_max {
        return Err(Error::domain("empty window"));
    }
    let h = (x_max - x_min) / F::of_usize(steps);
    let delta = F::lit(1e-6);
    let rate = F::lit(2.0) - F::SQRT_2();
    let mut u = F::one() - delta;
    let mut v = rate * delta;
    let mut grid = vec![x_max];
    let mut values = vec![u];
    for i in 1..=steps {
        let (nu, nv) = rk4_step(F::SQRT_2(), u, v, -h);
        u = nu;
        v = nv;
        grid.push(x_max - F::of_usize(i) * h);
        values.push(u.max(F::zero()));
    }
    grid.reverse();
    values.reverse();
    Ok((grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::{eval_lagrange, solve_kolmogorov_bvp, solve_traveling_wave, GridSpec};

    #[test]
    fn shot_q_matches_collocation_in_the_early_window() {
        let collocation = solve_kolmogorov_bvp(1.0, 30.0, 1e-10).unwrap();
        let (grid, values) = shoot_q(1.0, 30.0, 30_000).unwrap();
        for k in 1..=20 {
            let x = 0.5 * k as f64;
            let shot = eval_lagrange(&grid, &values, x);
            assert!(
                (shot - collocation.eval(x)).abs() < 1e-5,
                "x = {x}: shot {shot} vs collocation {}",
                collocation.eval(x)
            );
        }
    }

    #[test]
    fn shot_theta_matches_anchored_collocation() {
        let collocation = solve_traveling_wave(&GridSpec::<f64>::theta_default(), 1e-10).unwrap();
        let (grid, values) = shoot_theta(-16.0, 14.0, 60_000).unwrap();
        // Anchor the shot at its own 1/2-crossing before comparing.
        let idx = values.partition_point(|&v| v < 0.5);
        let (x0, x1) = (grid[idx - 1], grid[idx]);
        let (v0, v1) = (values[idx - 1], values[idx]);
        let shift = x0 + (0.5 - v0) / (v1 - v0) * (x1 - x0);
        for k in 0..=24 {
            let x = -6.0 + 12.0 * k as f64 / 24.0;
            let shot = eval_lagrange(&grid, &values, x + shift);
            assert!(
                (shot - collocation.eval(x)).abs() < 1e-4,
                "x = {x}: shot {shot} vs collocation {}",
                collocation.eval(x)
            );
        }
    }
}
