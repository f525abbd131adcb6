//! Independent PDE oracle for the Brownian-bridge crossing formula.
//!
//! The non-crossing probability of a bridge from `a` to `b` over `[0, T]`
//! equals `u(T, b)/φ_T(b − a)`, where `u` is the sub-density of Brownian
//! motion started at `a` and absorbed at 0. `u` is computed here by
//! Crank-Nicolson on the heat equation with an absorbing boundary — no use
//! of the reflection identity being tested. The initial condition is the
//! free Gaussian at `t0 = 0.01`; paths already absorbed by then contribute
//! at most `2Φ(−a/√t0) = 2Φ(−10) ≈ 1.5e−23`.

use bbmlab_core::engine::bridge_crossing_prob;

fn thomas(lo: &[f64], diag: &[f64], up: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = up[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lo[i] * c[i - 1];
        if i < n - 1 {
            c[i] = up[i] / denom;
        }
        d[i] = (rhs[i] - lo[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Sub-density of BM from `a` killed at 0, evaluated at `b` at time `t`.
fn absorbed_density_cn(a: f64, b: f64, t: f64) -> f64 {
    let x_max = 8.0;
    let nx = 8000usize;
    let dx = x_max / nx as f64;
    let t0 = 0.01;
    let dt = 2.5e-4;

    // Interior nodes x_1..x_{nx-1}; u = 0 at both ends.
    let mut u: Vec<f64> = (1..nx)
        .map(|i| {
            let x = i as f64 * dx;
            (-(x - a) * (x - a) / (2.0 * t0)).exp() / (2.0 * std::f64::consts::PI * t0).sqrt()
        })
        .collect();
    let n = u.len();
    let r = dt / (2.0 * 2.0 * dx * dx); // dt/(2·2dx²): du/dt = ½ u″
    let lo = vec![-r; n];
    let diag = vec![1.0 + 2.0 * r; n];
    let up = vec![-r; n];

    let steps = ((t - t0) / dt).round() as usize;
    let mut rhs = vec![0.0; n];
    for _ in 0..steps {
        for i in 0..n {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < n { u[i + 1] } else { 0.0 };
            rhs[i] = u[i] + r * (left - 2.0 * u[i] + right);
        }
        u = thomas(&lo, &diag, &up, &rhs);
    }
    // Linear interpolation at b (b sits on the grid for these cases anyway).
    let pos = b / dx;
    let i = pos.floor() as usize;
    let w = pos - i as f64;
    let at = |k: usize| if (1..=n).contains(&k) { u[k - 1] } else { 0.0 };
    at(i) * (1.0 - w) + at(i + 1) * w
}

#[test]
fn crank_nicolson_oracle_confirms_bridge_formula() {
    for (dt_bridge, a, b) in [(1.0f64, 1.0f64, 1.0f64), (0.5, 1.0, 1.0)] {
        let free = (-(b - a) * (b - a) / (2.0 * dt_bridge)).exp()
            / (2.0 * std::f64::consts::PI * dt_bridge).sqrt();
        let surv = absorbed_density_cn(a, b, dt_bridge) / free;
        let pde_cross = 1.0 - surv;
        let formula = bridge_crossing_prob(a, b, dt_bridge).unwrap();
        assert!(
            (pde_cross - formula).abs() < 1e-4,
            "dt = {dt_bridge}: PDE {pde_cross} vs formula {formula}"
        );
    }
}
