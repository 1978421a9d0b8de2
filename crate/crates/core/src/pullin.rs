//! Pull-in voltage: bisection on the convergence of the monotone iteration,
//! plus the analytic bounds the numerical bracket has to respect.
//!
//! Upper bound: λ* ≤ ∫a / ∫G[1]a⁻², evaluated by radial quadrature. For the
//! ball profile this equals 2Nκ³·B(N/2, γ+1)/B(N/2, 2−2γ) exactly, which is
//! reported as `beta_closed_form`. The commonly quoted simplification
//! (4N/3)κ³·B(1/2, 2−2γ) is reported separately as `ball_upper_closed_form`;
//! it only coincides with the quadrature in special cases and is kept for
//! comparison.
//!
//! Lower bound: w_t = tκ(1−r²)^{2/3} is a super-solution at γ = 2/3 whenever
//! λ ≤ (8/9)t(1−t)²κ³, maximal at t = 1/3 with value (2/3)⁵κ³ = 32/243·κ³.
//! Since λ* is nonincreasing in γ the same value bounds λ* for every γ ≤ 2/3.

use serde::Serialize;
use statrs::function::beta::beta;

use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::grid::{build_grid, profile_eval, GridSignature, ProblemParams, RadialGrid, GAMMA_CRITICAL};
use crate::solver::{IterationOutcome, MinimalSolver};

/// Smallest accepted relative bisection tolerance.
pub const MIN_TOL_LAMBDA: f64 = 1e-6;

/// Default window (ρ_lo, ρ_hi) for the λ_* proxy.
pub const PROXY_WINDOW: (f64, f64) = (1e-3, 1e-1);

/// Relative change of the upper-bound quadrature tolerated between a grid
/// and its half-resolution counterpart.
const UPPER_STABILITY_TOL: f64 = 1e-3;

const GAMMA_EPS: f64 = 1e-12;
const MAX_SEED_ADJUST: usize = 60;

#[derive(Debug, Clone, Serialize)]
pub struct PullInEstimate {
    pub kappa: f64,
    pub gamma: f64,
    pub dim: usize,
    pub lambda_star_lo: f64,
    pub lambda_star_hi: f64,
    pub analytic_lower: f64,
    pub analytic_upper: f64,
    pub ball_upper_closed_form: f64,
    pub beta_closed_form: f64,
    pub lambda_star_proxy: Option<f64>,
    pub tol_lambda: f64,
    pub grid_signature: GridSignature,
}

impl PullInEstimate {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lambda_star_lo + self.lambda_star_hi)
    }

    pub fn width(&self) -> f64 {
        self.lambda_star_hi - self.lambda_star_lo
    }
}

/// The three forms of the upper bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UpperBound {
    /// ∫a dx / ∫G[1]a⁻² dx by quadrature.
    pub quadrature: f64,
    /// 2Nκ³·B(N/2, γ+1)/B(N/2, 2−2γ).
    pub beta_closed_form: f64,
    /// (4N/3)κ³·B(1/2, 2−2γ).
    pub ball_closed_form: f64,
}

fn check_gamma_for_bisection(gamma: f64) -> Result<()> {
    if gamma > GAMMA_CRITICAL + GAMMA_EPS {
        return Err(Error::Nonexistence { gamma });
    }
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must be >= 0")));
    }
    Ok(())
}

fn upper_quadrature(kappa: f64, gamma: f64, dim: usize, grid: &RadialGrid) -> Result<f64> {
    let params = ProblemParams::new(0.0, kappa, gamma, dim)?;
    let a = profile_eval(&params, grid)?;
    let num_op = GreenOperator::with_boundary_exponent(grid, dim, gamma)?;
    let den_op = GreenOperator::with_boundary_exponent(grid, dim, 1.0 - 2.0 * gamma)?;
    let n = dim as f64;
    let m = grid.n_cells();
    let den_vals: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(a.values())
        .enumerate()
        .map(|(i, (&r, &ai))| {
            if i == m && gamma > 0.0 {
                // unused by the singular basis
                0.0
            } else {
                (1.0 - r * r) / (2.0 * n) / (ai * ai)
            }
        })
        .collect();
    let num = num_op.integrate(a.values())?;
    let den = den_op.integrate(&den_vals)?;
    if !(num > 0.0 && den > 0.0 && num.is_finite() && den.is_finite()) {
        return Err(Error::Domain(format!(
            "upper bound integrals not positive and finite ({num}, {den})"
        )));
    }
    // the sphere factor cancels
    Ok(num / den)
}

/// Upper bound λ* ≤ ∫a / ∫G[1]a⁻² together with both closed forms.
///
/// The quadrature is repeated on the half-resolution grid (or the refined
/// grid when halving would drop below the minimum cell count); a relative
/// change above 1e-3 is reported as a domain error.
pub fn analytic_upper_bound(kappa: f64, gamma: f64, dim: usize, grid: &RadialGrid) -> Result<UpperBound> {
    if !(0.0..0.75).contains(&gamma) {
        return Err(Error::Domain(format!("upper bound needs gamma in [0, 3/4), got {gamma}")));
    }
    let quadrature = upper_quadrature(kappa, gamma, dim, grid)?;
    let other = if grid.n_cells() / 2 >= crate::grid::MIN_CELLS {
        build_grid(grid.n_cells() / 2, grid.grading_exponent())?
    } else {
        grid.refined()?
    };
    let check = upper_quadrature(kappa, gamma, dim, &other)?;
    if ((check - quadrature) / quadrature).abs() > UPPER_STABILITY_TOL {
        return Err(Error::Domain(format!(
            "upper bound quadrature not refinement stable: {quadrature} vs {check}"
        )));
    }
    let n = dim as f64;
    let k3 = kappa * kappa * kappa;
    Ok(UpperBound {
        quadrature,
        beta_closed_form: 2.0 * n * k3 * beta(n / 2.0, gamma + 1.0) / beta(n / 2.0, 2.0 - 2.0 * gamma),
        ball_closed_form: 4.0 * n * k3 / 3.0 * beta(0.5, 2.0 - 2.0 * gamma),
    })
}

/// λ_t = (8/9)t(1−t)²κ³, the voltage up to which tκ(1−r²)^{2/3} is a super-solution.
pub fn supersolution_lower_bound(kappa: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t = {t} must lie in (0, 1)")));
    }
    Ok(8.0 / 9.0 * t * (1.0 - t) * (1.0 - t) * kappa * kappa * kappa)
}

/// Maximizer of t ↦ λ_t: the stationary point of t(1−t)², t* = 1/3, value 32/243·κ³.
pub fn optimize_t(kappa: f64) -> (f64, f64) {
    let t = 1.0 / 3.0;
    (t, 32.0 / 243.0 * kappa * kappa * kappa)
}

/// Best super-solution bound, valid for every γ ≤ 2/3.
pub fn analytic_lower_bound(kappa: f64) -> f64 {
    optimize_t(kappa).1
}

struct Bisection {
    lo: f64,
    hi: f64,
    warm: IterationOutcome,
}

/// Bisects on `accept`, warm-starting each trial from the last accepted iterate.
///
/// The seed bracket is widened (lo halved, hi doubled) until `accept(lo)` and
/// `!accept(hi)` hold.
fn bisect(
    solver: &MinimalSolver,
    mut lo: f64,
    mut hi: f64,
    width: f64,
    accept: impl Fn(&IterationOutcome) -> bool,
) -> Result<Bisection> {
    let mut warm = None;
    for _ in 0..MAX_SEED_ADJUST {
        let out = solver.solve(lo, None)?;
        if accept(&out) {
            warm = Some(out);
            break;
        }
        hi = lo;
        lo *= 0.5;
    }
    let mut warm = warm.ok_or_else(|| Error::Numerical("no accepted lower seed found".into()))?;
    let mut hi_ok = false;
    for _ in 0..MAX_SEED_ADJUST {
        let out = solver.solve(hi, Some(warm.last_iterate.values()))?;
        if !accept(&out) {
            hi_ok = true;
            break;
        }
        lo = hi;
        warm = out;
        hi *= 2.0;
    }
    if !hi_ok {
        return Err(Error::Numerical("no rejected upper seed found".into()));
    }
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let out = solver.solve(mid, Some(warm.last_iterate.values()))?;
        if accept(&out) {
            lo = mid;
            warm = out;
        } else {
            hi = mid;
        }
    }
    Ok(Bisection { lo, hi, warm })
}

fn proxy_predicate<'a>(
    kappa: f64,
    gamma: f64,
    idx: &'a [usize],
    rho: &'a [f64],
) -> impl Fn(&IterationOutcome) -> bool + 'a {
    move |out: &IterationOutcome| {
        out.converged()
            && idx.iter().all(|&i| {
                let u = out.last_iterate.values()[i];
                u * rho[i].powf(-gamma) < kappa
            })
    }
}

fn proxy_window_indices(grid: &RadialGrid, window: (f64, f64)) -> Result<Vec<usize>> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && hi <= 0.5) {
        return Err(Error::Domain(format!("window ({lo:e}, {hi:e}) must satisfy 0 < lo < hi <= 1/2")));
    }
    if lo < grid.min_resolved_rho() {
        return Err(Error::Domain(format!(
            "window lower end {lo:e} is below the resolved boundary distance {:e}",
            grid.min_resolved_rho()
        )));
    }
    let idx = grid.window_indices(lo, hi);
    if idx.len() < crate::solver::MIN_WINDOW_NODES {
        return Err(Error::Domain(format!(
            "window ({lo:e}, {hi:e}) holds {} nodes, need at least {}",
            idx.len(),
            crate::solver::MIN_WINDOW_NODES
        )));
    }
    Ok(idx)
}

fn seed_bracket(kappa: f64, gamma: f64, upper: f64) -> (f64, f64) {
    if (gamma - GAMMA_CRITICAL).abs() <= GAMMA_EPS {
        (0.5 * analytic_lower_bound(kappa), 2.0 * upper)
    } else {
        (1e-3 * upper, 2.0 * upper)
    }
}

/// Threshold λ below which max over the window of u_λ·ρ^{−γ} stays under κ.
pub fn lambda_star_proxy(
    kappa: f64,
    gamma: f64,
    dim: usize,
    grid: &RadialGrid,
    window: (f64, f64),
    tol_lambda: f64,
) -> Result<f64> {
    check_gamma_for_bisection(gamma)?;
    if !(gamma > 0.0) {
        return Err(Error::Domain("the proxy needs gamma > 0".into()));
    }
    let idx = proxy_window_indices(grid, window)?;
    let upper = analytic_upper_bound(kappa, gamma, dim, grid)?.quadrature;
    let solver = MinimalSolver::new(&ProblemParams::new(0.0, kappa, gamma, dim)?, grid)?;
    let (lo, hi) = seed_bracket(kappa, gamma, upper);
    let b = bisect(&solver, lo, hi, tol_lambda * upper, proxy_predicate(kappa, gamma, &idx, grid.rho()))?;
    Ok(b.lo)
}

/// Numerical pull-in bracket for fixed (κ, γ, N) on `grid`.
///
/// The predicate is "the monotone iteration converges"; touchdown and hitting
/// the iteration cap both count as failure. The bracket width is at most
/// `tol_lambda · analytic_upper`. For γ > 0 the λ_* proxy is bisected inside
/// the same bracket over [`PROXY_WINDOW`].
pub fn pullin_bisect(
    kappa: f64,
    gamma: f64,
    dim: usize,
    grid: &RadialGrid,
    tol_lambda: f64,
) -> Result<PullInEstimate> {
    check_gamma_for_bisection(gamma)?;
    if !(tol_lambda >= MIN_TOL_LAMBDA) || !tol_lambda.is_finite() {
        return Err(Error::Config(format!(
            "tol_lambda = {tol_lambda} must be at least {MIN_TOL_LAMBDA:e}"
        )));
    }
    let upper = analytic_upper_bound(kappa, gamma, dim, grid)?;
    let solver = MinimalSolver::new(&ProblemParams::new(0.0, kappa, gamma, dim)?, grid)?;
    let (lo, hi) = seed_bracket(kappa, gamma, upper.quadrature);
    let width = tol_lambda * upper.quadrature;
    let main = bisect(&solver, lo, hi, width, IterationOutcome::converged)?;

    let lambda_star_proxy = if gamma > 0.0 {
        let idx = proxy_window_indices(grid, PROXY_WINDOW)?;
        let accept = proxy_predicate(kappa, gamma, &idx, grid.rho());
        if accept(&main.warm) {
            Some(main.lo)
        } else {
            bisect(&solver, lo, main.lo, width, accept).ok().map(|b| b.lo)
        }
    } else {
        None
    };

    Ok(PullInEstimate {
        kappa,
        gamma,
        dim,
        lambda_star_lo: main.lo,
        lambda_star_hi: main.hi,
        analytic_lower: analytic_lower_bound(kappa),
        analytic_upper: upper.quadrature,
        ball_upper_closed_form: upper.ball_closed_form,
        beta_closed_form: upper.beta_closed_form,
        lambda_star_proxy,
        tol_lambda,
        grid_signature: grid.signature(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supersolution_values() {
        assert!((supersolution_lower_bound(1.0, 1.0 / 3.0).unwrap() - 0.131687).abs() < 1e-6);
        assert!((supersolution_lower_bound(1.0, 0.5).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        assert!(supersolution_lower_bound(1.0, 0.0).is_err());
        assert!(supersolution_lower_bound(1.0, 1.0).is_err());
    }

    #[test]
    fn optimal_t_beats_a_dense_scan() {
        let (t, v) = optimize_t(1.0);
        assert!((v - (2.0f64 / 3.0).powi(5)).abs() < 1e-15);
        let best = (1..10_000)
            .map(|k| supersolution_lower_bound(1.0, k as f64 / 10_000.0).unwrap())
            .fold(0.0, f64::max);
        assert!(v >= best);
        assert!((supersolution_lower_bound(1.0, t).unwrap() - v).abs() < 1e-15);
    }

    #[test]
    fn upper_bound_matches_beta_form() {
        let g = build_grid(1024, 3.0).unwrap();
        for dim in 1..=3 {
            for gamma in [0.0, 0.2, 0.5, 2.0 / 3.0] {
                let u = analytic_upper_bound(1.0, gamma, dim, &g).unwrap();
                let rel = (u.quadrature - u.beta_closed_form).abs() / u.beta_closed_form;
                assert!(rel < 1e-6, "N={dim} gamma={gamma}: {} vs {}", u.quadrature, u.beta_closed_form);
            }
        }
    }

    #[test]
    fn constant_profile_closed_forms() {
        let g = build_grid(512, 3.0).unwrap();
        for dim in 1..=3 {
            let n = dim as f64;
            let u = analytic_upper_bound(1.0, 0.0, dim, &g).unwrap();
            assert!((u.ball_closed_form - 16.0 * n / 9.0).abs() < 1e-12);
            // ∫1 / ∫(1−r²)/(2N) over the ball
            assert!((u.beta_closed_form - n * (n + 2.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn critical_ball_closed_form_value() {
        let g = build_grid(512, 3.0).unwrap();
        let u = analytic_upper_bound(1.0, 2.0 / 3.0, 1, &g).unwrap();
        assert!((u.ball_closed_form - 3.4495).abs() < 1e-4);
    }

    #[test]
    fn upper_bound_scales_exactly() {
        let g = build_grid(256, 3.0).unwrap();
        let a = analytic_upper_bound(1.0, 0.4, 2, &g).unwrap().quadrature;
        let b = analytic_upper_bound(2.0, 0.4, 2, &g).unwrap().quadrature;
        assert_eq!(b, 8.0 * a);
    }

    #[test]
    fn upper_bound_rejects_large_gamma() {
        let g = build_grid(128, 3.0).unwrap();
        assert!(analytic_upper_bound(1.0, 0.8, 1, &g).is_err());
    }

    #[test]
    fn refuses_supercritical_gamma_and_tiny_tolerance() {
        let g = build_grid(128, 3.0).unwrap();
        assert!(matches!(pullin_bisect(1.0, 0.8, 1, &g, 1e-4), Err(Error::Nonexistence { .. })));
        assert!(matches!(pullin_bisect(1.0, 0.5, 1, &g, 1e-7), Err(Error::Config(_))));
    }

    #[test]
    fn bracket_is_consistent() {
        let g = build_grid(256, 3.0).unwrap();
        let e = pullin_bisect(1.0, 2.0 / 3.0, 1, &g, 1e-4).unwrap();
        assert!(e.lambda_star_lo <= e.lambda_star_hi);
        assert!(e.width() <= 1e-4 * e.analytic_upper);
        assert!(e.analytic_lower <= e.lambda_star_hi);
        assert!(e.lambda_star_lo <= e.analytic_upper);
        let proxy = e.lambda_star_proxy.unwrap();
        assert!(proxy <= e.lambda_star_hi);
    }

    #[test]
    fn constant_profile_has_no_proxy() {
        let g = build_grid(256, 2.0).unwrap();
        let e = pullin_bisect(1.0, 0.0, 1, &g, 1e-5).unwrap();
        assert!(e.lambda_star_proxy.is_none());
        // 1-D fold on (−1, 1) with a ≡ 1, from the phase-plane quadrature
        // λ = ½(∫_0^m du / √(1/(1−m) − 1/(1−u)))² maximized over m
        assert!((e.midpoint() - 0.350_004_12).abs() < 2e-4, "{}", e.midpoint());
    }
}
