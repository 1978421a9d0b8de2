//! Monotone (Picard) iteration for the minimal solution, branch sweeps in λ,
//! and boundary decay fits.
//!
//! Starting from v₀ = 0 the iterates v_n = λ·G[(a − v_{n−1})⁻²] increase
//! nodewise and converge to the minimal solution whenever one exists. When
//! λ exceeds the pull-in voltage they climb until the clearance (a − v)/a
//! collapses somewhere, which is reported as touchdown.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::grid::{decay_gauge_extended, profile_eval, GridFunction, ProblemParams, RadialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Converged,
    Touchdown,
    MaxIterations,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Converged => "Converged",
            Status::Touchdown => "Touchdown",
            Status::MaxIterations => "MaxIterations",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub status: Status,
    /// Present iff `status == Converged`.
    pub solution: Option<GridFunction>,
    pub iterations_used: usize,
    /// sup-norm of the last update.
    pub final_gap: f64,
    /// min over nodes 0..M−1 of (a − v)/a for the last iterate.
    pub min_clearance: f64,
    /// (a − v)/a at node M−1, the last node before the boundary.
    pub last_node_clearance: f64,
    /// The last iterate, whatever the status.
    pub last_iterate: GridFunction,
}

impl IterationOutcome {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Reusable solver for fixed (κ, γ, N) and grid; only λ varies between solves.
#[derive(Debug, Clone)]
pub struct MinimalSolver {
    params: ProblemParams,
    grid: RadialGrid,
    op: GreenOperator,
    profile: Vec<f64>,
}

impl MinimalSolver {
    pub fn new(params: &ProblemParams, grid: &RadialGrid) -> Result<Self> {
        params.validate()?;
        let op = if params.gamma > 0.0 {
            GreenOperator::with_boundary_exponent(grid, params.dim, -2.0 * params.gamma)?
        } else {
            GreenOperator::new(grid, params.dim)?
        };
        let profile = profile_eval(params, grid)?.into_values();
        Ok(MinimalSolver {
            params: *params,
            grid: grid.clone(),
            op,
            profile,
        })
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn operator(&self) -> &GreenOperator {
        &self.op
    }

    fn integrand(&self, v: &[f64], out: &mut [f64]) {
        let m = self.grid.n_cells();
        for i in 0..m {
            let gap = self.profile[i] - v[i];
            out[i] = 1.0 / (gap * gap);
        }
        // read only by the regular (γ = 0) operator
        out[m] = if self.params.gamma == 0.0 {
            let gap = self.profile[m] - v[m];
            1.0 / (gap * gap)
        } else {
            0.0
        };
    }

    /// Applies v ↦ λ·G[(a − v)⁻²] once.
    pub fn picard_map(&self, lambda: f64, v: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; v.len()];
        let mut w = vec![0.0; v.len()];
        self.integrand(v, &mut f);
        self.op.apply_into(&f, &mut w);
        w.iter_mut().for_each(|x| *x *= lambda);
        w
    }

    /// sup|u − λ·G[(a − u)⁻²]|.
    pub fn fixed_point_residual(&self, lambda: f64, u: &[f64]) -> f64 {
        self.picard_map(lambda, u)
            .iter()
            .zip(u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn clearances(&self, v: &[f64]) -> (f64, f64) {
        let m = self.grid.n_cells();
        let mut min = f64::INFINITY;
        for i in 0..m {
            min = min.min((self.profile[i] - v[i]) / self.profile[i]);
        }
        let last = (self.profile[m - 1] - v[m - 1]) / self.profile[m - 1];
        (min, last)
    }

    /// Runs the monotone iteration at `lambda`.
    ///
    /// `warm` must be a sub-solution for `lambda` (for instance the minimal
    /// solution at a smaller λ); `None` starts from zero.
    pub fn solve(&self, lambda: f64, warm: Option<&[f64]>) -> Result<IterationOutcome> {
        let params = self.params.with_lambda(lambda)?;
        let n = self.grid.len();
        let mut v = match warm {
            Some(w) if w.len() == n => w.to_vec(),
            Some(w) => {
                return Err(Error::Config(format!(
                    "warm start has {} values for {n} nodes",
                    w.len()
                )))
            }
            None => vec![0.0; n],
        };
        let mut f = vec![0.0; n];
        let mut w = vec![0.0; n];
        let tol = params.tol_fixed_point * params.kappa;
        let mut gap = f64::INFINITY;
        let mut status = Status::MaxIterations;
        let mut used = params.max_iterations;
        for it in 1..=params.max_iterations {
            self.integrand(&v, &mut f);
            self.op.apply_into(&f, &mut w);
            gap = 0.0;
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi *= lambda;
                gap = f64::max(gap, (*wi - vi).abs());
            }
            std::mem::swap(&mut v, &mut w);
            if !gap.is_finite() {
                return Err(Error::Numerical(format!(
                    "iterate became non-finite at iteration {it} (lambda = {lambda})"
                )));
            }
            let (min_c, _) = self.clearances(&v);
            if min_c <= params.touchdown_fraction {
                status = Status::Touchdown;
                used = it;
                break;
            }
            if gap <= tol {
                status = Status::Converged;
                used = it;
                break;
            }
        }
        let (min_clearance, last_node_clearance) = self.clearances(&v);
        let last_iterate = GridFunction::new(&self.grid, v)?;
        Ok(IterationOutcome {
            status,
            solution: (status == Status::Converged).then(|| last_iterate.clone()),
            iterations_used: used,
            final_gap: gap,
            min_clearance,
            last_node_clearance,
            last_iterate,
        })
    }
}

/// Monotone iteration from v₀ = 0 for `params.lambda`.
pub fn iterate_minimal(params: &ProblemParams, grid: &RadialGrid) -> Result<IterationOutcome> {
    MinimalSolver::new(params, grid)?.solve(params.lambda, None)
}

/// Minimal solutions along increasing λ.
#[derive(Debug, Clone)]
pub struct Branch {
    pub lambdas: Vec<f64>,
    pub solutions: Vec<GridFunction>,
    pub sup_values: Vec<f64>,
    pub clearances: Vec<f64>,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Solutions nodewise nondecreasing in λ (up to `tol`) and sup values strictly increasing.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let pointwise = self.solutions.windows(2).all(|w| {
            w[0].values()
                .iter()
                .zip(w[1].values())
                .all(|(a, b)| *b >= *a - tol)
        });
        let sups = self.sup_values.windows(2).all(|w| w[1] > w[0]);
        pointwise && sups
    }
}

impl MinimalSolver {
    /// Warm-started sweep; each converged solution seeds the next λ.
    pub fn sweep(&self, lambdas: &[f64]) -> Result<Branch> {
        if lambdas.is_empty() {
            return Err(Error::Config("empty lambda list".into()));
        }
        if lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("lambda list must be strictly increasing".into()));
        }
        let mut branch = Branch {
            lambdas: Vec::with_capacity(lambdas.len()),
            solutions: Vec::with_capacity(lambdas.len()),
            sup_values: Vec::with_capacity(lambdas.len()),
            clearances: Vec::with_capacity(lambdas.len()),
        };
        let mut warm: Option<Vec<f64>> = None;
        for &lambda in lambdas {
            let out = self.solve(lambda, warm.as_deref())?;
            let Some(u) = out.solution else {
                return Err(Error::Branch {
                    lambda,
                    status: out.status.to_string(),
                });
            };
            warm = Some(u.values().to_vec());
            branch.lambdas.push(lambda);
            branch.sup_values.push(u.max());
            branch.clearances.push(out.min_clearance);
            branch.solutions.push(u);
        }
        Ok(branch)
    }
}

/// Warm-started sweep over increasing `lambdas`.
pub fn branch_sweep(params_base: &ProblemParams, lambdas: &[f64], grid: &RadialGrid) -> Result<Branch> {
    MinimalSolver::new(params_base, grid)?.sweep(lambdas)
}

/// Default fitting window (ρ_lo, ρ_hi) for boundary decay measurements.
pub const DEFAULT_DECAY_WINDOW: (f64, f64) = (1e-3, 1e-1);

/// Minimum number of nodes inside a fitting window.
pub const MIN_WINDOW_NODES: usize = 8;

/// Boundary decay of a minimal solution over a window of ρ.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub gamma_param: f64,
    pub lambda: f64,
    /// Least-squares slope of ln u against ln ρ.
    pub fitted_slope: f64,
    pub window: (f64, f64),
    pub nodes_used: usize,
    /// min/max of u/(λ ρ ln(1/ρ)) over the window when 2 − 2γ = 1.
    pub log_correction_ratio_bounds: Option<(f64, f64)>,
    /// max over the window of λ·ϱ_{2−2γ}/u, i.e. the constant c in u ≥ (λ/c)·ϱ_{2−2γ}.
    pub lower_bound_constant: f64,
}

impl DecayFit {
    /// The exponent min{1, 2 − 2γ} the slope should approach.
    pub fn expected_slope(&self) -> f64 {
        (2.0 - 2.0 * self.gamma_param).min(1.0)
    }
}

pub fn boundary_decay_fit(
    u: &GridFunction,
    gamma_param: f64,
    lambda: f64,
    window: (f64, f64),
) -> Result<DecayFit> {
    let grid = u.grid();
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
    if !(0.0..1.0).contains(&gamma_param) || !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "need gamma in [0,1) and lambda > 0 (got {gamma_param}, {lambda})"
        )));
    }
    let idx = grid.window_indices(lo, hi);
    if idx.len() < MIN_WINDOW_NODES {
        return Err(Error::Domain(format!(
            "window ({lo:e}, {hi:e}) holds {} nodes, need at least {MIN_WINDOW_NODES}",
            idx.len()
        )));
    }
    let rho = grid.rho();
    let vals = u.values();
    if let Some(&i) = idx.iter().find(|&&i| !(vals[i] > 0.0)) {
        return Err(Error::Domain(format!("u is not positive at rho = {:e}", rho[i])));
    }
    let xs: Vec<f64> = idx.iter().map(|&i| rho[i].ln()).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| vals[i].ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let tau = 2.0 - 2.0 * gamma_param;
    let log_correction_ratio_bounds = ((tau - 1.0).abs() < 1e-12).then(|| {
        idx.iter()
            .map(|&i| vals[i] / (lambda * rho[i] * (1.0 / rho[i]).ln()))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r), b.max(r)))
    });
    let mut lower_bound_constant = 0.0f64;
    for &i in &idx {
        let gauge = decay_gauge_extended(if (tau - 1.0).abs() < 1e-12 { 1.0 } else { tau }, rho[i])?;
        lower_bound_constant = lower_bound_constant.max(lambda * gauge / vals[i]);
    }
    Ok(DecayFit {
        gamma_param,
        lambda,
        fitted_slope: sxy / sxx,
        window,
        nodes_used: idx.len(),
        log_correction_ratio_bounds,
        lower_bound_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn params(lambda: f64, gamma: f64) -> ProblemParams {
        ProblemParams::new(lambda, 1.0, gamma, 1).unwrap()
    }

    #[test]
    fn zero_voltage_converges_immediately() {
        let g = build_grid(128, 3.0).unwrap();
        let out = iterate_minimal(&params(0.0, 2.0 / 3.0), &g).unwrap();
        assert_eq!(out.status, Status::Converged);
        assert_eq!(out.iterations_used, 1);
        assert!(out.solution.unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn below_supersolution_bound_converges() {
        let g = build_grid(512, 3.0).unwrap();
        let p = params(0.1, 2.0 / 3.0);
        let s = MinimalSolver::new(&p, &g).unwrap();
        let out = s.solve(0.1, None).unwrap();
        assert_eq!(out.status, Status::Converged);
        assert!(out.final_gap <= p.tol_fixed_point);
        assert!(out.min_clearance > 0.0);
        let u = out.solution.unwrap();
        let a = s.profile();
        let m = g.n_cells();
        for i in 0..m {
            assert!(u.values()[i] >= 0.0 && u.values()[i] < a[i]);
        }
        assert!(s.fixed_point_residual(0.1, u.values()) <= 2.0 * p.tol_fixed_point);
    }

    #[test]
    fn far_above_upper_bound_touches_down() {
        let g = build_grid(512, 3.0).unwrap();
        let out = iterate_minimal(&params(5.0, 2.0 / 3.0), &g).unwrap();
        assert_eq!(out.status, Status::Touchdown);
        assert!(out.solution.is_none());
        assert!(out.min_clearance <= 1e-3);
    }

    #[test]
    fn constant_profile_is_a_valid_anchor() {
        let g = build_grid(256, 2.0).unwrap();
        let out = iterate_minimal(&params(0.2, 0.0), &g).unwrap();
        assert_eq!(out.status, Status::Converged);
        let out = iterate_minimal(&params(1.0, 0.0), &g).unwrap();
        assert_eq!(out.status, Status::Touchdown);
    }

    #[test]
    fn iterates_ascend_monotonically() {
        let g = build_grid(256, 3.0).unwrap();
        let p = params(0.12, 2.0 / 3.0);
        let s = MinimalSolver::new(&p, &g).unwrap();
        let mut v = vec![0.0; g.len()];
        for _ in 0..50 {
            let w = s.picard_map(0.12, &v);
            assert!(w.iter().zip(&v).all(|(a, b)| a >= b));
            v = w;
        }
    }

    #[test]
    fn branch_rejects_bad_lists() {
        let g = build_grid(128, 3.0).unwrap();
        let p = params(0.0, 0.5);
        assert!(branch_sweep(&p, &[], &g).is_err());
        assert!(branch_sweep(&p, &[0.1, 0.05], &g).is_err());
        let err = branch_sweep(&p, &[0.05, 50.0], &g).unwrap_err();
        assert!(matches!(err, Error::Branch { lambda, .. } if lambda == 50.0));
    }

    #[test]
    fn single_lambda_branch() {
        let g = build_grid(128, 3.0).unwrap();
        let b = branch_sweep(&params(0.0, 0.5), &[0.05], &g).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b.is_monotone(1e-10));
    }

    #[test]
    fn decay_fit_rejects_thin_or_unresolved_windows() {
        let g = build_grid(128, 3.0).unwrap();
        let u = iterate_minimal(&params(0.05, 0.3), &g).unwrap().solution.unwrap();
        assert!(boundary_decay_fit(&u, 0.3, 0.05, (0.2, 0.21)).is_err());
        assert!(boundary_decay_fit(&u, 0.3, 0.05, (1e-9, 1e-1)).is_err());
        assert!(boundary_decay_fit(&u, 0.3, 0.05, (1e-3, 1e-1)).is_ok());
    }
}
