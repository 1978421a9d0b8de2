//! Radial computational domain on the unit ball, the membrane profile and the
//! boundary decay gauge.
//!
//! Everything here is immutable after construction. A [`RadialGrid`] clones
//! cheaply (shared storage) and two grids compare equal by identity, which is
//! how [`GridFunction`] ties its samples to the mesh they live on.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of mesh intervals.
pub const MIN_CELLS: usize = 64;

/// Default grading exponent: fine enough near r = 1 to resolve integrands
/// behaving like ρ^(τ-2) for τ down to 2/3.
pub const DEFAULT_GRADING: f64 = 3.0;

#[derive(Debug)]
struct GridData {
    n_cells: usize,
    grading_exponent: f64,
    nodes: Vec<f64>,
    rho: Vec<f64>,
    widths: Vec<f64>,
}

/// Graded mesh 0 = r₀ < r₁ < … < r_M = 1 with 1 − r_i = (1 − i/M)^q.
///
/// Boundary distances ρ_i = 1 − r_i and cell widths are stored separately so
/// that quantities near r = 1 never suffer cancellation.
#[derive(Debug, Clone)]
pub struct RadialGrid(Arc<GridData>);

impl RadialGrid {
    pub fn n_cells(&self) -> usize {
        self.0.n_cells
    }

    pub fn grading_exponent(&self) -> f64 {
        self.0.grading_exponent
    }

    pub fn len(&self) -> usize {
        self.0.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0.nodes
    }

    /// Boundary distances ρ_i = 1 − r_i, computed directly from the grading map.
    pub fn rho(&self) -> &[f64] {
        &self.0.rho
    }

    /// Cell widths h_i = r_{i+1} − r_i (length M).
    pub fn widths(&self) -> &[f64] {
        &self.0.widths
    }

    pub fn min_width(&self) -> f64 {
        self.0.widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smallest boundary distance considered resolved: ten boundary cells.
    pub fn min_resolved_rho(&self) -> f64 {
        10.0 * self.min_width()
    }

    /// Same allocation, i.e. the very same mesh.
    pub fn same_as(&self, other: &RadialGrid) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Same mesh parameters (hence bitwise identical nodes).
    pub fn equivalent(&self, other: &RadialGrid) -> bool {
        self.same_as(other)
            || (self.n_cells() == other.n_cells()
                && self.grading_exponent() == other.grading_exponent())
    }

    pub fn signature(&self) -> GridSignature {
        GridSignature {
            n_cells: self.n_cells(),
            grading_exponent: self.grading_exponent(),
        }
    }

    /// Indices of nodes whose boundary distance lies in `[rho_lo, rho_hi]`.
    pub fn window_indices(&self, rho_lo: f64, rho_hi: f64) -> Vec<usize> {
        self.rho()
            .iter()
            .enumerate()
            .filter(|(_, &r)| r >= rho_lo && r <= rho_hi)
            .map(|(i, _)| i)
            .collect()
    }

    /// The same grading with twice as many cells.
    pub fn refined(&self) -> Result<RadialGrid> {
        build_grid(2 * self.n_cells(), self.grading_exponent())
    }
}

/// Mesh parameters echoed into reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSignature {
    pub n_cells: usize,
    pub grading_exponent: f64,
}

/// Builds the graded radial mesh.
pub fn build_grid(n_cells: usize, grading_exponent: f64) -> Result<RadialGrid> {
    if n_cells < MIN_CELLS {
        return Err(Error::Config(format!(
            "n_cells = {n_cells} is below the minimum of {MIN_CELLS}"
        )));
    }
    if !(grading_exponent >= 1.0) || !grading_exponent.is_finite() {
        return Err(Error::Config(format!(
            "grading exponent {grading_exponent} must be a finite real >= 1"
        )));
    }
    let m = n_cells as f64;
    let rho: Vec<f64> = (0..=n_cells)
        .map(|i| {
            if i == 0 {
                1.0
            } else if i == n_cells {
                0.0
            } else {
                ((n_cells - i) as f64 / m).powf(grading_exponent)
            }
        })
        .collect();
    let nodes: Vec<f64> = rho.iter().map(|r| 1.0 - r).collect();
    let widths: Vec<f64> = rho.windows(2).map(|w| w[0] - w[1]).collect();
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "grading exponent {grading_exponent} collapses nodes at n_cells = {n_cells}"
        )));
    }
    Ok(RadialGrid(Arc::new(GridData {
        n_cells,
        grading_exponent,
        nodes,
        rho,
        widths,
    })))
}

/// Surface measure |S^{N-1}| of the unit sphere in ℝᴺ.
pub fn sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(n / 2.0) / statrs::function::gamma::gamma(n / 2.0)
}

pub const DEFAULT_TOL_FIXED_POINT: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
pub const DEFAULT_TOUCHDOWN_FRACTION: f64 = 1e-3;

/// The critical profile exponent.
pub const GAMMA_CRITICAL: f64 = 2.0 / 3.0;

/// Physical and numerical parameters of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub lambda: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub dim: usize,
    /// Stopping tolerance on sup|v_n − v_{n−1}|, measured in units of κ.
    pub tol_fixed_point: f64,
    pub max_iterations: usize,
    pub touchdown_fraction: f64,
}

impl ProblemParams {
    /// Parameters with default tolerances; validated.
    pub fn new(lambda: f64, kappa: f64, gamma: f64, dim: usize) -> Result<Self> {
        let p = ProblemParams {
            lambda,
            kappa,
            gamma,
            dim,
            tol_fixed_point: DEFAULT_TOL_FIXED_POINT,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            touchdown_fraction: DEFAULT_TOUCHDOWN_FRACTION,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda = {} must be finite and >= 0", self.lambda));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return bad(format!("kappa = {} must be finite and > 0", self.kappa));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} must lie in [0, 1)", self.gamma));
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if !(self.tol_fixed_point > 0.0) {
            return bad(format!("tol_fixed_point = {} must be > 0", self.tol_fixed_point));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.touchdown_fraction > 0.0 && self.touchdown_fraction < 1.0) {
            return bad(format!(
                "touchdown_fraction = {} must lie in (0, 1)",
                self.touchdown_fraction
            ));
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        self.kappa = kappa;
        self.validate()?;
        Ok(self)
    }
}

/// Real samples aligned with the nodes of a [`RadialGrid`].
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "grid function value at node {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(GridFunction {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &RadialGrid) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f(r)` at every node.
    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().iter().map(|&r| f(r)).collect())
    }

    /// Samples `f(ρ)` at every node, ρ = 1 − r taken from the exact grading map.
    pub fn from_rho_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.rho().iter().map(|&p| f(p)).collect())
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Value at boundary distance `rho`, interpolated between the bracketing
    /// nodes: log-log when both samples are positive, linear otherwise.
    pub fn at_rho(&self, rho: f64) -> Option<f64> {
        let rhos = self.grid.rho();
        if !(0.0..=1.0).contains(&rho) {
            return None;
        }
        // rho is decreasing along the node index
        let j = rhos.partition_point(|&p| p > rho);
        if j == 0 {
            return Some(self.values[0]);
        }
        let (p0, p1) = (rhos[j - 1], rhos[j]);
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        if p1 == rho {
            return Some(v1);
        }
        if v0 > 0.0 && v1 > 0.0 && p1 > 0.0 {
            let s = (rho / p1).ln() / (p0 / p1).ln();
            Some((v1.ln() + s * (v0 / v1).ln()).exp())
        } else {
            let s = (rho - p1) / (p0 - p1);
            Some(v1 + s * (v0 - v1))
        }
    }
}

/// Membrane profile a(r) = κ(1 − r²)^γ at every node.
///
/// 1 − r² is formed as ρ(2 − ρ), so a vanishes exactly at r = 1 when γ > 0
/// and is identically κ when γ = 0.
pub fn profile_eval(params: &ProblemParams, grid: &RadialGrid) -> Result<GridFunction> {
    params.validate()?;
    let values = grid
        .rho()
        .iter()
        .map(|&p| profile_at_rho(params.kappa, params.gamma, p))
        .collect();
    GridFunction::new(grid, values)
}

pub(crate) fn profile_at_rho(kappa: f64, gamma: f64, rho: f64) -> f64 {
    if gamma == 0.0 {
        kappa
    } else {
        kappa * (rho * (2.0 - rho)).powf(gamma)
    }
}

/// Boundary decay gauge ϱ_τ(ρ): ρ^min(1,τ), or ρ·ln(1/ρ) at τ = 1.
pub fn decay_gauge(tau: f64, rho: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 2.0) {
        return Err(Error::Domain(format!("tau = {tau} must lie in (0, 2)")));
    }
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::Domain(format!("rho = {rho} must lie in (0, 1/2)")));
    }
    Ok(gauge_unchecked(tau, rho))
}

/// [`decay_gauge`] on (0, 1], continued by its value at ρ = 1/2 beyond 1/2.
pub fn decay_gauge_extended(tau: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("rho = {rho} must lie in (0, 1]")));
    }
    if rho >= 0.5 {
        if !(tau > 0.0 && tau < 2.0) {
            return Err(Error::Domain(format!("tau = {tau} must lie in (0, 2)")));
        }
        return Ok(gauge_unchecked(tau, 0.5));
    }
    decay_gauge(tau, rho)
}

fn gauge_unchecked(tau: f64, rho: f64) -> f64 {
    if tau == 1.0 {
        rho * (1.0 / rho).ln()
    } else {
        rho.powf(tau.min(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_when_grading_is_one() {
        let g = build_grid(64, 1.0).unwrap();
        for (i, &r) in g.nodes().iter().enumerate() {
            assert!((r - i as f64 / 64.0).abs() < 1e-15, "node {i}: {r}");
        }
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[64], 1.0);
    }

    #[test]
    fn graded_node_formula() {
        let g = build_grid(100, 2.0).unwrap();
        assert!((g.rho()[99] - 1e-4).abs() < 1e-18);
        assert!((1.0 - g.nodes()[99] - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn smallest_boundary_cell_shrinks_like_m_to_minus_q() {
        let m = 2048usize;
        let g = build_grid(m, 3.0).unwrap();
        let expected = (m as f64).powi(-3);
        assert!((g.min_width() / expected - 1.0).abs() < 1e-9);
        assert_eq!(g.min_width(), g.widths()[m - 1]);
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(matches!(build_grid(63, 2.0), Err(Error::Config(_))));
        assert!(matches!(build_grid(64, 0.5), Err(Error::Config(_))));
        assert!(matches!(build_grid(64, f64::NAN), Err(Error::Config(_))));
    }

    #[test]
    fn refinement_halves_min_spacing_by_two_to_the_q() {
        for &q in &[1.0, 2.0, 3.0] {
            let g = build_grid(256, q).unwrap();
            let r = g.refined().unwrap();
            let ratio = r.min_width() / g.min_width();
            let target = 2f64.powf(-q);
            assert!(ratio >= 0.9 * target && ratio <= 1.1 * target, "q={q}: {ratio}");
        }
    }

    #[test]
    fn profile_examples() {
        let g = build_grid(64, 1.0).unwrap();
        let p = ProblemParams::new(0.0, 1.0, 2.0 / 3.0, 1).unwrap();
        let a = profile_eval(&p, &g).unwrap();
        assert_eq!(a.values()[0], 1.0);
        assert_eq!(a.values()[64], 0.0);

        let p = ProblemParams::new(0.0, 2.0, 0.5, 1).unwrap();
        assert!((profile_at_rho(p.kappa, p.gamma, 0.4) - 1.6).abs() < 1e-15);

        let p = ProblemParams::new(0.0, 1.5, 0.0, 2).unwrap();
        let a = profile_eval(&p, &g).unwrap();
        assert!(a.values().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn profile_sandwich_between_rho_powers() {
        let g = build_grid(512, 3.0).unwrap();
        for &(kappa, gamma) in &[(1.0, 0.3), (2.0, 2.0 / 3.0), (0.5, 0.9)] {
            let p = ProblemParams::new(0.0, kappa, gamma, 1).unwrap();
            let a = profile_eval(&p, &g).unwrap();
            for (&v, &rho) in a.values().iter().zip(g.rho()) {
                let lo = kappa * rho.powf(gamma);
                let hi = 2f64.powf(gamma) * kappa * rho.powf(gamma);
                assert!(v >= lo * (1.0 - 1e-14) && v <= hi * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn gauge_examples() {
        let e = (-1f64).exp();
        assert!((decay_gauge(1.0, e).unwrap() - e).abs() < 1e-15);
        assert!((decay_gauge(1.5, 0.01).unwrap() - 0.01).abs() < 1e-15);
        assert!((decay_gauge(0.5, 0.01).unwrap() - 0.1).abs() < 1e-15);
        assert!(decay_gauge(2.0, 0.1).is_err());
        assert!(decay_gauge(0.5, 0.5).is_err());
        assert!(decay_gauge(0.5, 0.0).is_err());
        assert_eq!(decay_gauge_extended(0.7, 0.8).unwrap(), 0.5f64.powf(0.7));
        assert_eq!(decay_gauge_extended(1.0, 1.0).unwrap(), 0.5 * 2f64.ln());
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(-1.0, 1.0, 0.5, 1).is_err());
        assert!(ProblemParams::new(1.0, 0.0, 0.5, 1).is_err());
        assert!(ProblemParams::new(1.0, 1.0, 1.0, 1).is_err());
        assert!(ProblemParams::new(1.0, 1.0, 0.5, 0).is_err());
        let mut p = ProblemParams::new(1.0, 1.0, 0.5, 1).unwrap();
        p.touchdown_fraction = 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn grid_function_rejects_non_finite() {
        let g = build_grid(64, 2.0).unwrap();
        let mut v = vec![0.0; 65];
        v[3] = f64::NAN;
        assert!(GridFunction::new(&g, v).is_err());
        assert!(GridFunction::new(&g, vec![0.0; 10]).is_err());
    }

    #[test]
    fn log_log_interpolation_is_exact_for_powers() {
        let g = build_grid(128, 3.0).unwrap();
        let f = GridFunction::from_rho_fn(&g, |p| if p > 0.0 { p.powf(0.4) } else { 0.0 }).unwrap();
        for &rho in &[1e-4, 3e-3, 0.2] {
            let v = f.at_rho(rho).unwrap();
            assert!((v / rho.powf(0.4) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }
}
