//! Linearized stability operator −Δ − 2λ/(a − u)³ on radial functions, its
//! ground state, the discrete Hardy constant and energy diagnostics.
//!
//! The discretization is vertex centred. Node i owns the control volume
//! [r_{i−½}, r_{i+½}] (r_{−½} = 0, midpoints otherwise) with mass
//! W_i = (r_{i+½}^N − r_{i−½}^N)/N, and neighbouring nodes exchange the flux
//! c_i (φ_{i+1} − φ_i) with c_i = r_{i+½}^{N−1}/h_i. The zero flux at r = 0 is
//! the regularity (Neumann) condition and φ_M = 0 the Dirichlet one. The
//! quadratic form Σ c_i (Δφ_i)² − Σ W_i V_i φ_i² against Σ W_i φ_i² gives a
//! symmetric tridiagonal matrix after scaling by W^{−½}.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::grid::{profile_eval, sphere_area, GridFunction, ProblemParams, RadialGrid};
use crate::quadrature::gauss_legendre_unit;

/// Stopping tolerance on successive Rayleigh quotients, relative to max(1, |μ|).
pub const EIGEN_TOL: f64 = 1e-10;

/// Iteration cap of the eigen solver.
pub const EIGEN_MAX_STEPS: usize = 10_000;

/// Discrete quadratic-form pair: energy Σ c_i(φ_{i+1} − φ_i)² − Σ s_i φ_i²
/// (φ_M = 0) against the tridiagonal mass form Σ m_i φ_i² + 2Σ n_i φ_i φ_{i+1},
/// unknowns at nodes 0..M−1.
#[derive(Debug, Clone)]
struct Pencil {
    flux: Vec<f64>,
    shift: Vec<f64>,
    mass: Vec<f64>,
    mass_off: Vec<f64>,
}

impl Pencil {
    fn lumped(flux: Vec<f64>, shift: Vec<f64>, mass: Vec<f64>) -> Self {
        let mass_off = vec![0.0; mass.len().saturating_sub(1)];
        Pencil {
            flux,
            shift,
            mass,
            mass_off,
        }
    }

    fn len(&self) -> usize {
        self.mass.len()
    }

    fn stiffness_diag(&self, i: usize) -> f64 {
        self.flux[i] + if i > 0 { self.flux[i - 1] } else { 0.0 }
    }

    /// W^{−½}(K − S)W^{−½} for a lumped mass.
    fn symmetric(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.len();
        let diag = (0..m)
            .map(|i| (self.stiffness_diag(i) - self.shift[i]) / self.mass[i])
            .collect();
        let off = (0..m.saturating_sub(1))
            .map(|i| -self.flux[i] / (self.mass[i] * self.mass[i + 1]).sqrt())
            .collect();
        (diag, off)
    }

    fn mass_norm2(&self, phi: &[f64]) -> f64 {
        let m = self.len();
        let mut den = 0.0;
        for i in 0..m {
            den += self.mass[i] * phi[i] * phi[i];
            if i + 1 < m {
                den += 2.0 * self.mass_off[i] * phi[i] * phi[i + 1];
            }
        }
        den
    }

    /// Rayleigh quotient of nodal values φ (φ_M = 0 implied).
    fn rayleigh(&self, phi: &[f64]) -> f64 {
        let m = self.len();
        let mut num = 0.0;
        for i in 0..m {
            let next = if i + 1 < m { phi[i + 1] } else { 0.0 };
            let d = next - phi[i];
            num += self.flux[i] * d * d - self.shift[i] * phi[i] * phi[i];
        }
        num / self.mass_norm2(phi)
    }

    /// Entries of K − S − xB.
    fn shifted(&self, x: f64, i: usize) -> (f64, f64) {
        let d = self.stiffness_diag(i) - self.shift[i] - x * self.mass[i];
        let o = if i + 1 < self.len() {
            -self.flux[i] - x * self.mass_off[i]
        } else {
            0.0
        };
        (d, o)
    }

    /// Number of eigenvalues below `x` (inertia of K − S − xB via LDLᵀ pivots).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        let mut prev_off = 0.0;
        for i in 0..self.len() {
            let (di, oi) = self.shifted(x, i);
            d = di - if i > 0 { prev_off * prev_off / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::MIN_POSITIVE;
            }
            if d < 0.0 {
                count += 1;
            }
            prev_off = oi;
        }
        count
    }

    /// Solves (K − S − σB)y = b by the Thomas algorithm; the matrix must be positive definite.
    fn shifted_solve(&self, sigma: f64, b: &[f64], y: &mut [f64], work: &mut [f64]) {
        let m = self.len();
        let (d0, mut prev_off) = self.shifted(sigma, 0);
        let mut d = d0;
        work[0] = d;
        y[0] = b[0];
        for i in 1..m {
            let (di, oi) = self.shifted(sigma, i);
            let l = prev_off / d;
            d = di - l * prev_off;
            work[i] = d;
            y[i] = b[i] - l * y[i - 1];
            prev_off = oi;
        }
        y[m - 1] /= work[m - 1];
        for i in (0..m - 1).rev() {
            let (_, oi) = self.shifted(sigma, i);
            y[i] = (y[i] - oi * y[i + 1]) / work[i];
        }
    }

    fn apply_mass(&self, phi: &[f64], out: &mut [f64]) {
        let m = self.len();
        for i in 0..m {
            let mut v = self.mass[i] * phi[i];
            if i > 0 {
                v += self.mass_off[i - 1] * phi[i - 1];
            }
            if i + 1 < m {
                v += self.mass_off[i] * phi[i + 1];
            }
            out[i] = v;
        }
    }

    /// Smallest eigenvalue, its mass-normalized positive eigenvector and the residual.
    fn ground_state(&self) -> Result<(f64, Vec<f64>, f64)> {
        let m = self.len();
        // K is positive semidefinite, so μ ≥ −max s_i/m_i for a lumped mass
        let mut lo = -1.0;
        for i in 0..m {
            lo = f64::min(lo, -self.shift[i] / self.mass[i] - 1.0);
        }
        let trial: Vec<f64> = (0..m).map(|i| (m - i) as f64).collect();
        let mut hi = self.rayleigh(&trial);
        hi += 1e-12 * hi.abs().max(1.0);
        if self.count_below(hi) == 0 || self.count_below(lo) != 0 {
            return Err(Error::Numerical("Sturm bracket for the ground state is invalid".into()));
        }
        while hi - lo > 1e-15 * hi.abs().max(lo.abs()).max(1.0) {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            if self.count_below(mid) == 0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // inverse iteration at a shift just below μ₁ keeps K − S − σB positive definite
        let sigma = lo - 1e-13 * lo.abs().max(1.0);
        let mut phi = vec![1.0; m];
        let mut b = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut work = vec![0.0; m];
        let mut prev = f64::INFINITY;
        let mut mu = f64::NAN;
        let mut increment = f64::INFINITY;
        let mut converged = false;
        for step in 1..=EIGEN_MAX_STEPS {
            self.apply_mass(&phi, &mut b);
            self.shifted_solve(sigma, &b, &mut y, &mut work);
            let norm = self.mass_norm2(&y).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::Numerical("inverse iteration broke down".into()));
            }
            for (p, v) in phi.iter_mut().zip(&y) {
                *p = v / norm;
            }
            mu = self.rayleigh(&phi);
            increment = (mu - prev).abs();
            if step >= 3 && increment < EIGEN_TOL * mu.abs().max(1.0) {
                converged = true;
                break;
            }
            prev = mu;
        }
        if !converged {
            return Err(Error::EigenStall {
                iterations: EIGEN_MAX_STEPS,
                increment,
            });
        }
        if phi.iter().sum::<f64>() < 0.0 {
            phi.iter_mut().for_each(|v| *v = -*v);
        }
        if phi.iter().any(|&v| v <= 0.0) {
            return Err(Error::Numerical("ground state is not sign definite".into()));
        }
        let residual = self.residual(mu, &phi);
        Ok((mu, phi, residual))
    }

    /// ‖(K − S − μB)φ‖ in the norm weighted by the inverse lumped mass, for ‖φ‖_B = 1.
    fn residual(&self, mu: f64, phi: &[f64]) -> f64 {
        let m = self.len();
        let mut bphi = vec![0.0; m];
        self.apply_mass(phi, &mut bphi);
        let mut r2 = 0.0;
        for i in 0..m {
            let left = if i > 0 { self.flux[i - 1] * (phi[i] - phi[i - 1]) } else { 0.0 };
            let right = self.flux[i] * (if i + 1 < m { phi[i + 1] } else { 0.0 } - phi[i]);
            let r = left - right - self.shift[i] * phi[i] - mu * bphi[i];
            r2 += r * r / self.mass[i];
        }
        (r2 / self.mass_norm2(phi)).sqrt()
    }
}

/// Control-volume masses W_i and fluxes c_i for nodes 0..M−1.
fn volumes_and_fluxes(grid: &RadialGrid, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let m = grid.n_cells();
    let h = grid.widths();
    let rho = grid.rho();
    // faces r_{i+½} via their boundary distance, to avoid 1 − (1 − ε)
    let face_rho: Vec<f64> = (0..m).map(|i| 0.5 * (rho[i] + rho[i + 1])).collect();
    let mut mass = vec![0.0; m];
    let mut flux = vec![0.0; m];
    let k = dim as i32;
    for i in 0..m {
        let outer = 1.0 - face_rho[i];
        flux[i] = outer.powi(k - 1) / h[i];
        if i == 0 {
            mass[i] = outer.powi(k) / dim as f64;
        } else {
            let inner = 1.0 - face_rho[i - 1];
            // outer^N − inner^N = (outer − inner)·Σ outer^j inner^{N−1−j}
            let d = 0.5 * (h[i - 1] + h[i]);
            let s: f64 = (0..k).map(|j| outer.powi(j) * inner.powi(k - 1 - j)).sum();
            mass[i] = d * s / dim as f64;
        }
    }
    (mass, flux)
}

/// Where the boundary potential cap sits and whether it was active.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PotentialCap {
    pub node: usize,
    pub rho: f64,
    pub value: f64,
    pub active: bool,
}

/// −Δ − V on radial functions with V = 2λ/(a − u)³.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    grid: RadialGrid,
    dim: usize,
    lambda: f64,
    potential: GridFunction,
    cap: PotentialCap,
    pencil: Pencil,
}

impl LinearizedOperator {
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn potential(&self) -> &GridFunction {
        &self.potential
    }

    pub fn cap(&self) -> PotentialCap {
        self.cap
    }

    /// Diagonal and off-diagonal of the symmetrized matrix W^{−½}(K − WV)W^{−½}.
    pub fn tridiagonal(&self) -> (Vec<f64>, Vec<f64>) {
        self.pencil.symmetric()
    }

    /// Rayleigh quotient of nodal trial values (length M or M+1; φ_M is taken as 0).
    pub fn rayleigh_quotient(&self, phi: &[f64]) -> Result<f64> {
        let m = self.grid.n_cells();
        if phi.len() != m && phi.len() != m + 1 {
            return Err(Error::Config(format!("expected {m} or {} values", m + 1)));
        }
        if phi[..m].iter().all(|&v| v == 0.0) {
            return Err(Error::Domain("zero trial function".into()));
        }
        Ok(self.pencil.rayleigh(&phi[..m]))
    }
}

/// Radial Dirichlet Laplacian (the λ = 0 operator).
pub fn laplacian_operator(grid: &RadialGrid, dim: usize) -> Result<LinearizedOperator> {
    let params = ProblemParams::new(0.0, 1.0, 0.0, dim)?;
    assemble_linearized(&GridFunction::zeros(grid), &params)
}

/// Assembles the linearized operator around `u`.
///
/// The potential at the last interior node is capped at 2λ·c·ρ⁻² with
/// c = κ⁻³·(min clearance)⁻³, the bound that follows from a − u ≥ θ·κρ^γ.
pub fn assemble_linearized(u: &GridFunction, params: &ProblemParams) -> Result<LinearizedOperator> {
    params.validate()?;
    let grid = u.grid().clone();
    let m = grid.n_cells();
    let a = profile_eval(params, &grid)?;
    let (a, uv) = (a.values(), u.values());
    let mut min_clearance = f64::INFINITY;
    for i in 0..m {
        let c = (a[i] - uv[i]) / a[i];
        if !(c > 0.0) {
            return Err(Error::Domain(format!(
                "nonpositive clearance {c:e} at r = {}",
                grid.nodes()[i]
            )));
        }
        min_clearance = min_clearance.min(c);
    }
    let lambda = params.lambda;
    let mut v = vec![0.0; m + 1];
    for i in 0..m {
        let gap = a[i] - uv[i];
        v[i] = 2.0 * lambda / (gap * gap * gap);
    }
    let rho_last = grid.rho()[m - 1];
    let c28 = (params.kappa * min_clearance).powi(-3);
    let cap_value = 2.0 * lambda * c28 / (rho_last * rho_last);
    let active = v[m - 1] > cap_value;
    if active {
        v[m - 1] = cap_value;
    }
    let (mass, flux) = volumes_and_fluxes(&grid, params.dim);
    let shift: Vec<f64> = (0..m).map(|i| mass[i] * v[i]).collect();
    let pencil = Pencil::lumped(flux, shift, mass);
    Ok(LinearizedOperator {
        potential: GridFunction::new(&grid, v)?,
        grid,
        dim: params.dim,
        lambda,
        cap: PotentialCap {
            node: m - 1,
            rho: rho_last,
            value: cap_value,
            active,
        },
        pencil,
    })
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub mu1: f64,
    /// Ground state, Σ W_i φ_i² = 1, positive, zero at r = 1.
    pub eigenfunction: GridFunction,
    /// ‖Dx − μ₁x‖ for the unit vector x = W^{½}φ.
    pub rayleigh_residual: f64,
}

/// Ground state of the linearized operator.
///
/// μ₁ is isolated by Sturm-sequence bisection; the eigenvector follows from
/// inverse iteration at a shift just below μ₁, stopped once successive
/// Rayleigh quotients agree to [`EIGEN_TOL`].
pub fn smallest_eigenpair(op: &LinearizedOperator) -> Result<EigenResult> {
    let (mu1, mut phi, rayleigh_residual) = op.pencil.ground_state()?;
    phi.push(0.0);
    Ok(EigenResult {
        mu1,
        eigenfunction: GridFunction::new(&op.grid, phi)?,
        rayleigh_residual,
    })
}

/// Reciprocal of min ∫|∇φ|² / ∫φ²ρ⁻² over continuous piecewise-linear φ
/// vanishing at r = 1 (weights r^{N−1}).
///
/// Stiffness and the ρ⁻²-weighted mass are integrated exactly per cell, so the
/// trial space is conforming: the estimate never exceeds the continuum
/// constant and is nondecreasing under nested refinement.
pub fn hardy_constant_estimate(grid: &RadialGrid, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::Config("dim must be >= 1".into()));
    }
    let m = grid.n_cells();
    let nodes = grid.nodes();
    let h = grid.widths();
    let rho = grid.rho();
    let (gx, gw) = gauss_legendre_unit(16);
    let k = dim as i32;
    let mut flux = vec![0.0; m];
    let mut mass = vec![0.0; m];
    let mut mass_off = vec![0.0; m.saturating_sub(1)];
    for i in 0..m {
        let (lo, hi) = (nodes[i], nodes[i] + h[i]);
        let s: f64 = (0..k).map(|j| hi.powi(j) * lo.powi(k - 1 - j)).sum();
        flux[i] = s / dim as f64 / h[i];
        // hats on the cell: left (1 − ξ), right ξ; ρ = ρ_i − ξh_i
        let (mut aa, mut ab, mut bb) = (0.0, 0.0, 0.0);
        for (&x, &w) in gx.iter().zip(&gw) {
            let t = lo + x * h[i];
            let r = rho[i] - x * h[i];
            let jac = t.powi(k - 1) * w * h[i];
            if i + 1 == m {
                // only the left hat survives; (1 − ξ)²/ρ² = 1/h² on the last cell
                aa += jac / (h[i] * h[i]);
            } else {
                let (pa, pb) = (1.0 - x, x);
                let wr = jac / (r * r);
                aa += pa * pa * wr;
                ab += pa * pb * wr;
                bb += pb * pb * wr;
            }
        }
        mass[i] += aa;
        if i + 1 < m {
            mass[i + 1] += bb;
            mass_off[i] = ab;
        }
    }
    let pencil = Pencil {
        flux,
        shift: vec![0.0; m],
        mass,
        mass_off,
    };
    let (nu, _, _) = pencil.ground_state()?;
    Ok(1.0 / nu)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyDiagnostics {
    /// ∫|∇u|² dx.
    pub grad_energy: f64,
    /// ∫ u/(a − u)² dx.
    pub singular_mass: f64,
    /// ∫ ρ^{1−β}/(a − u)² dx.
    pub weighted_singularity: f64,
    pub beta: f64,
}

/// Energy integrals of a converged solution over the ball.
///
/// The gradient energy uses cellwise difference quotients with exact
/// r^{N−1} masses; the two singular integrals use the power-law tail of the
/// Green quadrature on the last cell.
pub fn energy_diagnostics(u: &GridFunction, params: &ProblemParams, beta: f64) -> Result<EnergyDiagnostics> {
    params.validate()?;
    let gamma = params.gamma;
    if !(beta > 0.0 && beta < gamma) {
        return Err(Error::Domain(format!("beta = {beta} must lie in (0, gamma = {gamma})")));
    }
    let grid = u.grid();
    let dim = params.dim;
    let m = grid.n_cells();
    let a = profile_eval(params, grid)?;
    let (a, uv) = (a.values(), u.values());
    let nodes = grid.nodes();
    let h = grid.widths();
    let rho = grid.rho();
    let sphere = sphere_area(dim);

    let k = dim as i32;
    let mut grad = 0.0;
    for i in 0..m {
        let du = (uv[i + 1] - uv[i]) / h[i];
        let (lo, hi) = (nodes[i], nodes[i] + h[i]);
        let s: f64 = (0..k).map(|j| hi.powi(j) * lo.powi(k - 1 - j)).sum();
        grad += du * du * h[i] * s / dim as f64;
    }

    let mut inv_gap2 = vec![0.0; m + 1];
    for i in 0..m {
        let gap = a[i] - uv[i];
        if !(gap > 0.0) {
            return Err(Error::Domain(format!("nonpositive clearance at r = {}", nodes[i])));
        }
        inv_gap2[i] = 1.0 / (gap * gap);
    }
    let decay = (2.0 - 2.0 * gamma).min(1.0);
    let mass_op = GreenOperator::with_boundary_exponent(grid, dim, decay - 2.0 * gamma)?;
    let sm: Vec<f64> = (0..=m).map(|i| uv[i] * inv_gap2[i]).collect();
    let singular_mass = mass_op.integrate(&sm)?;
    let weight_op = GreenOperator::with_boundary_exponent(grid, dim, 1.0 - beta - 2.0 * gamma)?;
    let ws: Vec<f64> = (0..=m).map(|i| rho[i].powf(1.0 - beta) * inv_gap2[i]).collect();
    let weighted = weight_op.integrate(&ws)?;

    Ok(EnergyDiagnostics {
        grad_energy: sphere * grad,
        singular_mass: sphere * singular_mass,
        weighted_singularity: sphere * weighted,
        beta,
    })
}
