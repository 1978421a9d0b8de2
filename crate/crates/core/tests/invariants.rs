use membrane_core::grid::{decay_gauge_extended, MIN_CELLS};
use membrane_core::solver::MinimalSolver;
use membrane_core::stability::{assemble_linearized, smallest_eigenpair};
use membrane_core::*;
use proptest::prelude::*;

fn small_grid() -> RadialGrid {
    build_grid(256, 3.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gauge_increasing_in_rho(tau in 0.01f64..1.99, a in 1e-6f64..0.49, frac in 0.01f64..1.0) {
        let b = a + frac * (0.5 - a) * 0.999;
        prop_assume!(b > a);
        // ρ ln(1/ρ) only increases below 1/e
        prop_assume!(tau != 1.0 || b < (-1.0f64).exp());
        prop_assert!(decay_gauge(tau, a).unwrap() < decay_gauge(tau, b).unwrap());
    }

    #[test]
    fn gauge_extension_is_constant_beyond_half(tau in 0.01f64..1.99, r in 0.5f64..=1.0) {
        prop_assert_eq!(decay_gauge_extended(tau, r).unwrap(), decay_gauge_extended(tau, 0.5).unwrap());
    }

    #[test]
    fn grid_invariants(m in MIN_CELLS..600usize, q in 1.0f64..4.0) {
        let g = build_grid(m, q).unwrap();
        let r = g.nodes();
        prop_assert_eq!(r[0], 0.0);
        prop_assert_eq!(r[m], 1.0);
        prop_assert!(r.windows(2).all(|w| w[1] > w[0]));
        let ratio = g.refined().unwrap().min_width() / g.min_width();
        let target = 2f64.powf(-q);
        prop_assert!(ratio >= 0.9 * target && ratio <= 1.1 * target, "{} vs {}", ratio, target);
    }

    #[test]
    fn profile_sandwich(kappa in 0.1f64..5.0, gamma in 0.0f64..0.99) {
        let g = small_grid();
        let p = ProblemParams::new(0.0, kappa, gamma, 1).unwrap();
        let a = profile_eval(&p, &g).unwrap();
        for (&rho, &v) in g.rho().iter().zip(a.values()) {
            let lower = kappa * rho.powf(gamma);
            prop_assert!(v >= lower * (1.0 - 1e-14));
            prop_assert!(v <= 2f64.powf(gamma) * lower * (1.0 + 1e-14));
        }
    }

    #[test]
    fn green_linear_and_positive(
        dim in 1usize..=3,
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let g = small_grid();
        let op = GreenOperator::new(&g, dim).unwrap();
        let mut s = seed | 1;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let f: Vec<f64> = (0..g.len()).map(|_| next()).collect();
        let h: Vec<f64> = (0..g.len()).map(|_| next()).collect();
        let gf = op.apply_values(&f).unwrap();
        let gh = op.apply_values(&h).unwrap();
        prop_assert!(gf.iter().all(|&v| v >= 0.0));
        let combo: Vec<f64> = f.iter().zip(&h).map(|(a, b)| alpha * a + beta * b).collect();
        let gc = op.apply_values(&combo).unwrap();
        let scale = gf.iter().chain(&gh).fold(0.0f64, |m, v| m.max(v.abs())) * (alpha.abs() + beta.abs()) + 1e-300;
        for i in 0..g.len() {
            prop_assert!((gc[i] - (alpha * gf[i] + beta * gh[i])).abs() <= 1e-12 * scale);
        }
        // f + h ≥ f nodewise, so G[f + h] ≥ G[f] nodewise
        let sum: Vec<f64> = f.iter().zip(&h).map(|(a, b)| a + b).collect();
        let gs = op.apply_values(&sum).unwrap();
        prop_assert!(gs.iter().zip(&gf).all(|(a, b)| a >= b));
    }

    #[test]
    fn singular_green_positive(p in -1.95f64..-0.05, dim in 1usize..=3) {
        let g = small_grid();
        let op = GreenOperator::with_boundary_exponent(&g, dim, p).unwrap();
        let f: Vec<f64> = g.rho().iter().map(|&r| if r > 0.0 { r.powf(p) } else { 0.0 }).collect();
        let u = op.apply_values(&f).unwrap();
        prop_assert!(u[..g.n_cells()].iter().all(|&v| v > 0.0));
        prop_assert_eq!(u[g.n_cells()], 0.0);
    }

    #[test]
    fn rayleigh_quotients_never_beat_mu1(seed in any::<u64>()) {
        let g = small_grid();
        let p = ProblemParams::new(0.08, 1.0, 2.0 / 3.0, 1).unwrap();
        let u = solver::iterate_minimal(&p, &g).unwrap().solution.unwrap();
        let op = assemble_linearized(&u, &p).unwrap();
        let mu1 = smallest_eigenpair(&op).unwrap().mu1;
        let mut s = seed | 1;
        for _ in 0..50 {
            let phi: Vec<f64> = (0..g.n_cells())
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 11) as f64 / (1u64 << 53) as f64 - 0.3
                })
                .collect();
            let rq = op.rayleigh_quotient(&phi).unwrap();
            prop_assert!(rq >= mu1 - 1e-8, "{} < {}", rq, mu1);
        }
    }
}

#[test]
fn exact_kappa_scaling_of_iterates() {
    let g = build_grid(512, 3.0).unwrap();
    let mut p1 = ProblemParams::new(0.1, 1.0, 2.0 / 3.0, 1).unwrap();
    p1.max_iterations = 25;
    let mut p2 = ProblemParams::new(0.8, 2.0, 2.0 / 3.0, 1).unwrap();
    p2.max_iterations = 25;
    p1.tol_fixed_point = 1e-300;
    p2.tol_fixed_point = 1e-300;
    let a = solver::iterate_minimal(&p1, &g).unwrap();
    let b = solver::iterate_minimal(&p2, &g).unwrap();
    assert_eq!(a.iterations_used, b.iterations_used);
    let diff = a
        .last_iterate
        .values()
        .iter()
        .zip(b.last_iterate.values())
        .map(|(x, y)| (2.0 * x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff:e}");
}

#[test]
fn supersolution_traps_iterates() {
    let g = build_grid(1024, 3.0).unwrap();
    let lambda = 0.9 * (2.0f64 / 3.0).powi(5);
    let p = ProblemParams::new(lambda, 1.0, 2.0 / 3.0, 1).unwrap();
    let s = MinimalSolver::new(&p, &g).unwrap();
    let w: Vec<f64> = g
        .rho()
        .iter()
        .map(|&r| (r * (2.0 - r)).powf(2.0 / 3.0) / 3.0)
        .collect();
    let mut v = vec![0.0; g.len()];
    for _ in 0..2000 {
        v = s.picard_map(lambda, &v);
        for (i, (&vi, &wi)) in v.iter().zip(&w).enumerate() {
            assert!(vi <= wi * (1.0 + 1e-12), "node {i}: {vi} > {wi}");
        }
    }
    assert_eq!(s.solve(lambda, None).unwrap().status, solver::Status::Converged);
}

#[test]
fn branch_gap_bound() {
    let g = build_grid(1024, 3.0).unwrap();
    let p = ProblemParams::new(0.0, 1.0, 2.0 / 3.0, 1).unwrap();
    let b = branch_sweep(&p, &[0.05, 0.10], &g).unwrap();
    assert!(b.is_monotone(1e-10));
    // G[a⁻²] with the same boundary basis as the solver
    let a = profile_eval(&p, &g).unwrap();
    let op = GreenOperator::with_boundary_exponent(&g, 1, -4.0 / 3.0).unwrap();
    let f: Vec<f64> = a.values().iter().map(|&x| if x > 0.0 { 1.0 / (x * x) } else { 0.0 }).collect();
    let ga = op.apply_values(&f).unwrap();
    let (u1, u2) = (b.solutions[0].values(), b.solutions[1].values());
    for i in 0..g.len() {
        assert!(u2[i] - u1[i] >= 0.05 * ga[i] - 1e-8, "node {i}");
    }
}

#[test]
fn near_fold_branch_is_increasing() {
    let g = build_grid(1024, 3.0).unwrap();
    let p = ProblemParams::new(0.0, 1.0, 2.0 / 3.0, 1).unwrap();
    let b = branch_sweep(&p, &[0.13, 0.131687], &g).unwrap();
    assert!(b.sup_values[1] > b.sup_values[0]);
    assert!(b.is_monotone(1e-10));
}

#[test]
fn eigenvalue_decreases_with_potential() {
    let g = build_grid(512, 3.0).unwrap();
    let p = ProblemParams::new(0.0, 1.0, 2.0 / 3.0, 1).unwrap();
    let lambdas = [0.02, 0.05, 0.08, 0.11, 0.13];
    let b = branch_sweep(&p, &lambdas, &g).unwrap();
    let mut prev: Option<(Vec<f64>, f64)> = None;
    for (&l, u) in lambdas.iter().zip(&b.solutions) {
        let op = assemble_linearized(u, &p.with_lambda(l).unwrap()).unwrap();
        let mu = smallest_eigenpair(&op).unwrap().mu1;
        let v = op.potential().values().to_vec();
        if let Some((pv, pmu)) = &prev {
            assert!(v.iter().zip(pv).all(|(a, b)| a >= b));
            assert!(mu <= *pmu);
        }
        prev = Some((v, mu));
    }
}

#[test]
fn converged_outcomes_satisfy_contract() {
    let g = build_grid(512, 3.0).unwrap();
    for (lambda, gamma, dim) in [(0.05, 0.3, 1), (0.1, 2.0 / 3.0, 2), (0.3, 0.0, 3)] {
        let p = ProblemParams::new(lambda, 1.0, gamma, dim).unwrap();
        let s = MinimalSolver::new(&p, &g).unwrap();
        let out = s.solve(lambda, None).unwrap();
        assert!(out.converged());
        assert!(out.final_gap <= p.tol_fixed_point);
        assert!(out.min_clearance > 0.0);
        let u = out.solution.unwrap();
        assert!(s.fixed_point_residual(lambda, u.values()) <= 2.0 * p.tol_fixed_point);
    }
}

#[test]
fn decay_lower_bound_constant_is_refinement_stable() {
    let lambda = 0.25 * 32.0 / 243.0;
    let mut cs = Vec::new();
    for m in [1024, 2048] {
        let g = build_grid(m, 3.0).unwrap();
        let p = ProblemParams::new(lambda, 1.0, 0.6, 1).unwrap();
        let u = solver::iterate_minimal(&p, &g).unwrap().solution.unwrap();
        let fit = solver::boundary_decay_fit(&u, 0.6, lambda, (1e-3, 1e-1)).unwrap();
        cs.push(fit.lower_bound_constant);
    }
    assert!(cs[0].is_finite() && cs[0] > 0.0);
    assert!(((cs[1] - cs[0]) / cs[0]).abs() < 0.01, "{cs:?}");
}
