use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::Value;

use membrane_core::acceptance::{self, SLOPE_WINDOW};
use membrane_core::report::{self, ReportRecord};
use membrane_core::solver::{boundary_decay_fit, MinimalSolver};
use membrane_core::{
    assemble_linearized, build_grid, energy_diagnostics, pullin_bisect, smallest_eigenpair, Branch,
    ProblemParams, RadialGrid, Status,
};

use crate::args::{
    Cli, Command, ConfigError, Format, Output, Problem, PullinArgs, SolveArgs, SweepArgs, VerifyArgs,
};

const EXIT_TOUCHDOWN: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Pullin(a) => pullin(a),
        Command::Eigen(a) => eigen(a),
        Command::Verify(a) => verify(a),
    }
}

fn setup(problem: &Problem, lambda: f64, tol: Option<f64>) -> Result<(ProblemParams, RadialGrid)> {
    let grid = build_grid(problem.cells, problem.grading)?;
    let mut params = ProblemParams::new(lambda, problem.kappa, problem.gamma, problem.dim)?;
    if let Some(tol) = tol {
        params.tol_fixed_point = tol;
        params.validate()?;
    }
    Ok((params, grid))
}

/// Fails before any computation when the output directory is missing.
fn check_out_dir(out: Option<&Path>) -> Result<()> {
    if let Some(dir) = out.and_then(Path::parent) {
        if !dir.as_os_str().is_empty() && !dir.is_dir() {
            return Err(ConfigError(format!("output directory {} does not exist", dir.display())).into());
        }
    }
    Ok(())
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => report::write_atomic(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit_records(records: &[ReportRecord], single: bool, output: &Output) -> Result<()> {
    let bytes = match output.format {
        Format::Csv => report::records_to_csv(records)?,
        Format::Json if single => report::to_json_string(&records[0])?.into_bytes(),
        Format::Json => report::to_json_string(records)?.into_bytes(),
    };
    emit(&bytes, output.out.as_deref())
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, Value::from)
}

fn solve(a: SolveArgs) -> Result<ExitCode> {
    check_out_dir(a.output.out.as_deref())?;
    let (params, grid) = setup(&a.problem, a.lambda, a.tol)?;
    let start = Instant::now();
    let solver = MinimalSolver::new(&params, &grid)?;
    let outcome = solver.solve(params.lambda, None)?;

    let mut rec = ReportRecord::from_inputs(&params, &grid);
    rec.set("status", outcome.status.to_string());
    rec.set("iterations_used", outcome.iterations_used);
    rec.set("final_gap", outcome.final_gap);
    rec.set("min_clearance", outcome.min_clearance);
    rec.set("last_node_clearance", outcome.last_node_clearance);
    let slope = match &outcome.solution {
        Some(u) if params.gamma > 0.0 => boundary_decay_fit(u, params.gamma, params.lambda, SLOPE_WINDOW)
            .ok()
            .map(|f| f.fitted_slope),
        _ => None,
    };
    rec.set("sup_u", opt(outcome.solution.as_ref().map(|u| u.max())));
    rec.set("decay_slope", opt(slope));
    if a.output.timing {
        rec.set("wall_time_s", start.elapsed().as_secs_f64());
    }
    emit_records(&[rec], true, &a.output)?;

    Ok(match outcome.status {
        Status::Converged => ExitCode::SUCCESS,
        Status::Touchdown => ExitCode::from(EXIT_TOUCHDOWN),
        Status::MaxIterations => ExitCode::from(EXIT_NUMERICAL),
    })
}

/// Branch over one contiguous chunk, with optional μ₁ per point.
fn sweep_chunk(params: &ProblemParams, grid: &RadialGrid, lambdas: &[f64], eigen: bool) -> Result<(Branch, Vec<f64>)> {
    let solver = MinimalSolver::new(params, grid)?;
    let branch = solver.sweep(lambdas)?;
    let mut mu1 = Vec::new();
    if eigen {
        for (l, u) in branch.lambdas.iter().zip(&branch.solutions) {
            let p = params.with_lambda(*l)?;
            mu1.push(smallest_eigenpair(&assemble_linearized(u, &p)?)?.mu1);
        }
    }
    Ok((branch, mu1))
}

fn sweep(a: SweepArgs) -> Result<ExitCode> {
    check_out_dir(a.output.out.as_deref())?;
    let lambdas = a.lambda_range.clone().map_or_else(|| a.lambda.clone(), |r| r.0);
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError("voltages must be a nonempty strictly increasing list".into()).into());
    }
    if a.jobs == 0 {
        return Err(ConfigError("--jobs must be at least 1".into()).into());
    }
    let (params, grid) = setup(&a.problem, lambdas[0], a.tol)?;
    let start = Instant::now();

    let chunk = lambdas.len().div_ceil(a.jobs);
    let parts: Vec<Result<(Branch, Vec<f64>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = lambdas
            .chunks(chunk)
            .map(|c| s.spawn(|| sweep_chunk(&params, &grid, c, a.eigen)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("sweep worker panicked"))))
            .collect()
    });

    let mut branch = Branch {
        lambdas: Vec::new(),
        solutions: Vec::new(),
        sup_values: Vec::new(),
        clearances: Vec::new(),
    };
    let mut mu1 = Vec::new();
    for part in parts {
        let (b, m) = part?;
        branch.lambdas.extend(b.lambdas);
        branch.solutions.extend(b.solutions);
        branch.sup_values.extend(b.sup_values);
        branch.clearances.extend(b.clearances);
        mu1.extend(m);
    }
    let mu1 = a.eigen.then_some(mu1.as_slice());

    let bytes = match a.output.format {
        Format::Csv => report::branch_csv(&branch, mu1)?,
        Format::Json => {
            let base = ReportRecord::from_inputs(&params, &grid);
            let mut rows = Vec::with_capacity(branch.len());
            for i in 0..branch.len() {
                let mut rec = base.clone();
                rec.set("lambda", branch.lambdas[i]);
                rec.set("sup_u", branch.sup_values[i]);
                rec.set("clearance", branch.clearances[i]);
                if let Some(m) = mu1 {
                    rec.set("mu1", m[i]);
                }
                if a.output.timing {
                    rec.set("wall_time_s", start.elapsed().as_secs_f64());
                }
                rows.push(rec);
            }
            report::to_json_string(&rows)?.into_bytes()
        }
    };
    emit(&bytes, a.output.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn pullin(a: PullinArgs) -> Result<ExitCode> {
    check_out_dir(a.output.out.as_deref())?;
    let p = &a.problem;
    let grid = build_grid(p.cells, p.grading)?;
    let start = Instant::now();
    let e = pullin_bisect(p.kappa, p.gamma, p.dim, &grid, a.tol)?;

    let mut rec = ReportRecord::new();
    rec.set("kappa", e.kappa);
    rec.set("gamma", e.gamma);
    rec.set("dim", e.dim);
    rec.set("n_cells", grid.n_cells());
    rec.set("grading_exponent", grid.grading_exponent());
    rec.set("tol_lambda", e.tol_lambda);
    rec.set("lambda_star_lo", e.lambda_star_lo);
    rec.set("lambda_star_hi", e.lambda_star_hi);
    rec.set("lambda_star_mid", e.midpoint());
    rec.set("analytic_lower", e.analytic_lower);
    rec.set("analytic_upper", e.analytic_upper);
    rec.set("ball_upper_closed_form", e.ball_upper_closed_form);
    rec.set("beta_closed_form", e.beta_closed_form);
    rec.set("lambda_star_proxy", opt(e.lambda_star_proxy));
    if a.output.timing {
        rec.set("wall_time_s", start.elapsed().as_secs_f64());
    }
    emit_records(&[rec], true, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

fn eigen(a: SolveArgs) -> Result<ExitCode> {
    check_out_dir(a.output.out.as_deref())?;
    let (params, grid) = setup(&a.problem, a.lambda, a.tol)?;
    let start = Instant::now();
    let outcome = MinimalSolver::new(&params, &grid)?.solve(params.lambda, None)?;
    let Some(u) = outcome.solution else {
        anyhow::bail!("no minimal solution at lambda = {}: {}", params.lambda, outcome.status);
    };
    let op = assemble_linearized(&u, &params)?;
    let eig = smallest_eigenpair(&op)?;
    let cap = op.cap();

    let mut rec = ReportRecord::from_inputs(&params, &grid);
    rec.set("status", outcome.status.to_string());
    rec.set("iterations_used", outcome.iterations_used);
    rec.set("sup_u", u.max());
    rec.set("min_clearance", outcome.min_clearance);
    rec.set("mu1", eig.mu1);
    rec.set("rayleigh_residual", eig.rayleigh_residual);
    rec.set("potential_cap_active", cap.active);
    rec.set("potential_cap_value", cap.value);
    let diag = if params.gamma > 0.0 {
        Some(energy_diagnostics(&u, &params, 0.5 * params.gamma)?)
    } else {
        None
    };
    rec.set("grad_energy", opt(diag.as_ref().map(|d| d.grad_energy)));
    rec.set("singular_mass", opt(diag.as_ref().map(|d| d.singular_mass)));
    rec.set("weighted_singularity", opt(diag.as_ref().map(|d| d.weighted_singularity)));
    rec.set("beta", opt(diag.as_ref().map(|d| d.beta)));
    if a.output.timing {
        rec.set("wall_time_s", start.elapsed().as_secs_f64());
    }
    emit_records(&[rec], true, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    check_out_dir(a.out.as_deref())?;
    let results = if a.checks.is_empty() {
        acceptance::run_all()
    } else {
        let mut v = Vec::with_capacity(a.checks.len());
        for &id in &a.checks {
            let r = acceptance::run_check(id)
                .ok_or_else(|| ConfigError(format!("unknown criterion {id}")))?;
            v.push(r);
        }
        v
    };
    for r in &results {
        println!("{r}");
    }
    if let Some(path) = &a.out {
        report::write_json(&acceptance::summary_record(&results, a.timing), path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NUMERICAL)
    })
}
