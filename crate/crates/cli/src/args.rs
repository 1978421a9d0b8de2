use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "membrane", version, about = "MEMS membrane solver: minimal solutions, pull-in voltage, stability")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimal solution at one voltage (exit 3 on touchdown).
    Solve(SolveArgs),
    /// Warm-started branch of minimal solutions over increasing voltages.
    Sweep(SweepArgs),
    /// Pull-in voltage bracket and analytic bounds.
    Pullin(PullinArgs),
    /// Smallest eigenvalue of the linearized operator at one voltage.
    Eigen(SolveArgs),
    /// Runs the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct Problem {
    /// Profile amplitude κ.
    #[arg(long, default_value = "1", value_parser = parse_real)]
    pub kappa: f64,
    /// Profile exponent γ, decimal or rational such as 2/3.
    #[arg(long, default_value = "2/3", value_parser = parse_real)]
    pub gamma: f64,
    /// Space dimension N.
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Number of mesh cells.
    #[arg(long, default_value_t = 2048)]
    pub cells: usize,
    /// Mesh grading exponent q.
    #[arg(long, default_value = "3", value_parser = parse_real)]
    pub grading: f64,
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Add wall-clock time to the report (makes output non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: Problem,
    /// Applied voltage λ.
    #[arg(long, value_parser = parse_real)]
    pub lambda: f64,
    /// Fixed-point tolerance, in units of κ.
    #[arg(long, value_parser = parse_real)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: Problem,
    /// Comma-separated increasing voltages.
    #[arg(long, value_delimiter = ',', value_parser = parse_real, conflicts_with = "lambda_range", required_unless_present = "lambda_range")]
    pub lambda: Vec<f64>,
    /// Geometric range lo:hi:n.
    #[arg(long, value_parser = parse_range)]
    pub lambda_range: Option<LambdaRange>,
    /// Fixed-point tolerance, in units of κ.
    #[arg(long, value_parser = parse_real)]
    pub tol: Option<f64>,
    /// Also compute μ₁ at every point.
    #[arg(long)]
    pub eigen: bool,
    /// Worker threads; the voltage list is split into contiguous chunks.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct PullinArgs {
    #[command(flatten)]
    pub problem: Problem,
    /// Bracket width relative to the analytic upper bound.
    #[arg(long, default_value = "1e-4", value_parser = parse_real)]
    pub tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Run only these criteria (repeatable).
    #[arg(long = "check")]
    pub checks: Vec<u32>,
    /// JSON summary file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include per-check timings in the JSON summary.
    #[arg(long)]
    pub timing: bool,
}

/// Invalid combination of otherwise well-formed arguments.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Decimal or `p/q`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
            let q: f64 = q.trim().parse().map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
            if q == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            p / q
        }
        None => s.trim().parse().map_err(|e| format!("bad number {s:?}: {e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

/// Voltages from `--lambda-range`; a newtype so clap treats it as one value.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRange(pub Vec<f64>);

/// `lo:hi:n` → n geometrically spaced values from lo to hi.
pub fn parse_range(s: &str) -> Result<LambdaRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected lo:hi:n, got {s:?}"));
    };
    let lo = parse_real(lo)?;
    let hi = parse_real(hi)?;
    let n: usize = n.trim().parse().map_err(|e| format!("bad count in {s:?}: {e}"))?;
    if !(lo > 0.0 && hi >= lo) || n == 0 {
        return Err(format!("need 0 < lo <= hi and n >= 1 in {s:?}"));
    }
    if n == 1 {
        return if hi == lo {
            Ok(LambdaRange(vec![lo]))
        } else {
            Err(format!("a single point needs lo == hi in {s:?}"))
        };
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|k| lo * (ratio * k as f64).exp()).collect();
    v[n - 1] = hi;
    Ok(LambdaRange(v))
}
