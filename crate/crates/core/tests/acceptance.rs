//! Runs every acceptance criterion and prints one line per criterion.
//! Exits nonzero if any criterion fails.

use std::process::ExitCode;

use membrane_core::acceptance::{run_all, CHECKS};

fn main() -> ExitCode {
    let results = run_all();
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({})", r.name, r.module))
        .collect();
    if results.len() != CHECKS.len() {
        println!("acceptance: ran {} of {} criteria", results.len(), CHECKS.len());
        return ExitCode::FAILURE;
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
