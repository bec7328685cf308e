//! Every acceptance criterion at its stated size and tolerance; one PASS or
//! FAIL line each, nonzero exit when any fails.

use std::process::ExitCode;

use nvbath::validation::run_all;

fn main() -> ExitCode {
    let outcomes = run_all(false);
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("acceptance: {} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
