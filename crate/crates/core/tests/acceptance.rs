//! Runs the twelve acceptance criteria and prints one line per criterion.
//! Built without the test harness so the lines are never captured.

use jsqlab_core::acceptance::CRITERIA;
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for criterion in CRITERIA {
        let outcome = criterion();
        println!("{}", outcome.line());
        if !outcome.passed {
            failed.push(outcome.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
