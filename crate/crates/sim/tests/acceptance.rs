//! Acceptance criteria 1 to 10, one line each. Fails on any criterion
//! that is not a documented deviation.

use std::process::ExitCode;

use msstefan::acceptance::run_all;

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("scratch directory");
    let checks = match run_all(work.path(), |c| println!("{}", c.line())) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("acceptance run aborted: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed} of {} criteria passed", checks.len());
    let unexpected: Vec<_> = checks.iter().filter(|c| !c.passed && c.known_deviation().is_none()).collect();
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        for c in unexpected {
            eprintln!("unexpected failure: criterion {}", c.id);
        }
        ExitCode::FAILURE
    }
}
