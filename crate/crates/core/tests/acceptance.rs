//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! Criteria can be narrowed with ACCEPTANCE_ONLY=3,7,12.

use std::process::ExitCode;

use watermelon::acceptance::{run, select, Options};

fn main() -> ExitCode {
    let ids: Vec<u8> = std::env::var("ACCEPTANCE_ONLY")
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_default();
    let opts = Options::default();
    let mut failed = 0;
    for c in select(&ids, &[]) {
        let out = run(&c, &opts);
        println!("{}", out.line());
        failed += usize::from(!out.passed);
    }
    println!("acceptance: {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
