//! Runs the oracle suite and prints one line per check.

use shem::validation::{validate_suite, SuiteOptions};

fn main() -> shem::Result<()> {
    let quick = std::env::args().any(|a| a == "--quick");
    let report = validate_suite(SuiteOptions { quick, tamper_terminator: false })?;
    for c in &report.checks {
        println!(
            "{:4}  {:<48} value {:.3e}  tol {:.1e}  ({})",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.detail
        );
    }
    println!("overall: {}", if report.passed { "pass" } else { "fail" });
    Ok(())
}
