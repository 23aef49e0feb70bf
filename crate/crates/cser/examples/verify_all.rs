//! Run every invariant verification suite and print the report.
//!
//!     cargo run --release --example verify_all

use cser::harness::verify::{run_suite, VerifySuite};

fn main() -> cser::Result<()> {
    let report = run_suite(VerifySuite::All)?;
    print!("{}", report.render());
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("\n{} checks, {} failed", report.checks.len(), failed);
    std::process::exit(if report.all_passed() { 0 } else { 1 });
}
