//! `xltk gradcheck`: finite-difference verification of every registered op,
//! the composite blocks, and the end-to-end model. Prints one line per check
//! and exits 1 listing the offenders if any tolerance is exceeded.
//!
//! The env var XLTK_GRADCHECK_CORRUPT=<name> deliberately damages that
//! check's analytic gradient — the negative control proving the suite can
//! fail. Use `full_model` to hit the end-to-end check.

use crate::config::Settings;
use crate::error::CliError;
use xltk_core::gradcheck::{full_model_check, run_suite};

pub fn run(s: &Settings) -> Result<(), CliError> {
    let corrupt = std::env::var("XLTK_GRADCHECK_CORRUPT").ok();
    let corrupt = corrupt.as_deref();

    let mut reports = run_suite(s.seed, corrupt);
    reports.push(full_model_check(s.seed, corrupt == Some("full_model"))?);

    for r in &reports {
        println!(
            "{:<22} max rel err {:>12.5e}   tol {:.0e}   {}{}",
            r.name,
            r.max_rel_err,
            r.tol,
            if r.passed { "PASS" } else { "FAIL" },
            r.note.as_deref().map(|n| format!("   ({n})")).unwrap_or_default()
        );
    }

    let failing: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failing.is_empty() {
        println!("all {} gradient checks passed", reports.len());
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradient check failed for: {}",
            failing.join(", ")
        )))
    }
}
