//! Negative control: a lower-semicontinuous (but not continuous) function
//! whose sublevel family fails the closure-containment axiom.
//!
//! The one-dimensional step x ↦ 0 for x ≤ 1, 1 for x > 1 is quasiconvex
//! and lsc, but the closed half-line [x ≤ 1] is not contained in the open
//! sublevel below any level between 0 and 1, so no continuous quasiconvex
//! function shares these sublevels. The demo reproduces the documented
//! witness.

use qext::config::Tolerances;
use qext::verify::{counterexample_family, lsc_counterexample_demo, validate_omega};

fn main() -> qext::error::Result<()> {
    let tol = Tolerances::default();
    let family = counterexample_family();

    let axioms = validate_omega(&family, 20, 200, 0, &tol)?;
    println!("family axiom checks (closure containment must fail):");
    for check in &axioms.checks {
        println!(
            "  {:<22} {:?} ({} passed, {} failed)",
            check.name, check.status, check.passed, check.failed
        );
    }

    let demo = lsc_counterexample_demo(&tol)?;
    println!("demo checks:");
    for check in &demo.checks {
        println!("  {:<30} {:?}", check.name, check.status);
        if let Some(w) = &check.witness {
            println!("    witness: {w}");
        }
    }
    Ok(())
}
