//! Manufactures a level family from a nested sequence of open sets and
//! verifies the family axioms with the seeded property harness.
//!
//! The four checks: nesting, closure containment between levels, union
//! coverage of the ambient set, and empty intersection below the bottom.

use qext::config::Tolerances;
use qext::engine::qe_family_from_sequence;
use qext::set_algebra::{ConvexSetExpr, Subspace};
use qext::verify::validate_omega;

fn main() -> qext::error::Result<()> {
    let tol = Tolerances::default();
    let y = Subspace::axis(2, 0);
    let intervals: Vec<ConvexSetExpr> = (1..=4)
        .map(|n| ConvexSetExpr::interval_on_axis(2, 0, -2.0 * n as f64, 2.0 * n as f64))
        .collect();
    let (family, schedule) =
        qe_family_from_sequence(&intervals, ConvexSetExpr::subspace(y), &tol)?;

    println!("scale factors bridging consecutive levels:");
    for n in 1..=4 {
        if let Some(l) = schedule.lambda(n) {
            println!("  lambda_{n} = {l:.6}");
        }
    }
    let report = validate_omega(&family, 16, 120, 3, &tol)?;
    for check in &report.checks {
        println!(
            "{:<22} {:?} ({} passed, {} failed)",
            check.name, check.status, check.passed, check.failed
        );
    }
    println!("all passed: {}", report.all_passed());
    Ok(())
}
