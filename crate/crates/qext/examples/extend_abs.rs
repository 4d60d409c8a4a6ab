//! Extends f(y) = |y₁| from the x-axis of ℝ² to the plane.
//!
//! f attains its infimum 0, so the level family is empty below the
//! (normalized) infimum and the extension is nonnegative everywhere while
//! agreeing with |y₁| on the axis.

use nalgebra::DVector;
use qext::config::{LevelGrid, Tolerances};
use qext::engine::{extend_quasiconvex, ExtensionProblem};
use qext::functions::QuasiconvexSpec;
use qext::set_algebra::{ConvexSetExpr, Subspace};
use qext::verify::eval_refined;

fn main() -> qext::error::Result<()> {
    let tol = Tolerances::default();
    let y = Subspace::axis(2, 0);
    let f = QuasiconvexSpec::abs_coordinate(2, 0);
    let problem = ExtensionProblem::new(y, ConvexSetExpr::full(2), f, &tol)?;
    let grid = LevelGrid {
        lo: -4.0,
        hi: 6.0,
        step: 1.0,
    };
    let result = extend_quasiconvex(&problem, &grid, 42, &tol)?;

    println!("validation passed: {}", result.report.all_passed());
    for coords in [[2.0, 0.0], [-2.0, 0.0], [0.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
        let x = DVector::from_row_slice(&coords);
        let v = eval_refined(&result.f, &x, &tol)?;
        println!("F({:>4}, {:>4}) = {v:.6}", coords[0], coords[1]);
    }
    Ok(())
}
