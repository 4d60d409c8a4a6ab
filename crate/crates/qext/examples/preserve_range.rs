//! Range- and minimizer-preserving extension of f(y) = |y₁|.
//!
//! The plain level-family extension attains new minimizers off the axis
//! (F = 0 on a whole neighborhood slice). The preserving wrapper composes
//! the extension with an arctan gap driven by a gauge δ that vanishes
//! exactly on the axis, so every off-axis point gets a strictly larger
//! value while the range of f is preserved.

use nalgebra::DVector;
use qext::config::{LevelGrid, Tolerances};
use qext::engine::{extend_preserving, ExtensionProblem};
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
    // problem.d is the automatically constructed complement gauge of the
    // subspace: nonnegative, quasiconvex, zero exactly on the axis.
    let result = extend_preserving(&problem, &problem.d.clone(), None, &grid, 11, &tol)?;

    println!("validation passed: {}", result.report.all_passed());
    let on_axis = DVector::from_row_slice(&[2.0, 0.0]);
    let off_axis = DVector::from_row_slice(&[0.0, 1.0]);
    println!("F(2, 0) = {:.6}  (agrees with |y1| = 2)", eval_refined(&result.f, &on_axis, &tol)?);
    println!(
        "F(0, 1) = {:.6}  (strictly above the on-axis minimum 0)",
        eval_refined(&result.f, &off_axis, &tol)?
    );
    Ok(())
}
