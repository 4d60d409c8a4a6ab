//! Extends f(y) = y₁, defined on the x-axis of ℝ², to the whole plane.
//!
//! f is unbounded below on the axis, so every sublevel is nonempty and the
//! constructed level family spans the whole real line of levels.

use nalgebra::DVector;
use qext::config::{LevelGrid, Tolerances};
use qext::engine::{extend_quasiconvex, ExtensionProblem};
use qext::functions::QuasiconvexSpec;
use qext::set_algebra::{ConvexSetExpr, Subspace};
use qext::verify::eval_refined;

fn main() -> qext::error::Result<()> {
    let tol = Tolerances::default();
    let y = Subspace::axis(2, 0);
    let f = QuasiconvexSpec::MaxAffine {
        pieces: vec![(DVector::from_row_slice(&[1.0, 0.0]), 0.0)],
        domain: ConvexSetExpr::subspace(y.clone()),
    };
    let problem = ExtensionProblem::new(y, ConvexSetExpr::full(2), f, &tol)?;
    let grid = LevelGrid {
        lo: -4.0,
        hi: 6.0,
        step: 1.0,
    };
    let result = extend_quasiconvex(&problem, &grid, 42, &tol)?;

    println!("validation passed: {}", result.report.all_passed());
    for coords in [[3.0, 0.0], [-2.0, 0.0], [0.5, 0.0], [1.0, 2.0], [-3.0, 1.5]] {
        let x = DVector::from_row_slice(&coords);
        let v = eval_refined(&result.f, &x, &tol)?;
        println!("F({:>4}, {:>4}) = {v:.6}", coords[0], coords[1]);
    }
    Ok(())
}
