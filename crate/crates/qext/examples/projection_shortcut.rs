//! When the domain is the whole space, composing with the orthogonal
//! projector onto the subspace extends any trace function in one step.
//!
//! F = f ∘ P agrees with f on the subspace and is quasiconvex because
//! sublevels are preimages of convex sets under a linear map. On a domain
//! that is not a projector preimage the shortcut is refused.

use nalgebra::DVector;
use qext::config::Tolerances;
use qext::engine::{extend_by_projection, ExtensionProblem};
use qext::functions::{MonotoneMap, QuasiconvexSpec};
use qext::set_algebra::{ConvexSetExpr, Subspace};
use qext::verify::eval_refined;

fn main() -> qext::error::Result<()> {
    let tol = Tolerances::default();
    let y = Subspace::axis(2, 0);
    // f(y) = y₁² on the axis
    let f = QuasiconvexSpec::transformed(
        QuasiconvexSpec::abs_coordinate(2, 0),
        MonotoneMap::SquareNonneg,
    );
    let problem = ExtensionProblem::new(y.clone(), ConvexSetExpr::full(2), f.clone(), &tol)?;
    let big_f = extend_by_projection(&problem)?;

    for coords in [[2.0, 0.0], [2.0, 5.0], [-3.0, 1.0]] {
        let x = DVector::from_row_slice(&coords);
        println!(
            "F({:>4}, {:>4}) = {:.6}",
            coords[0],
            coords[1],
            eval_refined(&big_f, &x, &tol)?
        );
    }

    // A bounded domain is not a projector preimage: the shortcut refuses.
    let bounded = ConvexSetExpr::open_box(2, -5.0, 5.0);
    let bounded_problem = ExtensionProblem::new(y, bounded, f, &tol)?;
    match extend_by_projection(&bounded_problem) {
        Err(e) => println!("bounded domain refused as expected: {e}"),
        Ok(_) => println!("unexpected: shortcut accepted a bounded domain"),
    }
    Ok(())
}
