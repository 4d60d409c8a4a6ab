//! Builds a nonnegative quasiconvex gauge from a decreasing sequence of
//! open neighborhoods of a subspace.
//!
//! The strips |x₂| < 1/k shrink onto the x-axis; the resulting gauge δ is
//! zero exactly on the axis, positive elsewhere, and quasiconvex.

use nalgebra::{DMatrix, DVector};
use qext::config::Tolerances;
use qext::engine::build_delta_from_nested;
use qext::functions::MonotoneMap;
use qext::set_algebra::ConvexSetExpr;
use qext::verify::eval_refined;

fn main() -> qext::error::Result<()> {
    let tol = Tolerances::default();
    let strips: Vec<ConvexSetExpr> = (1..=14)
        .map(|k| {
            ConvexSetExpr::polyhedron(
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]),
                DVector::from_vec(vec![1.0 / k as f64, 1.0 / k as f64]),
            )
        })
        .collect();
    let delta =
        build_delta_from_nested(&strips, &ConvexSetExpr::full(2), MonotoneMap::Log, &tol)?;

    for coords in [[0.0, 0.0], [5.0, 0.0], [0.0, 0.05], [0.0, 0.5], [0.0, 2.0]] {
        let x = DVector::from_row_slice(&coords);
        let v = eval_refined(&delta, &x, &tol)?;
        println!("delta({:>4}, {:>5}) = {v:.6}", coords[0], coords[1]);
    }
    Ok(())
}
