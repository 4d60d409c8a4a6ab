//! Constructive extension machinery for continuous quasiconvex functions
//! defined on the trace `A ∩ Y` of an open convex set `A` over a linear
//! subspace `Y` of a finite-dimensional space.
//!
//! The crate is organized around four layers:
//!
//! * [`geometry`] — dense linear algebra and a small simplex solver used for
//!   every membership and containment decision;
//! * [`set_algebra`] — an immutable expression algebra of open convex sets
//!   (open polyhedra composed by scaling, translation, intersection and
//!   convex hulls of unions) with LP-backed membership and containment;
//! * [`functions`] — quasiconvex function specs, sublevel calculus and
//!   level-indexed `Ω(E)`-families;
//! * [`engine`] — the constructive procedures: family manufacture from
//!   nested sequences, the gauge construction from shrinking neighborhoods,
//!   the full extension algorithm and the range/minimizer-preserving wrapper.
//!
//! The [`verify`] module turns the constructions' guarantees into runnable,
//! seeded property checks that report witnesses on failure; [`problem`] and
//! [`cli`] provide the JSON problem schema and the `qext` command-line tool.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod problem;
pub mod set_algebra;
pub mod verify;

pub use config::Tolerances;
pub use error::QextError;
