//! Centralized numeric tolerances and sampling budgets.

use serde::{Deserialize, Serialize};

/// All tolerances used by the solver, the set algebra and the engine.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Tolerances {
    /// Constraint-violation tolerance for LP feasibility.
    pub feas: f64,
    /// Optimality tolerance for reduced costs.
    pub opt: f64,
    /// Resolution of level bisection in family-defined evaluation.
    pub bisect: f64,
    /// Required gap when deciding `cl(inner) ⊂ outer`.
    pub contain: f64,
    /// Margin above which an interior is reported as unbounded.
    pub margin_ceiling: f64,
    /// Strictness margin for open-mode membership.
    pub open: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: 1e-9,
            opt: 1e-8,
            bisect: 1e-6,
            contain: 1e-7,
            margin_ceiling: 1e6,
            open: 1e-7,
        }
    }
}

/// Level-grid configuration for family construction and bisection brackets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LevelGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for LevelGrid {
    fn default() -> Self {
        LevelGrid {
            lo: -8.0,
            hi: 8.0,
            step: 1.0,
        }
    }
}

impl LevelGrid {
    pub fn levels(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut a = self.lo;
        while a <= self.hi + 1e-12 {
            out.push(a);
            a += self.step;
        }
        out
    }
}

/// Side length of the sampling box used when drawing random points from
/// unbounded sets, together with the cap on downward recursion blocks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct EngineConfig {
    pub sample_radius: f64,
    pub max_blocks: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            sample_radius: 10.0,
            max_blocks: 16,
        }
    }
}
