//! Dense linear algebra and LP solving underlying all set-membership
//! decisions.
//!
//! The solver is a two-phase dense tableau simplex with Bland's
//! anti-cycling rule. Instances produced by the set algebra are small
//! (at most a few hundred variables), so no sparse machinery is used.

use nalgebra::{DMatrix, DVector};

use crate::config::Tolerances;
use crate::error::{QextError, Result};

/// A point of the ambient space.
pub type Point = DVector<f64>;

/// `maximize c·x  s.t.  A x ≤ b`, with optional per-variable intervals.
/// Variables are free unless bounded.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Optional `[lo, hi]` per variable; `None` means free, either end may
    /// be infinite.
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub optimizer: Option<Point>,
    pub objective: Option<f64>,
}

impl LinearProgram {
    pub fn new(objective: DVector<f64>, constraints: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        LinearProgram {
            objective,
            constraints,
            rhs,
            bounds: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.constraints.nrows() != self.rhs.len() {
            return Err(QextError::DimensionMismatch {
                expected: self.constraints.nrows(),
                got: self.rhs.len(),
                context: "constraint rows vs rhs".into(),
            });
        }
        if self.constraints.ncols() != self.objective.len() {
            return Err(QextError::DimensionMismatch {
                expected: self.constraints.ncols(),
                got: self.objective.len(),
                context: "constraint cols vs objective".into(),
            });
        }
        if let Some(b) = &self.bounds {
            if b.len() != self.objective.len() {
                return Err(QextError::DimensionMismatch {
                    expected: self.objective.len(),
                    got: b.len(),
                    context: "bounds vs objective".into(),
                });
            }
        }
        Ok(())
    }
}

/// Dense tableau over the standard-form system `A' z = b'`, `z ≥ 0`.
struct Tableau {
    /// rows × (cols + 1); last column is the rhs.
    t: DMatrix<f64>,
    /// Basic variable per row.
    basis: Vec<usize>,
    ncols: usize,
}

enum PivotResult {
    Optimal,
    Unbounded(#[allow(dead_code)] usize),
    Pivoted,
}

impl Tableau {
    /// One Bland-rule pivot step against objective row `obj` (reduced costs
    /// for maximization, kept separately).
    fn step(&mut self, obj: &mut DVector<f64>, obj_val: &mut f64, tol: f64) -> PivotResult {
        // Entering: smallest index with positive reduced cost.
        let mut enter = None;
        for j in 0..self.ncols {
            if obj[j] > tol {
                enter = Some(j);
                break;
            }
        }
        let enter = match enter {
            Some(j) => j,
            None => return PivotResult::Optimal,
        };
        // Leaving: min ratio, ties by smallest basic variable index (Bland).
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.t.nrows() {
            let a = self.t[(i, enter)];
            if a > tol {
                let ratio = self.t[(i, self.ncols)] / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - tol
                            || (ratio < lr + tol && self.basis[i] < self.basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let (li, _) = match leave {
            Some(p) => p,
            None => return PivotResult::Unbounded(enter),
        };
        // Pivot.
        let piv = self.t[(li, enter)];
        for j in 0..=self.ncols {
            self.t[(li, j)] /= piv;
        }
        for i in 0..self.t.nrows() {
            if i != li {
                let f = self.t[(i, enter)];
                if f != 0.0 {
                    for j in 0..=self.ncols {
                        self.t[(i, j)] -= f * self.t[(li, j)];
                    }
                }
            }
        }
        let f = obj[enter];
        if f != 0.0 {
            for j in 0..self.ncols {
                obj[j] -= f * self.t[(li, j)];
            }
            *obj_val += f * self.t[(li, self.ncols)];
        }
        self.basis[li] = enter;
        PivotResult::Pivoted
    }
}

/// Solves the LP. Free variables are split internally; bound intervals are
/// converted to extra rows.
pub fn lp_solve(lp: &LinearProgram, tol: &Tolerances) -> Result<LpOutcome> {
    lp.validate()?;
    let n = lp.objective.len();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..lp.constraints.nrows() {
        rows.push((lp.constraints.row(i).transpose().clone_owned(), lp.rhs[i]));
    }
    if let Some(bounds) = &lp.bounds {
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if hi.is_finite() {
                let mut a = DVector::zeros(n);
                a[j] = 1.0;
                rows.push((a, hi));
            }
            if lo.is_finite() {
                let mut a = DVector::zeros(n);
                a[j] = -1.0;
                rows.push((a, -lo));
            }
        }
    }
    let m = rows.len();
    // Split x = u − v with u, v ≥ 0; columns: u(n), v(n), slack(m), then
    // artificials for rows with negative rhs.
    let neg: Vec<usize> = (0..m).filter(|&i| rows[i].1 < 0.0).collect();
    let na = neg.len();
    let ncols = 2 * n + m + na;
    let mut t = DMatrix::zeros(m, ncols + 1);
    let mut basis = vec![0usize; m];
    let mut art_of_row = vec![usize::MAX; m];
    for (k, &i) in neg.iter().enumerate() {
        art_of_row[i] = 2 * n + m + k;
    }
    for i in 0..m {
        let s = if rows[i].1 < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = s * rows[i].0[j];
            t[(i, n + j)] = -s * rows[i].0[j];
        }
        t[(i, 2 * n + i)] = s;
        t[(i, ncols)] = s * rows[i].1;
        if s < 0.0 {
            t[(i, art_of_row[i])] = 1.0;
            basis[i] = art_of_row[i];
        } else {
            basis[i] = 2 * n + i;
        }
    }
    let mut tab = Tableau { t, basis, ncols };
    let cap = 50 * (m + ncols).max(1);

    // Phase 1: maximize −Σ artificials.
    if na > 0 {
        let mut obj = DVector::zeros(ncols);
        let mut obj_val = 0.0;
        for &i in &neg {
            // Reduced costs of basis artificials: subtract their rows.
            for j in 0..ncols {
                obj[j] += tab.t[(i, j)];
            }
            obj_val += tab.t[(i, ncols)];
        }
        for &i in &neg {
            obj[art_of_row[i]] = 0.0;
        }
        // obj currently expresses Σ art = Σ rhs − Σ rows·z; maximize −Σ art.
        let mut iters = 0usize;
        loop {
            iters += 1;
            if iters > cap {
                return Err(QextError::SolverFailure(format!(
                    "phase-1 iteration cap {cap} exceeded ({m} rows, {ncols} cols)"
                )));
            }
            match tab.step(&mut obj, &mut obj_val, tol.opt) {
                PivotResult::Optimal => break,
                PivotResult::Unbounded(_) => {
                    return Err(QextError::SolverFailure(
                        "phase-1 objective unbounded (internal inconsistency)".into(),
                    ))
                }
                PivotResult::Pivoted => {}
            }
        }
        // Residual infeasibility = value of Σ artificials.
        let mut art_sum = 0.0;
        for i in 0..m {
            if tab.basis[i] >= 2 * n + m {
                art_sum += tab.t[(i, ncols)];
            }
        }
        if art_sum > tol.feas.max(1e-7) {
            return Ok(LpOutcome {
                status: LpStatus::Infeasible,
                optimizer: None,
                objective: None,
            });
        }
        // Drive any leftover (degenerate) basic artificials out or zero them.
        for i in 0..m {
            if tab.basis[i] >= 2 * n + m {
                let mut pivoted = false;
                for j in 0..2 * n + m {
                    if tab.t[(i, j)].abs() > 1e-7 {
                        let piv = tab.t[(i, j)];
                        for c in 0..=ncols {
                            tab.t[(i, c)] /= piv;
                        }
                        for r in 0..m {
                            if r != i {
                                let f = tab.t[(r, j)];
                                if f != 0.0 {
                                    for c in 0..=ncols {
                                        tab.t[(r, c)] -= f * tab.t[(i, c)];
                                    }
                                }
                            }
                        }
                        tab.basis[i] = j;
                        pivoted = true;
                        break;
                    }
                }
                if !pivoted {
                    // Row is redundant; leave the zero artificial in place.
                    tab.t[(i, ncols)] = 0.0;
                }
            }
        }
    }

    // Phase 2: maximize c·(u − v). Forbid artificial columns.
    let mut obj = DVector::zeros(ncols);
    for j in 0..n {
        obj[j] = lp.objective[j];
        obj[n + j] = -lp.objective[j];
    }
    let mut obj_val = 0.0;
    // Reduce against current basis.
    for i in 0..m {
        let f = obj[tab.basis[i]];
        if f != 0.0 {
            for j in 0..ncols {
                obj[j] -= f * tab.t[(i, j)];
            }
            obj_val += f * tab.t[(i, ncols)];
        }
    }
    for j in 2 * n + m..ncols {
        obj[j] = f64::NEG_INFINITY; // never re-enter artificials
    }
    let mut iters = 0usize;
    loop {
        iters += 1;
        if iters > cap {
            return Err(QextError::SolverFailure(format!(
                "phase-2 iteration cap {cap} exceeded ({m} rows, {ncols} cols)"
            )));
        }
        match tab.step(&mut obj, &mut obj_val, tol.opt) {
            PivotResult::Optimal => break,
            PivotResult::Unbounded(_) => {
                return Ok(LpOutcome {
                    status: LpStatus::Unbounded,
                    optimizer: None,
                    objective: None,
                });
            }
            PivotResult::Pivoted => {}
        }
    }
    // Recover x = u − v.
    let mut z = vec![0.0f64; ncols];
    for i in 0..m {
        if tab.basis[i] < ncols {
            z[tab.basis[i]] = tab.t[(i, ncols)];
        }
    }
    let mut x = DVector::zeros(n);
    for j in 0..n {
        x[j] = z[j] - z[n + j];
    }
    let val = lp.objective.dot(&x);
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        optimizer: Some(x),
        objective: Some(val),
    })
}

/// Result of a margin maximization.
#[derive(Debug, Clone)]
pub struct Margin {
    pub margin: f64,
    pub witness: Point,
    pub capped: bool,
}

/// Maximizes the uniform slack `s` with `A x ≤ b − s·1` over rows normalized
/// to unit Euclidean norm, capped at the configured ceiling. A positive
/// margin certifies a nonempty interior.
pub fn max_margin(a: &DMatrix<f64>, b: &DVector<f64>, tol: &Tolerances) -> Result<Margin> {
    let m = a.nrows();
    let n = a.ncols();
    if m == 0 {
        return Err(QextError::SolverFailure("empty constraint system".into()));
    }
    // Variables: x (n), s (1). Rows: â_i·x + s ≤ b̂_i; s ≤ ceiling.
    let mut cons = DMatrix::zeros(m + 1, n + 1);
    let mut rhs = DVector::zeros(m + 1);
    for i in 0..m {
        let norm = a.row(i).norm();
        let scale = if norm > 1e-14 { 1.0 / norm } else { 1.0 };
        for j in 0..n {
            cons[(i, j)] = a[(i, j)] * scale;
        }
        cons[(i, n)] = 1.0;
        rhs[i] = b[i] * scale;
    }
    cons[(m, n)] = 1.0;
    rhs[m] = tol.margin_ceiling;
    let mut obj = DVector::zeros(n + 1);
    obj[n] = 1.0;
    let out = lp_solve(&LinearProgram::new(obj, cons, rhs), tol)?;
    match out.status {
        LpStatus::Optimal => {
            let z = out.optimizer.unwrap();
            let margin = z[n];
            let witness = z.rows(0, n).clone_owned();
            Ok(Margin {
                margin,
                witness,
                capped: margin >= tol.margin_ceiling - 1e-6,
            })
        }
        LpStatus::Infeasible => Err(QextError::EmptySet(
            "margin system infeasible even with negative slack cap".into(),
        )),
        LpStatus::Unbounded => Err(QextError::SolverFailure(
            "margin LP unbounded despite ceiling row".into(),
        )),
    }
}
