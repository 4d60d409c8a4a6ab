//! An immutable expression algebra of open convex sets.
//!
//! Every set the constructions manipulate is a tree of open H-polyhedra
//! composed by positive scaling, translation, intersection, convex hull of
//! a union, and sublevel sets of quasiconvex specs. Open sets are decided
//! via margins on closed relaxations: a strict inequality holds when the
//! slack exceeds a tolerance. Each polyhedral leaf carries an optional
//! carrier subspace in which it is relatively open; margins are measured
//! inside the carrier.

use nalgebra::{DMatrix, DVector};

use crate::config::Tolerances;
use crate::error::{QextError, Result};
use crate::functions::QuasiconvexSpec;
use crate::geometry::{self, LinearProgram, LpStatus, Point};

const RESOLVE_DEPTH: usize = 24;

/// A linear subspace of the ambient space, stored with an orthonormal
/// basis, the orthogonal projector onto it and the complement projector.
#[derive(Debug, Clone)]
pub struct Subspace {
    pub dim: usize,
    /// n×k, orthonormal columns spanning the subspace.
    pub basis: DMatrix<f64>,
    /// n×(n−k), orthonormal columns spanning the orthogonal complement.
    pub complement: DMatrix<f64>,
    /// Projector onto the subspace.
    pub projector: DMatrix<f64>,
    /// I − P.
    pub complement_projector: DMatrix<f64>,
}

impl Subspace {
    /// Builds a subspace from (not necessarily orthonormal) spanning
    /// vectors.
    pub fn from_spanning(dim: usize, vectors: &[DVector<f64>]) -> Result<Subspace> {
        for v in vectors {
            if v.len() != dim {
                return Err(QextError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                    context: "subspace spanning vector".into(),
                });
            }
        }
        let mut cols: Vec<DVector<f64>> = Vec::new();
        let orthonormalize = |v: &DVector<f64>, cols: &mut Vec<DVector<f64>>| -> bool {
            let mut w = v.clone();
            for c in cols.iter() {
                let d = c.dot(&w);
                w -= c * d;
            }
            // Second pass for numerical cleanliness.
            for c in cols.iter() {
                let d = c.dot(&w);
                w -= c * d;
            }
            let n = w.norm();
            if n > 1e-10 {
                cols.push(w / n);
                true
            } else {
                false
            }
        };
        for v in vectors {
            orthonormalize(v, &mut cols);
        }
        if cols.is_empty() {
            return Err(QextError::Spec("subspace has no independent spanning vectors".into()));
        }
        let k = cols.len();
        let mut comp: Vec<DVector<f64>> = cols.clone();
        for j in 0..dim {
            let mut e = DVector::zeros(dim);
            e[j] = 1.0;
            orthonormalize(&e, &mut comp);
        }
        let complement_cols = &comp[k..];
        let basis = DMatrix::from_columns(&cols);
        let complement = if complement_cols.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(complement_cols)
        };
        let projector = &basis * basis.transpose();
        let complement_projector = DMatrix::identity(dim, dim) - &projector;
        Ok(Subspace {
            dim,
            basis,
            complement,
            projector,
            complement_projector,
        })
    }

    /// Coordinate axis `j` of ℝⁿ as a one-dimensional subspace.
    pub fn axis(dim: usize, j: usize) -> Subspace {
        let mut e = DVector::zeros(dim);
        e[j] = 1.0;
        Subspace::from_spanning(dim, &[e]).expect("axis basis")
    }

    /// Span of the first `k` coordinate axes.
    pub fn leading_axes(dim: usize, k: usize) -> Subspace {
        let vs: Vec<DVector<f64>> = (0..k)
            .map(|j| {
                let mut e = DVector::zeros(dim);
                e[j] = 1.0;
                e
            })
            .collect();
        Subspace::from_spanning(dim, &vs).expect("axes basis")
    }

    pub fn codim(&self) -> usize {
        self.dim - self.basis.ncols()
    }

    pub fn project(&self, x: &Point) -> Point {
        &self.projector * x
    }

    /// ∞-norm of the component of `x` orthogonal to the subspace.
    pub fn off_distance(&self, x: &Point) -> f64 {
        (&self.complement_projector * x).amax()
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        self.off_distance(x) <= tol
    }
}

/// The closed algebra of open convex sets.
#[derive(Debug, Clone)]
pub enum ConvexSetExpr {
    Empty,
    Full {
        dim: usize,
    },
    /// `{x in carrier : A x < b}`; `carrier = None` means the full space.
    OpenPolyhedron {
        a: DMatrix<f64>,
        b: DVector<f64>,
        carrier: Option<Subspace>,
    },
    Scale(f64, Box<ConvexSetExpr>),
    Translate(DVector<f64>, Box<ConvexSetExpr>),
    Intersect(Vec<ConvexSetExpr>),
    /// conv(left ∪ right).
    ConvUnion(Box<ConvexSetExpr>, Box<ConvexSetExpr>),
    /// `[f < α]` (or `[f ≤ α]` when `strict` is false).
    Sublevel {
        spec: Box<QuasiconvexSpec>,
        alpha: f64,
        strict: bool,
    },
}

impl ConvexSetExpr {
    pub fn full(dim: usize) -> ConvexSetExpr {
        ConvexSetExpr::Full { dim }
    }

    pub fn polyhedron(a: DMatrix<f64>, b: DVector<f64>) -> ConvexSetExpr {
        ConvexSetExpr::OpenPolyhedron { a, b, carrier: None }
    }

    pub fn polyhedron_in(a: DMatrix<f64>, b: DVector<f64>, carrier: Subspace) -> ConvexSetExpr {
        ConvexSetExpr::OpenPolyhedron {
            a,
            b,
            carrier: Some(carrier),
        }
    }

    /// The whole carrier subspace as a relatively open set.
    pub fn subspace(carrier: Subspace) -> ConvexSetExpr {
        let dim = carrier.dim;
        ConvexSetExpr::OpenPolyhedron {
            a: DMatrix::zeros(0, dim),
            b: DVector::zeros(0),
            carrier: Some(carrier),
        }
    }

    /// Open axis-aligned box `lo < x_j < hi` in ℝⁿ.
    pub fn open_box(dim: usize, lo: f64, hi: f64) -> ConvexSetExpr {
        let mut a = DMatrix::zeros(2 * dim, dim);
        let mut b = DVector::zeros(2 * dim);
        for j in 0..dim {
            a[(2 * j, j)] = 1.0;
            b[2 * j] = hi;
            a[(2 * j + 1, j)] = -1.0;
            b[2 * j + 1] = -lo;
        }
        ConvexSetExpr::polyhedron(a, b)
    }

    /// Open interval `lo < t < hi` along coordinate axis `j`, carried in
    /// that axis.
    pub fn interval_on_axis(dim: usize, j: usize, lo: f64, hi: f64) -> ConvexSetExpr {
        let mut a = DMatrix::zeros(2, dim);
        let mut b = DVector::zeros(2);
        a[(0, j)] = 1.0;
        b[0] = hi;
        a[(1, j)] = -1.0;
        b[1] = -lo;
        ConvexSetExpr::polyhedron_in(a, b, Subspace::axis(dim, j))
    }

    pub fn scale(factor: f64, inner: ConvexSetExpr) -> ConvexSetExpr {
        assert!(factor > 0.0, "scale factor must be positive");
        ConvexSetExpr::Scale(factor, Box::new(inner))
    }

    pub fn translate(v: DVector<f64>, inner: ConvexSetExpr) -> ConvexSetExpr {
        ConvexSetExpr::Translate(v, Box::new(inner))
    }

    pub fn intersect(children: Vec<ConvexSetExpr>) -> ConvexSetExpr {
        ConvexSetExpr::Intersect(children)
    }

    pub fn hull(left: ConvexSetExpr, right: ConvexSetExpr) -> ConvexSetExpr {
        ConvexSetExpr::ConvUnion(Box::new(left), Box::new(right))
    }

    pub fn sublevel_of(spec: QuasiconvexSpec, alpha: f64, strict: bool) -> ConvexSetExpr {
        ConvexSetExpr::Sublevel {
            spec: Box::new(spec),
            alpha,
            strict,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            ConvexSetExpr::Empty => None,
            ConvexSetExpr::Full { dim } => Some(*dim),
            ConvexSetExpr::OpenPolyhedron { a, carrier, .. } => {
                if a.nrows() > 0 || carrier.is_none() {
                    if a.ncols() > 0 {
                        Some(a.ncols())
                    } else {
                        carrier.as_ref().map(|c| c.dim)
                    }
                } else {
                    carrier.as_ref().map(|c| c.dim)
                }
            }
            ConvexSetExpr::Scale(_, c) => c.dim(),
            ConvexSetExpr::Translate(v, _) => Some(v.len()),
            ConvexSetExpr::Intersect(cs) => cs.iter().find_map(|c| c.dim()),
            ConvexSetExpr::ConvUnion(l, r) => l.dim().or_else(|| r.dim()),
            ConvexSetExpr::Sublevel { spec, .. } => spec.domain().dim(),
        }
    }

    pub fn is_empty_literal(&self) -> bool {
        matches!(self, ConvexSetExpr::Empty)
    }

    /// Replaces every `Sublevel` node by the materialized sublevel-set
    /// expression of its spec.
    pub fn resolve(&self, tol: &Tolerances) -> Result<ConvexSetExpr> {
        self.resolve_depth(tol, RESOLVE_DEPTH)
    }

    fn resolve_depth(&self, tol: &Tolerances, depth: usize) -> Result<ConvexSetExpr> {
        if depth == 0 {
            return Err(QextError::UnsupportedLeaf(
                "sublevel resolution exceeded depth cap".into(),
            ));
        }
        Ok(match self {
            ConvexSetExpr::Sublevel { spec, alpha, strict } => {
                let e = spec.sublevel(*alpha, *strict, tol)?;
                e.resolve_depth(tol, depth - 1)?
            }
            ConvexSetExpr::Scale(l, c) => {
                ConvexSetExpr::Scale(*l, Box::new(c.resolve_depth(tol, depth)?))
            }
            ConvexSetExpr::Translate(v, c) => {
                ConvexSetExpr::Translate(v.clone(), Box::new(c.resolve_depth(tol, depth)?))
            }
            ConvexSetExpr::Intersect(cs) => ConvexSetExpr::Intersect(
                cs.iter()
                    .map(|c| c.resolve_depth(tol, depth))
                    .collect::<Result<Vec<_>>>()?,
            ),
            ConvexSetExpr::ConvUnion(l, r) => ConvexSetExpr::ConvUnion(
                Box::new(l.resolve_depth(tol, depth)?),
                Box::new(r.resolve_depth(tol, depth)?),
            ),
            other => other.clone(),
        })
    }
}

/// One row of a flattened open polyhedral description.
#[derive(Debug, Clone)]
pub enum FlatRow {
    /// `⟨a, x⟩ < b`.
    Strict { a: DVector<f64>, b: f64 },
    /// `⟨a, x⟩ = 0` (carrier membership).
    Carrier { a: DVector<f64> },
}

/// Flattens `Scale`/`Translate`/`Intersect` chains over polyhedral leaves
/// into a single list of half-space and carrier rows. Fails on hull nodes.
pub fn flatten_halfspaces(expr: &ConvexSetExpr, tol: &Tolerances) -> Result<Vec<FlatRow>> {
    let resolved = expr.resolve(tol)?;
    let mut rows = Vec::new();
    flatten_into(&resolved, &mut rows)?;
    Ok(rows)
}

fn flatten_into(expr: &ConvexSetExpr, out: &mut Vec<FlatRow>) -> Result<()> {
    match expr {
        ConvexSetExpr::Full { .. } => Ok(()),
        ConvexSetExpr::Empty => Err(QextError::UnsupportedLeaf(
            "cannot flatten the empty set into half-spaces".into(),
        )),
        ConvexSetExpr::OpenPolyhedron { a, b, carrier } => {
            for i in 0..a.nrows() {
                out.push(FlatRow::Strict {
                    a: a.row(i).transpose().clone_owned(),
                    b: b[i],
                });
            }
            if let Some(c) = carrier {
                for j in 0..c.complement.ncols() {
                    out.push(FlatRow::Carrier {
                        a: c.complement.column(j).clone_owned(),
                    });
                }
            }
            Ok(())
        }
        ConvexSetExpr::Scale(l, c) => {
            let mut inner = Vec::new();
            flatten_into(c, &mut inner)?;
            for r in inner {
                out.push(match r {
                    FlatRow::Strict { a, b } => FlatRow::Strict { a, b: b * l },
                    carrier => carrier,
                });
            }
            Ok(())
        }
        ConvexSetExpr::Translate(v, c) => {
            let mut inner = Vec::new();
            flatten_into(c, &mut inner)?;
            for r in inner {
                out.push(match r {
                    FlatRow::Strict { a, b } => {
                        let shift = a.dot(v);
                        FlatRow::Strict { a, b: b + shift }
                    }
                    FlatRow::Carrier { a } => {
                        // Translation off the carrier leaves the algebra;
                        // keep the equality only for in-carrier shifts.
                        if a.dot(v).abs() > 1e-9 {
                            return Err(QextError::UnsupportedLeaf(
                                "translation moves a carrier-relative set off its carrier"
                                    .into(),
                            ));
                        }
                        FlatRow::Carrier { a }
                    }
                });
            }
            Ok(())
        }
        ConvexSetExpr::Intersect(cs) => {
            for c in cs {
                flatten_into(c, out)?;
            }
            Ok(())
        }
        ConvexSetExpr::ConvUnion(..) => Err(QextError::UnsupportedLeaf(
            "convex hulls do not flatten into half-spaces".into(),
        )),
        ConvexSetExpr::Sublevel { .. } => Err(QextError::UnsupportedLeaf(
            "unresolved sublevel leaf".into(),
        )),
    }
}

/// Flattened linear feasibility template deciding closed membership.
///
/// Feasibility of `M_point·x + M_aux·z ≤ rhs` over the auxiliary variables
/// `z` (perspective multipliers and decomposition points of hull nodes) at
/// a fixed `x` is equivalent to `x ∈ cl(S)`.
#[derive(Debug, Clone)]
pub struct CompiledMembership {
    pub dim: usize,
    pub naux: usize,
    pub m_point: DMatrix<f64>,
    pub m_aux: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Auxiliary index of the left-branch perspective multiplier of the
    /// top-level hull node, when the root is one.
    pub top_hull_t: Option<usize>,
}

struct SysRow {
    x: DVector<f64>,
    aux: Vec<(usize, f64)>,
    rhs: f64,
}

struct Sys {
    naux: usize,
    rows: Vec<SysRow>,
    top_hull_t: Option<usize>,
}

fn leaf_shrunk_rhs(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    carrier: &Option<Subspace>,
    i: usize,
    shrink: f64,
) -> f64 {
    if shrink == 0.0 {
        return b[i];
    }
    let row = a.row(i).transpose();
    let g = match carrier {
        Some(c) => (&c.projector * &row).norm(),
        None => row.norm(),
    };
    if g > 1e-12 {
        b[i] - shrink * g
    } else {
        b[i]
    }
}

fn compile_node(expr: &ConvexSetExpr, dim: usize, shrink: f64) -> Result<Sys> {
    match expr {
        ConvexSetExpr::Empty => Ok(Sys {
            naux: 0,
            rows: vec![SysRow {
                x: DVector::zeros(dim),
                aux: vec![],
                rhs: -1.0,
            }],
            top_hull_t: None,
        }),
        ConvexSetExpr::Full { .. } => Ok(Sys {
            naux: 0,
            rows: vec![],
            top_hull_t: None,
        }),
        ConvexSetExpr::OpenPolyhedron { a, b, carrier } => {
            let mut rows = Vec::new();
            for i in 0..a.nrows() {
                rows.push(SysRow {
                    x: a.row(i).transpose().clone_owned(),
                    aux: vec![],
                    rhs: leaf_shrunk_rhs(a, b, carrier, i, shrink),
                });
            }
            if let Some(c) = carrier {
                for j in 0..c.complement.ncols() {
                    let q = c.complement.column(j).clone_owned();
                    rows.push(SysRow {
                        x: q.clone(),
                        aux: vec![],
                        rhs: 0.0,
                    });
                    rows.push(SysRow {
                        x: -q,
                        aux: vec![],
                        rhs: 0.0,
                    });
                }
            }
            Ok(Sys {
                naux: 0,
                rows,
                top_hull_t: None,
            })
        }
        ConvexSetExpr::Scale(l, c) => {
            let mut sys = compile_node(c, dim, shrink)?;
            for r in &mut sys.rows {
                r.x /= *l;
            }
            sys.top_hull_t = None;
            Ok(sys)
        }
        ConvexSetExpr::Translate(v, c) => {
            let mut sys = compile_node(c, dim, shrink)?;
            for r in &mut sys.rows {
                r.rhs += r.x.dot(v);
            }
            sys.top_hull_t = None;
            Ok(sys)
        }
        ConvexSetExpr::Intersect(cs) => {
            let mut naux = 0usize;
            let mut rows = Vec::new();
            for c in cs {
                let sys = compile_node(c, dim, shrink)?;
                for mut r in sys.rows {
                    for e in &mut r.aux {
                        e.0 += naux;
                    }
                    rows.push(r);
                }
                naux += sys.naux;
            }
            Ok(Sys {
                naux,
                rows,
                top_hull_t: None,
            })
        }
        ConvexSetExpr::ConvUnion(l, r) => {
            let ls = compile_node(l, dim, shrink)?;
            let rs = compile_node(r, dim, shrink)?;
            // aux layout: xl(dim), xr(dim), auxL, auxR, tl, tr
            let xl0 = 0;
            let xr0 = dim;
            let al0 = 2 * dim;
            let ar0 = al0 + ls.naux;
            let tl = ar0 + rs.naux;
            let tr = tl + 1;
            let naux = tr + 1;
            let mut rows = Vec::new();
            let homogenize = |sys: Sys, x0: usize, a0: usize, t: usize, rows: &mut Vec<SysRow>| {
                for row in sys.rows {
                    let mut aux: Vec<(usize, f64)> = Vec::with_capacity(row.aux.len() + dim + 1);
                    for j in 0..dim {
                        if row.x[j] != 0.0 {
                            aux.push((x0 + j, row.x[j]));
                        }
                    }
                    for (i, v) in row.aux {
                        aux.push((a0 + i, v));
                    }
                    if row.rhs != 0.0 {
                        aux.push((t, -row.rhs));
                    }
                    rows.push(SysRow {
                        x: DVector::zeros(dim),
                        aux,
                        rhs: 0.0,
                    });
                }
            };
            homogenize(ls, xl0, al0, tl, &mut rows);
            homogenize(rs, xr0, ar0, tr, &mut rows);
            // x = xl + xr
            for j in 0..dim {
                let mut e = DVector::zeros(dim);
                e[j] = 1.0;
                rows.push(SysRow {
                    x: e.clone(),
                    aux: vec![(xl0 + j, -1.0), (xr0 + j, -1.0)],
                    rhs: 0.0,
                });
                rows.push(SysRow {
                    x: -e,
                    aux: vec![(xl0 + j, 1.0), (xr0 + j, 1.0)],
                    rhs: 0.0,
                });
            }
            // tl + tr = 1, tl ≥ 0, tr ≥ 0
            rows.push(SysRow {
                x: DVector::zeros(dim),
                aux: vec![(tl, 1.0), (tr, 1.0)],
                rhs: 1.0,
            });
            rows.push(SysRow {
                x: DVector::zeros(dim),
                aux: vec![(tl, -1.0), (tr, -1.0)],
                rhs: -1.0,
            });
            rows.push(SysRow {
                x: DVector::zeros(dim),
                aux: vec![(tl, -1.0)],
                rhs: 0.0,
            });
            rows.push(SysRow {
                x: DVector::zeros(dim),
                aux: vec![(tr, -1.0)],
                rhs: 0.0,
            });
            Ok(Sys {
                naux,
                rows,
                top_hull_t: Some(tl),
            })
        }
        ConvexSetExpr::Sublevel { .. } => Err(QextError::UnsupportedLeaf(
            "compile requires resolved sublevel leaves".into(),
        )),
    }
}

/// Compiles an expression into its closed-membership template. A positive
/// `shrink` tightens every leaf row by `shrink` measured inside the leaf's
/// carrier, turning the template into a strict-membership surrogate.
pub fn compile_shrunk(
    expr: &ConvexSetExpr,
    tol: &Tolerances,
    shrink: f64,
) -> Result<CompiledMembership> {
    let dim = expr
        .dim()
        .ok_or_else(|| QextError::Spec("expression has no ambient dimension".into()))?;
    let resolved = expr.resolve(tol)?;
    let sys = compile_node(&resolved, dim, shrink)?;
    let m = sys.rows.len();
    let mut m_point = DMatrix::zeros(m, dim);
    let mut m_aux = DMatrix::zeros(m, sys.naux);
    let mut rhs = DVector::zeros(m);
    for (i, row) in sys.rows.iter().enumerate() {
        for j in 0..dim {
            m_point[(i, j)] = row.x[j];
        }
        for &(j, v) in &row.aux {
            m_aux[(i, j)] += v;
        }
        rhs[i] = row.rhs;
    }
    Ok(CompiledMembership {
        dim,
        naux: sys.naux,
        m_point,
        m_aux,
        rhs,
        top_hull_t: sys.top_hull_t,
    })
}

pub fn compile(expr: &ConvexSetExpr, tol: &Tolerances) -> Result<CompiledMembership> {
    compile_shrunk(expr, tol, 0.0)
}

impl CompiledMembership {
    /// Closed membership: feasibility of the template at `x`.
    pub fn feasible_at(&self, x: &Point, tol: &Tolerances) -> Result<bool> {
        if x.len() != self.dim {
            return Err(QextError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
                context: "membership point".into(),
            });
        }
        let rhs = &self.rhs - &self.m_point * x;
        if self.naux == 0 {
            return Ok((0..rhs.len()).all(|i| rhs[i] >= -tol.feas.max(1e-9)));
        }
        self.aux_feasible(&rhs, None, tol)
    }

    /// Feasibility over aux with an optional extra lower bound on the
    /// top-level hull multiplier; returns the attained multiplier.
    fn aux_feasible(
        &self,
        rhs: &DVector<f64>,
        maximize_t: Option<usize>,
        tol: &Tolerances,
    ) -> Result<bool> {
        let mut obj = DVector::zeros(self.naux);
        if let Some(t) = maximize_t {
            obj[t] = 1.0;
        }
        let lp = LinearProgram::new(obj, self.m_aux.clone(), rhs.clone());
        let out = geometry::lp_solve(&lp, tol)?;
        Ok(out.status == LpStatus::Optimal || out.status == LpStatus::Unbounded)
    }

    /// Maximal top-hull multiplier at `x`, `None` if infeasible.
    pub fn max_hull_multiplier(&self, x: &Point, tol: &Tolerances) -> Result<Option<f64>> {
        let t = match self.top_hull_t {
            Some(t) => t,
            None => return Ok(None),
        };
        let rhs = &self.rhs - &self.m_point * x;
        let mut obj = DVector::zeros(self.naux);
        obj[t] = 1.0;
        let lp = LinearProgram::new(obj, self.m_aux.clone(), rhs.clone());
        let out = geometry::lp_solve(&lp, tol)?;
        match out.status {
            LpStatus::Optimal => Ok(Some(out.objective.unwrap())),
            LpStatus::Infeasible => Ok(None),
            LpStatus::Unbounded => Ok(Some(1.0)),
        }
    }
}

/// Membership mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Open,
    Closed,
}

/// Decides membership of `x` in the denoted set (`Open`) or its closure
/// (`Closed`).
pub fn member(expr: &ConvexSetExpr, x: &Point, mode: Mode, tol: &Tolerances) -> Result<bool> {
    match mode {
        Mode::Closed => {
            let resolved = expr.resolve(tol)?;
            if resolved.is_empty_literal() {
                return Ok(false);
            }
            if matches!(resolved, ConvexSetExpr::Full { .. }) {
                return Ok(true);
            }
            let c = compile(&resolved, tol)?;
            c.feasible_at(x, tol)
        }
        Mode::Open => open_member(&expr.resolve(tol)?, x, tol),
    }
}

const HULL_T_MIN: f64 = 1e-6;

fn open_member(expr: &ConvexSetExpr, x: &Point, tol: &Tolerances) -> Result<bool> {
    match expr {
        ConvexSetExpr::Empty => Ok(false),
        ConvexSetExpr::Full { .. } => Ok(true),
        ConvexSetExpr::OpenPolyhedron { a, b, carrier } => {
            if let Some(c) = carrier {
                if !c.contains(x, 1e-7) {
                    return Ok(false);
                }
            }
            for i in 0..a.nrows() {
                let row = a.row(i).transpose();
                let slack = b[i] - row.dot(x);
                let g = match carrier {
                    Some(c) => (&c.projector * &row).norm(),
                    None => row.norm(),
                };
                let need = if g > 1e-12 { tol.open * g } else { tol.open };
                if slack <= need {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ConvexSetExpr::Scale(l, c) => open_member(c, &(x / *l), tol),
        ConvexSetExpr::Translate(v, c) => open_member(c, &(x - v), tol),
        ConvexSetExpr::Intersect(cs) => {
            for c in cs {
                if !open_member(c, x, tol)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ConvexSetExpr::ConvUnion(l, r) => {
            // Case 1: a genuine interior combination with positive hull
            // weight on the left branch and shrunk leaves.
            let compiled = compile_shrunk(expr, tol, tol.open)?;
            if let Some(tmax) = compiled.max_hull_multiplier(x, tol)? {
                if tmax >= HULL_T_MIN {
                    return Ok(true);
                }
            }
            // Case 2: the weight degenerates; fall back to the branches
            // themselves (relative openness inside their carriers).
            if open_member(r, x, tol)? {
                return Ok(true);
            }
            open_member(l, x, tol)
        }
        ConvexSetExpr::Sublevel { .. } => Err(QextError::UnsupportedLeaf(
            "unresolved sublevel leaf in open membership".into(),
        )),
    }
}

/// Decides `cl(inner) ⊂ outer` for an outer set that flattens into open
/// half-space and carrier rows. Each row's supremum over the closure of
/// `inner` is computed by one LP over the compiled template.
pub fn contains_closure(
    inner: &ConvexSetExpr,
    outer: &ConvexSetExpr,
    tol: &Tolerances,
) -> Result<bool> {
    contains_closure_relative(inner, outer, None, tol)
}

/// Like [`contains_closure`], but closure is taken relative to `ambient`:
/// outer rows that coincide with a row of the ambient set are exempt from
/// the strict-margin requirement, since no point of the relative closure
/// can violate them.
pub fn contains_closure_relative(
    inner: &ConvexSetExpr,
    outer: &ConvexSetExpr,
    ambient: Option<&ConvexSetExpr>,
    tol: &Tolerances,
) -> Result<bool> {
    let rows = flatten_halfspaces(outer, tol)?;
    let exempt: Vec<(DVector<f64>, f64)> = match ambient {
        Some(amb) => match flatten_halfspaces(amb, tol) {
            Ok(amb_rows) => amb_rows
                .into_iter()
                .filter_map(|r| match r {
                    FlatRow::Strict { a, b } => {
                        let n = a.norm();
                        (n > 1e-12).then(|| (a / n, b / n))
                    }
                    FlatRow::Carrier { .. } => None,
                })
                .collect(),
            Err(QextError::UnsupportedLeaf(_)) => Vec::new(),
            Err(e) => return Err(e),
        },
        None => Vec::new(),
    };
    let is_exempt = |a: &DVector<f64>, b: f64| -> bool {
        let n = a.norm();
        if n <= 1e-12 {
            return false;
        }
        let (an, bn) = (a / n, b / n);
        exempt
            .iter()
            .any(|(ea, eb)| (ea - &an).amax() <= 1e-9 && (eb - bn).abs() <= 1e-9)
    };
    let compiled = compile(inner, tol)?;
    let nv = compiled.dim + compiled.naux;
    // Constraint block over [x; aux].
    let mut cons = DMatrix::zeros(compiled.m_point.nrows(), nv);
    for i in 0..compiled.m_point.nrows() {
        for j in 0..compiled.dim {
            cons[(i, j)] = compiled.m_point[(i, j)];
        }
        for j in 0..compiled.naux {
            cons[(i, compiled.dim + j)] = compiled.m_aux[(i, j)];
        }
    }
    let sup = |a: &DVector<f64>| -> Result<Option<f64>> {
        let mut obj = DVector::zeros(nv);
        for j in 0..compiled.dim {
            obj[j] = a[j];
        }
        let lp = LinearProgram::new(obj, cons.clone(), compiled.rhs.clone());
        let out = geometry::lp_solve(&lp, tol)?;
        match out.status {
            LpStatus::Optimal => Ok(Some(out.objective.unwrap())),
            LpStatus::Unbounded => Ok(None),
            LpStatus::Infeasible => Err(QextError::EmptySet("inner set is empty".into())),
        }
    };
    for row in &rows {
        match row {
            FlatRow::Strict { a, b } => match sup(a) {
                Ok(Some(s)) => {
                    let margin = if is_exempt(a, *b) { -tol.contain } else { tol.contain };
                    if s > b - margin {
                        return Ok(false);
                    }
                }
                Ok(None) => return Ok(false), // recession violation
                Err(QextError::EmptySet(_)) => return Ok(true),
                Err(e) => return Err(e),
            },
            FlatRow::Carrier { a } => {
                for sign in [1.0, -1.0] {
                    let dir = a * sign;
                    match sup(&dir) {
                        Ok(Some(s)) => {
                            if s > tol.contain.max(1e-8) {
                                return Ok(false);
                            }
                        }
                        Ok(None) => return Ok(false),
                        Err(QextError::EmptySet(_)) => return Ok(true),
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    Ok(true)
}

/// An interior point with margin at least half the maximum margin inside
/// the given carrier (the ambient space when `None`).
pub fn find_interior_point(
    expr: &ConvexSetExpr,
    carrier: Option<&Subspace>,
    tol: &Tolerances,
) -> Result<Point> {
    let resolved = expr.resolve(tol)?;
    if resolved.is_empty_literal() {
        return Err(QextError::EmptySet("interior point of the empty set".into()));
    }
    // Fast path: flattenable sets get an exact max-margin LP.
    if let Ok(rows) = flatten_halfspaces(&resolved, tol) {
        return interior_by_margin_lp(&resolved, &rows, carrier, tol);
    }
    interior_by_shrink_bisection(&resolved, carrier, tol)
}

fn interior_by_margin_lp(
    expr: &ConvexSetExpr,
    rows: &[FlatRow],
    carrier: Option<&Subspace>,
    tol: &Tolerances,
) -> Result<Point> {
    let dim = expr
        .dim()
        .ok_or_else(|| QextError::Spec("no ambient dimension".into()))?;
    // Variables [x; s]; maximize s.
    let mut cons_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for row in rows {
        match row {
            FlatRow::Strict { a, b } => {
                let g = match carrier {
                    Some(c) => (&c.projector * a).norm(),
                    None => a.norm(),
                };
                let mut r = DVector::zeros(dim + 1);
                for j in 0..dim {
                    r[j] = a[j];
                }
                r[dim] = if g > 1e-12 { g } else { 0.0 };
                cons_rows.push((r, *b));
            }
            FlatRow::Carrier { a } => {
                for sign in [1.0, -1.0] {
                    let mut r = DVector::zeros(dim + 1);
                    for j in 0..dim {
                        r[j] = sign * a[j];
                    }
                    cons_rows.push((r, 0.0));
                }
            }
        }
    }
    if let Some(c) = carrier {
        for j in 0..c.complement.ncols() {
            let q = c.complement.column(j);
            for sign in [1.0, -1.0] {
                let mut r = DVector::zeros(dim + 1);
                for k in 0..dim {
                    r[k] = sign * q[k];
                }
                cons_rows.push((r, 0.0));
            }
        }
    }
    // Margin ceiling.
    let mut cap = DVector::zeros(dim + 1);
    cap[dim] = 1.0;
    cons_rows.push((cap, tol.margin_ceiling));
    let m = cons_rows.len();
    let mut cons = DMatrix::zeros(m, dim + 1);
    let mut rhs = DVector::zeros(m);
    for (i, (r, b)) in cons_rows.iter().enumerate() {
        for j in 0..=dim {
            cons[(i, j)] = r[j];
        }
        rhs[i] = *b;
    }
    let mut obj = DVector::zeros(dim + 1);
    obj[dim] = 1.0;
    let out = geometry::lp_solve(&LinearProgram::new(obj, cons, rhs), tol)?;
    match out.status {
        LpStatus::Optimal => {
            let z = out.optimizer.unwrap();
            let s = z[dim];
            if s <= tol.open {
                return Err(QextError::EmptySet(
                    "set has empty relative interior in the carrier".into(),
                ));
            }
            Ok(z.rows(0, dim).clone_owned())
        }
        LpStatus::Infeasible => Err(QextError::EmptySet(
            "no point satisfies the flattened constraints".into(),
        )),
        LpStatus::Unbounded => Err(QextError::SolverFailure(
            "margin LP unbounded despite ceiling".into(),
        )),
    }
}

fn interior_by_shrink_bisection(
    expr: &ConvexSetExpr,
    carrier: Option<&Subspace>,
    tol: &Tolerances,
) -> Result<Point> {
    let dim = expr
        .dim()
        .ok_or_else(|| QextError::Spec("no ambient dimension".into()))?;
    let witness_at = |shrink: f64| -> Result<Option<Point>> {
        let compiled = compile_shrunk(expr, tol, shrink)?;
        let nv = compiled.dim + compiled.naux;
        let mut cons_rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for i in 0..compiled.m_point.nrows() {
            let mut r = DVector::zeros(nv);
            for j in 0..compiled.dim {
                r[j] = compiled.m_point[(i, j)];
            }
            for j in 0..compiled.naux {
                r[compiled.dim + j] = compiled.m_aux[(i, j)];
            }
            cons_rows.push((r, compiled.rhs[i]));
        }
        if let Some(c) = carrier {
            for j in 0..c.complement.ncols() {
                let q = c.complement.column(j);
                for sign in [1.0, -1.0] {
                    let mut r = DVector::zeros(nv);
                    for k in 0..dim {
                        r[k] = sign * q[k];
                    }
                    cons_rows.push((r, 0.0));
                }
            }
        }
        let m = cons_rows.len();
        let mut cons = DMatrix::zeros(m, nv);
        let mut rhs = DVector::zeros(m);
        for (i, (r, b)) in cons_rows.iter().enumerate() {
            for j in 0..nv {
                cons[(i, j)] = r[j];
            }
            rhs[i] = *b;
        }
        let lp = LinearProgram::new(DVector::zeros(nv), cons, rhs);
        let out = geometry::lp_solve(&lp, tol)?;
        Ok(match out.status {
            LpStatus::Optimal | LpStatus::Unbounded => {
                out.optimizer.map(|z| z.rows(0, dim).clone_owned())
            }
            LpStatus::Infeasible => None,
        })
    };
    if witness_at(1e-9)?.is_none() {
        return Err(QextError::EmptySet("compiled template infeasible".into()));
    }
    // Exponential search for an infeasible shrink, then bisect.
    let mut lo = 1e-9;
    let mut hi = 1e-6;
    let mut capped = false;
    while witness_at(hi)?.is_some() {
        lo = hi;
        hi *= 4.0;
        if hi > tol.margin_ceiling {
            capped = true;
            break;
        }
    }
    if !capped {
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if witness_at(mid)?.is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let target = 0.5 * lo;
    witness_at(target)?.ok_or_else(|| {
        QextError::SolverFailure("interior bisection lost feasibility".into())
    })
}

/// Finds `λ ∈ (0,1)` with `cl(inner) ⊂ λ·outer`, by bisection on the
/// minimal feasible scale and the fixed policy `λ = (λ_min + 1)/2`.
pub fn find_scale_factor(
    inner: &ConvexSetExpr,
    outer: &ConvexSetExpr,
    tol: &Tolerances,
) -> Result<f64> {
    let inner = inner.resolve(tol)?;
    if inner.is_empty_literal() {
        return Ok(0.5);
    }
    let ok = |l: f64| -> Result<bool> {
        contains_closure(&inner, &ConvexSetExpr::scale(l, outer.clone()), tol)
    };
    if !ok(1.0)? {
        return Err(QextError::ScaleFailure(
            "closure of inner is not contained in outer".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda_min = hi;
    if lambda_min >= 1.0 - 1e-7 {
        return Err(QextError::ScaleFailure(format!(
            "minimal scale {lambda_min} leaves no strict room below 1"
        )));
    }
    Ok(0.5 * (lambda_min + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn pt(coords: &[f64]) -> Point {
        DVector::from_row_slice(coords)
    }

    #[test]
    fn subspace_projectors_are_consistent() {
        let y = Subspace::from_spanning(3, &[pt(&[1.0, 1.0, 0.0]), pt(&[0.0, 0.0, 2.0])]).unwrap();
        let p2 = &y.projector * &y.projector;
        assert!((p2 - &y.projector).amax() < 1e-10);
        let pb = &y.projector * &y.basis;
        assert!((pb - &y.basis).amax() < 1e-10);
        let v = pt(&[3.0, 3.0, -1.0]); // inside the span
        assert!(y.off_distance(&v) < 1e-10);
        assert_eq!(y.codim(), 1);
    }

    #[test]
    fn leaf_membership_open_and_closed() {
        let s = ConvexSetExpr::open_box(1, -1.0, 1.0);
        let t = tol();
        assert!(member(&s, &pt(&[0.0]), Mode::Open, &t).unwrap());
        assert!(!member(&s, &pt(&[1.0]), Mode::Open, &t).unwrap());
        assert!(member(&s, &pt(&[1.0]), Mode::Closed, &t).unwrap());
        assert!(!member(&s, &pt(&[1.1]), Mode::Closed, &t).unwrap());
    }

    #[test]
    fn scale_translate_chain_membership() {
        // 2·((1,0) + unit box): (3,0) = 2·(1.5,0), (1.5,0) ∈ (1,0)+box.
        let base = ConvexSetExpr::open_box(2, -1.0, 1.0);
        let s = ConvexSetExpr::scale(
            2.0,
            ConvexSetExpr::translate(pt(&[1.0, 0.0]), base),
        );
        let t = tol();
        assert!(member(&s, &pt(&[3.0, 0.0]), Mode::Open, &t).unwrap());
        assert!(!member(&s, &pt(&[4.1, 0.0]), Mode::Closed, &t).unwrap());
        assert!(member(&s, &pt(&[4.0, 0.0]), Mode::Closed, &t).unwrap());
    }

    #[test]
    fn compile_leaf_passthrough() {
        let s = ConvexSetExpr::open_box(1, -1.0, 1.0);
        let c = compile(&s, &tol()).unwrap();
        assert_eq!(c.m_point.nrows(), 2);
        assert_eq!(c.naux, 0);
    }

    #[test]
    fn compile_hull_structure() {
        let l = ConvexSetExpr::open_box(1, -1.0, 0.0);
        let r = ConvexSetExpr::open_box(1, 0.5, 1.0);
        let c = compile(&ConvexSetExpr::hull(l, r), &tol()).unwrap();
        // aux: xl, xr, tl, tr
        assert_eq!(c.naux, 4);
        assert!(c.top_hull_t.is_some());
    }

    #[test]
    fn hull_of_intervals_closed_membership() {
        let l = ConvexSetExpr::open_box(1, -1.0, -0.5);
        let r = ConvexSetExpr::open_box(1, 0.5, 1.0);
        let h = ConvexSetExpr::hull(l, r);
        let t = tol();
        assert!(member(&h, &pt(&[0.0]), Mode::Closed, &t).unwrap());
        assert!(member(&h, &pt(&[0.0]), Mode::Open, &t).unwrap());
        assert!(!member(&h, &pt(&[1.2]), Mode::Closed, &t).unwrap());
    }

    /// The main hull scenario: U = (−1,1)², C = {(s,0): 0<s<3} on the
    /// x-axis.
    fn u_c_hull() -> ConvexSetExpr {
        let u = ConvexSetExpr::open_box(2, -1.0, 1.0);
        let c = ConvexSetExpr::interval_on_axis(2, 0, 0.0, 3.0);
        ConvexSetExpr::hull(u, c)
    }

    #[test]
    fn hull_with_carrier_set_open_membership() {
        let h = u_c_hull();
        let t = tol();
        // brute-force oracle found t≈0.25, u≈(1,0.8), c≈(2.33,0)
        assert!(member(&h, &pt(&[2.0, 0.2]), Mode::Open, &t).unwrap());
        assert!(!member(&h, &pt(&[3.1, 0.0]), Mode::Open, &t).unwrap());
        assert!(member(&h, &pt(&[0.0, 0.0]), Mode::Open, &t).unwrap());
        // on-axis point beyond U but inside the 1-D hull (−1,3)
        assert!(member(&h, &pt(&[2.5, 0.0]), Mode::Open, &t).unwrap());
        // the strip false-positive guard: off the relative interior
        assert!(!member(&h, &pt(&[3.0, 0.0]), Mode::Open, &t).unwrap());
    }

    #[test]
    fn contains_closure_intervals() {
        let t = tol();
        let inner = ConvexSetExpr::open_box(1, -1.0, 1.0);
        assert!(contains_closure(&inner, &ConvexSetExpr::open_box(1, -2.0, 2.0), &t).unwrap());
        assert!(!contains_closure(&inner, &ConvexSetExpr::open_box(1, -1.0, 2.0), &t).unwrap());
    }

    #[test]
    fn contains_closure_hull_inner() {
        let t = tol();
        let inner = u_c_hull();
        // outer (−2,4)×(−2,2)
        let mut a = DMatrix::zeros(4, 2);
        let mut b = DVector::zeros(4);
        a[(0, 0)] = 1.0;
        b[0] = 4.0;
        a[(1, 0)] = -1.0;
        b[1] = 2.0;
        a[(2, 1)] = 1.0;
        b[2] = 2.0;
        a[(3, 1)] = -1.0;
        b[3] = 2.0;
        let outer = ConvexSetExpr::polyhedron(a, b);
        assert!(contains_closure(&inner, &outer, &t).unwrap());
        // shrink the outer until the sup of x₁ (= 3) hits the bound
        let tight = ConvexSetExpr::open_box(2, -2.0, 2.9);
        assert!(!contains_closure(&inner, &tight, &t).unwrap());
    }

    #[test]
    fn contains_closure_unbounded_inner_is_recession_violation() {
        let t = tol();
        // inner = half-plane x ≤ 0 (open), outer bounded box
        let mut a = DMatrix::zeros(1, 2);
        a[(0, 0)] = 1.0;
        let inner = ConvexSetExpr::polyhedron(a, DVector::from_vec(vec![0.0]));
        let outer = ConvexSetExpr::open_box(2, -10.0, 10.0);
        assert!(!contains_closure(&inner, &outer, &t).unwrap());
    }

    #[test]
    fn interior_point_of_box_is_center() {
        let t = tol();
        let s = ConvexSetExpr::open_box(2, -1.0, 1.0);
        let p = find_interior_point(&s, None, &t).unwrap();
        assert!(p.norm() < 1e-6);
    }

    #[test]
    fn interior_point_in_carrier() {
        let t = tol();
        // {0 < x₁ < 3} ∩ x-axis of ℝ²
        let s = ConvexSetExpr::interval_on_axis(2, 0, 0.0, 3.0);
        let y = Subspace::axis(2, 0);
        let p = find_interior_point(&s, Some(&y), &t).unwrap();
        assert!((p[0] - 1.5).abs() < 1e-6);
        assert!(p[1].abs() < 1e-8);
    }

    #[test]
    fn interior_point_of_empty_errors() {
        let t = tol();
        assert!(matches!(
            find_interior_point(&ConvexSetExpr::Empty, None, &t),
            Err(QextError::EmptySet(_))
        ));
    }

    #[test]
    fn interior_point_of_hull_via_bisection() {
        let t = tol();
        let p = find_interior_point(&u_c_hull(), None, &t).unwrap();
        assert!(member(&u_c_hull(), &p, Mode::Open, &t).unwrap());
    }

    #[test]
    fn scale_factor_policy() {
        let t = tol();
        let inner = ConvexSetExpr::open_box(1, -1.0, 1.0);
        let outer = ConvexSetExpr::open_box(1, -4.0, 4.0);
        let l = find_scale_factor(&inner, &outer, &t).unwrap();
        assert!((l - 0.625).abs() < 1e-4);
    }

    #[test]
    fn scale_factor_no_room_fails() {
        let t = tol();
        let inner = ConvexSetExpr::open_box(1, -1.0, 1.0);
        let outer = ConvexSetExpr::open_box(1, -1.0000001, 1.0000001);
        assert!(matches!(
            find_scale_factor(&inner, &outer, &t),
            Err(QextError::ScaleFailure(_))
        ));
    }

    #[test]
    fn scale_factor_empty_inner_convention() {
        let t = tol();
        let outer = ConvexSetExpr::open_box(1, -1.0, 1.0);
        assert_eq!(
            find_scale_factor(&ConvexSetExpr::Empty, &outer, &t).unwrap(),
            0.5
        );
    }

    #[test]
    fn scaling_coherence_is_exact() {
        let t = tol();
        let s = ConvexSetExpr::open_box(2, -1.0, 1.0);
        for &(l, x0, x1) in &[(0.5, 0.3, 0.2), (1.7, 1.5, -0.4), (2.0, 1.99, 0.0)] {
            let scaled = ConvexSetExpr::scale(l, s.clone());
            let x = pt(&[x0, x1]);
            let a = member(&scaled, &x, Mode::Open, &t).unwrap();
            let b = member(&s, &(x / l), Mode::Open, &t).unwrap();
            assert_eq!(a, b, "λ={l}, x=({x0},{x1})");
        }
    }
}
