//! Quasiconvex function specs, sublevel calculus and level-indexed
//! families.
//!
//! A [`QuasiconvexSpec`] is a symbolic description with computable strict
//! sublevel sets. An [`OmegaFamily`] is a level-indexed family of convex
//! set expressions: nested, with each level's closure inside every strictly
//! higher level, empty intersection and union equal to its ambient set.
//! The two are interconvertible: a family evaluates to a function through
//! the supremum formula `f(x) = sup{α : x ∉ D_α}` (realized by bisection),
//! and a function yields the family of its strict sublevels.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::config::{LevelGrid, Tolerances};
use crate::error::{QextError, Result};
use crate::geometry::Point;
use crate::set_algebra::{member, ConvexSetExpr, Mode, Subspace};

/// Strictly increasing map with closed-form forward and inverse on its
/// stated open interval.
#[derive(Debug, Clone)]
pub enum MonotoneMap {
    Identity,
    /// `t ↦ offset + eps·arctan(t)`, on all of ℝ.
    ArctanScaled { eps: f64, offset: f64 },
    /// `t ↦ −ln(b − t)`, an increasing homeomorphism of (−∞, b) onto ℝ.
    NegLogGap { b: f64 },
    /// `t ↦ b − exp(−t)`, the inverse of `NegLogGap`.
    ExpGap { b: f64 },
    /// Natural log, an increasing homeomorphism of (0, ∞) onto ℝ.
    Log,
    /// `t ↦ m·t + c` with `m > 0`.
    Affine { m: f64, c: f64 },
    /// `t ↦ t²` on [0, ∞).
    SquareNonneg,
}

impl MonotoneMap {
    /// Open interval on which the map is defined.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            MonotoneMap::Identity | MonotoneMap::Affine { .. } | MonotoneMap::ArctanScaled { .. } | MonotoneMap::ExpGap { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            MonotoneMap::NegLogGap { b } => (f64::NEG_INFINITY, *b),
            MonotoneMap::Log => (0.0, f64::INFINITY),
            MonotoneMap::SquareNonneg => (0.0, f64::INFINITY),
        }
    }

    /// Image interval.
    pub fn range(&self) -> (f64, f64) {
        match self {
            MonotoneMap::Identity | MonotoneMap::Affine { .. } | MonotoneMap::NegLogGap { .. } | MonotoneMap::Log => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            MonotoneMap::ArctanScaled { eps, offset } => (
                offset - eps * std::f64::consts::FRAC_PI_2,
                offset + eps * std::f64::consts::FRAC_PI_2,
            ),
            MonotoneMap::ExpGap { b } => (f64::NEG_INFINITY, *b),
            MonotoneMap::SquareNonneg => (0.0, f64::INFINITY),
        }
    }

    pub fn forward(&self, t: f64) -> f64 {
        match self {
            MonotoneMap::Identity => t,
            MonotoneMap::ArctanScaled { eps, offset } => offset + eps * t.atan(),
            MonotoneMap::NegLogGap { b } => -(b - t).ln(),
            MonotoneMap::ExpGap { b } => b - (-t).exp(),
            MonotoneMap::Log => t.ln(),
            MonotoneMap::Affine { m, c } => m * t + c,
            MonotoneMap::SquareNonneg => t * t,
        }
    }

    /// Inverse of `forward`; `None` when `v` is outside the image.
    pub fn inverse(&self, v: f64) -> Option<f64> {
        let (lo, hi) = self.range();
        if v <= lo || v >= hi {
            return None;
        }
        Some(match self {
            MonotoneMap::Identity => v,
            MonotoneMap::ArctanScaled { eps, offset } => ((v - offset) / eps).tan(),
            MonotoneMap::NegLogGap { b } => b - (-v).exp(),
            MonotoneMap::ExpGap { b } => -(b - v).ln(),
            MonotoneMap::Log => v.exp(),
            MonotoneMap::Affine { m, c } => (v - c) / m,
            MonotoneMap::SquareNonneg => v.sqrt(),
        })
    }
}

/// The interpolants `φ_n(t) = t − n + (n+1−t)·λ_n` gluing scaled copies of
/// base sets into a real-indexed family.
#[derive(Debug, Clone, Default)]
pub struct ScalingSchedule {
    pub lambdas: BTreeMap<i64, f64>,
}

impl ScalingSchedule {
    pub fn new() -> Self {
        ScalingSchedule {
            lambdas: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, n: i64, lambda: f64) {
        assert!(lambda > 0.0 && lambda < 1.0, "λ must lie in (0,1)");
        self.lambdas.insert(n, lambda);
    }

    pub fn lambda(&self, n: i64) -> Option<f64> {
        self.lambdas.get(&n).copied()
    }

    pub fn phi(&self, n: i64, t: f64) -> f64 {
        let l = self.lambdas[&n];
        t - n as f64 + (n as f64 + 1.0 - t) * l
    }

    /// `φ_n` as (slope, intercept).
    pub fn phi_coefficients(&self, n: i64) -> (f64, f64) {
        let l = self.lambdas[&n];
        (1.0 - l, -(n as f64) + (n as f64 + 1.0) * l)
    }
}

/// Per-interval level generator of a family.
#[derive(Debug, Clone)]
pub enum BlockGen {
    /// Same set over the whole interval.
    Const(ConvexSetExpr),
    /// `center + (slope·α + intercept)·base`.
    Scaled {
        center: DVector<f64>,
        base: ConvexSetExpr,
        slope: f64,
        intercept: f64,
    },
    /// `conv(U_α ∪ [f < α])`.
    Hull {
        u: Box<BlockGen>,
        f: Box<QuasiconvexSpec>,
    },
    /// `[f < α]`.
    SublevelOf(Box<QuasiconvexSpec>),
    /// `inner.at(map(α))`.
    Mapped {
        family: Box<OmegaFamily>,
        map: MonotoneMap,
    },
    /// `P⁻¹([f < level(α)]) ∩ [gauge < eps(α)] ∩ ambient` — a thin
    /// neighborhood of a strictly lower trace sublevel, pinching to
    /// nothing as `eps(α) ↓ 0`.
    Tent {
        f: Box<QuasiconvexSpec>,
        gauge: Box<QuasiconvexSpec>,
        subspace: Subspace,
        ambient: ConvexSetExpr,
        eps: MonotoneMap,
        level: MonotoneMap,
    },
    /// `conv(a_α ∪ b_α)`.
    Pair { a: Box<BlockGen>, b: Box<BlockGen> },
    /// `inner_α ∩ P⁻¹([f < level(α)])` — keeps the projection of a growing
    /// set inside a strictly lower trace sublevel, so its contribution to a
    /// hull can never enlarge the hull's own trace.
    TraceClipped {
        inner: Box<BlockGen>,
        f: Box<QuasiconvexSpec>,
        subspace: Subspace,
        level: MonotoneMap,
    },
}

impl BlockGen {
    pub(crate) fn at(&self, alpha: f64, tol: &Tolerances) -> Result<ConvexSetExpr> {
        Ok(match self {
            BlockGen::Const(e) => e.clone(),
            BlockGen::Scaled {
                center,
                base,
                slope,
                intercept,
            } => {
                let s = slope * alpha + intercept;
                if s <= 0.0 {
                    ConvexSetExpr::Empty
                } else {
                    let scaled = ConvexSetExpr::scale(s, base.clone());
                    if center.amax() == 0.0 {
                        scaled
                    } else {
                        ConvexSetExpr::translate(center.clone(), scaled)
                    }
                }
            }
            BlockGen::Hull { u, f } => {
                let ua = u.at(alpha, tol)?;
                let ca = f.sublevel(alpha, true, tol)?;
                match (ua.is_empty_literal(), ca.is_empty_literal()) {
                    (true, true) => ConvexSetExpr::Empty,
                    (true, false) => ca,
                    (false, true) => ua,
                    (false, false) => ConvexSetExpr::hull(ua, ca),
                }
            }
            BlockGen::Pair { a, b } => {
                let sa = a.at(alpha, tol)?;
                let sb = b.at(alpha, tol)?;
                match (sa.is_empty_literal(), sb.is_empty_literal()) {
                    (true, true) => ConvexSetExpr::Empty,
                    (true, false) => sb,
                    (false, true) => sa,
                    (false, false) => ConvexSetExpr::hull(sa, sb),
                }
            }
            BlockGen::SublevelOf(f) => f.sublevel(alpha, true, tol)?,
            BlockGen::Mapped { family, map } => {
                let (dlo, _) = map.domain();
                if alpha <= dlo {
                    ConvexSetExpr::Empty
                } else {
                    family.at(map.forward(alpha), tol)?
                }
            }
            BlockGen::Tent {
                f,
                gauge,
                subspace,
                ambient,
                eps,
                level,
            } => {
                let (dlo, _) = eps.domain();
                if alpha <= dlo {
                    return Ok(ConvexSetExpr::Empty);
                }
                let e = eps.forward(alpha);
                if e <= 0.0 {
                    return Ok(ConvexSetExpr::Empty);
                }
                let c = f.sublevel(level.forward(alpha), true, tol)?;
                if c.is_empty_literal() {
                    return Ok(ConvexSetExpr::Empty);
                }
                let pre = preimage_under_projection(&c, subspace, tol)?;
                let mut parts = vec![pre, gauge.sublevel(e, true, tol)?];
                if !matches!(ambient, ConvexSetExpr::Full { .. }) {
                    parts.push(ambient.clone());
                }
                ConvexSetExpr::intersect(parts)
            }
            BlockGen::TraceClipped {
                inner,
                f,
                subspace,
                level,
            } => {
                let s = inner.at(alpha, tol)?;
                if s.is_empty_literal() {
                    return Ok(ConvexSetExpr::Empty);
                }
                let c = f.sublevel(level.forward(alpha), true, tol)?;
                if c.is_empty_literal() {
                    return Ok(ConvexSetExpr::Empty);
                }
                let pre = preimage_under_projection(&c, subspace, tol)?;
                ConvexSetExpr::intersect(vec![s, pre])
            }
        })
    }
}

/// One interval of a family, generating levels from `start` up to the next
/// block's start (the last block extends upward).
#[derive(Debug, Clone)]
pub struct FamilyBlock {
    pub start: f64,
    pub gen: BlockGen,
}

/// A level-indexed family `α ↦ D_α` of convex set expressions.
///
/// Levels below the first block are empty; the last block's generator
/// extends to all higher levels (scaled generators extrapolate, constant
/// ones clamp). `lo`/`hi` delimit the validated and bracketed level range.
#[derive(Debug, Clone)]
pub struct OmegaFamily {
    pub blocks: Vec<FamilyBlock>,
    pub ambient: ConvexSetExpr,
    /// Intersected into every nonempty level.
    pub clip: Option<Box<ConvexSetExpr>>,
    pub lo: f64,
    pub hi: f64,
}

impl OmegaFamily {
    pub fn at(&self, alpha: f64, tol: &Tolerances) -> Result<ConvexSetExpr> {
        if self.blocks.is_empty() {
            return Ok(ConvexSetExpr::Empty);
        }
        if alpha < self.blocks[0].start {
            return Ok(ConvexSetExpr::Empty);
        }
        let mut gen = &self.blocks[0].gen;
        for b in &self.blocks {
            if b.start <= alpha {
                gen = &b.gen;
            } else {
                break;
            }
        }
        let e = gen.at(alpha, tol)?;
        Ok(match (&self.clip, e.is_empty_literal()) {
            (Some(clip), false) => {
                ConvexSetExpr::intersect(vec![e, (**clip).clone()])
            }
            _ => e,
        })
    }
}

/// A symbolic continuous quasiconvex function with computable strict
/// sublevel sets.
#[derive(Debug, Clone)]
pub enum QuasiconvexSpec {
    /// `max_i ⟨a_i, x⟩ + b_i` on `domain`.
    MaxAffine {
        pieces: Vec<(DVector<f64>, f64)>,
        domain: ConvexSetExpr,
    },
    /// Monotone transform of a quasiconvex inner spec.
    Transformed {
        inner: Box<QuasiconvexSpec>,
        map: MonotoneMap,
    },
    /// Evaluated by bisection through the supremum formula.
    FamilyDefined {
        family: Box<OmegaFamily>,
        domain: ConvexSetExpr,
    },
    /// The parent restricted to a subspace.
    Restriction {
        parent: Box<QuasiconvexSpec>,
        subspace: Subspace,
    },
    /// Pointwise max (quasiconvex: sublevels intersect).
    MaxOf(Vec<QuasiconvexSpec>),
    /// `min(inner, cap)` (quasiconvex: sublevels unchanged below the cap).
    TruncateAbove {
        inner: Box<QuasiconvexSpec>,
        cap: f64,
    },
    /// `x ↦ inner(P x)` for the projector `P` onto `subspace`.
    Precomposed {
        inner: Box<QuasiconvexSpec>,
        subspace: Subspace,
        domain: ConvexSetExpr,
    },
}

impl QuasiconvexSpec {
    pub fn max_affine(pieces: Vec<(DVector<f64>, f64)>, domain: ConvexSetExpr) -> Self {
        QuasiconvexSpec::MaxAffine { pieces, domain }
    }

    pub fn constant(value: f64, domain: ConvexSetExpr) -> Self {
        let dim = domain.dim().unwrap_or(1);
        QuasiconvexSpec::MaxAffine {
            pieces: vec![(DVector::zeros(dim), value)],
            domain,
        }
    }

    /// `|x_j|` on the full space.
    pub fn abs_coordinate(dim: usize, j: usize) -> Self {
        let mut a = DVector::zeros(dim);
        a[j] = 1.0;
        QuasiconvexSpec::MaxAffine {
            pieces: vec![(a.clone(), 0.0), (-a, 0.0)],
            domain: ConvexSetExpr::full(dim),
        }
    }

    /// `x_j` on the full space.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let mut a = DVector::zeros(dim);
        a[j] = 1.0;
        QuasiconvexSpec::MaxAffine {
            pieces: vec![(a, 0.0)],
            domain: ConvexSetExpr::full(dim),
        }
    }

    pub fn transformed(inner: QuasiconvexSpec, map: MonotoneMap) -> Self {
        QuasiconvexSpec::Transformed {
            inner: Box::new(inner),
            map,
        }
    }

    pub fn domain(&self) -> ConvexSetExpr {
        match self {
            QuasiconvexSpec::MaxAffine { domain, .. } => domain.clone(),
            QuasiconvexSpec::Transformed { inner, .. } => inner.domain(),
            QuasiconvexSpec::FamilyDefined { domain, .. } => domain.clone(),
            QuasiconvexSpec::Restriction { parent, subspace } => ConvexSetExpr::intersect(vec![
                parent.domain(),
                ConvexSetExpr::subspace(subspace.clone()),
            ]),
            QuasiconvexSpec::MaxOf(children) => children
                .first()
                .map(|c| c.domain())
                .unwrap_or(ConvexSetExpr::Empty),
            QuasiconvexSpec::TruncateAbove { inner, .. } => inner.domain(),
            QuasiconvexSpec::Precomposed { domain, .. } => domain.clone(),
        }
    }

    pub fn ambient_dim(&self) -> Option<usize> {
        self.domain().dim()
    }

    /// Evaluates the spec at `x`. Family-defined specs bisect the level
    /// axis against open-mode membership.
    pub fn evaluate(&self, x: &Point, tol: &Tolerances) -> Result<f64> {
        match self {
            QuasiconvexSpec::MaxAffine { pieces, .. } => {
                if pieces.is_empty() {
                    return Err(QextError::Spec("max-affine spec with no pieces".into()));
                }
                Ok(pieces
                    .iter()
                    .map(|(a, b)| a.dot(x) + b)
                    .fold(f64::NEG_INFINITY, f64::max))
            }
            QuasiconvexSpec::Transformed { inner, map } => {
                let v = inner.evaluate(x, tol)?;
                let (dlo, dhi) = map.domain();
                let clamped = v.max(dlo + 1e-300).min(dhi - 1e-300);
                Ok(map.forward(clamped))
            }
            QuasiconvexSpec::FamilyDefined { family, .. } => {
                evaluate_by_bisection(family, x, tol)
            }
            QuasiconvexSpec::Restriction { parent, subspace } => {
                if !subspace.contains(x, 1e-6) {
                    return Err(QextError::OutsideDomain);
                }
                parent.evaluate(x, tol)
            }
            QuasiconvexSpec::MaxOf(children) => {
                let mut best = f64::NEG_INFINITY;
                for c in children {
                    best = best.max(c.evaluate(x, tol)?);
                }
                Ok(best)
            }
            QuasiconvexSpec::TruncateAbove { inner, cap } => {
                Ok(inner.evaluate(x, tol)?.min(*cap))
            }
            QuasiconvexSpec::Precomposed { inner, subspace, .. } => {
                inner.evaluate(&subspace.project(x), tol)
            }
        }
    }

    /// The strict sublevel set `[f < α]` as a set expression. The same
    /// expression denotes `[f ≤ α]` through closed-mode membership, so the
    /// `strict` flag does not change the returned tree.
    pub fn sublevel(&self, alpha: f64, strict: bool, tol: &Tolerances) -> Result<ConvexSetExpr> {
        let _ = strict;
        match self {
            QuasiconvexSpec::MaxAffine { pieces, domain } => {
                let dim = domain
                    .dim()
                    .or_else(|| pieces.first().map(|(a, _)| a.len()))
                    .ok_or_else(|| QextError::Spec("dimensionless max-affine".into()))?;
                let m = pieces.len();
                let mut a = nalgebra::DMatrix::zeros(m, dim);
                let mut b = DVector::zeros(m);
                for (i, (ai, bi)) in pieces.iter().enumerate() {
                    for j in 0..dim {
                        a[(i, j)] = ai[j];
                    }
                    b[i] = alpha - bi;
                }
                let poly = ConvexSetExpr::polyhedron(a, b);
                Ok(match domain {
                    ConvexSetExpr::Full { .. } => poly,
                    d => ConvexSetExpr::intersect(vec![poly, d.clone()]),
                })
            }
            QuasiconvexSpec::Transformed { inner, map } => {
                let (rlo, rhi) = map.range();
                if alpha <= rlo {
                    Ok(ConvexSetExpr::Empty)
                } else if alpha >= rhi {
                    Ok(inner.domain())
                } else {
                    match map.inverse(alpha) {
                        Some(t) => inner.sublevel(t, strict, tol),
                        None => Ok(ConvexSetExpr::Empty),
                    }
                }
            }
            QuasiconvexSpec::FamilyDefined { family, .. } => family.at(alpha, tol),
            QuasiconvexSpec::Restriction { parent, subspace } => {
                let inner = parent.sublevel(alpha, strict, tol)?;
                if inner.is_empty_literal() {
                    return Ok(ConvexSetExpr::Empty);
                }
                Ok(ConvexSetExpr::intersect(vec![
                    inner,
                    ConvexSetExpr::subspace(subspace.clone()),
                ]))
            }
            QuasiconvexSpec::MaxOf(children) => {
                let mut parts = Vec::new();
                for c in children {
                    let s = c.sublevel(alpha, strict, tol)?;
                    if s.is_empty_literal() {
                        return Ok(ConvexSetExpr::Empty);
                    }
                    parts.push(s);
                }
                Ok(ConvexSetExpr::intersect(parts))
            }
            QuasiconvexSpec::TruncateAbove { inner, cap } => {
                if alpha <= *cap {
                    inner.sublevel(alpha, strict, tol)
                } else {
                    Ok(inner.domain())
                }
            }
            QuasiconvexSpec::Precomposed {
                inner, subspace, ..
            } => {
                let s = inner.sublevel(alpha, strict, tol)?;
                preimage_under_projection(&s, subspace, tol)
            }
        }
    }
}

fn evaluate_by_bisection(family: &OmegaFamily, x: &Point, tol: &Tolerances) -> Result<f64> {
    let mut lo = family.lo - 1.0;
    if member(&family.at(lo, tol)?, x, Mode::Open, tol)? {
        return Err(QextError::FamilyCoverage(
            "point lies in every level of the bracket".into(),
        ));
    }
    let mut hi = family.hi;
    let mut found = false;
    for _ in 0..8 {
        if member(&family.at(hi, tol)?, x, Mode::Open, tol)? {
            found = true;
            break;
        }
        hi = lo + 2.0 * (hi - lo);
    }
    if !found {
        return Err(QextError::FamilyCoverage(format!(
            "point lies in no level up to {hi}"
        )));
    }
    let mut iters = 0usize;
    // Tightened open margin in the refinement: the standard open-mode
    // margin is amplified by the level parametrization's derivative (e.g.
    // a square map) and would bias the value past comparison tolerances.
    let mut fine = *tol;
    fine.open = tol.feas.max(1e-9);
    while hi - lo > 0.5 * tol.bisect && iters < 60 {
        let mid = 0.5 * (lo + hi);
        if member(&family.at(mid, tol)?, x, Mode::Open, &fine)? {
            hi = mid;
        } else {
            lo = mid;
        }
        iters += 1;
    }
    Ok(0.5 * (lo + hi))
}

/// The family of strict sublevels of `g` over the grid range, ambient
/// `dom g`.
pub fn family_from_function(g: &QuasiconvexSpec, grid: &LevelGrid) -> OmegaFamily {
    OmegaFamily {
        blocks: vec![FamilyBlock {
            start: grid.lo,
            gen: BlockGen::SublevelOf(Box::new(g.clone())),
        }],
        ambient: g.domain(),
        clip: None,
        lo: grid.lo,
        hi: grid.hi,
    }
}

/// `d(x) = max_j |⟨q_j, x⟩|` over an orthonormal basis of the orthogonal
/// complement: a nonnegative piecewise-linear convex function vanishing
/// exactly on the subspace.
pub fn complement_gauge(y: &Subspace) -> Result<QuasiconvexSpec> {
    if y.codim() == 0 {
        return Err(QextError::GaugeUndefined(
            "the subspace is the whole space".into(),
        ));
    }
    let mut pieces = Vec::with_capacity(2 * y.codim());
    for j in 0..y.complement.ncols() {
        let q = y.complement.column(j).clone_owned();
        pieces.push((q.clone(), 0.0));
        pieces.push((-q, 0.0));
    }
    Ok(QuasiconvexSpec::MaxAffine {
        pieces,
        domain: ConvexSetExpr::full(y.dim),
    })
}

/// Structural preimage `P⁻¹(S)` of a set expression under the projector
/// onto `subspace`. Supported for polyhedral compositions; hulls and
/// unresolved sublevels fall outside the projection route.
pub fn preimage_under_projection(
    expr: &ConvexSetExpr,
    subspace: &Subspace,
    tol: &Tolerances,
) -> Result<ConvexSetExpr> {
    let resolved = expr.resolve(tol)?;
    preimage_resolved(&resolved, subspace)
}

fn preimage_resolved(expr: &ConvexSetExpr, subspace: &Subspace) -> Result<ConvexSetExpr> {
    Ok(match expr {
        ConvexSetExpr::Empty => ConvexSetExpr::Empty,
        ConvexSetExpr::Full { dim } => ConvexSetExpr::full(*dim),
        ConvexSetExpr::OpenPolyhedron { a, b, carrier } => {
            let p = &subspace.projector;
            let mut pa = a.clone();
            for i in 0..a.nrows() {
                let row = a.row(i).transpose();
                let projected = p * &row;
                for j in 0..a.ncols() {
                    pa[(i, j)] = projected[j];
                }
            }
            let new_carrier = match carrier {
                None => None,
                Some(c) => {
                    // Preimage carrier = carrier ⊕ ker P.
                    let mut spanning: Vec<DVector<f64>> = Vec::new();
                    for j in 0..c.basis.ncols() {
                        spanning.push(c.basis.column(j).clone_owned());
                    }
                    for j in 0..subspace.complement.ncols() {
                        spanning.push(subspace.complement.column(j).clone_owned());
                    }
                    let s = Subspace::from_spanning(subspace.dim, &spanning)?;
                    if s.codim() == 0 {
                        None
                    } else {
                        Some(s)
                    }
                }
            };
            ConvexSetExpr::OpenPolyhedron {
                a: pa,
                b: b.clone(),
                carrier: new_carrier,
            }
        }
        ConvexSetExpr::Scale(l, c) => {
            ConvexSetExpr::scale(*l, preimage_resolved(c, subspace)?)
        }
        ConvexSetExpr::Translate(v, c) => {
            if (v - subspace.project(v)).amax() > 1e-9 {
                return Err(QextError::ProjectionScope(
                    "translation vector leaves the subspace".into(),
                ));
            }
            ConvexSetExpr::translate(v.clone(), preimage_resolved(c, subspace)?)
        }
        ConvexSetExpr::Intersect(cs) => ConvexSetExpr::intersect(
            cs.iter()
                .map(|c| preimage_resolved(c, subspace))
                .collect::<Result<Vec<_>>>()?,
        ),
        ConvexSetExpr::ConvUnion(..) | ConvexSetExpr::Sublevel { .. } => {
            return Err(QextError::ProjectionScope(
                "preimage of hull or unresolved sublevel".into(),
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn pt(coords: &[f64]) -> Point {
        DVector::from_row_slice(coords)
    }

    #[test]
    fn max_affine_closed_form() {
        let f = QuasiconvexSpec::abs_coordinate(2, 0);
        assert!((f.evaluate(&pt(&[0.7, 5.0]), &tol()).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn max_affine_sublevel_is_box() {
        let t = tol();
        let f = QuasiconvexSpec::abs_coordinate(2, 0);
        let s = f.sublevel(2.0, true, &t).unwrap();
        assert!(member(&s, &pt(&[1.9, 100.0]), Mode::Open, &t).unwrap());
        assert!(!member(&s, &pt(&[2.0, 0.0]), Mode::Open, &t).unwrap());
    }

    #[test]
    fn arctan_sublevel_inverts_the_map() {
        let t = tol();
        let f = QuasiconvexSpec::transformed(
            QuasiconvexSpec::abs_coordinate(2, 0),
            MonotoneMap::ArctanScaled { eps: 1.0, offset: 0.0 },
        );
        // arctan 1 = π/4, so [f < π/4] = {|x₁| < 1}
        let s = f.sublevel(std::f64::consts::FRAC_PI_4, true, &t).unwrap();
        assert!(member(&s, &pt(&[0.99, 3.0]), Mode::Open, &t).unwrap());
        assert!(!member(&s, &pt(&[1.01, 0.0]), Mode::Open, &t).unwrap());
        // below/above the transform's range
        assert!(f.sublevel(-2.0, true, &t).unwrap().is_empty_literal());
        assert!(matches!(
            f.sublevel(2.0, true, &t).unwrap(),
            ConvexSetExpr::Full { .. }
        ));
    }

    /// The family D_α = α·(−1,1)² (so the induced function is the ∞-norm).
    fn radial_family() -> OmegaFamily {
        OmegaFamily {
            blocks: vec![FamilyBlock {
                start: 0.0,
                gen: BlockGen::Scaled {
                    center: DVector::zeros(2),
                    base: ConvexSetExpr::open_box(2, -1.0, 1.0),
                    slope: 1.0,
                    intercept: 0.0,
                },
            }],
            ambient: ConvexSetExpr::full(2),
            clip: None,
            lo: 0.0,
            hi: 8.0,
        }
    }

    #[test]
    fn family_defined_bisection_matches_analytic() {
        let t = tol();
        let f = QuasiconvexSpec::FamilyDefined {
            family: Box::new(radial_family()),
            domain: ConvexSetExpr::full(2),
        };
        let v = f.evaluate(&pt(&[0.7, 0.0]), &t).unwrap();
        assert!((v - 0.7).abs() < 2.0 * t.bisect, "got {v}");
        let v = f.evaluate(&pt(&[-0.3, 2.5]), &t).unwrap();
        assert!((v - 2.5).abs() < 2.0 * t.bisect, "got {v}");
    }

    #[test]
    fn family_extrapolates_beyond_declared_top() {
        let t = tol();
        let f = QuasiconvexSpec::FamilyDefined {
            family: Box::new(radial_family()),
            domain: ConvexSetExpr::full(2),
        };
        let v = f.evaluate(&pt(&[20.0, 0.0]), &t).unwrap();
        assert!((v - 20.0).abs() < 1e-4, "got {v}");
    }

    /// The nondecreasing step family that fails the closure axiom.
    fn step_family() -> OmegaFamily {
        let mut a = nalgebra::DMatrix::zeros(1, 1);
        a[(0, 0)] = 1.0;
        let halfline = ConvexSetExpr::polyhedron(a, DVector::from_vec(vec![0.0]));
        OmegaFamily {
            blocks: vec![
                FamilyBlock {
                    start: 0.0,
                    gen: BlockGen::Const(halfline),
                },
                FamilyBlock {
                    start: 1.0,
                    gen: BlockGen::Const(ConvexSetExpr::full(1)),
                },
            ],
            ambient: ConvexSetExpr::full(1),
            clip: None,
            lo: -1.0,
            hi: 2.0,
        }
    }

    #[test]
    fn step_family_evaluates_to_characteristic_function() {
        let t = tol();
        let f = QuasiconvexSpec::FamilyDefined {
            family: Box::new(step_family()),
            domain: ConvexSetExpr::full(1),
        };
        let v = f.evaluate(&pt(&[0.5]), &t).unwrap();
        assert!((v - 1.0).abs() < 2.0 * t.bisect, "got {v}");
        let v = f.evaluate(&pt(&[-0.5]), &t).unwrap();
        assert!(v.abs() < 2.0 * t.bisect, "got {v}");
    }

    #[test]
    fn family_from_function_round_trip() {
        let t = tol();
        // g = max(x₁, 2x₂ − 1)
        let g = QuasiconvexSpec::max_affine(
            vec![
                (pt(&[1.0, 0.0]), 0.0),
                (pt(&[0.0, 2.0]), -1.0),
            ],
            ConvexSetExpr::full(2),
        );
        let grid = LevelGrid {
            lo: -6.0,
            hi: 6.0,
            step: 1.0,
        };
        let fam = family_from_function(&g, &grid);
        let f = QuasiconvexSpec::FamilyDefined {
            family: Box::new(fam),
            domain: ConvexSetExpr::full(2),
        };
        for &(x0, x1) in &[(0.3, 0.4), (-1.2, 0.9), (2.0, -2.0), (0.0, 0.0)] {
            let x = pt(&[x0, x1]);
            let direct = g.evaluate(&x, &t).unwrap();
            let via_family = f.evaluate(&x, &t).unwrap();
            assert!(
                (direct - via_family).abs() <= 2.0 * t.bisect,
                "({x0},{x1}): {direct} vs {via_family}"
            );
        }
    }

    #[test]
    fn constant_function_levels() {
        let t = tol();
        let b = ConvexSetExpr::open_box(2, -1.0, 1.0);
        let g = QuasiconvexSpec::constant(5.0, b);
        assert!(g.sublevel(5.0, true, &t).unwrap().resolve(&t).is_ok());
        // at α ≤ 5 the level is empty in the open sense
        let below = g.sublevel(4.0, true, &t).unwrap();
        assert!(!member(&below, &pt(&[0.0, 0.0]), Mode::Open, &t).unwrap());
        let above = g.sublevel(6.0, true, &t).unwrap();
        assert!(member(&above, &pt(&[0.0, 0.0]), Mode::Open, &t).unwrap());
    }

    #[test]
    fn complement_gauge_values() {
        let t = tol();
        let y = Subspace::axis(2, 0);
        let d = complement_gauge(&y).unwrap();
        assert!((d.evaluate(&pt(&[3.0, -2.0]), &t).unwrap() - 2.0).abs() < 1e-10);
        assert!(d.evaluate(&pt(&[7.0, 0.0]), &t).unwrap().abs() < 1e-10);
        // diagonal subspace: gauge of (1,−1) is √2
        let diag = Subspace::from_spanning(2, &[pt(&[1.0, 1.0])]).unwrap();
        let d = complement_gauge(&diag).unwrap();
        assert!((d.evaluate(&pt(&[1.0, -1.0]), &t).unwrap() - 2.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn gauge_of_full_space_is_undefined() {
        let y = Subspace::leading_axes(2, 2);
        assert!(matches!(
            complement_gauge(&y),
            Err(QextError::GaugeUndefined(_))
        ));
    }

    #[test]
    fn monotone_maps_invert() {
        let maps = [
            MonotoneMap::Identity,
            MonotoneMap::ArctanScaled { eps: 0.7, offset: 1.2 },
            MonotoneMap::NegLogGap { b: 2.0 },
            MonotoneMap::ExpGap { b: 2.0 },
            MonotoneMap::Log,
            MonotoneMap::Affine { m: 3.0, c: -1.0 },
            MonotoneMap::SquareNonneg,
        ];
        for m in &maps {
            let (lo, hi) = m.domain();
            for i in 1..10 {
                let t = match (lo.is_finite(), hi.is_finite()) {
                    (false, false) => -4.0 + i as f64,
                    (true, false) => lo + i as f64 * 0.5,
                    (false, true) => hi - i as f64 * 0.5,
                    (true, true) => lo + (hi - lo) * i as f64 / 10.0,
                };
                let v = m.forward(t);
                let back = m.inverse(v).expect("in-range value");
                assert!((back - t).abs() < 1e-9, "{m:?} at {t}");
            }
        }
    }

    #[test]
    fn schedule_endpoint_identities() {
        let mut s = ScalingSchedule::new();
        s.set(1, 0.5);
        s.set(2, 0.3);
        for &n in &[1i64, 2] {
            let l = s.lambda(n).unwrap();
            assert_eq!(s.phi(n, n as f64), l);
            assert_eq!(s.phi(n, n as f64 + 1.0), 1.0);
            let (m, c) = s.phi_coefficients(n);
            assert!((m * (n as f64 + 0.37) + c - s.phi(n, n as f64 + 0.37)).abs() < 1e-12);
        }
    }

    #[test]
    fn precomposed_projection_values() {
        let t = tol();
        let y = Subspace::axis(2, 0);
        let f = QuasiconvexSpec::Precomposed {
            inner: Box::new(QuasiconvexSpec::abs_coordinate(2, 0)),
            subspace: y,
            domain: ConvexSetExpr::full(2),
        };
        assert!((f.evaluate(&pt(&[2.0, 5.0]), &t).unwrap() - 2.0).abs() < 1e-12);
        let s = f.sublevel(1.0, true, &t).unwrap();
        assert!(member(&s, &pt(&[0.5, 40.0]), Mode::Open, &t).unwrap());
        assert!(!member(&s, &pt(&[1.5, 0.0]), Mode::Open, &t).unwrap());
    }

    #[test]
    fn restriction_carries_the_subspace() {
        let t = tol();
        let y = Subspace::axis(2, 0);
        let f = QuasiconvexSpec::Restriction {
            parent: Box::new(QuasiconvexSpec::abs_coordinate(2, 0)),
            subspace: y,
        };
        let s = f.sublevel(1.0, true, &t).unwrap();
        assert!(member(&s, &pt(&[0.5, 0.0]), Mode::Open, &t).unwrap());
        assert!(!member(&s, &pt(&[0.5, 0.2]), Mode::Open, &t).unwrap());
        assert!(f.evaluate(&pt(&[0.5, 0.2]), &t).is_err());
    }
}
