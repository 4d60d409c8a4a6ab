//! Constructive extension machinery: level-family manufacture from
//! nested sequences, the compatible-exhaustion provider, the downward
//! cylinder recursion, and the range/minimizer-preserving wrapper.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{EngineConfig, LevelGrid, Tolerances};
use crate::error::{QextError, Result};
use crate::functions::{
    complement_gauge, preimage_under_projection, BlockGen, FamilyBlock, MonotoneMap, OmegaFamily,
    QuasiconvexSpec, ScalingSchedule,
};
use crate::geometry::Point;
use crate::set_algebra::{
    contains_closure, find_interior_point, find_scale_factor, member, ConvexSetExpr, Mode,
    Subspace,
};
use crate::verify::{
    self, check_extension, check_preservation, contains_closure_general, validate_omega,
    Lemma42Scenario, ValidationReport,
};

/// A subspace extension problem: extend the quasiconvex `f`, defined on
/// `a ∩ y`, to all of the open convex set `a`.
#[derive(Debug, Clone)]
pub struct ExtensionProblem {
    pub dim: usize,
    pub y: Subspace,
    pub a: ConvexSetExpr,
    pub f: QuasiconvexSpec,
    /// Nonnegative convex gauge vanishing exactly on `a ∩ y`.
    pub d: QuasiconvexSpec,
}

impl ExtensionProblem {
    /// Builds the problem with the default complement gauge, certifying
    /// that `a ∩ y` is nonempty.
    pub fn new(y: Subspace, a: ConvexSetExpr, f: QuasiconvexSpec, tol: &Tolerances) -> Result<Self> {
        let dim = a
            .dim()
            .ok_or_else(|| QextError::Spec("domain without ambient dimension".into()))?;
        if y.dim != dim {
            return Err(QextError::DimensionMismatch {
                expected: dim,
                got: y.dim,
                context: "subspace vs domain".into(),
            });
        }
        let trace = ConvexSetExpr::intersect(vec![a.clone(), ConvexSetExpr::subspace(y.clone())]);
        find_interior_point(&trace, Some(&y), tol)?;
        let d = complement_gauge(&y)?;
        Ok(ExtensionProblem { dim, y, a, f, d })
    }

    /// The trace domain `a ∩ y` as a carrier-set expression.
    pub fn trace_domain(&self) -> ConvexSetExpr {
        ConvexSetExpr::intersect(vec![
            self.a.clone(),
            ConvexSetExpr::subspace(self.y.clone()),
        ])
    }
}

/// One recorded level of a construction.
#[derive(Debug, Clone)]
pub struct TraceLevel {
    pub alpha: f64,
    pub u: ConvexSetExpr,
    pub c: ConvexSetExpr,
    pub d: ConvexSetExpr,
}

/// One recorded integer block.
#[derive(Debug, Clone)]
pub struct TraceBlock {
    pub n: i64,
    pub lambda: Option<f64>,
    /// Index of the exhaustion candidate backing this block, when the
    /// upward construction is in play.
    pub base_candidate: Option<usize>,
    /// Chosen trace base point for downward blocks.
    pub y_n: Option<Point>,
}

/// Per-level and per-block records of a family construction, replayable
/// through the hull-closure lemma checker.
#[derive(Debug, Clone, Default)]
pub struct BuilderTrace {
    pub levels: Vec<TraceLevel>,
    pub blocks: Vec<TraceBlock>,
}

impl BuilderTrace {
    /// Scenarios pairing each recorded level's hull ingredients with the
    /// next recorded level.
    pub fn scenarios(&self, p: &ExtensionProblem) -> Vec<Lemma42Scenario> {
        self.levels
            .windows(2)
            .map(|w| Lemma42Scenario {
                u: w[0].u.clone(),
                c: w[0].c.clone(),
                d2: w[1].d.clone(),
                w: 0.002,
                d: p.d.clone(),
                a: p.a.clone(),
                y: p.y.clone(),
            })
            .collect()
    }
}

/// A finished extension: the function, its construction trace, and the
/// validation record.
#[derive(Debug, Clone)]
pub struct ExtensionResult {
    pub f: QuasiconvexSpec,
    pub trace: BuilderTrace,
    pub report: ValidationReport,
}

/// The strict-sublevel family of an already-extended function, checked
/// against the family axioms.
pub fn family_from_extension(
    big_f: &QuasiconvexSpec,
    grid: &LevelGrid,
    seed: u64,
    tol: &Tolerances,
) -> Result<OmegaFamily> {
    let fam = crate::functions::family_from_function(big_f, grid);
    let report = validate_omega(&fam, 20, 200, seed, tol)?;
    if !report.all_passed() {
        return Err(QextError::Construction(format!(
            "sublevel family fails the axioms: {}",
            serde_json::to_string(&report).unwrap_or_default()
        )));
    }
    Ok(fam)
}

/// Interpolated family from a nested increasing sequence of relatively
/// open convex sets containing the origin: each base is shrunk by
/// n/(n+1), consecutive shrunk bases are bridged by computed scale
/// factors, and levels below the first index are empty.
pub fn qe_family_from_sequence(
    c: &[ConvexSetExpr],
    ambient: ConvexSetExpr,
    tol: &Tolerances,
) -> Result<(OmegaFamily, ScalingSchedule)> {
    if c.is_empty() {
        return Err(QextError::InsufficientLevels("no sets supplied".into()));
    }
    let dim = c[0]
        .dim()
        .ok_or_else(|| QextError::Spec("dimensionless set".into()))?;
    let origin = DVector::zeros(dim);
    if !member(&c[0], &origin, Mode::Open, tol)? {
        return Err(QextError::PremiseViolation(
            "the first set must contain the origin".into(),
        ));
    }
    let shrunk: Vec<ConvexSetExpr> = c
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let n = (k + 1) as f64;
            ConvexSetExpr::scale(n / (n + 1.0), e.clone())
        })
        .collect();
    let mut schedule = ScalingSchedule::new();
    schedule.set(1, 0.5);
    for k in 1..shrunk.len() {
        let lambda = find_scale_factor(&shrunk[k - 1], &shrunk[k], tol).map_err(|e| {
            QextError::PremiseViolation(format!("no scale gap between levels {k} and {}: {e}", k + 1))
        })?;
        schedule.set((k + 1) as i64, lambda);
    }
    let mut blocks = Vec::with_capacity(shrunk.len());
    for (k, base) in shrunk.iter().enumerate() {
        let n = (k + 1) as i64;
        let (slope, intercept) = schedule.phi_coefficients(n);
        blocks.push(FamilyBlock {
            start: n as f64,
            gen: BlockGen::Scaled {
                center: DVector::zeros(dim),
                base: base.clone(),
                slope,
                intercept,
            },
        });
    }
    let hi = shrunk.len() as f64 + 1.0;
    Ok((
        OmegaFamily {
            blocks,
            ambient,
            clip: None,
            lo: 1.0,
            hi,
        },
        schedule,
    ))
}

/// Nonnegative quasiconvex gauge from a decreasing sequence of open
/// convex sets whose intersection is the trace subspace: stretches each
/// set by (k+1)/k, arranges the two-sided integer ladder, reindexes it
/// through the increasing homeomorphism `h`, and returns the
/// family-defined supremum function (zero exactly on the intersection).
pub fn build_delta_from_nested(
    u: &[ConvexSetExpr],
    a: &ConvexSetExpr,
    h: MonotoneMap,
    tol: &Tolerances,
) -> Result<QuasiconvexSpec> {
    if u.is_empty() {
        return Err(QextError::InsufficientLevels("no nested sets supplied".into()));
    }
    let dim = u[0]
        .dim()
        .or_else(|| a.dim())
        .ok_or_else(|| QextError::Spec("dimensionless set".into()))?;
    let origin = DVector::zeros(dim);
    for (k, uk) in u.iter().enumerate() {
        if !member(uk, &origin, Mode::Open, tol)? {
            return Err(QextError::Construction(format!(
                "set {} does not contain the origin",
                k + 1
            )));
        }
    }
    // V_k = ((k+1)/k)·U_k; ladder W_n = V_{|n|} downward, (n+2)·V_1 upward.
    let stretched: Vec<ConvexSetExpr> = u
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let k = (i + 1) as f64;
            ConvexSetExpr::scale((k + 1.0) / k, e.clone())
        })
        .collect();
    let n_min = -(stretched.len() as i64);
    let n_max = 4i64;
    let ladder = |n: i64| -> ConvexSetExpr {
        if n < 0 {
            stretched[(-n - 1) as usize].clone()
        } else {
            ConvexSetExpr::scale((n + 2) as f64, stretched[0].clone())
        }
    };
    let mut schedule = ScalingSchedule::new();
    for n in n_min..=n_max {
        if n == n_min {
            schedule.set(n, 0.5);
            continue;
        }
        let lambda = find_scale_factor(&ladder(n - 1), &ladder(n), tol).map_err(|e| {
            QextError::Construction(format!("no scale gap entering rung {n}: {e}"))
        })?;
        schedule.set(n, lambda);
    }
    let mut blocks = Vec::new();
    for n in n_min..=n_max {
        let (slope, intercept) = schedule.phi_coefficients(n);
        blocks.push(FamilyBlock {
            start: n as f64,
            gen: BlockGen::Scaled {
                center: DVector::zeros(dim),
                base: ladder(n),
                slope,
                intercept,
            },
        });
    }
    let inner = OmegaFamily {
        blocks,
        ambient: a.clone(),
        clip: None,
        lo: n_min as f64,
        hi: n_max as f64,
    };
    let hi = h.inverse(n_max as f64).unwrap_or(n_max as f64);
    let outer = OmegaFamily {
        blocks: vec![FamilyBlock {
            start: f64::NEG_INFINITY,
            gen: BlockGen::Mapped {
                family: Box::new(inner),
                map: h,
            },
        }],
        ambient: a.clone(),
        clip: match a {
            ConvexSetExpr::Full { .. } => None,
            other => Some(Box::new(other.clone())),
        },
        lo: 0.0,
        hi,
    };
    Ok(QuasiconvexSpec::FamilyDefined {
        family: Box::new(outer),
        domain: a.clone(),
    })
}

/// The open set in the ambient space whose trace on the subspace is
/// exactly `c`: the projector preimage of `c` intersected with `a`.
pub fn cylinder_set(c: &ConvexSetExpr, p: &ExtensionProblem, tol: &Tolerances) -> Result<ConvexSetExpr> {
    let pre = preimage_under_projection(c, &p.y, tol)?;
    Ok(match &p.a {
        ConvexSetExpr::Full { .. } => pre,
        a => ConvexSetExpr::intersect(vec![pre, a.clone()]),
    })
}

/// Exhaustion bases for the upward construction: `bases[k]` is the
/// centered base of integer block `k+1` (the actual set is
/// `center + base`), with schedule factors bridging consecutive bases.
#[derive(Debug, Clone)]
pub struct Exhaustion {
    pub center: Point,
    pub bases: Vec<ConvexSetExpr>,
    pub schedule: ScalingSchedule,
    /// Candidate index backing each block.
    pub used_candidate: Vec<usize>,
}

/// Builds bounded open convex sets exhausting `a`, one per level, such
/// that each set's trace closure on the subspace fits inside that level's
/// set and consecutive sets leave strict scale gaps.
///
/// Candidates are shrunk, gauge-capped, ball-capped copies of `a` about
/// `center`; each level takes the largest candidate whose trace closure
/// fits (scanning the level list), with strictly climbing shrink factors
/// whenever a candidate is reused so the scale gaps never degenerate.
pub fn build_compatible_exhaustion(
    p: &ExtensionProblem,
    levels: &[(f64, ConvexSetExpr)],
    center: &Point,
    tol: &Tolerances,
) -> Result<Exhaustion> {
    if levels.len() < 2 {
        return Err(QextError::InsufficientLevels(
            "need at least two levels to reindex into".into(),
        ));
    }
    let nlev = levels.len();
    // Centered candidate k (k = 1..): shrink·((a ∩ ball ∩ [d<k]) − center).
    let centered_candidate = |k: usize| -> Result<ConvexSetExpr> {
        let kf = k as f64;
        let ball = ConvexSetExpr::translate(
            center.clone(),
            ConvexSetExpr::open_box(p.dim, -(kf + 1.0), kf + 1.0),
        );
        let cap = p.d.sublevel(kf, true, tol)?;
        let raw = ConvexSetExpr::intersect(vec![p.a.clone(), ball, cap]);
        let shrink = (kf / (kf + 1.0)) * (1.0 - 1.0 / (kf + 1.0));
        Ok(ConvexSetExpr::scale(
            shrink,
            ConvexSetExpr::translate(-center.clone(), raw),
        ))
    };
    let y_expr = ConvexSetExpr::subspace(p.y.clone());
    let trace_of = |centered: &ConvexSetExpr| -> ConvexSetExpr {
        ConvexSetExpr::intersect(vec![
            ConvexSetExpr::translate(center.clone(), centered.clone()),
            y_expr.clone(),
        ])
    };
    // j(k): first level whose set contains the candidate's trace closure.
    let mut candidates: Vec<ConvexSetExpr> = Vec::with_capacity(nlev);
    let mut j: Vec<Option<usize>> = Vec::with_capacity(nlev);
    for k in 1..=nlev {
        let cand = centered_candidate(k)?;
        let tr = trace_of(&cand);
        let mut found = None;
        for (idx, (_, c)) in levels.iter().enumerate() {
            if contains_closure(&tr, c, tol)? {
                found = Some(idx);
                break;
            }
        }
        candidates.push(cand);
        j.push(found);
    }
    if j[0] != Some(0) {
        // Even the smallest candidate's trace escapes every level: shrink
        // it until it fits the first one, or give up.
        let mut mu = 0.5;
        let mut fitted = None;
        for _ in 0..40 {
            let cand = ConvexSetExpr::scale(mu, candidates[0].clone());
            if contains_closure(&trace_of(&cand), &levels[0].1, tol)? {
                fitted = Some(cand);
                break;
            }
            mu *= 0.5;
        }
        match fitted {
            Some(cand) => {
                candidates[0] = cand;
                j[0] = Some(0);
            }
            None => {
                return Err(QextError::InsufficientLevels(
                    "no candidate trace fits any supplied level; extend or refine the level list"
                        .into(),
                ))
            }
        }
    }
    // Per block: the largest candidate whose trace level has been reached.
    // The shrink factor climbs toward 1 while a candidate is reused and is
    // held fixed across a candidate switch: the switched-to candidate is a
    // strictly larger scaled copy of the ambient intersection, so equal
    // shrink factors already leave a strict scale gap.
    let mut bases = Vec::with_capacity(nlev);
    let mut used = Vec::with_capacity(nlev);
    let mut prev_pick: Option<usize> = None;
    let mut r = 0i32;
    for n in 0..nlev {
        let mut pick = 0usize;
        for (k, jk) in j.iter().enumerate() {
            if let Some(level) = jk {
                if *level <= n {
                    pick = k;
                }
            }
        }
        if prev_pick == Some(pick) {
            r += 1;
        }
        prev_pick = Some(pick);
        let mu = 1.0 - 0.5f64.powi(r + 1);
        bases.push(ConvexSetExpr::scale(mu, candidates[pick].clone()));
        used.push(pick);
    }
    let mut schedule = ScalingSchedule::new();
    schedule.set(1, 0.5);
    for n in 1..nlev {
        let lambda = find_scale_factor(&bases[n - 1], &bases[n], tol).map_err(|e| {
            QextError::Construction(format!("no scale gap entering block {}: {e}", n + 1))
        })?;
        schedule.set((n + 1) as i64, lambda);
    }
    Ok(Exhaustion {
        center: center.clone(),
        bases,
        schedule,
        used_candidate: used,
    })
}

enum Branch {
    /// `inf f` finite; levels renormalized so the infimum sits at 0.
    HalfLine { inf: f64 },
    /// `f` unbounded below on the trace (every grid level is nonempty).
    FullLine,
}

fn detect_branch(
    p: &ExtensionProblem,
    grid: &LevelGrid,
    tol: &Tolerances,
) -> Result<Branch> {
    let nonempty = |alpha: f64| -> Result<bool> {
        let s = p.f.sublevel(alpha, true, tol)?;
        match find_interior_point(&s, Some(&p.y), tol) {
            Ok(_) => Ok(true),
            Err(QextError::EmptySet(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if nonempty(grid.lo)? {
        // The grid floor may still sit above a finite infimum (e.g. a
        // bounded trace): probe geometrically below it before concluding
        // that f is unbounded below.
        let mut span = (grid.hi - grid.lo).max(1.0);
        let mut upper = grid.lo;
        for _ in 0..24 {
            let probe = upper - span;
            if !nonempty(probe)? {
                let (mut lo, mut hi) = (probe, upper);
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if nonempty(mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(Branch::HalfLine {
                    inf: 0.5 * (lo + hi),
                });
            }
            upper = probe;
            span *= 2.0;
        }
        return Ok(Branch::FullLine);
    }
    // First nonempty grid level, then bisect the infimum between it and
    // the last empty one.
    let mut first = None;
    let mut alpha = grid.lo + grid.step;
    while alpha <= grid.hi + 1e-12 {
        if nonempty(alpha)? {
            first = Some(alpha);
            break;
        }
        alpha += grid.step;
    }
    let first = first.ok_or_else(|| {
        QextError::Construction("every sublevel on the grid is empty".into())
    })?;
    let mut lo = first - grid.step;
    let mut hi = first;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if nonempty(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Branch::HalfLine {
        inf: 0.5 * (lo + hi),
    })
}

/// Extends `p.f` from the trace to all of `a` by constructing a level
/// family: shrink-scheduled exhaustion hulls from level 1 upward, and a
/// parametric tent block — a gauge-thin neighborhood of the trace
/// sublevel, pinching to nothing toward the infimum — covering every
/// lower level. The result carries the construction trace and the
/// validation report.
pub fn extend_quasiconvex(
    p: &ExtensionProblem,
    grid: &LevelGrid,
    seed: u64,
    tol: &Tolerances,
) -> Result<ExtensionResult> {
    let branch = detect_branch(p, grid, tol)?;
    // Renormalize levels so the infimum (when finite) sits at 0 and the
    // hull blocks start at 1.
    let shift = match &branch {
        Branch::HalfLine { inf } => -*inf,
        Branch::FullLine => 0.0,
    };
    let f1 = if shift == 0.0 {
        p.f.clone()
    } else {
        QuasiconvexSpec::transformed(p.f.clone(), MonotoneMap::Affine { m: 1.0, c: shift })
    };

    let nlev = (grid.hi.floor() as usize).max(2);
    let mut levels = Vec::with_capacity(nlev);
    for n in 1..=nlev {
        levels.push((n as f64, f1.sublevel(n as f64, true, tol)?));
    }
    // Interior trace point of the first level; bounded first so that the
    // max-margin search on unbounded sublevels doesn't run off toward the
    // margin ceiling and skew every hull.
    let radius = EngineConfig::default().sample_radius;
    let bounded_first = ConvexSetExpr::intersect(vec![
        levels[0].1.clone(),
        ConvexSetExpr::open_box(p.dim, -radius, radius),
    ]);
    let center = find_interior_point(&bounded_first, Some(&p.y), tol)
        .or_else(|_| find_interior_point(&levels[0].1, Some(&p.y), tol))
        .map_err(|e| QextError::Construction(format!("no interior point of the first level: {e}")))?;

    let mut trace = BuilderTrace::default();
    let exh = build_compatible_exhaustion(p, &levels, &center, tol)?;
    for n in 1..=nlev {
        trace.blocks.push(TraceBlock {
            n: n as i64,
            lambda: exh.schedule.lambda(n as i64),
            base_candidate: Some(exh.used_candidate[n - 1]),
            y_n: None,
        });
    }

    // Tent block for the range below level 1: a gauge-thin open
    // neighborhood of the trace sublevel. Its width ε(α) decreases to 0
    // toward the infimum (linearly for a finite infimum, with an arctan
    // tail when f is unbounded below), which makes the total intersection
    // empty; its trace is exactly the sublevel at every covered level.
    // The width scale is calibrated at the seam so the tent closure fits
    // inside the first hull level.
    let fam_lo = match &branch {
        Branch::HalfLine { .. } => 0.0,
        Branch::FullLine => grid.lo.min(-40.0),
    };
    let tent_eps = |eps0: f64| -> MonotoneMap {
        match &branch {
            Branch::HalfLine { .. } => MonotoneMap::Affine { m: eps0, c: 0.0 },
            Branch::FullLine => {
                // ε(α) = e·(arctan α + π/2), scaled so ε(1) = eps0
                let e = eps0 / (0.75 * std::f64::consts::PI);
                MonotoneMap::ArctanScaled {
                    eps: e,
                    offset: e * std::f64::consts::FRAC_PI_2,
                }
            }
        }
    };
    // The tent hugs the strictly lower sublevel at m(α) < α; the fixed
    // level margin α − m(α) is what leaves room for the tent's height
    // inside every later level.
    let tent_level = match &branch {
        Branch::HalfLine { .. } => MonotoneMap::Affine { m: 0.5, c: 0.0 },
        Branch::FullLine => MonotoneMap::Affine { m: 1.0, c: -1.0 },
    };
    let make_tent_gen = |eps0: f64| BlockGen::Tent {
        f: Box::new(f1.clone()),
        gauge: Box::new(p.d.clone()),
        subspace: p.y.clone(),
        ambient: p.a.clone(),
        eps: tent_eps(eps0),
        level: tent_level.clone(),
    };
    let make_tent = |eps0: f64| BlockGen::Hull {
        u: Box::new(make_tent_gen(eps0)),
        f: Box::new(f1.clone()),
    };
    // Hull blocks also carry the tent so that later levels keep a positive
    // thickness everywhere over the tent's footprint: without it, a
    // sublevel edge that stays pinned (e.g. at the boundary of a bounded
    // domain) would pinch the hull to zero height there and the tent
    // closure could never fit inside the next level.
    let make_hull_family = |eps0: f64| -> OmegaFamily {
        let blocks = (1..=nlev)
            .map(|n| {
                let (slope, intercept) = exh.schedule.phi_coefficients(n as i64);
                FamilyBlock {
                    start: n as f64,
                    gen: BlockGen::Hull {
                        u: Box::new(BlockGen::Pair {
                            // Clipping the scaled set by the preimage of a
                            // strictly lower sublevel pins every hull's
                            // trace to the sublevel itself, even where the
                            // top block extrapolates past the level list.
                            a: Box::new(BlockGen::TraceClipped {
                                inner: Box::new(BlockGen::Scaled {
                                    center: exh.center.clone(),
                                    base: exh.bases[n - 1].clone(),
                                    slope,
                                    intercept,
                                }),
                                f: Box::new(f1.clone()),
                                subspace: p.y.clone(),
                                level: tent_level.clone(),
                            }),
                            b: Box::new(make_tent_gen(eps0)),
                        }),
                        f: Box::new(f1.clone()),
                    },
                }
            })
            .collect();
        OmegaFamily {
            blocks,
            ambient: p.a.clone(),
            clip: None,
            lo: 1.0,
            hi: nlev as f64,
        }
    };
    let mut eps0 = 0.25;
    let hull_family = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
        let mut chosen = None;
        for _ in 0..6 {
            let fam = make_hull_family(eps0);
            let seam_outer = fam.at(1.001, tol)?;
            let inner = make_tent(eps0).at(0.999, tol)?;
            if contains_closure_general(&inner, &seam_outer, Some(&p.a), 8, &mut rng, tol)?.0 {
                chosen = Some(fam);
                break;
            }
            eps0 *= 0.5;
        }
        chosen.ok_or_else(|| {
            QextError::Construction("tent width calibration failed at the seam level".into())
        })?
    };

    let mut family = hull_family;
    family.blocks.insert(
        0,
        FamilyBlock {
            start: f64::NEG_INFINITY,
            gen: make_tent(eps0),
        },
    );
    family.lo = fam_lo;

    // Record integer-level hull ingredients for lemma replay.
    for n in 1..=(nlev as i64) {
        let alpha = n as f64;
        let c = f1.sublevel(alpha, true, tol)?;
        let d = family.at(alpha, tol)?;
        let u = match family
            .blocks
            .iter()
            .rev()
            .find(|b| b.start <= alpha)
            .map(|b| &b.gen)
        {
            Some(BlockGen::Hull { u, .. }) => {
                let scaled = match u.as_ref() {
                    BlockGen::Pair { a, .. } => a.as_ref(),
                    other => other,
                };
                scaled.at(alpha, tol)?
            }
            _ => ConvexSetExpr::Empty,
        };
        trace.levels.push(TraceLevel { alpha, u, c, d });
    }

    let f0 = QuasiconvexSpec::FamilyDefined {
        family: Box::new(family.clone()),
        domain: p.a.clone(),
    };
    let big_f = if shift == 0.0 {
        f0
    } else {
        QuasiconvexSpec::transformed(f0, MonotoneMap::Affine { m: 1.0, c: -shift })
    };

    let mut report = validate_omega(&family, 20, 100, seed, tol)?;
    report.merge(check_extension(&big_f, &p.f, &p.y, 100, 1e-6, seed, tol)?);
    if !report.all_passed() {
        return Err(QextError::Construction(format!(
            "constructed family fails validation: {}",
            serde_json::to_string(&report).unwrap_or_default()
        )));
    }
    Ok(ExtensionResult {
        f: big_f,
        trace,
        report,
    })
}

/// The projection extension `F = f ∘ P`, exact on the subspace.
pub fn extend_by_projection(p: &ExtensionProblem) -> Result<QuasiconvexSpec> {
    match &p.a {
        ConvexSetExpr::Full { .. } => Ok(QuasiconvexSpec::Precomposed {
            inner: Box::new(p.f.clone()),
            subspace: p.y.clone(),
            domain: p.a.clone(),
        }),
        _ => Err(QextError::ProjectionScope(
            "domain is not a projector preimage; use the engine extension".into(),
        )),
    }
}

fn sup_value(f: &QuasiconvexSpec, y: &Subspace, tol: &Tolerances) -> Result<f64> {
    match f {
        QuasiconvexSpec::MaxAffine { pieces, domain } => {
            let mut best = f64::NEG_INFINITY;
            for (a, b) in pieces {
                // supremum of one affine piece over the trace domain
                let compiled_dir = a;
                let inner = domain.clone();
                match crate::verify::support_point(&inner, compiled_dir, tol) {
                    Ok(Some((s, _))) => best = best.max(s + b),
                    Ok(None) => return Ok(f64::INFINITY),
                    Err(QextError::EmptySet(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(best)
        }
        QuasiconvexSpec::Transformed { inner, map } => {
            let s = sup_value(inner, y, tol)?;
            let (dlo, dhi) = map.domain();
            if s >= dhi {
                Ok(map.range().1)
            } else {
                Ok(map.forward(s.max(dlo + 1e-300)))
            }
        }
        QuasiconvexSpec::TruncateAbove { inner, cap } => Ok(sup_value(inner, y, tol)?.min(*cap)),
        QuasiconvexSpec::Restriction { parent, .. } => sup_value(parent, y, tol),
        _ => Ok(f64::INFINITY),
    }
}

fn inf_value(f: &QuasiconvexSpec, y: &Subspace, tol: &Tolerances) -> Result<f64> {
    match f {
        QuasiconvexSpec::MaxAffine { pieces, domain } => {
            Ok(verify::argmin_max_affine(pieces, domain, Some(y), tol)?.1)
        }
        QuasiconvexSpec::Transformed { inner, map } => {
            let v = inf_value(inner, y, tol)?;
            let (dlo, dhi) = map.domain();
            if v <= dlo {
                Ok(map.range().0)
            } else {
                Ok(map.forward(v.min(dhi - 1e-300)))
            }
        }
        QuasiconvexSpec::TruncateAbove { inner, cap } => Ok(inf_value(inner, y, tol)?.min(*cap)),
        QuasiconvexSpec::Restriction { parent, .. } => inf_value(parent, y, tol),
        _ => Err(QextError::Spec(
            "infimum not computable for this spec".into(),
        )),
    }
}

fn is_constant(f: &QuasiconvexSpec) -> Option<f64> {
    match f {
        QuasiconvexSpec::MaxAffine { pieces, .. } => {
            let all_flat = pieces.iter().all(|(a, _)| a.amax() == 0.0);
            if all_flat {
                pieces
                    .iter()
                    .map(|(_, b)| *b)
                    .fold(None, |acc: Option<f64>, b| {
                        Some(acc.map(|m| m.max(b)).unwrap_or(b))
                    })
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Extends `p.f` so that the extension has the same range and the same
/// minimizers: constants get `c + δ`; otherwise the plain extension is
/// conjugated to control the supremum and combined with an arctan lift of
/// the gauge `δ` to pin the infimum to the trace.
pub fn extend_preserving(
    p: &ExtensionProblem,
    delta: &QuasiconvexSpec,
    eps: Option<f64>,
    grid: &LevelGrid,
    seed: u64,
    tol: &Tolerances,
) -> Result<ExtensionResult> {
    // Premise: δ ≥ 0 on A, vanishing exactly on the trace.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let radius = EngineConfig::default().sample_radius;
        let pts = verify::sample_in(&p.a, None, radius, 200, &mut rng, tol)?;
        for x in &pts {
            let v = delta.evaluate(x, tol)?;
            if v < -1e-9 {
                return Err(QextError::PremiseViolation(format!(
                    "gauge is negative ({v}) at a sample"
                )));
            }
            let off = p.y.off_distance(x);
            if off > 0.05 && v <= 1e-9 {
                return Err(QextError::PremiseViolation(
                    "gauge vanishes off the trace subspace".into(),
                ));
            }
            if off < 1e-9 && v.abs() > 1e-7 {
                return Err(QextError::PremiseViolation(
                    "gauge does not vanish on the trace".into(),
                ));
            }
        }
    }

    if let Some(c) = is_constant(&p.f) {
        let big_f = QuasiconvexSpec::transformed(
            delta.clone(),
            MonotoneMap::Affine { m: 1.0, c },
        );
        let report = check_preservation(
            &big_f, &p.f, c, c, &p.y, 300, 1e-6, seed, tol, false,
        )?;
        return Ok(ExtensionResult {
            f: big_f,
            trace: BuilderTrace::default(),
            report,
        });
    }

    let a = inf_value(&p.f, &p.y, tol).unwrap_or(f64::NEG_INFINITY);
    let b = sup_value(&p.f, &p.y, tol)?;
    let attained_cap = matches!(&p.f, QuasiconvexSpec::TruncateAbove { .. });

    let (f1, trace) = if !b.is_finite() {
        let r = extend_quasiconvex(p, grid, seed, tol)?;
        (r.f, r.trace)
    } else if attained_cap {
        let r = extend_quasiconvex(p, grid, seed, tol)?;
        (
            QuasiconvexSpec::TruncateAbove {
                inner: Box::new(r.f),
                cap: b,
            },
            r.trace,
        )
    } else {
        // Conjugate through the gap homeomorphism so the supremum cannot
        // be overshot.
        let g = QuasiconvexSpec::transformed(p.f.clone(), MonotoneMap::NegLogGap { b });
        let q = ExtensionProblem {
            f: g,
            ..p.clone()
        };
        let r = extend_quasiconvex(&q, grid, seed, tol)?;
        (
            QuasiconvexSpec::transformed(r.f, MonotoneMap::ExpGap { b }),
            r.trace,
        )
    };

    let big_f = if a.is_finite() {
        let eps = eps.unwrap_or(if b.is_finite() {
            0.5 * (b - a) / std::f64::consts::FRAC_PI_2
        } else {
            1.0
        });
        QuasiconvexSpec::MaxOf(vec![
            QuasiconvexSpec::transformed(
                delta.clone(),
                MonotoneMap::ArctanScaled { eps, offset: a },
            ),
            f1,
        ])
    } else {
        f1
    };

    let report = check_preservation(&big_f, &p.f, a, b, &p.y, 300, 1e-6, seed, tol, true)?;
    Ok(ExtensionResult {
        f: big_f,
        trace,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::eval_refined;
    use nalgebra::DVector;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn pt(coords: &[f64]) -> Point {
        DVector::from_row_slice(coords)
    }

    fn grid() -> LevelGrid {
        LevelGrid {
            lo: -4.0,
            hi: 6.0,
            step: 1.0,
        }
    }

    fn line_problem() -> ExtensionProblem {
        // f(y) = y₁ on the x-axis of ℝ²
        let y = Subspace::axis(2, 0);
        let f = QuasiconvexSpec::MaxAffine {
            pieces: vec![(pt(&[1.0, 0.0]), 0.0)],
            domain: ConvexSetExpr::subspace(y.clone()),
        };
        ExtensionProblem::new(y, ConvexSetExpr::full(2), f, &tol()).unwrap()
    }

    fn abs_problem() -> ExtensionProblem {
        let y = Subspace::axis(2, 0);
        let f = QuasiconvexSpec::MaxAffine {
            pieces: vec![(pt(&[1.0, 0.0]), 0.0), (pt(&[-1.0, 0.0]), 0.0)],
            domain: ConvexSetExpr::subspace(y.clone()),
        };
        ExtensionProblem::new(y, ConvexSetExpr::full(2), f, &tol()).unwrap()
    }

    #[test]
    fn sequence_family_matches_hand_values() {
        let t = tol();
        let y = Subspace::axis(2, 0);
        let c: Vec<ConvexSetExpr> = (1..=4)
            .map(|n| ConvexSetExpr::interval_on_axis(2, 0, -2.0 * n as f64, 2.0 * n as f64))
            .collect();
        let (fam, sched) = qe_family_from_sequence(&c, ConvexSetExpr::subspace(y), &t).unwrap();
        // B₁ = ½·(−1,1) = (−0.5, 0.5)
        let b1 = fam.at(1.0, &t).unwrap();
        assert!(member(&b1, &pt(&[0.49, 0.0]), Mode::Open, &t).unwrap());
        assert!(!member(&b1, &pt(&[0.51, 0.0]), Mode::Open, &t).unwrap());
        // B at 0.5 is empty
        assert!(fam.at(0.5, &t).unwrap().is_empty_literal());
        // B_{1.5} = φ₁(1.5)·(−1,1) = 0.75·(−1,1)
        assert_eq!(sched.phi(1, 1.5), 0.75);
        let b15 = fam.at(1.5, &t).unwrap();
        assert!(member(&b15, &pt(&[0.74, 0.0]), Mode::Open, &t).unwrap());
        assert!(!member(&b15, &pt(&[0.76, 0.0]), Mode::Open, &t).unwrap());
    }

    #[test]
    fn sequence_family_passes_axioms() {
        let t = tol();
        let y = Subspace::axis(2, 0);
        let c: Vec<ConvexSetExpr> = (1..=4)
            .map(|n| ConvexSetExpr::interval_on_axis(2, 0, -2.0 * n as f64, 2.0 * n as f64))
            .collect();
        let (fam, _) = qe_family_from_sequence(&c, ConvexSetExpr::subspace(y), &t).unwrap();
        let r = validate_omega(&fam, 16, 120, 3, &t).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn sequence_requires_origin() {
        let t = tol();
        let c = vec![ConvexSetExpr::interval_on_axis(2, 0, 5.0, 6.0)];
        assert!(matches!(
            qe_family_from_sequence(&c, ConvexSetExpr::full(2), &t),
            Err(QextError::PremiseViolation(_))
        ));
    }

    fn strip_sequence(count: usize) -> Vec<ConvexSetExpr> {
        (1..=count)
            .map(|k| {
                ConvexSetExpr::polyhedron(
                    nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]),
                    DVector::from_vec(vec![1.0 / k as f64, 1.0 / k as f64]),
                )
            })
            .collect()
    }

    #[test]
    fn delta_vanishes_exactly_on_the_subspace() {
        let t = tol();
        let delta = build_delta_from_nested(
            &strip_sequence(14),
            &ConvexSetExpr::full(2),
            MonotoneMap::Log,
            &t,
        )
        .unwrap();
        assert!(eval_refined(&delta, &pt(&[0.0, 0.0]), &t).unwrap().abs() < 1e-5);
        assert!(eval_refined(&delta, &pt(&[5.0, 0.0]), &t).unwrap().abs() < 1e-5);
        assert!(eval_refined(&delta, &pt(&[0.0, 1.0]), &t).unwrap() > 1e-3);
    }

    #[test]
    fn delta_matches_grid_scan_oracle() {
        let t = tol();
        let delta = build_delta_from_nested(
            &strip_sequence(14),
            &ConvexSetExpr::full(2),
            MonotoneMap::Log,
            &t,
        )
        .unwrap();
        let fam = match &delta {
            QuasiconvexSpec::FamilyDefined { family, .. } => family.clone(),
            _ => unreachable!(),
        };
        let x = pt(&[0.0, 1.0]);
        // independent value: sup over a dense level scan of non-membership
        let step = 0.002;
        let mut oracle = 0.0;
        let mut alpha = step;
        while alpha < 4.0 {
            if !member(&fam.at(alpha, &t).unwrap(), &x, Mode::Open, &t).unwrap() {
                oracle = alpha;
            }
            alpha += step;
        }
        let v = eval_refined(&delta, &x, &t).unwrap();
        assert!(
            (v - oracle).abs() <= 2.0 * step,
            "bisection {v} vs scan {oracle}"
        );
    }

    #[test]
    fn cylinder_is_the_strip_over_the_interval() {
        let t = tol();
        let p = line_problem();
        let c = ConvexSetExpr::interval_on_axis(2, 0, 0.0, 3.0);
        let h = cylinder_set(&c, &p, &t).unwrap();
        assert!(member(&h, &pt(&[1.0, 7.0]), Mode::Open, &t).unwrap());
        assert!(!member(&h, &pt(&[3.1, 0.0]), Mode::Open, &t).unwrap());
        // trace agreement on a few subspace points
        for &x in &[0.5, 1.5, 2.9, -0.1, 3.1] {
            let q = pt(&[x, 0.0]);
            let in_h = member(&h, &q, Mode::Open, &t).unwrap();
            let in_c = member(&c, &q, Mode::Open, &t).unwrap();
            assert_eq!(in_h, in_c, "at {x}");
        }
    }

    #[test]
    fn exhaustion_satisfies_the_four_checks() {
        let t = tol();
        let p = abs_problem();
        let levels: Vec<(f64, ConvexSetExpr)> = (1..=5)
            .map(|n| {
                (
                    n as f64,
                    p.f.sublevel(n as f64, true, &t).unwrap(),
                )
            })
            .collect();
        let z = DVector::zeros(2);
        let exh = build_compatible_exhaustion(&p, &levels, &z, &t).unwrap();
        assert_eq!(exh.bases.len(), 5);
        // trace closures fit their levels
        for (k, base) in exh.bases.iter().enumerate() {
            let set = ConvexSetExpr::translate(z.clone(), base.clone());
            let tr = ConvexSetExpr::intersect(vec![
                set.clone(),
                ConvexSetExpr::subspace(p.y.clone()),
            ]);
            assert!(
                contains_closure(&tr, &levels[k].1, &t).unwrap(),
                "trace {k} escapes its level"
            );
            // the gauge is capped on each base
            let cap = p.d.sublevel((k + 1) as f64, true, &t).unwrap();
            assert!(contains_closure(&set, &ConvexSetExpr::scale(1.0001, cap), &t).unwrap());
        }
        // strict scale gaps between consecutive bases
        for n in 2..=5 {
            let l = exh.schedule.lambda(n).unwrap();
            assert!(l > 0.0 && l < 1.0);
        }
    }

    #[test]
    fn short_level_list_is_rejected() {
        let t = tol();
        let p = abs_problem();
        let levels = vec![(1.0, p.f.sublevel(1.0, true, &t).unwrap())];
        let z = DVector::zeros(2);
        assert!(matches!(
            build_compatible_exhaustion(&p, &levels, &z, &t),
            Err(QextError::InsufficientLevels(_))
        ));
    }

    #[test]
    fn line_extension_agrees_on_the_subspace() {
        let t = tol();
        let p = line_problem();
        let r = extend_quasiconvex(&p, &grid(), 5, &t).unwrap();
        assert!(r.report.all_passed());
        let v = eval_refined(&r.f, &pt(&[3.0, 0.0]), &t).unwrap();
        assert!((v - 3.0).abs() < 1e-5, "got {v}");
        let v = eval_refined(&r.f, &pt(&[-2.0, 0.0]), &t).unwrap();
        assert!((v + 2.0).abs() < 1e-5, "got {v}");
    }

    #[test]
    fn abs_extension_agrees_and_is_positive_off_axis() {
        let t = tol();
        let p = abs_problem();
        let r = extend_quasiconvex(&p, &grid(), 7, &t).unwrap();
        assert!(r.report.all_passed());
        let v = eval_refined(&r.f, &pt(&[-2.0, 0.0]), &t).unwrap();
        assert!((v - 2.0).abs() < 1e-5, "got {v}");
        assert!(eval_refined(&r.f, &pt(&[0.0, 1.0]), &t).unwrap() > 0.0);
    }

    #[test]
    fn projection_extension_composes() {
        let t = tol();
        let y = Subspace::axis(2, 0);
        // f(y) = y₁² as a squared absolute value
        let f = QuasiconvexSpec::transformed(
            QuasiconvexSpec::abs_coordinate(2, 0),
            MonotoneMap::SquareNonneg,
        );
        let p = ExtensionProblem::new(y, ConvexSetExpr::full(2), f, &tol()).unwrap();
        let big_f = extend_by_projection(&p).unwrap();
        assert!((big_f.evaluate(&pt(&[2.0, 5.0]), &t).unwrap() - 4.0).abs() < 1e-9);
        let bounded = ExtensionProblem {
            a: ConvexSetExpr::open_box(2, -1.0, 1.0),
            ..p
        };
        assert!(matches!(
            extend_by_projection(&bounded),
            Err(QextError::ProjectionScope(_))
        ));
    }

    #[test]
    fn preserving_constant_uses_the_gauge_shift() {
        let t = tol();
        let y = Subspace::axis(2, 0);
        let f = QuasiconvexSpec::constant(3.0, ConvexSetExpr::subspace(y.clone()));
        let p = ExtensionProblem::new(y, ConvexSetExpr::full(2), f, &t).unwrap();
        let delta = QuasiconvexSpec::abs_coordinate(2, 1);
        let r = extend_preserving(&p, &delta, None, &grid(), 11, &t).unwrap();
        assert!(r.report.all_passed(), "{:?}", r.report);
        assert!((r.f.evaluate(&pt(&[2.0, 0.0]), &t).unwrap() - 3.0).abs() < 1e-9);
        assert!((r.f.evaluate(&pt(&[2.0, 1.0]), &t).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn preserving_abs_lifts_off_axis_values() {
        let t = tol();
        let p = abs_problem();
        let delta = QuasiconvexSpec::abs_coordinate(2, 1);
        let r = extend_preserving(&p, &delta, Some(1.0), &grid(), 13, &t).unwrap();
        assert!(r.report.all_passed(), "{:?}", r.report);
        // arctan(1) = π/4 at (0,1)
        let v = eval_refined(&r.f, &pt(&[0.0, 1.0]), &t).unwrap();
        assert!(v >= std::f64::consts::FRAC_PI_4 - 1e-6, "got {v}");
    }

    #[test]
    fn preserving_rejects_a_bad_gauge() {
        let t = tol();
        let p = abs_problem();
        // vanishes on the whole plane, not just the axis
        let delta = QuasiconvexSpec::constant(0.0, ConvexSetExpr::full(2));
        assert!(matches!(
            extend_preserving(&p, &delta, None, &grid(), 17, &t),
            Err(QextError::PremiseViolation(_))
        ));
    }

    #[test]
    fn trace_pairs_replay_the_hull_lemma() {
        let t = tol();
        let p = abs_problem();
        let r = extend_quasiconvex(&p, &grid(), 19, &t).unwrap();
        let scenarios = r.trace.scenarios(&p);
        assert!(!scenarios.is_empty());
        for (i, s) in scenarios.iter().enumerate() {
            let rep = verify::check_lemma42(s, 19 + i as u64, &t).unwrap();
            assert!(rep.all_passed(), "pair {i}: {rep:?}");
        }
    }

    #[test]
    fn family_from_extension_validates() {
        let t = tol();
        let f = QuasiconvexSpec::abs_coordinate(2, 0);
        let fam = family_from_extension(
            &f,
            &LevelGrid {
                lo: 0.0,
                hi: 8.0,
                step: 1.0,
            },
            23,
            &t,
        )
        .unwrap();
        let at2 = fam.at(2.0, &t).unwrap();
        assert!(member(&at2, &pt(&[1.9, 50.0]), Mode::Open, &t).unwrap());
        assert!(!member(&at2, &pt(&[2.1, 0.0]), Mode::Open, &t).unwrap());
    }
}
