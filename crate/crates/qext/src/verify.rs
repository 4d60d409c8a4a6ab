//! Property-check harness: sampled and LP-backed validation of families,
//! extensions and the hull identities, with witness-carrying reports.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Tolerances;
use crate::error::{QextError, Result};
use crate::functions::{BlockGen, FamilyBlock, OmegaFamily, QuasiconvexSpec};
use crate::geometry::{self, LinearProgram, LpStatus, Point};
use crate::set_algebra::{
    compile, contains_closure_relative, find_interior_point,
    flatten_halfspaces, member, ConvexSetExpr, FlatRow, Mode, Subspace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// One named check with sample counts and, on failure, replay data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub passed: usize,
    pub failed: usize,
    pub witness: Option<serde_json::Value>,
}

/// Deterministic (given seed and inputs) record of a check run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn new(seed: u64, tol: &Tolerances) -> Self {
        ValidationReport {
            seed,
            tolerances: *tol,
            checks: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        name: &str,
        passed: usize,
        failed: usize,
        witness: Option<serde_json::Value>,
    ) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            status: if failed == 0 {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            passed,
            failed,
            witness,
        });
    }

    pub fn push_skipped(&mut self, name: &str, note: &str) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            status: CheckStatus::Skipped,
            passed: 0,
            failed: 0,
            witness: Some(json!({ "note": note })),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn vec_json(x: &Point) -> serde_json::Value {
    json!(x.iter().copied().collect::<Vec<f64>>())
}

/// Rejection-samples `count` open-mode members of `expr` from a centered
/// box of the given radius (in carrier coordinates when a carrier is
/// supplied).
pub fn sample_in(
    expr: &ConvexSetExpr,
    carrier: Option<&Subspace>,
    radius: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
) -> Result<Vec<Point>> {
    let dim = match carrier {
        Some(c) => c.dim,
        None => expr
            .dim()
            .ok_or_else(|| QextError::Spec("cannot infer sampling dimension".into()))?,
    };
    let k = carrier.map(|c| c.basis.ncols()).unwrap_or(dim);
    let mut out = Vec::with_capacity(count);
    let max_attempts = count.max(1) * 2000;
    let mut attempts = 0usize;
    while out.len() < count && attempts < max_attempts {
        attempts += 1;
        let coeffs = DVector::from_fn(k, |_, _| rng.gen_range(-radius..radius));
        let x = match carrier {
            Some(c) => &c.basis * coeffs,
            None => coeffs,
        };
        if member(expr, &x, Mode::Open, tol)? {
            out.push(x);
        }
    }
    if out.len() < count {
        let rate = out.len() as f64 / attempts as f64;
        if out.is_empty() || rate < 0.001 {
            // The set is thin relative to the box. Pull box draws toward an
            // interior anchor along chords: for a convex open set the
            // membership interval on each ray from the anchor starts at 0,
            // so any fraction below the exit parameter is a valid sample.
            let anchor = match crate::set_algebra::find_interior_point(expr, carrier, tol) {
                Ok(a) => a,
                Err(QextError::EmptySet(_)) | Err(QextError::UnsupportedLeaf(_)) => {
                    return Err(QextError::SamplingStarvation(format!(
                        "{} accepted in {attempts} draws (radius {radius}); use a tighter box",
                        out.len()
                    )));
                }
                Err(e) => return Err(e),
            };
            while out.len() < count {
                let coeffs = DVector::from_fn(k, |_, _| rng.gen_range(-radius..radius));
                let x = match carrier {
                    Some(c) => &c.basis * coeffs,
                    None => coeffs,
                };
                if member(expr, &x, Mode::Open, tol)? {
                    out.push(x);
                    continue;
                }
                let (mut lo_t, mut hi_t) = (0.0f64, 1.0f64);
                for _ in 0..40 {
                    let mid = 0.5 * (lo_t + hi_t);
                    let q = &anchor + mid * (&x - &anchor);
                    if member(expr, &q, Mode::Open, tol)? {
                        lo_t = mid;
                    } else {
                        hi_t = mid;
                    }
                }
                let t = lo_t * rng.gen_range(0.05..0.95);
                let q = &anchor + t * (&x - &anchor);
                if member(expr, &q, Mode::Open, tol)? {
                    out.push(q);
                } else {
                    out.push(anchor.clone());
                }
            }
        }
    }
    Ok(out)
}

/// First carrier subspace found on a membership-relevant path of the tree,
/// used to aim rejection sampling at lower-dimensional sets.
pub fn leading_carrier(expr: &ConvexSetExpr) -> Option<Subspace> {
    match expr {
        ConvexSetExpr::OpenPolyhedron { carrier, .. } => carrier.clone(),
        ConvexSetExpr::Scale(_, c) | ConvexSetExpr::Translate(_, c) => leading_carrier(c),
        ConvexSetExpr::Intersect(cs) => cs.iter().find_map(leading_carrier),
        _ => None,
    }
}

fn unit_direction(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Supremum of `⟨a, x⟩` over the closure of `inner`, with the attaining
/// point. `Ok(None)` means unbounded; an `EmptySet` error means the inner
/// set is empty.
pub(crate) fn support_point(
    inner: &ConvexSetExpr,
    a: &DVector<f64>,
    tol: &Tolerances,
) -> Result<Option<(f64, Point)>> {
    let compiled = compile(inner, tol)?;
    let nv = compiled.dim + compiled.naux;
    let mut cons = DMatrix::zeros(compiled.m_point.nrows(), nv);
    for i in 0..compiled.m_point.nrows() {
        for j in 0..compiled.dim {
            cons[(i, j)] = compiled.m_point[(i, j)];
        }
        for j in 0..compiled.naux {
            cons[(i, compiled.dim + j)] = compiled.m_aux[(i, j)];
        }
    }
    let mut obj = DVector::zeros(nv);
    for j in 0..compiled.dim.min(a.len()) {
        obj[j] = a[j];
    }
    let lp = LinearProgram::new(obj, cons, compiled.rhs.clone());
    let out = geometry::lp_solve(&lp, tol)?;
    match out.status {
        LpStatus::Optimal => {
            let z = out.optimizer.unwrap();
            Ok(Some((
                out.objective.unwrap(),
                z.rows(0, compiled.dim).clone_owned(),
            )))
        }
        LpStatus::Unbounded => Ok(None),
        LpStatus::Infeasible => Err(QextError::EmptySet("inner set is empty".into())),
    }
}

/// `cl(inner) ⊂ outer`, closure taken relative to `ambient` when one is
/// given, with a fallback for non-polyhedral outers: exact per-row LP when
/// the outer flattens; otherwise sampled support points of the inner
/// closure are required to be open members of the outer. Support points on
/// the ambient boundary are nudged inside it first, since the relative
/// closure contains no boundary points.
pub fn contains_closure_general(
    inner: &ConvexSetExpr,
    outer: &ConvexSetExpr,
    ambient: Option<&ConvexSetExpr>,
    ndirs: usize,
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
) -> Result<(bool, Option<serde_json::Value>)> {
    if inner.is_empty_literal() {
        return Ok((true, None));
    }
    match flatten_halfspaces(outer, tol) {
        Ok(_) => {
            let ok = contains_closure_relative(inner, outer, ambient, tol)?;
            Ok((ok, if ok { None } else { Some(json!("row supremum exceeded")) }))
        }
        Err(QextError::UnsupportedLeaf(_)) => {
            let dim = inner
                .dim()
                .or_else(|| outer.dim())
                .ok_or_else(|| QextError::Spec("dimensionless containment query".into()))?;
            let mut dirs: Vec<DVector<f64>> = Vec::new();
            for j in 0..dim {
                let mut e = DVector::zeros(dim);
                e[j] = 1.0;
                dirs.push(e.clone());
                dirs.push(-e);
            }
            for _ in 0..ndirs {
                dirs.push(unit_direction(dim, rng));
            }
            let mut anchor: Option<Point> = None;
            for a in &dirs {
                match support_point(inner, a, tol) {
                    Ok(Some((_, p))) => {
                        let mut probe = p.clone();
                        if let Some(amb) = ambient {
                            if !member(amb, &probe, Mode::Open, tol)? {
                                // On the ambient boundary: the relative
                                // closure only contains nearby interior
                                // points, so test one of those instead.
                                if anchor.is_none() {
                                    anchor = find_interior_point(inner, None, tol).ok();
                                }
                                match &anchor {
                                    Some(c) => probe = &probe + 1e-6 * (c - &probe),
                                    None => continue,
                                }
                            }
                        }
                        if !member(outer, &probe, Mode::Open, tol)? {
                            return Ok((
                                false,
                                Some(json!({
                                    "direction": vec_json(a),
                                    "support_point": vec_json(&probe),
                                })),
                            ));
                        }
                    }
                    // Unbounded in this direction: no support point to
                    // test; the sampled check is silent here.
                    Ok(None) => {}
                    Err(QextError::EmptySet(_)) => return Ok((true, None)),
                    Err(e) => return Err(e),
                }
            }
            Ok((true, None))
        }
        Err(e) => Err(e),
    }
}

/// Checks the four family axioms — nesting, closure containment, coverage
/// of the ambient set, and empty intersection — on sampled level pairs and
/// ambient samples.
pub fn validate_omega(
    fam: &OmegaFamily,
    pairs: usize,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport::new(seed, tol);
    let radius = crate::config::EngineConfig::default().sample_radius;
    let carrier = leading_carrier(&fam.ambient);
    let ambient_samples = sample_in(&fam.ambient, carrier.as_ref(), radius, samples, &mut rng, tol)?;

    // Mix wide and narrow level gaps: wide pairs exercise cross-block
    // containment, narrow ones catch closure failures confined to a single
    // block.
    let span = (fam.hi - fam.lo).max(1e-6);
    let mut level_pairs = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let gap = if i % 2 == 0 {
            1.0f64.min(0.5 * span)
        } else {
            0.1 * span
        };
        let a = fam.lo + rng.gen_range(0.0..(span - gap).max(1e-9));
        let b = fam.hi.min(a + gap * (1.0 + rng.gen_range(0.0..1.0)));
        level_pairs.push((a, b));
    }

    // Nesting: membership at the lower level implies membership above.
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    for &(a, b) in &level_pairs {
        let da = fam.at(a, tol)?;
        let db = fam.at(b, tol)?;
        for x in &ambient_samples {
            if member(&da, x, Mode::Open, tol)? {
                if member(&db, x, Mode::Open, tol)? {
                    pass += 1;
                } else {
                    fail += 1;
                    witness.get_or_insert(json!({
                        "alpha": a, "beta": b, "point": vec_json(x)
                    }));
                }
            }
        }
    }
    report.push("nesting", pass, fail, witness);

    // Closure containment: cl D_α ⊂ D_β for sampled α < β.
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    for &(a, b) in &level_pairs {
        let da = fam.at(a, tol)?;
        let db = fam.at(b, tol)?;
        let (ok, w) = contains_closure_general(&da, &db, Some(&fam.ambient), 8, &mut rng, tol)?;
        if ok {
            pass += 1;
        } else {
            fail += 1;
            witness.get_or_insert(json!({ "alpha": a, "beta": b, "detail": w }));
        }
    }
    report.push("closure-containment", pass, fail, witness);

    // Coverage: every ambient sample appears at some level (the top level,
    // extrapolated upward when the family's generators allow it).
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    for x in &ambient_samples {
        let mut hi = fam.hi;
        let mut covered = false;
        for _ in 0..8 {
            if member(&fam.at(hi, tol)?, x, Mode::Open, tol)? {
                covered = true;
                break;
            }
            hi = fam.lo + 2.0 * (hi - fam.lo).max(1.0);
        }
        if covered {
            pass += 1;
        } else {
            fail += 1;
            witness.get_or_insert(json!({ "point": vec_json(x), "top": hi }));
        }
    }
    report.push("union-coverage", pass, fail, witness);

    // Empty intersection: below the declared emptiness level no sample is
    // a member.
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    let bottom = fam.at(fam.lo - 1.0, tol)?;
    for x in &ambient_samples {
        if member(&bottom, x, Mode::Open, tol)? {
            fail += 1;
            witness.get_or_insert(json!({ "point": vec_json(x), "level": fam.lo - 1.0 }));
        } else {
            pass += 1;
        }
    }
    report.push("empty-intersection", pass, fail, witness);

    Ok(report)
}

/// Evaluation with an eight-fold finer bisection resolution, so that
/// comparisons at the caller's tolerance are not dominated by bisection
/// error.
pub fn eval_refined(f: &QuasiconvexSpec, x: &Point, tol: &Tolerances) -> Result<f64> {
    let mut fine = *tol;
    fine.bisect = tol.bisect / 8.0;
    f.evaluate(x, &fine)
}

/// Samples random segments inside `domain` and checks
/// `f((1−t)x + ty) ≤ max(f(x), f(y)) + check_tol`.
pub fn check_quasiconvex(
    f: &QuasiconvexSpec,
    domain: &ConvexSetExpr,
    segments: usize,
    check_tol: f64,
    seed: u64,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport::new(seed, tol);
    let radius = crate::config::EngineConfig::default().sample_radius;
    let carrier = leading_carrier(domain);
    let endpoints = sample_in(domain, carrier.as_ref(), radius, 2 * segments, &mut rng, tol)?;
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    for pair in endpoints.chunks_exact(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let t: f64 = rng.gen_range(0.0001..0.9999);
        let mid = x * (1.0 - t) + y * t;
        let fx = eval_refined(f, x, tol)?;
        let fy = eval_refined(f, y, tol)?;
        let fm = eval_refined(f, &mid, tol)?;
        if fm <= fx.max(fy) + check_tol {
            pass += 1;
        } else {
            fail += 1;
            witness.get_or_insert(json!({
                "x": vec_json(x), "y": vec_json(y), "t": t,
                "f_x": fx, "f_y": fy, "f_mid": fm
            }));
        }
    }
    report.push("quasiconvexity", pass, fail, witness);
    Ok(report)
}

/// `|F(y) − f(y)| ≤ check_tol` at Y-samples inside dom f.
pub fn check_extension(
    big_f: &QuasiconvexSpec,
    f: &QuasiconvexSpec,
    y: &Subspace,
    samples: usize,
    check_tol: f64,
    seed: u64,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport::new(seed, tol);
    let radius = crate::config::EngineConfig::default().sample_radius;
    let pts = sample_in(&f.domain(), Some(y), radius, samples, &mut rng, tol)?;
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    for p in &pts {
        let fv = eval_refined(f, p, tol)?;
        let bv = eval_refined(big_f, p, tol)?;
        if (fv - bv).abs() <= check_tol {
            pass += 1;
        } else {
            fail += 1;
            witness.get_or_insert(json!({
                "point": vec_json(p), "f": fv, "F": bv
            }));
        }
    }
    report.push("extension-agreement", pass, fail, witness);
    Ok(report)
}

/// Exact minimizer of a max-affine spec over its domain (and optionally a
/// subspace), by the standard epigraph LP.
pub fn argmin_max_affine(
    pieces: &[(DVector<f64>, f64)],
    domain: &ConvexSetExpr,
    carrier: Option<&Subspace>,
    tol: &Tolerances,
) -> Result<(Point, f64)> {
    let dim = pieces
        .first()
        .map(|(a, _)| a.len())
        .ok_or_else(|| QextError::Spec("empty max-affine".into()))?;
    let compiled = compile(domain, tol)?;
    let nv = dim + compiled.naux + 1; // [x; aux; s]
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..compiled.m_point.nrows() {
        let mut r = DVector::zeros(nv);
        for j in 0..dim {
            r[j] = compiled.m_point[(i, j)];
        }
        for j in 0..compiled.naux {
            r[dim + j] = compiled.m_aux[(i, j)];
        }
        rows.push(r);
        rhs.push(compiled.rhs[i]);
    }
    for (a, b) in pieces {
        let mut r = DVector::zeros(nv);
        for j in 0..dim {
            r[j] = a[j];
        }
        r[nv - 1] = -1.0;
        rows.push(r);
        rhs.push(-b);
    }
    if let Some(c) = carrier {
        for j in 0..c.complement.ncols() {
            let q = c.complement.column(j);
            for sign in [1.0, -1.0] {
                let mut r = DVector::zeros(nv);
                for i in 0..dim {
                    r[i] = sign * q[i];
                }
                rows.push(r);
                rhs.push(0.0);
            }
        }
    }
    let m = rows.len();
    let mut cons = DMatrix::zeros(m, nv);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..nv {
            cons[(i, j)] = r[j];
        }
    }
    let mut obj = DVector::zeros(nv);
    obj[nv - 1] = -1.0; // maximize −s = minimize s
    let lp = LinearProgram::new(obj, cons, DVector::from_vec(rhs));
    let out = geometry::lp_solve(&lp, tol)?;
    match out.status {
        LpStatus::Optimal => {
            let z = out.optimizer.unwrap();
            Ok((z.rows(0, dim).clone_owned(), z[nv - 1]))
        }
        LpStatus::Unbounded => Err(QextError::SolverFailure("minimum is −∞".into())),
        LpStatus::Infeasible => Err(QextError::EmptySet("empty feasible region".into())),
    }
}

/// Best minimizer candidate for a spec: exact LP for (transformed)
/// max-affine specs, best-of-samples otherwise.
fn argmin_candidate(
    f: &QuasiconvexSpec,
    y: &Subspace,
    samples: &[Point],
    tol: &Tolerances,
) -> Result<Point> {
    match f {
        QuasiconvexSpec::MaxAffine { pieces, domain } => {
            Ok(argmin_max_affine(pieces, domain, Some(y), tol)?.0)
        }
        QuasiconvexSpec::Transformed { inner, .. } => argmin_candidate(inner, y, samples, tol),
        QuasiconvexSpec::Restriction { parent, .. } => argmin_candidate(parent, y, samples, tol),
        _ => {
            let mut best: Option<(f64, Point)> = None;
            for p in samples {
                let v = f.evaluate(p, tol)?;
                if best.as_ref().map(|(b, _)| v < *b).unwrap_or(true) {
                    best = Some((v, p.clone()));
                }
            }
            best.map(|(_, p)| p)
                .ok_or_else(|| QextError::SamplingStarvation("no minimizer candidate".into()))
        }
    }
}

/// The three range/minimizer-preservation sub-checks: range containment
/// (optional), off-subspace minimizer separation, and on-subspace argmin
/// value retention.
pub fn check_preservation(
    big_f: &QuasiconvexSpec,
    f: &QuasiconvexSpec,
    a: f64,
    b: f64,
    y: &Subspace,
    samples: usize,
    check_tol: f64,
    seed: u64,
    tol: &Tolerances,
    range_check: bool,
) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport::new(seed, tol);
    let radius = crate::config::EngineConfig::default().sample_radius;

    let y_samples = sample_in(&f.domain(), Some(y), radius, samples, &mut rng, tol)?;
    let domain_a = big_f.domain();
    let a_samples = sample_in(&domain_a, leading_carrier(&domain_a).as_ref(), radius, samples, &mut rng, tol)?;

    // Range containment: f is continuous on a convex trace, so its range
    // is the interval between its infimum and supremum; every sampled
    // F-value must fall inside it.
    if range_check {
        let (mut pass, mut fail) = (0usize, 0usize);
        let mut witness = None;
        for p in &a_samples {
            let v = eval_refined(big_f, p, tol)?;
            if v >= a - check_tol && v <= b + check_tol {
                pass += 1;
            } else {
                fail += 1;
                witness.get_or_insert(json!({
                    "point": vec_json(p), "F": v, "range": [a, b]
                }));
            }
        }
        report.push("range-containment", pass, fail, witness);
    } else {
        report.push_skipped("range-containment", "not the same range");
    }

    // Off-subspace separation: F stays strictly above the infimum away
    // from Y.
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    for p in &a_samples {
        if y.off_distance(p) < 0.05 {
            continue;
        }
        let v = eval_refined(big_f, p, tol)?;
        if v > a + check_tol {
            pass += 1;
        } else {
            fail += 1;
            witness.get_or_insert(json!({ "point": vec_json(p), "F": v, "inf": a }));
        }
    }
    report.push("off-subspace-minimizers", pass, fail, witness);

    // On-subspace argmin retention.
    let ystar = argmin_candidate(f, y, &y_samples, tol)?;
    let v = eval_refined(big_f, &ystar, tol)?;
    if (v - a).abs() <= check_tol {
        report.push("argmin-value", 1, 0, None);
    } else {
        report.push(
            "argmin-value",
            0,
            1,
            Some(json!({ "point": vec_json(&ystar), "F": v, "inf": a })),
        );
    }
    Ok(report)
}

/// Sampled two-sided identity `conv(A' ∪ C) ∩ Y = conv[(A' ∩ Y) ∪ C]` on
/// Y-points, with the relative-openness sub-check on accepted points.
pub fn check_conv_identity(
    a_expr: &ConvexSetExpr,
    c_expr: &ConvexSetExpr,
    y: &Subspace,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport::new(seed, tol);
    let radius = crate::config::EngineConfig::default().sample_radius;
    let lhs = ConvexSetExpr::hull(a_expr.clone(), c_expr.clone());
    let rhs = ConvexSetExpr::hull(
        ConvexSetExpr::intersect(vec![a_expr.clone(), ConvexSetExpr::subspace(y.clone())]),
        c_expr.clone(),
    );
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    let mut accepted: Vec<Point> = Vec::new();
    for _ in 0..samples {
        let coeffs = DVector::from_fn(y.basis.ncols(), |_, _| rng.gen_range(-radius..radius));
        let p = &y.basis * coeffs;
        let in_l = member(&lhs, &p, Mode::Open, tol)?;
        let in_r = member(&rhs, &p, Mode::Open, tol)?;
        if in_l == in_r {
            pass += 1;
            if in_r && accepted.len() < 100 {
                accepted.push(p);
            }
        } else {
            fail += 1;
            witness.get_or_insert(json!({
                "point": vec_json(&p), "in_full_hull": in_l, "in_traced_hull": in_r
            }));
        }
    }
    report.push("hull-trace-identity", pass, fail, witness);

    // Relative openness of the traced hull: a small ball inside Y around
    // each accepted point stays inside (closed mode suffices at this
    // radius).
    let r = 10.0 * tol.open;
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    for p in &accepted {
        let mut ok = true;
        for j in 0..y.basis.ncols() {
            let dir = y.basis.column(j).clone_owned();
            for sign in [1.0, -1.0] {
                let q = p + &dir * (sign * r);
                if !member(&rhs, &q, Mode::Closed, tol)? {
                    ok = false;
                }
            }
        }
        if ok {
            pass += 1;
        } else {
            fail += 1;
            witness.get_or_insert(json!({ "point": vec_json(p), "radius": r }));
        }
    }
    report.push("relative-openness", pass, fail, witness);
    Ok(report)
}

/// Hypotheses and conclusion of the hull-closure lemma: `U` relatively
/// thick inside `D₂`, `d` bounded on `U`, traces of `U` inside `C`, and
/// then `cl conv(U ∪ C) ∩ A ⊂ D₂`.
#[derive(Debug, Clone)]
pub struct Lemma42Scenario {
    pub u: ConvexSetExpr,
    pub c: ConvexSetExpr,
    pub d2: ConvexSetExpr,
    /// Neighborhood radius: `U + ball(w) ⊆ D₂`.
    pub w: f64,
    pub d: QuasiconvexSpec,
    pub a: ConvexSetExpr,
    pub y: Subspace,
}

/// Sampling radius adapted to a bounded set: the largest axis support
/// value, or `None` when the set is unbounded in some axis direction.
fn bounding_radius(expr: &ConvexSetExpr, tol: &Tolerances) -> Result<Option<f64>> {
    let dim = match expr.dim() {
        Some(d) => d,
        None => return Ok(None),
    };
    let mut r: f64 = 0.0;
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut a = DVector::zeros(dim);
            a[i] = sign;
            match support_point(expr, &a, tol) {
                Ok(Some((s, _))) => r = r.max(s.abs()),
                Ok(None) => return Ok(None),
                Err(QextError::EmptySet(_)) => return Ok(Some(0.0)),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Some(r * 1.01 + 1e-6))
}

pub fn check_lemma42(
    s: &Lemma42Scenario,
    seed: u64,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport::new(seed, tol);
    let radius = crate::config::EngineConfig::default().sample_radius;
    let u_radius = bounding_radius(&s.u, tol)?
        .unwrap_or(radius)
        .clamp(1e-3, radius);

    // (a) U ∩ Y ⊆ C on samples.
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    match sample_in(
        &ConvexSetExpr::intersect(vec![
            s.u.clone(),
            ConvexSetExpr::subspace(s.y.clone()),
        ]),
        Some(&s.y),
        u_radius,
        200,
        &mut rng,
        tol,
    ) {
        Ok(pts) => {
            for p in &pts {
                if member(&s.c, p, Mode::Open, tol)? {
                    pass += 1;
                } else {
                    fail += 1;
                    witness.get_or_insert(json!({ "point": vec_json(p) }));
                }
            }
        }
        Err(QextError::SamplingStarvation(_)) => {} // empty trace: vacuous
        Err(e) => return Err(e),
    }
    report.push("hypothesis-trace-in-C", pass, fail, witness);

    // (b) U + ball(w) ⊆ D₂: per-row supremum when D₂ flattens, sampled
    // ball probes otherwise.
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    match flatten_halfspaces(&s.d2, tol) {
        Ok(rows) => {
            for row in &rows {
                if let FlatRow::Strict { a, b } = row {
                    match support_point(&s.u, a, tol) {
                        Ok(Some((sup, p))) => {
                            if sup + s.w * a.norm() <= *b {
                                pass += 1;
                            } else {
                                fail += 1;
                                witness.get_or_insert(json!({
                                    "row_sup": sup, "rhs": b, "at": vec_json(&p)
                                }));
                            }
                        }
                        Ok(None) => {
                            fail += 1;
                            witness.get_or_insert(json!("U unbounded across a D2 row"));
                        }
                        Err(QextError::EmptySet(_)) => pass += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Err(QextError::UnsupportedLeaf(_)) => {
            let pts = sample_in(&s.u, None, u_radius, 100, &mut rng, tol)?;
            let dim = pts.first().map(|p| p.len()).unwrap_or(0);
            for p in &pts {
                let dir = unit_direction(dim, &mut rng);
                let q = p + dir * s.w;
                if member(&s.d2, &q, Mode::Closed, tol)? {
                    pass += 1;
                } else {
                    fail += 1;
                    witness.get_or_insert(json!({ "point": vec_json(&q) }));
                }
            }
        }
        Err(e) => return Err(e),
    }
    report.push("hypothesis-neighborhood-gap", pass, fail, witness);

    // (c) d bounded on U: supremum of every affine piece is finite.
    let (mut pass, mut fail) = (0usize, 0usize);
    let mut witness = None;
    match &s.d {
        QuasiconvexSpec::MaxAffine { pieces, .. } => {
            for (av, bv) in pieces {
                match support_point(&s.u, av, tol) {
                    Ok(Some((sup, _))) => {
                        let _ = sup + bv;
                        pass += 1;
                    }
                    Ok(None) => {
                        fail += 1;
                        witness.get_or_insert(json!({ "direction": vec_json(av) }));
                    }
                    Err(QextError::EmptySet(_)) => pass += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        _ => {
            let pts = sample_in(&s.u, None, u_radius, 100, &mut rng, tol)?;
            for p in &pts {
                if s.d.evaluate(p, tol)?.is_finite() {
                    pass += 1;
                } else {
                    fail += 1;
                }
            }
        }
    }
    report.push("hypothesis-gauge-bounded", pass, fail, witness);

    // (d) cl C ⊆ D₂.
    let (ok, w) = contains_closure_general(&s.c, &s.d2, Some(&s.a), 8, &mut rng, tol)?;
    report.push(
        "hypothesis-closure-of-C",
        ok as usize,
        !ok as usize,
        if ok { None } else { w },
    );

    if !report.all_passed() {
        report.push_skipped("conclusion-hull-closure", "hypotheses failed");
        return Ok(report);
    }

    let hull = ConvexSetExpr::hull(s.u.clone(), s.c.clone());
    let inner = match &s.a {
        ConvexSetExpr::Full { .. } => hull,
        a => ConvexSetExpr::intersect(vec![hull, a.clone()]),
    };
    let (ok, w) = contains_closure_general(&inner, &s.d2, Some(&s.a), 12, &mut rng, tol)?;
    report.push(
        "conclusion-hull-closure",
        ok as usize,
        !ok as usize,
        if ok { None } else { w },
    );
    Ok(report)
}

/// The nondecreasing step family whose reconstructed function is the
/// characteristic function of `[1, ∞)` — quasiconvex but not lower
/// semicontinuous, and failing exactly the closure axiom.
pub fn counterexample_family() -> OmegaFamily {
    let mut a = DMatrix::zeros(1, 1);
    a[(0, 0)] = 1.0;
    let halfline = ConvexSetExpr::polyhedron(a, DVector::from_vec(vec![1.0]));
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

/// Builds the step family, shows the closure axiom failing with the level
/// pair (0.2, 0.5), and exhibits the lower-semicontinuity jump of the
/// reconstructed function across x = 1.
pub fn lsc_counterexample_demo(tol: &Tolerances) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fam = counterexample_family();
    let mut report = ValidationReport::new(0, tol);

    // The closure axiom must fail at the documented witness pair: the
    // closed half-line is not inside the open one.
    let d_low = fam.at(0.2, tol)?;
    let d_high = fam.at(0.5, tol)?;
    let (contained, _) = contains_closure_general(&d_low, &d_high, None, 8, &mut rng, tol)?;
    if contained {
        report.push(
            "closure-axiom-fails",
            0,
            1,
            Some(json!("closure containment unexpectedly held at (0.2, 0.5)")),
        );
    } else {
        report.push(
            "closure-axiom-fails",
            1,
            0,
            Some(json!({ "alpha": 0.2, "beta": 0.5 })),
        );
    }

    // The general validator must flag the same axiom and no other ones.
    let inner = validate_omega(&fam, 20, 200, 7, tol)?;
    let closure_flagged = inner
        .check("closure-containment")
        .map(|c| c.status == CheckStatus::Fail)
        .unwrap_or(false);
    let others_pass = inner
        .checks
        .iter()
        .filter(|c| c.name != "closure-containment")
        .all(|c| c.status != CheckStatus::Fail);
    report.push(
        "validator-flags-closure-only",
        (closure_flagged && others_pass) as usize,
        !(closure_flagged && others_pass) as usize,
        None,
    );

    // Reconstructed function: 0 below 1, 1 from 1 on — a unit jump.
    let f = QuasiconvexSpec::FamilyDefined {
        family: Box::new(fam),
        domain: ConvexSetExpr::full(1),
    };
    let left = eval_refined(&f, &DVector::from_vec(vec![1.0 - 1e-6]), tol)?;
    let right = eval_refined(&f, &DVector::from_vec(vec![1.5]), tol)?;
    let jump_ok = left.abs() <= 2.0 * tol.bisect
        && (right - 1.0).abs() <= 2.0 * tol.bisect
        && right - left >= 1.0 - 2.0 * tol.bisect;
    report.push(
        "lsc-jump",
        jump_ok as usize,
        !jump_ok as usize,
        Some(json!({ "left_of_1": left, "right_of_1": right })),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::MonotoneMap;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn pt(coords: &[f64]) -> Point {
        DVector::from_row_slice(coords)
    }

    #[test]
    fn abs_is_quasiconvex() {
        let f = QuasiconvexSpec::abs_coordinate(2, 0);
        let r = check_quasiconvex(&f, &ConvexSetExpr::full(2), 300, 1e-6, 1, &tol()).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn negated_abs_fails_quasiconvexity() {
        // −|x₁| as a family-free spec is not expressible with MaxAffine,
        // so flip through a decreasing check instead: max-affine of the
        // midpoint dominating is simulated by a concave witness function.
        let f = QuasiconvexSpec::MaxAffine {
            pieces: vec![(pt(&[1.0, 0.0]), 0.0)],
            domain: ConvexSetExpr::full(2),
        };
        // x₁ is affine hence quasiconvex: sanity that the harness passes it
        let r = check_quasiconvex(&f, &ConvexSetExpr::full(2), 100, 1e-6, 2, &tol()).unwrap();
        assert!(r.all_passed());
    }

    #[test]
    fn arctan_composite_is_quasiconvex() {
        let f = QuasiconvexSpec::transformed(
            QuasiconvexSpec::abs_coordinate(2, 0),
            MonotoneMap::ArctanScaled { eps: 1.0, offset: 0.0 },
        );
        let r = check_quasiconvex(&f, &ConvexSetExpr::full(2), 300, 1e-6, 3, &tol()).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn radial_family_passes_all_axioms() {
        let fam = crate::functions::family_from_function(
            &QuasiconvexSpec::abs_coordinate(2, 0),
            &crate::config::LevelGrid {
                lo: 0.0,
                hi: 8.0,
                step: 1.0,
            },
        );
        let r = validate_omega(&fam, 20, 200, 11, &tol()).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn all_full_family_fails_empty_intersection() {
        let fam = OmegaFamily {
            blocks: vec![FamilyBlock {
                start: f64::NEG_INFINITY,
                gen: BlockGen::Const(ConvexSetExpr::full(2)),
            }],
            ambient: ConvexSetExpr::full(2),
            clip: None,
            lo: -4.0,
            hi: 4.0,
        };
        let r = validate_omega(&fam, 10, 100, 13, &tol()).unwrap();
        let c = r.check("empty-intersection").unwrap();
        assert_eq!(c.status, CheckStatus::Fail);
    }

    #[test]
    fn counterexample_demo_matches_documentation() {
        let r = lsc_counterexample_demo(&tol()).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn extension_check_flags_disagreement() {
        let f = QuasiconvexSpec::abs_coordinate(2, 0);
        let g = QuasiconvexSpec::MaxAffine {
            pieces: vec![(pt(&[2.0, 0.0]), 0.0), (pt(&[-2.0, 0.0]), 0.0)],
            domain: ConvexSetExpr::full(2),
        };
        let y = Subspace::axis(2, 0);
        let r = check_extension(&g, &f, &y, 100, 1e-6, 5, &tol()).unwrap();
        assert!(!r.all_passed());
        let r = check_extension(&f, &f, &y, 100, 1e-6, 5, &tol()).unwrap();
        assert!(r.all_passed());
    }

    #[test]
    fn hand_lemma_scenario_passes() {
        let y = Subspace::axis(2, 0);
        let s = Lemma42Scenario {
            u: ConvexSetExpr::open_box(2, -1.0, 1.0),
            c: ConvexSetExpr::interval_on_axis(2, 0, -1.0, 3.0),
            d2: {
                let a = DMatrix::from_row_slice(4, 2, &[
                    1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0,
                ]);
                ConvexSetExpr::polyhedron(a, DVector::from_vec(vec![4.0, 2.0, 2.0, 2.0]))
            },
            w: 0.5,
            d: QuasiconvexSpec::abs_coordinate(2, 1),
            a: ConvexSetExpr::full(2),
            y,
        };
        let r = check_lemma42(&s, 17, &tol()).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn gap_removal_fails_hypothesis() {
        let y = Subspace::axis(2, 0);
        let u = ConvexSetExpr::open_box(2, -1.0, 1.0);
        let s = Lemma42Scenario {
            c: ConvexSetExpr::interval_on_axis(2, 0, -0.5, 0.5),
            d2: u.clone(),
            u: u.clone(),
            w: 0.5,
            d: QuasiconvexSpec::abs_coordinate(2, 1),
            a: ConvexSetExpr::full(2),
            y,
        };
        let r = check_lemma42(&s, 19, &tol()).unwrap();
        let c = r.check("hypothesis-neighborhood-gap").unwrap();
        assert_eq!(c.status, CheckStatus::Fail);
        let concl = r.check("conclusion-hull-closure").unwrap();
        assert_eq!(concl.status, CheckStatus::Skipped);
    }

    #[test]
    fn conv_identity_hand_case() {
        let t = tol();
        let y = Subspace::axis(2, 0);
        let a_expr = ConvexSetExpr::open_box(2, -1.0, 1.0);
        let c_expr = ConvexSetExpr::interval_on_axis(2, 0, 0.0, 3.0);
        let r = check_conv_identity(&a_expr, &c_expr, &y, 300, 23, &t).unwrap();
        assert!(r.all_passed(), "{r:?}");
        // spot values on the two sides
        let lhs = ConvexSetExpr::hull(a_expr.clone(), c_expr.clone());
        assert!(member(&lhs, &pt(&[2.5, 0.0]), Mode::Open, &t).unwrap());
        assert!(!member(&lhs, &pt(&[3.5, 0.0]), Mode::Open, &t).unwrap());
    }

    #[test]
    fn reports_are_deterministic() {
        let f = QuasiconvexSpec::abs_coordinate(2, 0);
        let r1 = check_quasiconvex(&f, &ConvexSetExpr::full(2), 50, 1e-6, 42, &tol()).unwrap();
        let r2 = check_quasiconvex(&f, &ConvexSetExpr::full(2), 50, 1e-6, 42, &tol()).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn inflated_level_fails_nesting() {
        // corrupt the radial family: one early level blown up past later ones
        let base = ConvexSetExpr::open_box(2, -1.0, 1.0);
        let fam = OmegaFamily {
            blocks: vec![
                FamilyBlock {
                    start: 0.0,
                    gen: BlockGen::Scaled {
                        center: DVector::zeros(2),
                        base: base.clone(),
                        slope: 1.0,
                        intercept: 0.0,
                    },
                },
                FamilyBlock {
                    start: 2.0,
                    gen: BlockGen::Scaled {
                        center: DVector::zeros(2),
                        base,
                        slope: 1.0,
                        intercept: 100.0,
                    },
                },
                FamilyBlock {
                    start: 3.0,
                    gen: BlockGen::Scaled {
                        center: DVector::zeros(2),
                        base: ConvexSetExpr::open_box(2, -1.0, 1.0),
                        slope: 1.0,
                        intercept: 0.0,
                    },
                },
            ],
            ambient: ConvexSetExpr::full(2),
            clip: None,
            lo: 0.0,
            hi: 8.0,
        };
        let r = validate_omega(&fam, 30, 200, 29, &tol()).unwrap();
        assert!(!r.all_passed());
    }
}
