//! JSON problem files and machine-readable run reports.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{LevelGrid, Tolerances};
use crate::engine::ExtensionProblem;
use crate::error::{QextError, Result};
use crate::functions::{MonotoneMap, QuasiconvexSpec};
use crate::set_algebra::{ConvexSetExpr, Subspace};
use crate::verify::ValidationReport;

pub const SCHEMA_VERSION: u32 = 1;

/// One half-space row `⟨a, x⟩ < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceJson {
    pub a: Vec<f64>,
    pub b: f64,
}

/// The ambient domain: `"full"` or an open polyhedron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainJson {
    Tag(String),
    Polyhedron { rows: Vec<HalfSpaceJson> },
}

/// A monotone scalar map, mirroring the library's enum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapJson {
    Identity,
    Affine { m: f64, c: f64 },
    ArctanScaled { eps: f64, offset: f64 },
    NegLogGap { b: f64 },
    ExpGap { b: f64 },
    Log,
    SquareNonneg,
}

impl MapJson {
    pub fn to_map(&self) -> MonotoneMap {
        match self {
            MapJson::Identity => MonotoneMap::Identity,
            MapJson::Affine { m, c } => MonotoneMap::Affine { m: *m, c: *c },
            MapJson::ArctanScaled { eps, offset } => MonotoneMap::ArctanScaled {
                eps: *eps,
                offset: *offset,
            },
            MapJson::NegLogGap { b } => MonotoneMap::NegLogGap { b: *b },
            MapJson::ExpGap { b } => MonotoneMap::ExpGap { b: *b },
            MapJson::Log => MonotoneMap::Log,
            MapJson::SquareNonneg => MonotoneMap::SquareNonneg,
        }
    }
}

/// A function spec, mirroring the library's enum with a kind tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionJson {
    MaxAffine { pieces: Vec<HalfSpaceJson> },
    Constant { value: f64 },
    AbsCoordinate { index: usize },
    Coordinate { index: usize },
    Transformed { inner: Box<FunctionJson>, map: MapJson },
    TruncateAbove { inner: Box<FunctionJson>, cap: f64 },
}

/// A complete problem: ambient space, subspace, domain, trace function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub schema_version: u32,
    pub dim: usize,
    /// Basis row vectors spanning the subspace.
    pub subspace: Vec<Vec<f64>>,
    pub domain: DomainJson,
    /// Absent for family-only demos.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionJson>,
    /// Named built-in family demo (e.g. `"lsc_counterexample"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl ProblemFile {
    pub fn from_str(text: &str) -> Result<Self> {
        let p: ProblemFile = serde_json::from_str(text)
            .map_err(|e| QextError::ProblemFile(format!("{e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(QextError::ProblemFile(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.dim == 0 {
            return Err(QextError::ProblemFile("dim: must be positive".into()));
        }
        if self.subspace.is_empty() {
            return Err(QextError::ProblemFile(
                "subspace: at least one basis vector required".into(),
            ));
        }
        for (i, row) in self.subspace.iter().enumerate() {
            if row.len() != self.dim {
                return Err(QextError::ProblemFile(format!(
                    "subspace[{i}]: length {} ≠ dim {}",
                    row.len(),
                    self.dim
                )));
            }
        }
        if let DomainJson::Tag(t) = &self.domain {
            if t != "full" {
                return Err(QextError::ProblemFile(format!(
                    "domain: unknown tag {t:?} (use \"full\" or {{\"rows\": …}})"
                )));
            }
        }
        if let DomainJson::Polyhedron { rows } = &self.domain {
            for (i, r) in rows.iter().enumerate() {
                if r.a.len() != self.dim {
                    return Err(QextError::ProblemFile(format!(
                        "domain.rows[{i}].a: length {} ≠ dim {}",
                        r.a.len(),
                        self.dim
                    )));
                }
            }
        }
        if self.function.is_none() && self.family.is_none() {
            return Err(QextError::ProblemFile(
                "either function or family must be present".into(),
            ));
        }
        Ok(())
    }

    pub fn subspace_obj(&self) -> Result<Subspace> {
        let rows: Vec<DVector<f64>> = self
            .subspace
            .iter()
            .map(|r| DVector::from_row_slice(r))
            .collect();
        Subspace::from_spanning(self.dim, &rows)
    }

    pub fn domain_expr(&self) -> ConvexSetExpr {
        match &self.domain {
            DomainJson::Tag(_) => ConvexSetExpr::full(self.dim),
            DomainJson::Polyhedron { rows } => {
                let m = DMatrix::from_fn(rows.len(), self.dim, |i, j| rows[i].a[j]);
                let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.b));
                ConvexSetExpr::polyhedron(m, b)
            }
        }
    }

    pub fn grid_obj(&self) -> LevelGrid {
        match &self.grid {
            Some(g) => LevelGrid {
                lo: g.lo,
                hi: g.hi,
                step: g.step,
            },
            None => LevelGrid::default(),
        }
    }

    fn function_spec(&self, trace_domain: ConvexSetExpr) -> Result<QuasiconvexSpec> {
        let f = self
            .function
            .as_ref()
            .ok_or_else(|| QextError::ProblemFile("function: missing".into()))?;
        build_function(f, self.dim, trace_domain)
    }

    /// The problem as a library extension problem, premises certified.
    pub fn to_problem(&self, tol: &Tolerances) -> Result<ExtensionProblem> {
        let y = self.subspace_obj()?;
        let a = self.domain_expr();
        let trace = match &self.domain {
            DomainJson::Tag(_) => ConvexSetExpr::subspace(y.clone()),
            _ => ConvexSetExpr::intersect(vec![
                a.clone(),
                ConvexSetExpr::subspace(y.clone()),
            ]),
        };
        let f = self.function_spec(trace)?;
        ExtensionProblem::new(y, a, f, tol)
    }
}

fn build_function(
    f: &FunctionJson,
    dim: usize,
    domain: ConvexSetExpr,
) -> Result<QuasiconvexSpec> {
    Ok(match f {
        FunctionJson::MaxAffine { pieces } => {
            for (i, p) in pieces.iter().enumerate() {
                if p.a.len() != dim {
                    return Err(QextError::ProblemFile(format!(
                        "function.pieces[{i}].a: length {} ≠ dim {dim}",
                        p.a.len()
                    )));
                }
            }
            QuasiconvexSpec::MaxAffine {
                pieces: pieces
                    .iter()
                    .map(|p| (DVector::from_row_slice(&p.a), p.b))
                    .collect(),
                domain,
            }
        }
        FunctionJson::Constant { value } => QuasiconvexSpec::constant(*value, domain),
        FunctionJson::AbsCoordinate { index } => {
            check_index(*index, dim)?;
            let mut spec = QuasiconvexSpec::abs_coordinate(dim, *index);
            replace_domain(&mut spec, domain);
            spec
        }
        FunctionJson::Coordinate { index } => {
            check_index(*index, dim)?;
            let mut spec = QuasiconvexSpec::coordinate(dim, *index);
            replace_domain(&mut spec, domain);
            spec
        }
        FunctionJson::Transformed { inner, map } => QuasiconvexSpec::transformed(
            build_function(inner, dim, domain)?,
            map.to_map(),
        ),
        FunctionJson::TruncateAbove { inner, cap } => QuasiconvexSpec::TruncateAbove {
            inner: Box::new(build_function(inner, dim, domain)?),
            cap: *cap,
        },
    })
}

fn check_index(index: usize, dim: usize) -> Result<()> {
    if index >= dim {
        return Err(QextError::ProblemFile(format!(
            "function.index: {index} out of range for dim {dim}"
        )));
    }
    Ok(())
}

fn replace_domain(spec: &mut QuasiconvexSpec, domain: ConvexSetExpr) {
    if let QuasiconvexSpec::MaxAffine { domain: d, .. } = spec {
        *d = domain;
    }
}

/// Machine-readable record of one command run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub command: String,
    pub problem: ProblemFile,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
    pub reports: Vec<ValidationReport>,
    pub all_passed: bool,
    pub timing_ms: u128,
}

impl RunReport {
    pub fn new(command: &str, problem: ProblemFile, seed: u64) -> Self {
        RunReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            problem,
            seed,
            summary: None,
            reports: Vec::new(),
            all_passed: true,
            timing_ms: 0,
        }
    }

    pub fn push(&mut self, report: ValidationReport) {
        self.all_passed &= report.all_passed();
        self.reports.push(report);
    }
}
