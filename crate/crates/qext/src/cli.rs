//! Command-line surface: `qext extend | verify | eval` over JSON problem
//! files, with machine-readable reports and CSV sample emission.
//!
//! Exit codes: 0 success, 1 validation failure, 2 parse error,
//! 3 construction error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::config::Tolerances;
use crate::engine::{
    extend_by_projection, extend_preserving, extend_quasiconvex, ExtensionProblem,
};
use crate::error::{QextError, Result};
use crate::functions::QuasiconvexSpec;
use crate::problem::{ProblemFile, RunReport};
use crate::set_algebra::{member, Mode};
use crate::verify::{
    check_extension, check_quasiconvex, counterexample_family, eval_refined,
    lsc_counterexample_demo, validate_omega,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_CONSTRUCTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qext", version, about = "Quasiconvex extension toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Level-family construction.
    Engine,
    /// Composition with the subspace projector.
    Projection,
    /// Range- and minimizer-preserving wrapper.
    Preserve,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an extension and validate it.
    Extend {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "engine")]
        method: Method,
        /// Write an F-value sample grid to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Sample box for --csv: lower bound, upper bound, steps per axis.
        #[arg(long = "box", num_args = 3, value_names = ["LO", "HI", "STEPS"], requires = "csv", allow_negative_numbers = true)]
        box_spec: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run property checks on a problem or family file.
    Verify {
        file: PathBuf,
        /// Comma-separated subset of: quasiconvex, omega, extension.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the extension at points from a CSV file.
    Eval {
        file: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_enum, default_value = "engine")]
        method: Method,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn resolve_seed(flag: Option<u64>, file_seed: Option<u64>) -> u64 {
    flag.or(file_seed)
        .or_else(|| {
            std::env::var("QEXT_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0)
}

fn classify(e: &QextError) -> i32 {
    match e {
        QextError::ProblemFile(_) | QextError::Json(_) | QextError::Io(_) => EXIT_PARSE,
        _ => EXIT_CONSTRUCTION,
    }
}

/// Builds the requested extension, returning the function and the
/// validation reports to attach.
fn build_extension(
    p: &ExtensionProblem,
    method: Method,
    grid: &crate::config::LevelGrid,
    seed: u64,
    tol: &Tolerances,
) -> Result<(QuasiconvexSpec, Vec<crate::verify::ValidationReport>, serde_json::Value)> {
    match method {
        Method::Engine => {
            let r = extend_quasiconvex(p, grid, seed, tol)?;
            let summary = serde_json::json!({
                "method": "engine",
                "trace_levels": r.trace.levels.len(),
                "blocks": r.trace.blocks.len(),
            });
            Ok((r.f, vec![r.report], summary))
        }
        Method::Projection => {
            let f = extend_by_projection(p)?;
            let mut reports = Vec::new();
            reports.push(check_extension(&f, &p.f, &p.y, 200, 1e-6, seed, tol)?);
            reports.push(check_quasiconvex(&f, &p.a, 500, 1e-6, seed, tol)?);
            let summary = serde_json::json!({ "method": "projection" });
            Ok((f, reports, summary))
        }
        Method::Preserve => {
            let r = extend_preserving(p, &p.d, None, grid, seed, tol)?;
            let constant = r.trace.levels.is_empty() && r.trace.blocks.is_empty();
            let summary = serde_json::json!({
                "method": "preserve",
                "branch": if constant { "constant-shift" } else { "arctan-composite" },
            });
            Ok((r.f, vec![r.report], summary))
        }
    }
}

fn write_csv(
    path: &Path,
    f: &QuasiconvexSpec,
    p: &ExtensionProblem,
    box_spec: &[f64],
    tol: &Tolerances,
) -> Result<()> {
    let (lo, hi, steps) = (box_spec[0], box_spec[1], box_spec[2].max(2.0) as usize);
    let dim = p.dim;
    let mut out = std::fs::File::create(path)?;
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.push("F".into());
    header.push("f_on_trace".into());
    writeln!(out, "{}", header.join(","))?;

    let mut idx = vec![0usize; dim];
    loop {
        let x = DVector::from_iterator(
            dim,
            idx.iter()
                .map(|&i| lo + (hi - lo) * i as f64 / (steps - 1) as f64),
        );
        if member(&p.a, &x, Mode::Open, tol)? {
            let v = eval_refined(f, &x, tol)?;
            let trace_val = if p.y.off_distance(&x) <= tol.feas.sqrt() {
                format!("{:.9}", eval_refined(&p.f, &p.y.project(&x), tol)?)
            } else {
                String::new()
            };
            let coords: Vec<String> = x.iter().map(|c| format!("{c:.9}")).collect();
            writeln!(out, "{},{:.9},{}", coords.join(","), v, trace_val)?;
        }
        // odometer
        let mut k = 0;
        loop {
            if k == dim {
                return Ok(());
            }
            idx[k] += 1;
            if idx[k] < steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn cmd_extend(
    file: &Path,
    method: Method,
    csv: Option<&Path>,
    box_spec: Option<&[f64]>,
    seed_flag: Option<u64>,
) -> i32 {
    let tol = Tolerances::default();
    let started = Instant::now();
    let pf = match ProblemFile::load(file) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let seed = resolve_seed(seed_flag, pf.seed);
    let grid = pf.grid_obj();
    let problem = match pf.to_problem(&tol) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return classify(&e);
        }
    };
    let mut run = RunReport::new("extend", pf, seed);
    let (f, reports, summary) = match build_extension(&problem, method, &grid, seed, &tol) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return classify(&e);
        }
    };
    run.summary = Some(summary);
    for r in reports {
        run.push(r);
    }
    if let (Some(csv_path), Some(bx)) = (csv, box_spec) {
        if let Err(e) = write_csv(csv_path, &f, &problem, bx, &tol) {
            eprintln!("error: {e}");
            return EXIT_CONSTRUCTION;
        }
    }
    run.timing_ms = started.elapsed().as_millis();
    let passed = run.all_passed;
    println!("{}", serde_json::to_string_pretty(&run).unwrap());
    if passed {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

/// Verify reports are deterministic for a fixed seed, so they carry no
/// wall-clock timing (`timing_ms` stays 0).
fn cmd_verify(file: &Path, checks: Option<&[String]>, seed_flag: Option<u64>) -> i32 {
    let tol = Tolerances::default();
    let pf = match ProblemFile::load(file) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let seed = resolve_seed(seed_flag, pf.seed);
    let grid = pf.grid_obj();
    let mut run = RunReport::new("verify", pf.clone(), seed);

    if let Some(name) = &pf.family {
        if name != "lsc_counterexample" {
            eprintln!("error: unknown family {name:?}");
            return EXIT_PARSE;
        }
        let fam = counterexample_family();
        match validate_omega(&fam, 20, 200, seed, &tol) {
            Ok(r) => run.push(r),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONSTRUCTION;
            }
        }
        match lsc_counterexample_demo(&tol) {
            Ok(r) => run.reports.push(r), // documentation, not pass/fail input
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONSTRUCTION;
            }
        }
        let passed = run.all_passed;
        println!("{}", serde_json::to_string_pretty(&run).unwrap());
        return if passed { EXIT_OK } else { EXIT_VALIDATION };
    }

    let problem = match pf.to_problem(&tol) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return classify(&e);
        }
    };
    let default_checks = ["quasiconvex", "omega", "extension"];
    let selected: Vec<String> = match checks {
        Some(c) if !c.is_empty() => c.to_vec(),
        _ => default_checks.iter().map(|s| s.to_string()).collect(),
    };
    for check in &selected {
        let outcome = match check.as_str() {
            "quasiconvex" => {
                check_quasiconvex(&problem.f, &problem.trace_domain(), 500, 1e-6, seed, &tol)
            }
            "omega" => {
                let fam = crate::functions::family_from_function(&problem.f, &grid);
                validate_omega(&fam, 20, 200, seed, &tol)
            }
            "extension" => {
                extend_quasiconvex(&problem, &grid, seed, &tol).map(|r| r.report)
            }
            other => {
                eprintln!("error: unknown check {other:?}");
                return EXIT_PARSE;
            }
        };
        match outcome {
            Ok(r) => run.push(r),
            Err(e) => {
                eprintln!("error: {e}");
                return classify(&e);
            }
        }
    }
    let passed = run.all_passed;
    println!("{}", serde_json::to_string_pretty(&run).unwrap());
    if passed {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

fn cmd_eval(file: &Path, points: &Path, method: Method, seed_flag: Option<u64>) -> i32 {
    let tol = Tolerances::default();
    let pf = match ProblemFile::load(file) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let seed = resolve_seed(seed_flag, pf.seed);
    let grid = pf.grid_obj();
    let problem = match pf.to_problem(&tol) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return classify(&e);
        }
    };
    let (f, _, _) = match build_extension(&problem, method, &grid, seed, &tol) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return classify(&e);
        }
    };
    let text = match std::fs::read_to_string(points) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let coords: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let coords = match coords {
            Ok(c) if c.len() == problem.dim => c,
            _ => {
                eprintln!("error: bad point line {line:?}");
                return EXIT_PARSE;
            }
        };
        let x = DVector::from_row_slice(&coords);
        match member(&problem.a, &x, Mode::Open, &tol) {
            Ok(true) => match eval_refined(&f, &x, &tol) {
                Ok(v) => println!("{v:.9}"),
                Err(_) => println!("outside-domain"),
            },
            Ok(false) => println!("outside-domain"),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONSTRUCTION;
            }
        }
    }
    EXIT_OK
}

/// Dispatches a parsed command line, returning the process exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Extend {
            file,
            method,
            csv,
            box_spec,
            seed,
        } => cmd_extend(&file, method, csv.as_deref(), box_spec.as_deref(), seed),
        Command::Verify { file, checks, seed } => {
            cmd_verify(&file, checks.as_deref(), seed)
        }
        Command::Eval {
            file,
            points,
            method,
            seed,
        } => cmd_eval(&file, &points, method, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "qext", "extend", "p.json", "--method", "projection", "--csv", "out.csv",
            "--box", "-2", "2", "11",
        ])
        .unwrap();
        match cli.command {
            Command::Extend {
                method, box_spec, ..
            } => {
                assert_eq!(method, Method::Projection);
                assert_eq!(box_spec.unwrap().len(), 3);
            }
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn checks_flag_splits_on_commas() {
        let cli = Cli::try_parse_from([
            "qext", "verify", "p.json", "--checks", "quasiconvex,omega",
        ])
        .unwrap();
        match cli.command {
            Command::Verify { checks, .. } => {
                assert_eq!(checks.unwrap(), vec!["quasiconvex", "omega"]);
            }
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn box_requires_csv() {
        assert!(Cli::try_parse_from(["qext", "extend", "p.json", "--box", "0", "1", "5"]).is_err());
    }
}
