//! Run configuration and on-disk artifacts.
//!
//! Configs are flat `key = value` documents with dotted section keys, `#`
//! comments and no quoting. Result files (`fields.csv`, `summary.json`) write
//! every real with 17 significant digits so binary64 values round-trip.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};

use crate::diagnostics::{
    caccioppoli_check, fit_holder_exponent, hj_residual, max_principle_check, morrey_exponent,
    morrey_norm, BallSampler, DEFAULT_MAX_CENTERS,
};
use crate::error::{Error, Result};
use crate::grid::{gradient, linf_norm, ScalarField, TorusGrid};
use crate::hamiltonian::EpsSchedule;
use crate::problem::{builtin_problem, CouplingSpec, MFGProblem, ProblemParams, BUILTIN_NAMES};
use crate::solver::{MFGSolution, NewtonOptions, SolverConfig};

pub const KNOWN_KEYS: [&str; 14] = [
    "dim",
    "n",
    "problem.name",
    "problem.coupling",
    "problem.c_g",
    "solver.eps0",
    "solver.eps_factor",
    "solver.eps_min",
    "solver.newton_tol",
    "solver.newton_max_iter",
    "solver.armijo_c",
    "solver.bisect_tol",
    "seed",
    "output_dir",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub problem_name: String,
    pub coupling: String,
    /// Overrides the named coupling's default constant when set.
    pub c_g: Option<f64>,
    pub schedule: EpsSchedule,
    pub newton: NewtonOptions,
    pub bisect_tol: f64,
    /// Seed for sampled diagnostics.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.dim, self.n)
    }

    pub fn params(&self) -> Result<ProblemParams> {
        let coupling = CouplingSpec::named(&self.coupling, self.c_g)?;
        Ok(ProblemParams::new(self.dim, self.n).with_coupling(coupling))
    }

    /// Builds and validates the configured problem.
    pub fn problem(&self) -> Result<MFGProblem> {
        builtin_problem(&self.problem_name, &self.params()?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            schedule: self.schedule,
            newton: self.newton,
            bisect_tol: self.bisect_tol,
            init: None,
        }
    }
}

fn value_error(key: &str, msg: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| value_error(key, format!("cannot parse `{raw}`")))
}

fn parse_real(key: &str, raw: &str) -> Result<f64> {
    let v: f64 = parse_num(key, raw)?;
    if !v.is_finite() {
        return Err(value_error(key, "must be finite"));
    }
    Ok(v)
}

/// Parses and validates a config document, filling unset keys with defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigParse {
            line: line_no,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::ConfigParse {
                line: line_no,
                msg: "empty key or value".into(),
            });
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::ConfigParse {
                line: line_no,
                msg: format!("unknown key `{key}`"),
            });
        }
        if entries.insert(key, value).is_some() {
            return Err(Error::ConfigParse {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }

    let get = |k: &str| entries.get(k).copied();

    let n = get("n").map(|v| parse_num::<usize>("n", v)).transpose()?;
    if let Some(n) = n {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(value_error("n", "n must be even and ≥ 8"));
        }
    }
    let dim = get("dim").map(|v| parse_num::<usize>("dim", v)).transpose()?;
    if let Some(d) = dim {
        if !(1..=2).contains(&d) {
            return Err(value_error("dim", "dim must be 1 or 2"));
        }
    }

    let defaults = EpsSchedule::default();
    let schedule = EpsSchedule {
        eps0: get("solver.eps0").map(|v| parse_real("solver.eps0", v)).transpose()?.unwrap_or(defaults.eps0),
        factor: get("solver.eps_factor")
            .map(|v| parse_real("solver.eps_factor", v))
            .transpose()?
            .unwrap_or(defaults.factor),
        eps_min: get("solver.eps_min")
            .map(|v| parse_real("solver.eps_min", v))
            .transpose()?
            .unwrap_or(defaults.eps_min),
    };
    if let Err(e) = schedule.validate() {
        let key = match e.to_string() {
            s if s.contains("factor") => "solver.eps_factor",
            s if s.contains("eps0") => "solver.eps0",
            _ => "solver.eps_min",
        };
        return Err(value_error(key, validation_message(e)));
    }

    let nd = NewtonOptions::default();
    let newton = NewtonOptions {
        tol: get("solver.newton_tol")
            .map(|v| parse_real("solver.newton_tol", v))
            .transpose()?
            .unwrap_or(nd.tol),
        max_iter: get("solver.newton_max_iter")
            .map(|v| parse_num::<usize>("solver.newton_max_iter", v))
            .transpose()?
            .unwrap_or(nd.max_iter),
        armijo_c: get("solver.armijo_c")
            .map(|v| parse_real("solver.armijo_c", v))
            .transpose()?
            .unwrap_or(nd.armijo_c),
        min_step: nd.min_step,
    };
    if let Err(e) = newton.validate() {
        let msg = validation_message(e);
        let key = if msg.contains("tol") {
            "solver.newton_tol"
        } else if msg.contains("max_iter") {
            "solver.newton_max_iter"
        } else {
            "solver.armijo_c"
        };
        return Err(value_error(key, msg));
    }

    let bisect_tol = get("solver.bisect_tol")
        .map(|v| parse_real("solver.bisect_tol", v))
        .transpose()?
        .unwrap_or(SolverConfig::default().bisect_tol);
    if !(bisect_tol > 0.0) {
        return Err(value_error("solver.bisect_tol", "must be positive"));
    }

    let coupling = get("problem.coupling").unwrap_or("linear").to_string();
    let c_g = get("problem.c_g").map(|v| parse_real("problem.c_g", v)).transpose()?;
    if let Some(c) = c_g {
        if !(c > 0.0) {
            return Err(value_error("problem.c_g", "C_g must be positive"));
        }
    }
    CouplingSpec::named(&coupling, c_g).map_err(|e| value_error("problem.coupling", validation_message(e)))?;

    let seed = get("seed").map(|v| parse_num::<u64>("seed", v)).transpose()?.unwrap_or(0);
    let output_dir = PathBuf::from(get("output_dir").unwrap_or("out"));

    let dim = dim.ok_or_else(|| value_error("dim", "required key missing"))?;
    let n = n.ok_or_else(|| value_error("n", "required key missing"))?;
    let problem_name = get("problem.name")
        .ok_or_else(|| value_error("problem.name", "required key missing"))?
        .to_string();
    if !BUILTIN_NAMES.contains(&problem_name.as_str()) {
        return Err(value_error(
            "problem.name",
            format!("unknown problem `{problem_name}` (expected one of {BUILTIN_NAMES:?})"),
        ));
    }
    let required = match problem_name.as_str() {
        "manufactured_1d" => Some(1),
        "manufactured_2d" | "anisotropic_2d" => Some(2),
        _ => None,
    };
    if let Some(r) = required {
        if r != dim {
            return Err(value_error("dim", format!("problem `{problem_name}` requires dim={r}")));
        }
    }

    let config = RunConfig {
        dim,
        n,
        problem_name,
        coupling,
        c_g,
        schedule,
        newton,
        bisect_tol,
        seed,
        output_dir,
    };
    // Building the problem runs the ellipticity and coupling checks.
    config.problem()?;
    Ok(config)
}

fn validation_message(e: Error) -> String {
    match e {
        Error::Validation(m) | Error::Grid(m) => m,
        other => other.to_string(),
    }
}

/// Formats a real with 17 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn ser_real<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if !x.is_finite() {
        return s.serialize_none();
    }
    let num: serde_json::Number = format_real(*x).parse().map_err(serde::ser::Error::custom)?;
    num.serialize(s)
}

fn ser_reals<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct Real(f64);
    impl Serialize for Real {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            ser_real(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&Real(x))?;
    }
    seq.end()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryDiagnostics {
    #[serde(rename = "morrey_Du", serialize_with = "ser_real")]
    pub morrey_du: f64,
    #[serde(serialize_with = "ser_real")]
    pub holder_alpha: f64,
    #[serde(rename = "caccioppoli_C", serialize_with = "ser_real")]
    pub caccioppoli_c: f64,
    /// `[margin at argmax u, margin at argmin u]`.
    #[serde(serialize_with = "ser_reals")]
    pub max_principle_margins: Vec<f64>,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    #[serde(serialize_with = "ser_real")]
    pub hbar: f64,
    #[serde(serialize_with = "ser_real")]
    pub mass: f64,
    #[serde(serialize_with = "ser_real")]
    pub k0: f64,
    #[serde(serialize_with = "ser_real")]
    pub linf_u: f64,
    pub newton_iters_total: usize,
    #[serde(serialize_with = "ser_reals")]
    pub eps_stages: Vec<f64>,
    pub bisect_iters: usize,
    #[serde(serialize_with = "ser_real")]
    pub residual_linf: f64,
    pub diagnostics: SummaryDiagnostics,
}

impl RunSummary {
    pub fn new(sol: &MFGSolution, prob: &MFGProblem) -> Result<Self> {
        let grid = *prob.grid();
        let sampler = BallSampler::dyadic(grid, DEFAULT_MAX_CENTERS);
        let alpha = fit_holder_exponent(&sol.u);
        let lambda = morrey_exponent(grid.dim(), alpha).clamp(0.0, grid.dim() as f64 - 1e-9);
        let mp = max_principle_check(&sol.u, prob, sol.hbar, 10.0 * grid.h() * grid.h());
        Ok(Self {
            hbar: sol.hbar,
            mass: sol.mass,
            k0: sol.k0,
            linf_u: linf_norm(&sol.u),
            newton_iters_total: sol.newton_iters_total,
            eps_stages: sol.stages.iter().map(|s| s.eps).collect(),
            bisect_iters: sol.bisect_iters(),
            residual_linf: hj_residual(&sol.u, prob, sol.hbar)?.linf,
            diagnostics: SummaryDiagnostics {
                morrey_du: morrey_norm(&gradient(&sol.u).norm(), 2.0, lambda, &sampler)?,
                holder_alpha: alpha,
                caccioppoli_c: caccioppoli_check(&sol.u, &sampler, alpha)?,
                max_principle_margins: vec![mp.margin_max, mp.margin_min],
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const FIELDS_FILE: &str = "fields.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes `fields.csv` and `summary.json` into `dir`, creating it if needed.
/// Returns the two paths.
pub fn write_fields(sol: &MFGSolution, prob: &MFGProblem, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let summary = RunSummary::new(sol, prob)?;
    let residual = hj_residual(&sol.u, prob, sol.hbar)?.field;
    fs::create_dir_all(dir)?;
    let fields_path = dir.join(FIELDS_FILE);
    fs::write(&fields_path, fields_csv(&sol.u, &sol.m, &residual))?;
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, summary.to_json()? + "\n")?;
    Ok((fields_path, summary_path))
}

/// CSV text with header `x0[,x1],u,m,hj_residual`, one row per grid point.
pub fn fields_csv(u: &ScalarField, m: &ScalarField, residual: &ScalarField) -> String {
    let grid = u.grid();
    let dim = grid.dim();
    let mut out = String::new();
    out.push_str(if dim == 1 { "x0,u,m,hj_residual\n" } else { "x0,x1,u,m,hj_residual\n" });
    for i in 0..grid.len() {
        let x = grid.point(i);
        let mut cols: Vec<String> = x[..dim].iter().map(|&c| format_real(c)).collect();
        cols.push(format_real(u.values()[i]));
        cols.push(format_real(m.values()[i]));
        cols.push(format_real(residual.values()[i]));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

/// Fields read back from a `fields.csv` file.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldsFile {
    pub grid: TorusGrid,
    pub u: ScalarField,
    pub m: ScalarField,
    pub hj_residual: ScalarField,
}

pub fn read_fields(path: &Path) -> Result<FieldsFile> {
    parse_fields_csv(&fs::read_to_string(path)?)
}

pub fn parse_fields_csv(text: &str) -> Result<FieldsFile> {
    let bad = |msg: String| Error::FieldsFormat(msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let dim = match header.trim() {
        "x0,u,m,hj_residual" => 1,
        "x0,x1,u,m,hj_residual" => 2,
        other => return Err(bad(format!("unexpected header `{other}`"))),
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", k + 1)))?;
        if vals.len() != dim + 3 {
            return Err(bad(format!("row {} has {} columns, expected {}", k + 1, vals.len(), dim + 3)));
        }
        rows.push(vals);
    }
    let n = (rows.len() as f64).powf(1.0 / dim as f64).round() as usize;
    if n.pow(dim as u32) != rows.len() {
        return Err(bad(format!("{} rows is not a full {dim}-d grid", rows.len())));
    }
    let grid = TorusGrid::new(dim, n)?;
    for (i, row) in rows.iter().enumerate() {
        let x = grid.point(i);
        if (0..dim).any(|k| (row[k] - x[k]).abs() > 1e-9) {
            return Err(bad(format!("row {} coordinates do not match grid order", i + 1)));
        }
    }
    let col = |c: usize| ScalarField::new(grid, rows.iter().map(|r| r[dim + c]).collect());
    Ok(FieldsFile {
        grid,
        u: col(0)?,
        m: col(1)?,
        hj_residual: col(2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_mfg;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("dim=1\nn=64\nproblem.name=trivial").unwrap();
        assert_eq!((c.dim, c.n), (1, 64));
        assert_eq!(c.problem_name, "trivial");
        assert_eq!(c.coupling, "linear");
        assert_eq!(c.schedule, EpsSchedule::default());
        assert_eq!(c.newton, NewtonOptions::default());
        assert_eq!(c.bisect_tol, 1e-10);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn config_errors() {
        let e = parse_config("n=7").unwrap_err();
        assert!(e.to_string().contains("n must be even and ≥ 8"), "{e}");
        let e = parse_config("solver.eps_factor=1.5").unwrap_err();
        assert!(e.to_string().contains("factor must lie in (0,1)"), "{e}");
        assert!(e.to_string().contains("solver.eps_factor"));
        let e = parse_config("dim=1\nn=8\nproblem.name=trivial\nbogus=1").unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 4, .. }), "{e}");
        let e = parse_config("dim=1\nnonsense").unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 2, .. }));
        let e = parse_config("dim=1\nn=8").unwrap_err();
        assert!(e.to_string().contains("problem.name"));
        let e = parse_config("dim=1\nn=8\nproblem.name=manufactured_2d").unwrap_err();
        assert!(e.is_validation());
        let e = parse_config("dim=1\nn=8\nproblem.name=trivial\nproblem.coupling=decreasing").unwrap_err();
        assert!(e.is_validation());
    }

    #[test]
    fn comments_and_whitespace() {
        let c = parse_config("# run\n dim = 2 \n\nn=16 # grid\nproblem.name = anisotropic_2d\nseed=7\n").unwrap();
        assert_eq!((c.dim, c.n, c.seed), (2, 16, 7));
    }

    #[test]
    fn trivial_fields_and_summary() {
        let c = parse_config("dim=1\nn=8\nproblem.name=trivial").unwrap();
        let p = c.problem().unwrap();
        let sol = solve_mfg(&p, &c.solver_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (fields, summary) = write_fields(&sol, &p, dir.path()).unwrap();
        let text = fs::read_to_string(&fields).unwrap();
        assert_eq!(text.lines().count(), 9);
        let back = read_fields(&fields).unwrap();
        // Warm-started Newton leaves round-off far below the solver tolerance.
        assert!(back.u.values().iter().all(|&v| v.abs() <= 1e-12));
        assert_eq!(back.u.values(), sol.u.values());
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(summary).unwrap()).unwrap();
        assert!(json["hbar"].as_f64().unwrap().abs() <= 1e-10);
        assert!((json["mass"].as_f64().unwrap() - 1.0).abs() <= 1e-10);
        assert!(json["diagnostics"]["max_principle_margins"].is_array());
    }

    #[test]
    fn fields_round_trip_bit_exact() {
        let p = builtin_problem("manufactured_2d", &ProblemParams::new(2, 8)).unwrap();
        let u = p.exact().unwrap().u.clone();
        let m = u.map(|v| (-v).exp());
        let r = u.map(|v| v.sin() * 1e-7);
        let back = parse_fields_csv(&fields_csv(&u, &m, &r)).unwrap();
        assert_eq!(back.u.values(), u.values());
        assert_eq!(back.m.values(), m.values());
        assert_eq!(back.hj_residual.values(), r.values());
        assert_eq!(back.grid, *p.grid());
    }

    #[test]
    fn malformed_fields_rejected() {
        assert!(parse_fields_csv("a,b\n1,2").is_err());
        assert!(parse_fields_csv("x0,u,m,hj_residual\n0,1,1,0\n").is_err());
    }

    #[test]
    fn real_formatting_is_lossless() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, f64::MIN_POSITIVE] {
            assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
        }
    }
}
