//! `mfg`: command-line front end for the solver.
//!
//! Results go to files (and a short JSON document on stdout); progress records
//! go to stderr as one JSON object per line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mfg_core::io::{format_real, read_fields};
use mfg_core::solver::MFGSolution;
use mfg_core::{
    convergence_study, linf_bound_k0, mass_sweep, parse_config, regularity_report, solve_mfg,
    verify_solution, write_fields, Error, MFGProblem, Order, RunConfig,
};

#[derive(Parser)]
#[command(name = "mfg", version, about = "Stationary mean-field game solver on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (flat `key = value` file).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for (u, m, H̄) and write fields.csv and summary.json.
    Solve(Common),
    /// Solve, then run every diagnostic and write verify.json.
    Verify(Common),
    /// Grid refinement study against the problem's exact solution.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// Evaluate the mass ∫e^{-u} at fixed values of H̄.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        hbars: Vec<f64>,
    },
    /// Regularity diagnostics of a previously written fields.csv.
    Morrey {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: PathBuf,
    },
}

fn log(event: &str, mut fields: serde_json::Value) {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    if let Some(obj) = fields.as_object_mut() {
        obj.insert("ts".into(), json!(ts));
        obj.insert("event".into(), json!(event));
    }
    eprintln!("{fields}");
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let text = fs::read_to_string(&common.config)?;
    let config = parse_config(&text)?;
    let out = common.out.clone().unwrap_or_else(|| config.output_dir.clone());
    Ok((config, out))
}

fn solve(config: &RunConfig) -> Result<(MFGProblem, MFGSolution), Error> {
    let prob = config.problem()?;
    log(
        "problem",
        json!({"name": prob.name(), "dim": config.dim, "n": config.n,
               "theta0": prob.theta0(), "theta1": prob.theta1(),
               "lip_a": prob.lip_a(), "lip_v": prob.lip_v()}),
    );
    let sol = solve_mfg(&prob, &config.solver_config())?;
    for (k, st) in sol.stages.iter().enumerate() {
        log(
            "stage",
            json!({"stage": k, "eps": st.eps, "newton_iters": st.newton.iterations,
                   "residual": st.newton.final_residual(), "increment": st.increment,
                   "u_linf": st.u_linf}),
        );
    }
    log(
        "solved",
        json!({"hbar": sol.hbar, "mass": sol.mass, "bisect_iters": sol.bisect_iters(),
               "newton_iters_total": sol.newton_iters_total}),
    );
    Ok((prob, sol))
}

fn real(x: f64) -> serde_json::Value {
    format_real(x)
        .parse::<serde_json::Number>()
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(dir.join(name), text.clone() + "\n")?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve(common) => {
            let (config, out) = load(&common)?;
            let (prob, sol) = solve(&config)?;
            let (_, summary) = write_fields(&sol, &prob, &out)?;
            println!("{}", fs::read_to_string(summary)?.trim_end());
        }
        Command::Verify(common) => {
            let (config, out) = load(&common)?;
            let (prob, sol) = solve(&config)?;
            write_fields(&sol, &prob, &out)?;
            let report = verify_solution(&sol, &prob, config.seed)?;
            write_json(&out, "verify.json", &serde_json::to_value(&report)?)?;
        }
        Command::Convergence { common, sizes } => {
            let (config, out) = load(&common)?;
            let rows = convergence_study(
                &config.problem_name,
                &config.params()?,
                &sizes,
                &config.solver_config(),
            )?;
            let rows: Vec<_> = rows
                .iter()
                .map(|r| {
                    let order = match r.order {
                        Some(Order::Observed(p)) => real(p),
                        Some(Order::Exact) => json!("exact"),
                        None => serde_json::Value::Null,
                    };
                    log("convergence", json!({"n": r.n, "error": r.error}));
                    json!({"n": r.n, "error": real(r.error), "hbar": real(r.hbar), "order": order})
                })
                .collect();
            write_json(&out, "convergence.json", &json!({ "rows": rows }))?;
        }
        Command::Sweep { common, hbars } => {
            let (config, out) = load(&common)?;
            let prob = config.problem()?;
            let values = mass_sweep(&prob, &config.solver_config(), &hbars)?;
            let rows: Vec<_> = values
                .iter()
                .map(|&(h, m)| {
                    log("sweep", json!({"hbar": h, "mass": m}));
                    json!({"hbar": real(h), "mass": real(m)})
                })
                .collect();
            write_json(&out, "sweep.json", &json!({ "rows": rows }))?;
        }
        Command::Morrey { common, field } => {
            let (config, out) = load(&common)?;
            let fields = read_fields(&field)?;
            if fields.grid != config.grid()? {
                return Err(Error::Validation(format!(
                    "fields grid (dim={}, n={}) does not match the config",
                    fields.grid.dim(),
                    fields.grid.n()
                )));
            }
            // H̄ is not stored in fields.csv; k₀ is reported at H̄ = 0.
            let prob = config.problem()?;
            let report = regularity_report(&fields.u, linf_bound_k0(&prob, 0.0), config.seed)?;
            write_json(&out, "morrey.json", &serde_json::to_value(&report)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_validation() {
                2
            } else if e.is_nonconvergence() {
                3
            } else {
                1
            };
            log("error", json!({"message": e.to_string(), "exit_code": code}));
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
