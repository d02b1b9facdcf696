mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use radbif_core::analysis::{
    rescale_check, slope_fit, slope_fit_config, theta_exponents, BifurcationReport,
};
use radbif_core::continuation::continue_branch_from;
use radbif_core::monotone::second_solution;
use radbif_core::solver::{newton_solve, solve_limit_problem_swept};
use radbif_core::steklov::{steklov_eigenpair, SteklovPair};
use radbif_core::verify::Suite;
use radbif_core::{pair_norm, Branch, NonlinearityModel, RadialGrid, SystemState};
use serde_json::json;

use crate::config::{Config, ConfigError};

#[derive(Parser)]
#[command(name = "radbif", version, about = "Radial bifurcation toolkit")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace one configuration value; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// First Steklov eigenpair of the ball.
    Steklov,
    /// Bifurcation report as JSON.
    Report {
        /// Also fit the small-amplitude slope from a short branch run.
        #[arg(long)]
        fit: bool,
    },
    /// Newton solve at a fixed λ from `amplitude · (φ1, φ1)`.
    Solve {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long, default_value_t = 0.1)]
        amplitude: f64,
    },
    /// Positive solution of the pure-power limiting problem.
    Limit,
    /// Continue the positive branch from μ0 down to the stop value.
    Branch,
    /// Minimal and second solution at λ.
    Multiplicity {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
    },
    /// Compare the rescaled branch tail with the limit solution.
    RescaleCheck,
    /// Run the acceptance checks and print a pass/fail table.
    Verify,
}

struct Run {
    cfg: Config,
    hash: String,
    out: PathBuf,
}

impl Run {
    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write_state(&self, name: &str, grid: &RadialGrid, state: &SystemState) -> Result<()> {
        let mut w = self.file(name)?;
        state.write_csv(grid, &mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes `record` plus the config hash as one JSON line.
    fn record(&self, name: &str, mut record: serde_json::Value) -> Result<()> {
        record["config_hash"] = json!(self.hash);
        let mut w = self.file(name)?;
        writeln!(w, "{record}")?;
        w.flush()?;
        Ok(())
    }

    fn pair(&self, grid: &RadialGrid) -> Result<SteklovPair> {
        Ok(steklov_eigenpair(grid, 1e-12)?)
    }

    fn guarded_model(&self, grid: &RadialGrid) -> Result<NonlinearityModel> {
        let model = self.cfg.model()?;
        let report = model.validate_hypotheses(grid.n_dim());
        if !report.all_passed() {
            let failed: Vec<String> = report
                .failures()
                .map(|c| format!("{} ({})", c.name, c.detail))
                .collect();
            return Err(ConfigError(format!(
                "model {:?} violates the standing hypotheses: {}",
                model.name(),
                failed.join("; ")
            ))
            .into());
        }
        Ok(model)
    }

    fn branch(
        &self,
        grid: &RadialGrid,
        model: &NonlinearityModel,
        pair: &SteklovPair,
    ) -> Result<Branch> {
        Ok(continue_branch_from(
            grid,
            model,
            pair,
            &self.cfg.continuation()?,
        )?)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError(format!(
            "--lambda must be a nonnegative number, got {lambda}"
        ))
        .into())
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    let grid = cfg.grid()?;
    let run = Run {
        hash: cfg.hash(),
        out: cfg.out_dir(),
        cfg,
    };

    match cli.command {
        Command::Steklov => {
            let pair = run.pair(&grid)?;
            println!("mu1={:.7}", pair.mu1);
            let mut w = run.file("steklov.csv")?;
            writeln!(w, "r,phi1")?;
            for (r, v) in grid.nodes().iter().zip(&pair.phi1) {
                writeln!(w, "{r:.17e},{v:.17e}")?;
            }
            w.flush()?;
            run.record(
                "steklov.jsonl",
                json!({"mu1": pair.mu1, "iterations": pair.iterations, "M": grid.intervals()}),
            )?;
        }
        Command::Report { fit } => {
            let model = run.cfg.model()?;
            let pair = run.pair(&grid)?;
            let slope = if fit {
                let cfg = slope_fit_config(&run.cfg.continuation()?);
                let b = continue_branch_from(&grid, &model, &pair, &cfg)?;
                Some(slope_fit(&b, b.mu0, model.nu())?)
            } else {
                None
            };
            let report = BifurcationReport::build(&model, &pair, &grid, slope)?;
            let text = serde_json::to_string_pretty(&report)?;
            println!("{text}");
            let mut value = serde_json::to_value(&report)?;
            value["config_hash"] = json!(run.hash);
            let mut w = run.file("report.json")?;
            writeln!(w, "{}", serde_json::to_string_pretty(&value)?)?;
            w.flush()?;
        }
        Command::Solve { lambda, amplitude } => {
            check_lambda(lambda)?;
            let model = run.cfg.model()?;
            let pair = run.pair(&grid)?;
            let init = SystemState::from_profile(&pair.phi1, amplitude, amplitude);
            let out = newton_solve(&grid, &model, lambda, &init, &run.cfg.newton()?)?;
            println!(
                "lambda={lambda} norm={:.10} iterations={} residual={:.3e} class={:?}",
                pair_norm(&out.state),
                out.iterations,
                out.residual,
                out.class
            );
            run.write_state("solve.csv", &grid, &out.state)?;
            run.record(
                "solve.jsonl",
                json!({
                    "lambda": lambda,
                    "norm_pair": pair_norm(&out.state),
                    "iterations": out.iterations,
                    "residual": out.residual,
                    "class": format!("{:?}", out.class),
                }),
            )?;
        }
        Command::Limit => {
            let model = run.guarded_model(&grid)?;
            let pair = run.pair(&grid)?;
            let (amp, out) =
                solve_limit_problem_swept(&grid, &model, &pair.phi1, &run.cfg.newton()?)?;
            let (w1, w2) = (out.state.sup(1), out.state.sup(2));
            println!("sup_w1={w1:.10} sup_w2={w2:.10} amplitude={amp}");
            run.write_state("limit.csv", &grid, &out.state)?;
            run.record(
                "limit.jsonl",
                json!({"sup_w1": w1, "sup_w2": w2, "amplitude": amp, "iterations": out.iterations}),
            )?;
        }
        Command::Branch => {
            let model = run.guarded_model(&grid)?;
            let pair = run.pair(&grid)?;
            let b = run.branch(&grid, &model, &pair)?;
            let mut jl = run.file("branch.jsonl")?;
            let mut dat = run.file("branch.dat")?;
            writeln!(dat, "# lambda norm_pair")?;
            for p in &b.points {
                let rec = json!({
                    "lambda": p.lambda,
                    "norm_u1": p.state.sup(1),
                    "norm_u2": p.state.sup(2),
                    "norm_pair": p.norm,
                    "ds": p.ds,
                    "tangent_sign": p.tangent_lambda_sign,
                    "config_hash": run.hash,
                });
                writeln!(jl, "{rec}")?;
                writeln!(dat, "{:.17e} {:.17e}", p.lambda, p.norm)?;
            }
            jl.flush()?;
            dat.flush()?;
            println!(
                "mu0={:.10} points={} termination={:?}",
                b.mu0,
                b.points.len(),
                b.termination
            );
            if b.folds.len() > 1 {
                println!("warning: {} folds detected", b.folds.len());
            }
            for f in &b.folds {
                println!("fold lambda={:.10} index={}", f.lambda, f.index);
            }
        }
        Command::Multiplicity { lambda } => {
            check_lambda(lambda)?;
            let model = run.guarded_model(&grid)?;
            let pair = run.pair(&grid)?;
            let b = run.branch(&grid, &model, &pair)?;
            let sec = second_solution(&grid, &model, &pair, lambda, &b, &run.cfg.newton()?)?;
            run.write_state("minimal.csv", &grid, &sec.minimal)?;
            run.write_state("second.csv", &grid, &sec.other)?;
            let norms: Vec<f64> = sec.branch_states.iter().map(pair_norm).collect();
            println!(
                "lambda={lambda} minimal_norm={:.10} second_norm={:.10} gap={:.10} branch_states={}",
                pair_norm(&sec.minimal),
                pair_norm(&sec.other),
                sec.gap,
                norms.len()
            );
            run.record(
                "multiplicity.jsonl",
                json!({
                    "lambda": lambda,
                    "minimal_norm": pair_norm(&sec.minimal),
                    "second_norm": pair_norm(&sec.other),
                    "gap": sec.gap,
                    "branch_norms": norms,
                    "residuals": [sec.residuals.0, sec.residuals.1],
                    "monotone_iterations": sec.iterations,
                }),
            )?;
        }
        Command::RescaleCheck => {
            let model = run.guarded_model(&grid)?;
            let pair = run.pair(&grid)?;
            let b = run.branch(&grid, &model, &pair)?;
            let (_, limit) =
                solve_limit_problem_swept(&grid, &model, &pair.phi1, &run.cfg.newton()?)?;
            let table = rescale_check(&b, theta_exponents(&model)?, &limit.state)?;
            let mut w = run.file("rescale.csv")?;
            table.write_csv(&mut w)?;
            w.flush()?;
            table.write_csv(std::io::stdout().lock())?;
            run.record(
                "rescale.jsonl",
                json!({"final_error": table.final_error, "monotone": table.monotone, "rows": table.rows.len()}),
            )?;
            if !table.passes(0.02) {
                anyhow::bail!(
                    "rescaled tail not within 2% monotonically (final error {:.3e}, monotone {})",
                    table.final_error,
                    table.monotone
                );
            }
        }
        Command::Verify => {
            let mut suite = Suite::new(grid.intervals(), run.cfg.continuation()?)?;
            let results = suite.run_all();
            for r in &results {
                println!("{}", r.line());
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!(
                "{} of {} checks passed",
                results.len() - failed,
                results.len()
            );
            if failed > 0 {
                anyhow::bail!("{failed} acceptance checks failed");
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.downcast_ref::<ConfigError>().is_some()
        || matches!(
            err.downcast_ref::<radbif_core::Error>(),
            Some(radbif_core::Error::Config(_))
        );
    if config {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
