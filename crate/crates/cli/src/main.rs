use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drcbf_cli::config::{parse_scalar, Override};
use drcbf_cli::error::exit;
use drcbf_cli::{execute_run, load, sweep, CliError, RunConfig};
use drcbf_core::acc::{case_scenario, CaseVariant};
use drcbf_core::ControllerMode;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "drcbf",
    version,
    about = "Disturbance-robust CBF simulations of adaptive cruise control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run config.
    config: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    controller: Option<ControllerMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Output parent directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `path=value` override, repeatable (e.g. `params.r=100`).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    no_plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one config.
    Run(Common),
    /// One run per value of a config parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config path, e.g. `controller.k_scale`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Print or write the config of a benchmark case.
    Case {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        id: u8,
        #[arg(long, value_parser = parse_mode, default_value = "drcbf")]
        controller: ControllerMode,
        #[arg(long, default_value_t = 1.0)]
        k_multiplier: f64,
        /// Sets both entries of `r`.
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<ControllerMode, String> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown controller `{s}` (hocbf, drcbf, adrcbf)"))
}

impl Common {
    fn overrides(&self) -> Result<Vec<Override>, CliError> {
        let mut out = Vec::new();
        if let Some(m) = self.controller {
            out.push(Override::new("controller.mode", json!(m)));
        }
        if let Some(s) = self.seed {
            out.push(Override::new("disturbance.seed", json!(s)));
        }
        if let Some(h) = self.horizon {
            out.push(Override::new("simulation.horizon", json!(h)));
        }
        if let Some(d) = &self.out {
            out.push(Override::new("output.dir", json!(d)));
        }
        if self.no_plots {
            out.push(Override::new("output.plots", json!(false)));
        }
        for s in &self.set {
            out.push(Override::parse(s)?);
        }
        Ok(out)
    }

    fn load(&self) -> Result<RunConfig, CliError> {
        load(&self.config, &self.overrides()?)
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run(common) => {
            let outcome = execute_run(&common.load()?)?;
            let s = &outcome.summary;
            println!(
                "{}: min D = {:.4} m, steady D = {:.4} m, min phi = {:.3e}, violation = {}, {:.2} s",
                outcome.dir.display(),
                s.min_distance,
                s.steady_state_distance,
                s.min_phi,
                s.violation,
                s.wall_clock_seconds
            );
            if let drcbf_core::RunStatus::Failed { step, t, reason } = &s.status {
                eprintln!("run failed at step {step} (t = {t}): {reason}");
            }
            Ok(outcome.exit_code())
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let config = common.load()?;
            let values: Vec<Value> = values.iter().map(|v| parse_scalar(v.trim())).collect();
            let outcome = sweep(&config, &param, &values)?;
            for r in &outcome.rows {
                println!(
                    "{param}={}: steady D = {:.4} m, min D = {:.4} m, violation = {}",
                    r.value,
                    r.summary.steady_state_distance,
                    r.summary.min_distance,
                    r.summary.violation
                );
            }
            println!("{}", outcome.comparison.display());
            Ok(outcome.exit_code())
        }
        Command::Case {
            id,
            controller,
            k_multiplier,
            r,
            out,
        } => {
            let mut variant = CaseVariant::new(controller).with_k_multiplier(k_multiplier);
            if let Some(r) = r {
                variant = variant.with_r(r);
            }
            let text = RunConfig::from_scenario(case_scenario(id, variant)?).to_json() + "\n";
            match out {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })?
                }
                None => print!("{text}"),
            }
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = dispatch(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
