//! `jsqlab`: runs the verification experiments and writes JSON reports.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 bad configuration,
//! 3 numerical failure.

mod commands;
mod settings;

use clap::{Parser, Subcommand};
use commands::Outcome;
use jsqlab_core::report::{to_json, version_string, write_text, Report};
use jsqlab_core::JsqError;
use serde_json::{json, Value};
use settings::{load_file, thread_cap, Settings};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "jsqlab",
    version,
    about = "Verification laboratory for join-the-shortest-queue in heavy traffic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON file of settings; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Simulate the queue-length chain and check moments and bounds.
    SimulateCtmc,
    /// Solve the truncated chain exactly.
    SolveExact,
    /// Simulate the reflected diffusion, optionally with a decay probe.
    SimulateDiffusion,
    /// Check the closed-form Stein solutions against their PDEs.
    VerifyPde,
    /// Certify derivative bounds of the Stein solutions on a grid.
    VerifyBounds,
    /// Check the exponential drift inequality, optionally over a sweep.
    VerifyDrift,
    /// Check the second-order generator expansion at random states.
    VerifyExpansion,
    /// Tabulate the switching curve.
    GammaTable,
    /// Compare scaled chain samples with diffusion samples as n grows.
    Interchange,
    /// Run the acceptance criteria and every other subcommand.
    Accept,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SimulateCtmc => "simulate-ctmc",
            Command::SolveExact => "solve-exact",
            Command::SimulateDiffusion => "simulate-diffusion",
            Command::VerifyPde => "verify-pde",
            Command::VerifyBounds => "verify-bounds",
            Command::VerifyDrift => "verify-drift",
            Command::VerifyExpansion => "verify-expansion",
            Command::GammaTable => "gamma-table",
            Command::Interchange => "interchange",
            Command::Accept => "accept",
        }
    }

    fn run(self, s: &mut Settings) -> jsqlab_core::Result<Outcome> {
        match self {
            Command::SimulateCtmc => commands::simulate_ctmc(s),
            Command::SolveExact => commands::solve_exact(s),
            Command::SimulateDiffusion => commands::simulate_diffusion(s),
            Command::VerifyPde => commands::verify_pde(s),
            Command::VerifyBounds => commands::verify_bounds(s),
            Command::VerifyDrift => commands::verify_drift_cmd(s),
            Command::VerifyExpansion => commands::verify_expansion(s),
            Command::GammaTable => commands::gamma_table(s),
            Command::Interchange => commands::interchange(s),
            Command::Accept => commands::accept(s),
        }
    }
}

enum Failure {
    Core(JsqError),
    Io(String),
}

impl Failure {
    fn record(&self, command: &str) -> Value {
        let (code, message) = match self {
            Failure::Core(e) => (e.code(), e.to_string()),
            Failure::Io(m) => ("IO", m.clone()),
        };
        json!({ "error": { "code": code, "message": message }, "command": command, "version": version_string() })
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if !e.is_config_error() => 3,
            _ => 2,
        }
    }
}

/// Output locations are left out of the echoed configuration so that a
/// report depends only on what was computed.
fn echoed_config(s: &Settings, threads: Option<usize>) -> Value {
    let mut v = serde_json::to_value(s).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.remove("out");
        m.remove("dump-samples");
        if let Some(t) = threads {
            m.insert("threads".into(), json!(t));
        }
    }
    v
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    write_text(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn execute(
    command: Command,
    cli_settings: Settings,
    config: Option<&Path>,
) -> Result<bool, Failure> {
    let file = match config {
        Some(p) => load_file(p).map_err(Failure::Core)?,
        None => Settings::default(),
    };
    let mut s = cli_settings.or(file);
    let threads = thread_cap().map_err(Failure::Core)?;
    let outcome = command.run(&mut s).map_err(Failure::Core)?;
    let report = Report::new(
        command.name(),
        s.seed,
        &echoed_config(&s, threads),
        &outcome.results,
        outcome.pass,
    );
    let text = report.to_json();
    match &s.out {
        Some(out) => {
            write(out, &text)?;
            if let Some(csv) = &outcome.csv {
                write(&out.with_extension("csv"), &csv.render())?;
            }
        }
        None => print!("{text}"),
    }
    for (path, body) in &outcome.files {
        write(path, body)?;
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.settings.out.clone();
    match execute(cli.command, cli.settings, cli.config.as_deref()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let record = f.record(cli.command.name());
            eprint!("{}", to_json(&record));
            if let Some(path) = out {
                let _ = write_text(&path, &to_json(&record));
            }
            ExitCode::from(f.exit_code())
        }
    }
}
