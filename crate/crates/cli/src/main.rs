mod args;
mod commands;
mod exemplars;
mod output;
mod plugins;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use disentangle_server::config::BUILTIN_TOY;
use disentangle_server::load_adapter;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command};

fn run(cli: Cli) -> Result<()> {
    let model = cli.model.as_deref().unwrap_or(BUILTIN_TOY);
    // commands that never touch the generator
    match &cli.command {
        Command::Serve { config, bind } => return commands::serve(cli.model.as_deref(), config.as_deref(), *bind),
        Command::Plugin { kind } => return commands::plugin(*kind),
        Command::ExportToy { out } => return commands::export_toy(out),
        _ => {}
    }
    let adapter = load_adapter(model)?;
    match &cli.command {
        Command::AvgVector { n, seed, out } => commands::avg_vector(&adapter, *n, *seed, out),
        Command::Compose(a) => commands::compose(&adapter, a),
        Command::Sample { seed, n, out } => commands::sample(&adapter, *seed, *n, out),
        Command::Edit {
            direction,
            seed,
            n,
            strength,
            out,
        } => commands::edit(&adapter, direction, *seed, *n, *strength, out),
        Command::MaskApply(a) => commands::mask_apply(&adapter, a),
        Command::Calibrate {
            direction,
            seed,
            plugin_detector,
            calibration,
            out,
        } => commands::calibrate(&adapter, model, direction, *seed, plugin_detector, calibration, out),
        Command::Evaluate { direction, eval, out } => commands::evaluate(&adapter, model, direction, eval, out),
        Command::Track { snapshots, eval, out } => commands::track(&adapter, model, snapshots, eval, out),
        Command::Serve { .. } | Command::Plugin { .. } | Command::ExportToy { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("DISENTANGLE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain on one line, skipping causes the previous message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}
