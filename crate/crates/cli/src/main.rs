//! `scaforge`: batch driver for trace simulation, CPA/MTD attacks, the
//! fault-attack detector and the Saber KEM.

mod common;
mod detect;
mod saber;
mod sca;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::{Outcome, UsageError};

const AFTER_HELP: &str = "\
Exit codes:
  0  success
  1  usage error (bad or unknown flag)
  2  data error (unreadable, corrupt or inconsistent input)
  3  negative outcome (key not disclosed, no attack found, no alarm)

Environment:
  SCAFORGE_THREADS  worker threads; 0 or unset picks one per core.
                    Results do not depend on the thread count.";

#[derive(Debug, Parser)]
#[command(name = "scaforge", version, about, after_help = AFTER_HELP)]
/// Side-channel countermeasure workbench.
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate AES power traces through a chain of countermeasures.
    Simulate(sca::SimulateArgs),
    /// Run CPA on a trace file, optionally with an MTD rank curve.
    Attack(sca::AttackArgs),
    /// Sweep the supply voltage for a point that weakens DSAC attenuation.
    VddAttack(sca::VddAttackArgs),
    /// Fault/probe sensor datasets and the neural detector.
    #[command(subcommand)]
    Detect(detect::DetectCommand),
    /// Replay a voltage series through the ring-oscillator drop monitor.
    VddMonitor(detect::MonitorArgs),
    /// Saber KEM operations, known-answer tests and multiplier counters.
    #[command(subcommand)]
    Saber(saber::SaberCommand),
}

fn configure_threads() -> Result<(), UsageError> {
    let n = match std::env::var("SCAFORGE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| UsageError(format!("SCAFORGE_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => sca::simulate(a),
        Command::Attack(a) => sca::attack(a),
        Command::VddAttack(a) => sca::vdd_attack(a),
        Command::Detect(c) => detect::run(c),
        Command::VddMonitor(a) => detect::monitor(a),
        Command::Saber(c) => saber::run(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Negative(msg)) => {
            println!("{msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<UsageError>().is_some() { 1 } else { 2 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_has_help() {
        fn walk(cmd: &clap::Command, path: &str) {
            for arg in cmd.get_arguments() {
                let id = arg.get_id().as_str();
                if id == "help" || id == "version" {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{path} --{id} has no help text");
            }
            for sub in cmd.get_subcommands() {
                assert!(sub.get_about().is_some(), "{path} {} has no about", sub.get_name());
                walk(sub, &format!("{path} {}", sub.get_name()));
            }
        }
        walk(&Cli::command(), "scaforge");
    }
}
