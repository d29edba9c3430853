//! `fairgauge` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 undefined metric, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairgauge_core::commands::{
    cmd_audit, cmd_metrics, cmd_pipeline, cmd_simulate, seed_override_from_env,
};
use fairgauge_core::fairness::DEFAULT_ALPHA;
use fairgauge_core::FairError;

#[derive(Debug, Parser)]
#[command(name = "fairgauge", version, about = "Demographic fairness audits for biometric verification scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve thresholds, compute per-group rates and fairness metrics for a score file.
    Audit {
        /// Comparison CSV with header `score,mated,group`.
        #[arg(long)]
        scores: PathBuf,
        /// Run configuration document (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute FDR / IR / GARBE from a per-group rate table.
    Metrics {
        #[arg(long)]
        rates: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic comparison CSV from a scenario document.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit a scenario, mitigate flagged groups, and re-audit.
    Pipeline {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        mitigation: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, FairError> {
    match cli.command {
        Command::Audit { scores, config, out } => {
            let r = cmd_audit(&scores, config.as_deref(), &out)?;
            let mut msg = format!(
                "audited {} records in {} groups -> {}",
                r.input.records,
                r.input.groups,
                out.display()
            );
            for w in &r.warnings {
                msg.push_str(&format!("\nwarning: {}", w.reason));
            }
            Ok(msg)
        }
        Command::Metrics { rates, alpha, out } => {
            let r = cmd_metrics(&rates, alpha, &out)?;
            Ok(format!(
                "metrics for {} groups at {} thresholds -> {}",
                r.table.n_groups(),
                r.table.n_thresholds(),
                out.display()
            ))
        }
        Command::Simulate { scenario, out } => {
            let set = cmd_simulate(&scenario, &out, seed_override_from_env()?)?;
            Ok(format!("wrote {} comparisons -> {}", set.len(), out.display()))
        }
        Command::Pipeline {
            scenario,
            mitigation,
            config,
            out,
        } => {
            let r = cmd_pipeline(
                &scenario,
                &mitigation,
                config.as_deref(),
                &out,
                seed_override_from_env()?,
            )?;
            let mut msg = format!(
                "flagged before: [{}], after: [{}]",
                r.biased_before.join(", "),
                r.biased_after.join(", ")
            );
            for d in &r.metric_deltas {
                msg.push_str(&format!(
                    "\n{}: GARBE {:.4} -> {:.4} ({:?})",
                    d.label, d.garbe_before, d.garbe_after, d.garbe_verdict
                ));
            }
            msg.push_str(&format!("\nreports -> {}", out.display()));
            Ok(msg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
