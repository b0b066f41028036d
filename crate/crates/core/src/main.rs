use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use localattr::config::{parse_flags, ExperimentConfig};
use localattr::experiment;
use localattr::Error;

/// Local Attribution experiments. Settings come from `--config FILE` and may
/// be overridden with `--section.key=value` flags (e.g. `--method.N=30`).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its weight file.
    Train(Args),
    /// Write one attribution map per sample.
    Attribute(Args),
    /// Insertion/deletion evaluation; writes report.json and curve CSVs.
    Evaluate(Args),
    /// Sweep one method parameter (ablate.param, ablate.values).
    Ablate(Args),
    /// Render an attribution binary as a heatmap.
    Render(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// `--key=value` overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<String, Error> {
    let (Command::Train(args)
    | Command::Attribute(args)
    | Command::Evaluate(args)
    | Command::Ablate(args)
    | Command::Render(args)) = &cli.command;
    let cfg = ExperimentConfig::load(args.config.as_deref(), &parse_flags(&args.overrides)?)?;
    Ok(match &cli.command {
        Command::Train(_) => json(&experiment::cmd_train(&cfg)?),
        Command::Attribute(_) => json(&experiment::cmd_attribute(&cfg)?),
        Command::Evaluate(_) => {
            let r = experiment::cmd_evaluate(&cfg)?;
            format!(
                "{} samples: insertion {:.4}, deletion {:.4}, {} gradient evaluations\n",
                r.samples.len(),
                r.mean_insertion_auc,
                r.mean_deletion_auc,
                r.total_gradient_evaluations
            )
        }
        Command::Ablate(_) => {
            let rows = experiment::cmd_ablate(&cfg)?;
            let key = experiment::ablation_key(cfg.ablate_param.as_deref().unwrap_or_default())?;
            experiment::ablation_csv(key.trim_start_matches("method."), &rows)
        }
        Command::Render(_) => {
            let hm = experiment::cmd_render(&cfg)?;
            format!("{}x{} heatmap\n", hm.width, hm.height)
        }
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).unwrap_or_default() + "\n"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the config exit code
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
