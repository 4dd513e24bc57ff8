use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use proxyless::report::{
    adapt, aggregate, aggregate_by_method, export_dot_file, read_toml, render_table, validate, write_toml, AdaptOptions,
    ErrorRecord, ReportError, RunReport,
};
use proxyless::train::{Mode, Objective};

#[derive(Parser)]
#[command(name = "proxyless", version, about = "Architecture adaptation inside a single training run")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline for one config and seed.
    Adapt {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        objective: Option<Objective>,
        #[arg(long)]
        arch_epochs: Option<usize>,
        #[arg(long)]
        total_epochs: Option<usize>,
        #[arg(long, env = "PROXYLESS_OUT_DIR", default_value = "runs")]
        out_dir: PathBuf,
        /// Config overrides such as `train.batch_size=16`.
        overrides: Vec<String>,
    },
    /// Summarize run reports into mean, sample std and cost.
    Aggregate {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Write the aggregate report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Group reports by method instead of requiring a single one.
        #[arg(long)]
        by_method: bool,
    },
    /// Print a config, fixed graph or report as Graphviz DOT.
    ExportDot {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config without training.
    Validate { config: PathBuf, overrides: Vec<String> },
}

fn fail(e: &ReportError) -> ExitCode {
    eprintln!("error: {e}");
    match toml::to_string(&ErrorRecord::from(e)) {
        Ok(record) => eprint!("{record}"),
        Err(_) => eprintln!("kind = \"{}\"", e.kind()),
    }
    ExitCode::FAILURE
}

fn run(cli: Cli) -> Result<(), ReportError> {
    match cli.command {
        Command::Adapt { config, seed, mode, objective, arch_epochs, total_epochs, out_dir, overrides } => {
            let opts = AdaptOptions { seed, mode, objective, arch_epochs, total_epochs, overrides, out_dir };
            let outcome = adapt(&config, &opts)?;
            for note in &outcome.notes {
                println!("note: {note}");
            }
            for w in &outcome.report.warnings {
                println!("warning: {w}");
            }
            println!(
                "{} = {:.4} ({:.1}s); report {}",
                outcome.report.metric,
                outcome.report.final_metric,
                outcome.report.wall_seconds,
                outcome.report_path.display()
            );
        }
        Command::Aggregate { reports, out, by_method } => {
            let runs = reports.iter().map(|p| read_toml::<RunReport>(p)).collect::<Result<Vec<_>, _>>()?;
            let agg = if by_method { aggregate_by_method(&runs)? } else { aggregate(&runs)? };
            if let Some(path) = out {
                write_toml(&agg, &path)?;
            }
            print!("{}", render_table(&agg));
        }
        Command::ExportDot { file, out } => {
            let dot = export_dot_file(&file)?;
            match out {
                Some(path) => fs::write(&path, dot).map_err(|source| ReportError::Io { path, source })?,
                None => print!("{dot}"),
            }
        }
        Command::Validate { config, overrides } => {
            let parsed = validate(&config, &overrides)?;
            let free = parsed.graph.free_edges().count();
            println!(
                "ok: graph '{}' with {} nodes, {} edges ({free} free)",
                parsed.graph.name,
                parsed.graph.nodes.len(),
                parsed.graph.edges.len()
            );
            for note in &parsed.notes {
                println!("note: {note}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
