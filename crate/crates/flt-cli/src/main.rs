use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flt_cli::{compare_report, run_experiment, ScenarioConfig};

#[derive(Parser)]
#[command(name = "flt", about = "Federated-learning simulator with one-shot client relatedness discovery", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON scenario config.
    Run {
        config: PathBuf,
    },
    /// Summarize one or more metrics CSVs into a comparison table.
    Compare {
        csv: Vec<PathBuf>,
        /// Write the table as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write per-round test-accuracy curves as an SVG here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Check a scenario config and list every problem found.
    Validate {
        config: PathBuf,
    },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = match ScenarioConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            match run_experiment(&cfg) {
                Ok(summary) => {
                    println!("wrote {}", summary.output_dir.display());
                    for m in &summary.methods {
                        println!(
                            "{:<14} final test acc {:.4} ±{:.4}  variance {:.5}",
                            m.method.as_str(),
                            m.final_mean_test_acc,
                            m.final_test_acc_stderr,
                            m.final_test_acc_variance
                        );
                    }
                    if let Some(ari) = summary.graph_ari {
                        println!("graph clusters: {:?}  ARI vs ground truth: {ari:.4}", summary.graph_num_clusters);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Compare { csv, json, svg } => {
            match compare_report(&csv, json.as_deref(), svg.as_deref()) {
                Ok(table) => {
                    print!("{table}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Validate { config } => match ScenarioConfig::load(&config) {
            Ok(cfg) => {
                let problems = cfg.validate();
                if problems.is_empty() {
                    println!("ok");
                    ExitCode::SUCCESS
                } else {
                    for p in &problems {
                        eprintln!("{p}");
                    }
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::FAILURE
            }
        },
        Command::Version => {
            println!("flt {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
