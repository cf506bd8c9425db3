use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedkg::cli;
use fedkg::manifest::RunManifest;

#[derive(Parser)]
#[command(name = "fedkg", version, about = "Federated knowledge graph embedding toolkit")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the root seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Partition a triple file across clients.
    Split(Common),
    /// Train per the manifest's mode and model.
    Train(Common),
    /// Run the reconstruction attack against a finished run.
    Attack(Common),
    /// Compare finished runs.
    Report(Common),
}

fn run(cmd: Cmd) -> fedkg::Result<()> {
    let (common, which) = match cmd {
        Cmd::Split(c) => (c, "split"),
        Cmd::Train(c) => (c, "train"),
        Cmd::Attack(c) => (c, "attack"),
        Cmd::Report(c) => (c, "report"),
    };
    let mut m = RunManifest::load(&common.manifest)?;
    if let Some(out) = common.output {
        m.output_dir = out;
    }
    if let Some(seed) = common.seed {
        m.seed = seed;
    }
    match which {
        "split" => {
            let stats = cli::cmd_split(&m)?;
            println!("{}", serde_json::to_string(&stats)?);
        }
        "train" => {
            let (_, metrics) = cli::cmd_train(&m)?;
            println!("{}", serde_json::to_string(&cli::describe(&metrics))?);
        }
        "attack" => {
            let report = cli::cmd_attack(&m)?;
            for r in &report.results {
                println!("LR={} ERR={:.4} TRR={:.4}", r.leakage_ratio, r.mean_err, r.mean_trr);
            }
        }
        _ => {
            cli::cmd_report(&m)?;
            println!("{}", m.output_dir.join(cli::SUMMARY_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
