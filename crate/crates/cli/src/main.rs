use clap::{Parser, Subcommand};
use nfftgp_cli::commands::run;
use nfftgp_cli::config::{Config, KEYS};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nfftgp", version, about = "Additive Gaussian-process regression with NFFT fast summation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Opts {
    /// `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides as `--key value` or `--key=value`
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit hyperparameters with Adam
    Train(Opts),
    /// Posterior mean and variance at test points
    Predict(Opts),
    /// Score features and build windows
    GroupFeatures(Opts),
    /// Compare NFFT and dense matvecs
    MatvecBench(Opts),
    /// CG against AAFN-preconditioned CG over a length-scale sweep
    PrecondBench(Opts),
    /// Fourier truncation bounds against measured errors
    VerifyBounds(Opts),
    /// Write the synthetic datasets
    MakeSynthetic(Opts),
    /// List config keys with defaults
    Keys,
}

fn error_record(command: &str, message: &str) -> String {
    serde_json::json!({ "status": "error", "command": command, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, opts) = match cli.command {
        Command::Train(o) => ("train", o),
        Command::Predict(o) => ("predict", o),
        Command::GroupFeatures(o) => ("group-features", o),
        Command::MatvecBench(o) => ("matvec-bench", o),
        Command::PrecondBench(o) => ("precond-bench", o),
        Command::VerifyBounds(o) => ("verify-bounds", o),
        Command::MakeSynthetic(o) => ("make-synthetic", o),
        Command::Keys => {
            for (k, v, doc) in KEYS {
                println!("{k} = {v}  # {doc}");
            }
            return ExitCode::SUCCESS;
        }
    };
    let result = (|| {
        let mut cfg = match &opts.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        cfg.apply_flags(&opts.overrides)?;
        run(name, &cfg)
    })();
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("{}", error_record(name, &msg));
            ExitCode::FAILURE
        }
    }
}
