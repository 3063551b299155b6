use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

use commands::{EvalArgs, MakeLrArgs, SelftestArgs, SrArgs, SummarizeArgs, TrainArgs};

/// Large-receptive-field super-resolution networks: architecture analysis,
/// training, evaluation and inference.
#[derive(Debug, Parser)]
#[command(name = "lrfnet", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parameter count and receptive field of one or more configurations.
    Summarize(SummarizeArgs),
    /// Train a network on a directory of HR images.
    Train(TrainArgs),
    /// Score a checkpoint (or plain bicubic) on a dataset.
    Eval(EvalArgs),
    /// Super-resolve one low-resolution image.
    Sr(SrArgs),
    /// Write LR images and bicubic network inputs for an HR image tree.
    MakeLr(MakeLrArgs),
    /// Run the built-in consistency checks.
    Selftest(SelftestArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Summarize(a) => commands::summarize(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sr(a) => commands::sr(a),
        Command::MakeLr(a) => commands::make_lr(a),
        Command::Selftest(a) => commands::selftest(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
