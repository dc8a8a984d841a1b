//! Command implementations behind the `slicetopo` binary.

use std::path::Path;

pub mod args;
pub mod commands;
pub mod config;
pub mod plot;

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] slicetopo::Error),
    #[error("{0}")]
    Output(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Output(format!("{}: {e}", path.display()))
    }

    /// 2 for usage errors, 3 for data and I/O errors, 4 for failed
    /// verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Output(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Recognize(a) => commands::recognize(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Plot(a) => commands::plot(a),
        Command::Describe(a) => commands::describe(a),
    }
}
