mod args;
mod commands;
mod errors;
mod files;
mod runs;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, PlanCommand, QueryCommand, RefineCommand};
use errors::CliError;

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => commands::cmd_generate(a),
        Command::SelectBest(a) => commands::cmd_select_best(a),
        Command::TrainScorer(a) => commands::cmd_train_scorer(a),
        Command::Cache(a) => commands::cmd_cache(a),
        Command::Tune(a) => commands::cmd_tune(a),
        Command::Pipeline(a) => commands::cmd_pipeline(a),
        Command::Refine(RefineCommand::Run(a)) => commands::cmd_refine_run(a),
        Command::Refine(RefineCommand::Inspect(a)) => commands::cmd_refine_inspect(a),
        Command::Plan(PlanCommand::Dump(a)) => commands::cmd_plan_dump(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Query(QueryCommand::Limit(a)) => commands::cmd_query_limit(a),
    }
}

fn main() -> ExitCode {
    // Die quietly when stdout is a closed pipe (e.g. piped into `head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // Thread count only affects wall time; results are order-preserving.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
