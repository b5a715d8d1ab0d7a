//! Experiment runner for deep echo state networks: configuration, model
//! files, the train/evaluate pipeline and report writers behind the
//! `deepesn` binary.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod model_file;
pub mod pipeline;
pub mod probe;
pub mod report;

use clap::Parser;

use crate::args::{Cli, Command};
pub use crate::error::CliError;

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => {
            for o in commands::run(a)? {
                let extra = o
                    .score
                    .as_ref()
                    .map(|s| format!(" {}={:.6}", s.name(), s.value()))
                    .unwrap_or_default();
                println!(
                    "seed {} lambda {:e} test_nrmse {:.6e}{extra}",
                    o.seed, o.lambda, o.test_nrmse
                );
            }
        }
        Command::Analyze(a) => {
            let b = commands::analyze_cmd(a)?;
            if let Some(l) = &b.lyapunov {
                println!("mlle {:.6e}", l.mlle);
            }
            if let Some(e) = &b.esp {
                println!("esp converged {} final distance {:.3e}", e.converged, e.final_distance);
            }
            if let Some(s) = &b.spectral {
                println!("centroids {:?}", s.per_layer_centroid);
            }
        }
        Command::Compare(a) => {
            for r in commands::compare(a)?.rows {
                println!(
                    "{}x{} {} median {:.6e} iqr {:.3e}",
                    r.n_layers, r.units_per_layer, r.metric, r.summary.median, r.summary.iqr
                );
            }
        }
        Command::Design(a) => {
            for o in commands::design(a)? {
                println!("seed {} depth {}", o.seed, o.depth);
            }
        }
        Command::Gen(a) => {
            for p in commands::gen(a)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
