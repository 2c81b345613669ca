use clap::Parser;

use storebid::cli::{report_error, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        report_error(&e);
        std::process::exit(1);
    }
}
