use clap::Parser;
use framespa::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("FRAMESPA_LOG")).init();
    std::process::exit(run(Cli::parse()));
}
