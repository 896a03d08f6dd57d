use clap::Parser;
use cwan_cli::args::Cli;

fn main() {
    if let Err(e) = cwan_cli::run(Cli::parse()) {
        let msg = format!("{e:#}").replace('\n', " ");
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}
