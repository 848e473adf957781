use clap::Parser;
use journey_cli::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("journey: {e}");
        std::process::exit(e.exit_code());
    }
}
