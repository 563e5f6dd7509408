use clap::Parser;
use fairaudit_cli::commands::{cmd_audit, cmd_simulate, Cli, Command};

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Audit(args) => cmd_audit(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
