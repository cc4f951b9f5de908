use clap::Parser;
use culture_bridge_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CULTURE_BRIDGE_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("culture-bridge: {e}");
        std::process::exit(e.exit_code());
    }
}
