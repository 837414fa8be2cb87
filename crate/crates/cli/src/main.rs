use clap::Parser;

use flqdsnn_cli::config::SEED_ENV;
use flqdsnn_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let env_seed = std::env::var(SEED_ENV).ok();
    match run(&cli, env_seed.as_deref()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("flqdsnn: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
