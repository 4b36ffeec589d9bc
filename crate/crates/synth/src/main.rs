//! Regenerates the synthetic fixture directory.

use std::path::PathBuf;
use std::process::ExitCode;

use causeway_synth::{build_fixtures, FixtureOptions};
use clap::Parser;

#[derive(Parser)]
#[command(name = "causeway-synth", about = "Write the synthetic world, cassette and trained policy")]
struct Args {
    /// Output directory.
    #[arg(long, default_value = "fixtures/synthetic")]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of four-entity causal chains.
    #[arg(long, default_value_t = 20)]
    chains: usize,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    let opts = FixtureOptions {
        seed: args.seed,
        chains: args.chains,
        ..FixtureOptions::default()
    };
    match build_fixtures(&args.out, &opts) {
        Ok(table) => {
            print!("{table}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
