//! `attire`: train, index, query and evaluate category-conditioned outfit
//! embeddings.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numerical, 5 integrity.

use clap::Parser;

use attire::commands::{run, Command};

#[derive(Parser)]
#[command(
    name = "attire",
    version,
    about = "Outfit complementary item retrieval: subspace-attention embeddings, ranking-loss training, category-enumerated indexing and fused retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli.command) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
