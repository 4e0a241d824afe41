//! Runs the whole command-line pipeline on the small bundled config.
//!
//! cargo run --release --example pipeline -- [output dir]

use clap::Parser;
use failgen::cli::{run, Cli};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| {
        std::env::temp_dir()
            .join("failgen_pipeline")
            .display()
            .to_string()
    });
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pipeline_small.json");
    let code = run(Cli::parse_from([
        "failgen", "pipeline", "--config", config, "--output", &out,
    ]));
    if code != 0 {
        std::process::exit(code);
    }
    let table = std::fs::read_to_string(format!("{out}/report/comparison.md")).unwrap_or_default();
    print!("{table}");
    println!("artifacts and manifest in {out}");
}
