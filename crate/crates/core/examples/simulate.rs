//! Records one baseline episode and prints per-definition failure counts.
//!
//! cargo run --release --example simulate -- [seed] [seconds]

use failgen::network::load_network;
use failgen::perception::{FailureDefinition, SensorConfig, SurrogateDetector, SurrogateParams};
use failgen::sim::{run_episode, SimConfig, StandardProvider};

fn main() -> failgen::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let seconds: f64 = args.next().map_or(600.0, |s| s.parse().expect("seconds"));

    let net = load_network(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/maps/garage_medium.json"
    ))?;
    let mut cfg = SimConfig::default();
    cfg.horizon = cfg.steps_for(seconds);
    let det = SurrogateDetector::new(SurrogateParams::default_garage(), SensorConfig::default());
    let ep = run_episode(&net, &cfg, seed, &StandardProvider, &det)?;

    let peak = ep.frames.iter().map(|f| f.bvs.len()).max().unwrap_or(0);
    let choices: usize = ep.frames.iter().map(|f| f.maneuvers.len()).sum();
    println!(
        "{} frames, at most {peak} BVs, {choices} route choices",
        ep.frames.len()
    );
    for def in FailureDefinition::standard() {
        let n = ep.failure_frames(&def);
        println!(
            "definition {}: {n} failure frames ({:.2}%)",
            def.label(),
            100.0 * n as f64 / ep.frames.len() as f64
        );
    }
    ep.write_jsonl(std::io::sink()).expect("serializes");
    Ok(())
}
