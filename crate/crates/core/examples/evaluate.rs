//! Failure-frame ratios of the original environment with intervals.
//!
//! cargo run --release --example evaluate -- [seeds] [seconds]

use failgen::envgen::EnvironmentSpec;
use failgen::eval::{failure_ratio, Experiment};
use failgen::network::load_network;
use failgen::perception::{FailureDefinition, SensorConfig, SurrogateParams};
use failgen::sim::SimConfig;

fn main() -> failgen::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map_or(3, |s| s.parse().expect("seed count"));
    let seconds: f64 = args.next().map_or(900.0, |s| s.parse().expect("seconds"));

    let exp = Experiment {
        net: load_network(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/maps/garage_medium.json"
        ))?,
        sim: SimConfig::default(),
        sensor: SensorConfig::default(),
        surrogate: SurrogateParams::default_garage(),
    };
    let seeds: Vec<u64> = (1..=n).collect();
    let report = failure_ratio(
        &exp,
        &EnvironmentSpec::original(),
        seconds,
        &seeds,
        &FailureDefinition::standard(),
    )?;
    println!("{} frames over {} seeds", report.frames, seeds.len());
    for d in &report.definitions {
        println!(
            "{}: {}/{} = {:.3}%  wilson [{:.3}%, {:.3}%]  bootstrap [{:.3}%, {:.3}%]",
            d.definition,
            d.failures,
            d.frames,
            100.0 * d.ratio,
            100.0 * d.wilson.0,
            100.0 * d.wilson.1,
            100.0 * d.bootstrap.0,
            100.0 * d.bootstrap.1
        );
    }
    Ok(())
}
