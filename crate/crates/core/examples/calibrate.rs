//! Full amplification and retraining study on a bundled map.
//!
//! Trains both environment models on baseline episodes, then prints the
//! failure-frame ratios of the three environments (5 seeds x 0.5 h) and the
//! retraining comparison.
//!
//! cargo run --release --example calibrate -- [map] [baseline seeds]

use std::time::Instant;

use failgen::envgen::{generate_environments, EnvironmentSpec, RuntimeRule};
use failgen::eval::{failure_ratio, retraining_comparison, Experiment};
use failgen::network::load_network;
use failgen::perception::{FailureDefinition, SensorConfig, SurrogateParams};
use failgen::policy::TrainConfig;
use failgen::recorder::CriticalStateRule;
use failgen::sim::SimConfig;

const HALF_HOUR: f64 = 1800.0;

fn main() -> failgen::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let map = args
        .get(1)
        .cloned()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/maps/garage_medium.json").into());
    let n_base: u64 = args.get(2).map_or(20, |s| s.parse().expect("seed count"));

    let exp = Experiment {
        net: load_network(&map)?,
        sim: SimConfig::default(),
        sensor: SensorConfig::default(),
        surrogate: SurrogateParams::default_garage(),
    };
    let defs = FailureDefinition::standard();
    let t0 = Instant::now();

    let base_seeds: Vec<u64> = (1000..1000 + n_base).collect();
    let baseline = exp.run_environment(&EnvironmentSpec::original(), HALF_HOUR, &base_seeds)?;
    let gen = generate_environments(
        &exp.net,
        &baseline,
        &defs[0],
        &CriticalStateRule::default(),
        &TrainConfig::default(),
        RuntimeRule::default(),
        exp.sim.v_max,
    )?;
    println!(
        "{} failure scenarios, states {:?}, samples all={} critical={}",
        gen.scenarios,
        gen.state_counts,
        gen.all_states.len(),
        gen.critical_only.len()
    );

    let seeds: Vec<u64> = (1..=5).collect();
    let envs = [
        EnvironmentSpec::original(),
        gen.intelligent_a.clone(),
        gen.intelligent_b.clone(),
    ];
    let reports = envs
        .iter()
        .map(|env| failure_ratio(&exp, env, HALF_HOUR, &seeds, &defs))
        .collect::<failgen::Result<Vec<_>>>()?;
    for (i, def) in defs.iter().enumerate() {
        let [o, a, b] = [0, 1, 2].map(|k| &reports[k].definitions[i]);
        println!(
            "{}: original {:.4} [{:.4}, {:.4}]  A {:.4} (x{:.2})  B {:.4} [{:.4}, {:.4}] (x{:.2})",
            def.label(),
            o.ratio,
            o.wilson.0,
            o.wilson.1,
            a.ratio,
            a.ratio / o.ratio,
            b.ratio,
            b.wilson.0,
            b.wilson.1,
            b.ratio / o.ratio
        );
    }

    let data_seeds: Vec<u64> = (2000..2005).collect();
    let orig = exp.run_environment(&envs[0], HALF_HOUR, &data_seeds)?;
    let intel = exp.run_environment(&gen.intelligent_b, HALF_HOUR, &data_seeds)?;
    let r = retraining_comparison(
        &exp,
        &orig,
        &intel,
        &exp.surrogate,
        HALF_HOUR,
        &seeds,
        &defs,
    )?;
    for (i, (d, red)) in r.reduction.iter().enumerate() {
        println!(
            "retrained {d}: on original {:.4}  on intelligent {:.4}  reduction {:.1}%",
            r.original_trained.definitions[i].ratio,
            r.intelligent_trained.definitions[i].ratio,
            100.0 * red
        );
    }
    println!("{:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
