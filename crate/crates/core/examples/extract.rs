//! Cuts failure windows out of baseline episodes and marks critical BVs.

use failgen::network::load_network;
use failgen::perception::{FailureDefinition, SensorConfig, SurrogateDetector, SurrogateParams};
use failgen::recorder::{
    build_dataset, marked_scenarios, state_counts, CriticalStateRule, DatasetMode,
};
use failgen::sim::{run_episode, SimConfig, StandardProvider};

fn main() -> failgen::Result<()> {
    let net = load_network(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/maps/garage_medium.json"
    ))?;
    let mut cfg = SimConfig::default();
    cfg.horizon = cfg.steps_for(900.0);
    let det = SurrogateDetector::new(SurrogateParams::default_garage(), SensorConfig::default());
    let episodes = (1..=4)
        .map(|seed| run_episode(&net, &cfg, seed, &StandardProvider, &det))
        .collect::<failgen::Result<Vec<_>>>()?;

    let def = FailureDefinition::from_label("a")?;
    let rule = CriticalStateRule::default();
    let scenarios: Vec<_> = episodes
        .iter()
        .flat_map(|ep| marked_scenarios(ep, &def, &rule, &net))
        .collect();
    let (total, critical) = state_counts(&scenarios);
    println!(
        "{} failure windows, {total} BV states, {critical} critical",
        scenarios.len()
    );

    if let Some(sc) = scenarios.iter().find(|s| !s.critical_bvs.is_empty()) {
        println!(
            "episode {} frame {}: window from frame {}, critical BVs {:?}",
            sc.episode_id, sc.failure_frame, sc.window_start, sc.critical_bvs
        );
    }
    for mode in [DatasetMode::AllStates, DatasetMode::CriticalOnly] {
        let set = build_dataset(&net, &scenarios, mode, cfg.v_max)?;
        println!("{mode:?}: {} decision-point samples", set.len());
    }
    Ok(())
}
