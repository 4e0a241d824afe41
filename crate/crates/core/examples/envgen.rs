//! Shows which branch each waiting BV uses in an intelligent environment.

use failgen::envgen::{
    intelligent_maneuvers, is_critical_state_runtime, EnvironmentSpec, RuntimeRule,
};
use failgen::network::load_network;
use failgen::policy::PolicyModel;
use failgen::rng::{stream_rng, Stream};
use failgen::sim::{choose_maneuvers, init_scene, step, to_maneuvers, SimConfig, StandardProvider};

fn main() -> failgen::Result<()> {
    let net = load_network(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/maps/garage_medium.json"
    ))?;
    let cfg = SimConfig::default();
    let mut model = PolicyModel::zeros(&net);
    // Favor the last option everywhere through the bias column.
    for block in model.blocks.values_mut() {
        let bias = block.weights.len() - 1;
        block.weights[bias] = 2.0;
    }
    let spec = EnvironmentSpec::intelligent_b(model);
    let rule = RuntimeRule::default();

    let mut scene = init_scene(&net, &cfg, 11);
    let mut traffic = stream_rng(11, Stream::Traffic);
    let mut choice = stream_rng(11, Stream::Maneuver);
    let mut shown = 0;
    while shown < 8 && scene.timestep < 2000 {
        for c in intelligent_maneuvers(&net, &scene, &spec, cfg.v_max)? {
            let bv = scene
                .vehicle(c.vehicle)
                .expect("waiting BV is in the scene");
            println!(
                "t={:6.1}s BV {:2} at point {}: critical {}, {:?} {:.3?}",
                scene.time,
                c.vehicle,
                c.decision_point,
                is_critical_state_runtime(&net, &scene, bv, &rule),
                c.choice.source,
                c.choice.probs
            );
            shown += 1;
        }
        let records = choose_maneuvers(&net, &scene, &StandardProvider, &mut choice)?;
        scene = step(&net, &cfg, &scene, &to_maneuvers(&records), &mut traffic)?;
    }
    Ok(())
}
