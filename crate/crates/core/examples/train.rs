//! Fits the route model on a synthetic dataset and prints the loss curve.

use failgen::network::load_network;
use failgen::policy::{featurize, predict, train, PolicyModel, TrainConfig};
use failgen::recorder::{TrainingSample, TrainingSet};
use failgen::sim::{Role, SceneState, VehicleState};
use rand::Rng;
use rand::SeedableRng;

fn main() -> failgen::Result<()> {
    let net = load_network(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/maps/garage_medium.json"
    ))?;
    let dp = &net.decision_points[0];
    let approach = net
        .lanes
        .iter()
        .find(|l| l.to == dp.node)
        .expect("lane into the point");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);

    // BVs turn off the ring (option 1) whenever the AV is within 15 m.
    let mut set = TrainingSet::default();
    for scenario in 0..60u64 {
        set.scenarios.push(scenario);
        for k in 0..5 {
            let av_lane = net.av_route[rng.random_range(0..net.av_route.len())];
            let av_progress = rng.random_range(0.0..net.lane(av_lane).length);
            let scene = SceneState {
                timestep: 0,
                time: 0.0,
                next_id: 2,
                vehicles: vec![
                    VehicleState {
                        id: 0,
                        lane: av_lane,
                        progress: av_progress,
                        speed: 2.5,
                        role: Role::Av,
                        parked: false,
                        dwell: 0,
                        route_index: 0,
                        committed: None,
                    },
                    VehicleState {
                        id: 1,
                        lane: approach.id,
                        progress: approach.length,
                        speed: 3.5,
                        role: Role::Bv,
                        parked: false,
                        dwell: 0,
                        route_index: 0,
                        committed: None,
                    },
                ],
            };
            let features = featurize(&net, &scene, 1, dp.id, 5.0)?;
            let near = features.0[2] < 0.75;
            set.samples.push(TrainingSample {
                scenario,
                episode: 0,
                frame: k,
                vehicle: 1,
                decision_point: dp.id,
                option: usize::from(near),
                features,
                critical: true,
                failure: true,
            });
        }
    }

    let out = train(&PolicyModel::zeros(&net), &set, &TrainConfig::default())?;
    for e in (0..out.train_loss.len()).step_by(50) {
        println!(
            "epoch {e:3}: train {:.4} val {:.4}",
            out.train_loss[e], out.val_loss[e]
        );
    }
    let sample = &set.samples[0];
    println!(
        "first sample took option {}, model now gives {:?}",
        sample.option,
        predict(&out.model, &sample.features, dp.id)?
    );
    Ok(())
}
