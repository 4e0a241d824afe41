//! Exact event probability on a tiny instance against Monte Carlo.
//!
//! One BV waits at a three-way junction; the event is a perception failure
//! within two steps, which only happens if the BV drives toward the AV.

use failgen::envgen::EnvironmentSpec;
use failgen::eval::{estimate_event_probability, exhaustive_event_probability};
use failgen::network::GarageNetwork;
use failgen::perception::{FailureDefinition, SensorConfig, SurrogateDetector, SurrogateParams};
use failgen::policy::PolicyModel;
use failgen::sim::{run_episode_from, Role, SceneState, SimConfig, VehicleState};

const NET: &str = r#"{
    "nodes": [{"id":0,"x":-20,"y":0},{"id":1,"x":0,"y":0},{"id":2,"x":10,"y":0},
              {"id":3,"x":0,"y":10},{"id":4,"x":0,"y":-10},
              {"id":5,"x":12,"y":10},{"id":6,"x":12,"y":-10},
              {"id":7,"x":30,"y":-10},{"id":8,"x":30,"y":10}],
    "lanes": [{"id":0,"from":0,"to":1,"length":20,"speed":5},
              {"id":1,"from":1,"to":2,"length":10,"speed":5},
              {"id":2,"from":1,"to":3,"length":10,"speed":5},
              {"id":3,"from":1,"to":4,"length":10,"speed":5},
              {"id":4,"from":5,"to":6,"length":20,"speed":5},
              {"id":5,"from":6,"to":7,"length":18,"speed":5},
              {"id":6,"from":7,"to":8,"length":20,"speed":5},
              {"id":7,"from":8,"to":5,"length":18,"speed":5}],
    "decision_points": [{"id":0,"node":1,"options":[1,2,3]}],
    "spawn_points": [],
    "exit_points": [2,3,4],
    "av_route": [4,5,6,7]
}"#;

fn vehicle(id: u32, lane: u32, progress: f64, speed: f64) -> VehicleState {
    VehicleState {
        id,
        lane,
        progress,
        speed,
        role: if id == 0 { Role::Av } else { Role::Bv },
        parked: false,
        dwell: 0,
        route_index: 0,
        committed: None,
    }
}

fn main() -> failgen::Result<()> {
    let net = GarageNetwork::from_json(NET)?;
    let cfg = SimConfig {
        horizon: 3,
        initial_bvs: 0,
        spawn_rate: Some(0.0),
        ..SimConfig::default()
    };
    let scene = SceneState {
        timestep: 0,
        time: 0.0,
        next_id: 2,
        vehicles: vec![vehicle(0, 4, 5.0, 2.5), vehicle(1, 0, 20.0, 3.5)],
    };
    // Exact positions; any visible BV under 10 m is missed.
    let mut params = SurrogateParams::uniform(0.0, 0.0);
    let per_band = params.occlusion_edges.len() * params.density_edges.len();
    for b in 0..per_band {
        params.miss[b] = 1.0;
    }
    let det = SurrogateDetector::new(params, SensorConfig::default());
    let def = FailureDefinition::FnPositive;
    let model = PolicyModel::zeros(&net);

    let exact = exhaustive_event_probability(&net, &cfg, &scene, 0, &model, &det, &def)?;
    println!(
        "exact {:.6} over {} sequences (mass {:.12})",
        exact.probability, exact.sequences, exact.total_mass
    );

    let spec = EnvironmentSpec::original();
    let provider = spec.provider(cfg.v_max);
    let episodes = (0..4000)
        .map(|seed| run_episode_from(&net, &cfg, scene.clone(), seed, provider.as_ref(), &det))
        .collect::<failgen::Result<Vec<_>>>()?;
    let mc = estimate_event_probability(&episodes, &def)?;
    println!(
        "Monte Carlo {:.4} +- {:.4} from {} episodes",
        mc.probability, mc.std_error, mc.episodes
    );
    Ok(())
}
