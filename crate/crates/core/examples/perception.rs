//! Runs the surrogate detector on one scene and prints what it saw.

use failgen::network::load_network;
use failgen::perception::{sightings, SensorConfig, SurrogateDetector, SurrogateParams};
use failgen::rng::{stream_rng, Stream};
use failgen::sim::{run_episode, SimConfig, StandardProvider};

fn main() -> failgen::Result<()> {
    let net = load_network(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/maps/garage_medium.json"
    ))?;
    let cfg = SimConfig {
        horizon: 600,
        ..SimConfig::default()
    };
    let sensor = SensorConfig::default();
    let params = SurrogateParams::default_garage();
    // Take the busiest frame of a short run.
    let det = SurrogateDetector::new(params.clone(), sensor);
    let ep = run_episode(&net, &cfg, 3, &StandardProvider, &det)?;
    let frame = ep
        .frames
        .iter()
        .max_by_key(|f| f.perception.targets.len())
        .expect("episode has frames");
    let scene = frame.scene();
    println!("t = {:.1} s, {} BVs", scene.time, frame.bvs.len());

    for s in sightings(&net, &scene, &sensor) {
        let t = s.target;
        println!(
            "BV {:2} at {:5.1} m, occlusion {:.2}, density {}, {}",
            t.vehicle,
            t.distance,
            t.occlusion,
            t.density,
            if s.visible {
                format!(
                    "bin {} sigma {:.3}",
                    params.bin(&t),
                    params.sigma[params.bin(&t)]
                )
            } else {
                "hidden".to_string()
            }
        );
    }

    let mut rng = stream_rng(3, Stream::Perception);
    let (out, m) = det.observe(&net, &scene, &mut rng);
    for d in &out.detections {
        println!(
            "detection of BV {} at ({:.2}, {:.2}) matched {:?}",
            d.source, d.x, d.y, d.matched
        );
    }
    println!("TE_max {:.3} m, false negatives {}", m.te_max, m.fn_count);
    Ok(())
}
