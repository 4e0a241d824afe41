//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use failgen::network::{load_network, GarageNetwork};
use failgen::perception::{SensorConfig, SurrogateParams};
use failgen::sim::{Role, SceneState, VehicleState};

pub fn map(name: &str) -> GarageNetwork {
    load_network(format!("{}/maps/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

/// Two approach lanes (0 from the west, 8 from the south-west) into a
/// three-way decision point at the origin. Option 0 heads east toward the AV
/// loop, options 1 and 2 go north and south. The AV drives a loop whose west
/// side runs down x = 12.
pub fn tiny_net() -> GarageNetwork {
    GarageNetwork::from_json(
        r#"{
        "nodes": [
            {"id":0,"x":-20,"y":0},{"id":1,"x":0,"y":0},{"id":2,"x":10,"y":0},
            {"id":3,"x":0,"y":10},{"id":4,"x":0,"y":-10},
            {"id":5,"x":12,"y":10},{"id":6,"x":12,"y":-10},
            {"id":7,"x":30,"y":-10},{"id":8,"x":30,"y":10},
            {"id":9,"x":-14,"y":-14}
        ],
        "lanes": [
            {"id":0,"from":0,"to":1,"length":20,"speed":5},
            {"id":1,"from":1,"to":2,"length":10,"speed":5},
            {"id":2,"from":1,"to":3,"length":10,"speed":5},
            {"id":3,"from":1,"to":4,"length":10,"speed":5},
            {"id":4,"from":5,"to":6,"length":20,"speed":5},
            {"id":5,"from":6,"to":7,"length":18,"speed":5},
            {"id":6,"from":7,"to":8,"length":20,"speed":5},
            {"id":7,"from":8,"to":5,"length":18,"speed":5},
            {"id":8,"from":9,"to":1,"length":19.79898987322333,"speed":5}
        ],
        "decision_points": [{"id":0,"node":1,"options":[1,2,3]}],
        "spawn_points": [],
        "exit_points": [2,3,4],
        "av_route": [4,5,6,7]
    }"#,
    )
    .unwrap()
}

pub fn vehicle(id: u32, lane: u32, progress: f64, speed: f64) -> VehicleState {
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

/// AV heading south at (12, 5) plus BVs at (lane, progress).
pub fn tiny_scene(bvs: &[(u32, f64)]) -> SceneState {
    let mut vehicles = vec![vehicle(0, 4, 5.0, 2.5)];
    for (i, &(lane, p)) in bvs.iter().enumerate() {
        vehicles.push(vehicle(i as u32 + 1, lane, p, 3.5));
    }
    SceneState {
        timestep: 0,
        time: 0.0,
        next_id: vehicles.len() as u32,
        vehicles,
    }
}

/// Exact positions everywhere; every visible BV closer than 10 m is missed.
pub fn near_miss_params() -> SurrogateParams {
    let mut p = SurrogateParams::uniform(0.0, 0.0);
    for b in 0..p.bin_count() {
        // Distance is the outermost axis of the flattened table.
        let per_band = p.occlusion_edges.len() * p.density_edges.len();
        p.miss[b] = if b < per_band { 1.0 } else { 0.0 };
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P {
    pub x: f64,
    pub y: f64,
}

fn lane_point(net: &GarageNetwork, lane: u32, progress: f64) -> (P, f64) {
    let l = &net.lanes[lane as usize];
    let a = &net.nodes[l.from as usize];
    let b = &net.nodes[l.to as usize];
    let t = progress / l.length;
    let heading = (b.y - a.y).atan2(b.x - a.x);
    (
        P {
            x: a.x + t * (b.x - a.x),
            y: a.y + t * (b.y - a.y),
        },
        heading,
    )
}

fn cross(o: P, a: P, b: P) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Proper or touching intersection of closed segments pq and rs.
fn segments_cross(p: P, q: P, r: P, s: P) -> bool {
    let d1 = cross(r, s, p);
    let d2 = cross(r, s, q);
    let d3 = cross(p, q, r);
    let d4 = cross(p, q, s);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: P, b: P, c: P, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(r, s, p, d1) || on(r, s, q, d2) || on(p, q, r, d3) || on(p, q, s, d4)
}

/// Distance from c to segment ab.
fn dist_to_segment(c: P, a: P, b: P) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((c.x - a.x) * dx + (c.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let (px, py) = (a.x + t * dx, a.y + t * dy);
    ((c.x - px).powi(2) + (c.y - py).powi(2)).sqrt()
}

/// Visible BV ids by direct ray casting against walls and vehicle discs.
pub fn brute_visible(net: &GarageNetwork, scene: &SceneState, sensor: &SensorConfig) -> Vec<u32> {
    let av = scene.vehicles.iter().find(|v| v.id == 0).unwrap();
    let (pos, h) = lane_point(net, av.lane, av.progress);
    let eye = P {
        x: pos.x + sensor.mount_offset * h.cos(),
        y: pos.y + sensor.mount_offset * h.sin(),
    };
    let moving: Vec<(u32, P)> = scene
        .vehicles
        .iter()
        .filter(|v| !v.parked)
        .map(|v| (v.id, lane_point(net, v.lane, v.progress).0))
        .collect();
    let mut out = Vec::new();
    for &(id, p) in &moving {
        if id == 0 {
            continue;
        }
        let range = ((p.x - eye.x).powi(2) + (p.y - eye.y).powi(2)).sqrt();
        if range > sensor.range {
            continue;
        }
        if sensor.fov < std::f64::consts::TAU && range > 0.0 {
            let bearing = (p.y - eye.y).atan2(p.x - eye.x);
            let mut d = (bearing - h).rem_euclid(std::f64::consts::TAU);
            if d > std::f64::consts::PI {
                d = std::f64::consts::TAU - d;
            }
            if d > sensor.fov / 2.0 {
                continue;
            }
        }
        let walled = net.obstacles.iter().any(|o| {
            segments_cross(
                eye,
                p,
                P {
                    x: o.a[0],
                    y: o.a[1],
                },
                P {
                    x: o.b[0],
                    y: o.b[1],
                },
            )
        });
        // A disc of radius 1 hides more than half the target when its center
        // passes within 1 m of the sight line.
        let blocked = moving
            .iter()
            .any(|&(o, c)| o != id && o != 0 && dist_to_segment(c, eye, p) < 1.0);
        if !walled && !blocked {
            out.push(id);
        }
    }
    out.sort_unstable();
    out
}
