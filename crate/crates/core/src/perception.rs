//! Surrogate perception.
//!
//! Stands in for a trained 3D detector. A BV is a detection target when the
//! AV's sensor can see it; each target is then missed or localized with an
//! error whose scale depends on three scene features: range, how much of it
//! other vehicles hide, and how crowded its surroundings are.
//!
//! Visibility: the sight segment runs from the sensor to the BV center. A wall
//! crossing the segment hides the BV. Every other moving vehicle is a disc of
//! radius [`FOOTPRINT_RADIUS`]; a disc whose center lies at distance `d` from
//! the segment hides the fraction `1 - d / 2r` of the target's width
//! (orthographic overlap of two equal discs). The BV is hidden when any single
//! disc covers more than half of it, which happens exactly when the segment
//! enters that disc. Parked BVs are scenery and neither occlude nor get
//! detected.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{point_segment_distance, segments_intersect, Vec2};
use crate::network::GarageNetwork;
use crate::recorder::Episode;
use crate::sim::{vehicle_pose, Role, SceneState, AV_ID};

pub const FOOTPRINT_RADIUS: f64 = 1.0;
pub const DENSITY_RADIUS: f64 = 10.0;
pub const MATCH_GATE: f64 = 2.0;
pub const SURROGATE_SCHEMA: &str = "failgen.surrogate/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Meters.
    pub range: f64,
    /// Horizontal field of view, radians.
    pub fov: f64,
    /// Sensor position ahead of the AV center, meters.
    pub mount_offset: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            range: 30.0,
            fov: std::f64::consts::TAU,
            mount_offset: 1.5,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0) {
            return Err(Error::Config("sensor range must be positive".into()));
        }
        if !(self.fov > 0.0 && self.fov <= std::f64::consts::TAU + 1e-12) {
            return Err(Error::Config("sensor fov must lie in (0, 2pi]".into()));
        }
        Ok(())
    }
}

/// Geometry of one BV as seen from the AV sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub vehicle: u32,
    pub x: f64,
    pub y: f64,
    /// Sensor-to-center distance, meters.
    pub distance: f64,
    /// Largest fraction of the target hidden by a single vehicle.
    pub occlusion: f64,
    /// Other moving vehicles, AV included, within [`DENSITY_RADIUS`].
    pub density: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sighting {
    pub target: Target,
    pub visible: bool,
}

fn sensor_origin(net: &GarageNetwork, scene: &SceneState, sensor: &SensorConfig) -> (Vec2, f64) {
    let pose = vehicle_pose(net, scene.av());
    let (s, c) = pose.heading.sin_cos();
    (
        pose.position()
            .add(Vec2::new(c, s).scale(sensor.mount_offset)),
        pose.heading,
    )
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Visibility and features for every moving BV, ordered as in the scene.
pub fn sightings(net: &GarageNetwork, scene: &SceneState, sensor: &SensorConfig) -> Vec<Sighting> {
    let (origin, heading) = sensor_origin(net, scene, sensor);
    let movers: Vec<(u32, Role, Vec2)> = scene
        .vehicles
        .iter()
        .filter(|v| !v.parked)
        .map(|v| (v.id, v.role, vehicle_pose(net, v).position()))
        .collect();
    let walls: Vec<(Vec2, Vec2)> = net.obstacles.iter().map(|o| o.endpoints()).collect();

    let mut out = Vec::new();
    for &(id, role, pos) in &movers {
        if role != Role::Bv {
            continue;
        }
        let distance = origin.dist(pos);
        let density = movers
            .iter()
            .filter(|&&(o, _, p)| o != id && p.dist(pos) <= DENSITY_RADIUS)
            .count() as u32;
        let mut occlusion: f64 = 0.0;
        for &(o, _, p) in &movers {
            if o == id || o == AV_ID {
                continue;
            }
            let d = point_segment_distance(p, origin, pos);
            if d < 2.0 * FOOTPRINT_RADIUS {
                occlusion = occlusion.max(1.0 - d / (2.0 * FOOTPRINT_RADIUS));
            }
        }
        let in_range = distance <= sensor.range;
        let in_fov = sensor.fov >= std::f64::consts::TAU
            || distance == 0.0
            || angle_diff((pos.y - origin.y).atan2(pos.x - origin.x), heading) <= sensor.fov / 2.0;
        let walled = walls
            .iter()
            .any(|&(a, b)| segments_intersect(origin, pos, a, b));
        let visible = in_range && in_fov && !walled && occlusion <= 0.5;
        out.push(Sighting {
            target: Target {
                vehicle: id,
                x: pos.x,
                y: pos.y,
                distance,
                occlusion,
                density,
            },
            visible,
        });
    }
    out
}

/// Ids of the BVs the AV can currently see, ascending.
pub fn visible_set(net: &GarageNetwork, scene: &SceneState, sensor: &SensorConfig) -> Vec<u32> {
    let mut ids: Vec<u32> = sightings(net, scene, sensor)
        .into_iter()
        .filter(|s| s.visible)
        .map(|s| s.target.vehicle)
        .collect();
    ids.sort_unstable();
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    /// Ground-truth vehicle that produced this detection.
    pub source: u32,
    /// Assigned by matching; may differ from `source` in crowded scenes.
    #[serde(default)]
    pub matched: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerceptionOutput {
    pub detections: Vec<Detection>,
    /// Visible ground truth with the features that drove detection.
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerceptionMetrics {
    /// Largest matched position error, meters; 0 without matches.
    pub te_max: f64,
    /// Visible BVs without a matched detection.
    pub fn_count: u32,
}

/// Greedy one-to-one matching within [`MATCH_GATE`], shortest pairs first.
pub fn match_detections(output: &PerceptionOutput) -> Vec<Option<u32>> {
    let mut pairs = Vec::new();
    for (di, d) in output.detections.iter().enumerate() {
        for (ti, t) in output.targets.iter().enumerate() {
            let dist = (d.x - t.x).hypot(d.y - t.y);
            if dist <= MATCH_GATE {
                pairs.push((dist, di, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_used = vec![None; output.detections.len()];
    let mut tgt_used = vec![false; output.targets.len()];
    for (_, di, ti) in pairs {
        if det_used[di].is_none() && !tgt_used[ti] {
            det_used[di] = Some(output.targets[ti].vehicle);
            tgt_used[ti] = true;
        }
    }
    det_used
}

pub fn metrics(output: &PerceptionOutput) -> PerceptionMetrics {
    let matches = match_detections(output);
    let mut te_max: f64 = 0.0;
    let mut matched = 0u32;
    for (d, m) in output.detections.iter().zip(&matches) {
        if let Some(id) = m {
            let t = output
                .targets
                .iter()
                .find(|t| t.vehicle == *id)
                .expect("matched target exists");
            te_max = te_max.max((d.x - t.x).hypot(d.y - t.y));
            matched += 1;
        }
    }
    PerceptionMetrics {
        te_max,
        fn_count: output.targets.len() as u32 - matched,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureDefinition {
    TeMaxAbove { theta: f64 },
    FnPositive,
}

impl FailureDefinition {
    /// The four experiment definitions a-d.
    pub fn standard() -> [FailureDefinition; 4] {
        [
            FailureDefinition::TeMaxAbove { theta: 0.5 },
            FailureDefinition::TeMaxAbove { theta: 0.8 },
            FailureDefinition::TeMaxAbove { theta: 1.0 },
            FailureDefinition::FnPositive,
        ]
    }

    pub fn from_label(label: &str) -> Result<Self> {
        let idx = match label {
            "a" => 0,
            "b" => 1,
            "c" => 2,
            "d" => 3,
            other => {
                return Err(Error::Config(format!(
                    "unknown failure definition {other:?} (expected a, b, c or d)"
                )))
            }
        };
        Ok(Self::standard()[idx])
    }

    pub fn label(&self) -> String {
        match *self {
            FailureDefinition::TeMaxAbove { theta } => {
                match Self::standard().iter().position(|d| *d == *self) {
                    Some(i) => ["a", "b", "c"][i].to_string(),
                    None => format!("te>{theta}"),
                }
            }
            FailureDefinition::FnPositive => "d".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FailureDefinition::TeMaxAbove { theta } if !(theta > 0.0) => {
                Err(Error::Config("failure threshold must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn is_failure(m: &PerceptionMetrics, def: &FailureDefinition) -> bool {
    match *def {
        FailureDefinition::TeMaxAbove { theta } => m.te_max > theta,
        FailureDefinition::FnPositive => m.fn_count > 0,
    }
}

/// Binned error profile of the surrogate detector.
///
/// Bin edges are lower bounds; the last band of each axis is open-ended.
/// Tables are flattened as `(distance * n_occlusion + occlusion) * n_density + density`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub schema: String,
    pub distance_edges: Vec<f64>,
    pub occlusion_edges: Vec<f64>,
    pub density_edges: Vec<u32>,
    /// Per-axis positional error scale, meters.
    pub sigma: Vec<f64>,
    /// Miss probability.
    pub miss: Vec<f64>,
    /// Training exposure per bin.
    pub counts: Vec<u64>,
    pub sigma_min: f64,
    pub miss_floor: f64,
    /// Exposure scale of the learning curve, observations.
    pub tau: f64,
}

fn band<T: PartialOrd + Copy>(edges: &[T], value: T) -> usize {
    edges.iter().rposition(|&e| value >= e).unwrap_or(0)
}

impl SurrogateParams {
    /// Untrained profile for the bundled garages.
    ///
    /// Error grows with range, occlusion and crowding; crowding dominates.
    pub fn default_garage() -> Self {
        let distance_edges = vec![0.0, 10.0, 20.0];
        let occlusion_edges = vec![0.0, 0.05, 0.3];
        let density_edges = vec![0, 1, 2, 3];
        let dist_term = [0.0, 0.01, 0.03];
        let occ_term = [0.0, 0.04, 0.08];
        let dens_term = [0.0, 0.14, 0.22, 0.28];
        let occ_miss = [0.0, 0.004, 0.012];
        let dens_miss = [0.0, 0.002, 0.006, 0.012];
        let mut sigma = Vec::new();
        let mut miss = Vec::new();
        for d in 0..3 {
            for o in 0..3 {
                for n in 0..4 {
                    sigma.push(0.1 + dist_term[d] + occ_term[o] + dens_term[n]);
                    miss.push(0.0005 + occ_miss[o] + dens_miss[n]);
                }
            }
        }
        let bins = sigma.len();
        Self {
            schema: SURROGATE_SCHEMA.to_string(),
            distance_edges,
            occlusion_edges,
            density_edges,
            sigma,
            miss,
            counts: vec![0; bins],
            sigma_min: 0.1,
            miss_floor: 0.0005,
            tau: 60.0,
        }
    }

    /// Same binning with constant tables; handy for exact tests.
    pub fn uniform(sigma: f64, miss: f64) -> Self {
        let mut p = Self::default_garage();
        p.sigma.iter_mut().for_each(|s| *s = sigma);
        p.miss.iter_mut().for_each(|m| *m = miss);
        p.sigma_min = p.sigma_min.min(sigma);
        p.miss_floor = p.miss_floor.min(miss);
        p
    }

    pub fn bin_count(&self) -> usize {
        self.distance_edges.len() * self.occlusion_edges.len() * self.density_edges.len()
    }

    pub fn bin(&self, t: &Target) -> usize {
        let d = band(&self.distance_edges, t.distance);
        let o = band(&self.occlusion_edges, t.occlusion);
        let n = band(&self.density_edges, t.density);
        (d * self.occlusion_edges.len() + o) * self.density_edges.len() + n
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.bin_count();
        let mut problems = Vec::new();
        if self.schema != SURROGATE_SCHEMA {
            problems.push(format!("unsupported schema {:?}", self.schema));
        }
        if self.sigma.len() != n || self.miss.len() != n || self.counts.len() != n {
            problems.push(format!("tables must have {n} entries"));
        }
        if !(self.sigma_min > 0.0) {
            problems.push("sigma_min must be positive".into());
        }
        if self
            .sigma
            .iter()
            .any(|&s| !(s >= self.sigma_min) || !s.is_finite())
        {
            problems.push("every sigma must be at least sigma_min".into());
        }
        if self.miss.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            problems.push("miss probabilities must lie in [0, 1]".into());
        }
        if !(self.tau > 0.0) {
            problems.push("tau must be positive".into());
        }
        for edges in [&self.distance_edges, &self.occlusion_edges] {
            if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
                problems.push("bin edges must be nonempty and increasing".into());
            }
        }
        if self.density_edges.is_empty() || self.density_edges.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("bin edges must be nonempty and increasing".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self =
            serde_json::from_str(text).map_err(|e| Error::parse("surrogate params", e))?;
        p.validate()?;
        Ok(p)
    }
}

/// Refits the error profile from the BV observations in a set of episodes.
///
/// Every bin's error scale and miss rate decay toward their floors as
/// `exp(-n_b / tau)` where `n_b` is the bin's exposure in `dataset`.
pub fn fit_surrogate(dataset: &[Episode], base: &SurrogateParams) -> SurrogateParams {
    let mut counts = vec![0u64; base.bin_count()];
    for ep in dataset {
        for frame in &ep.frames {
            for t in &frame.perception.targets {
                counts[base.bin(t)] += 1;
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        log::warn!("fit_surrogate: dataset has no visible-BV observations; keeping base profile");
        return base.clone();
    }
    let mut out = base.clone();
    for b in 0..counts.len() {
        if counts[b] == 0 {
            continue;
        }
        let shrink = (-(counts[b] as f64) / base.tau).exp();
        // The min keeps rounding from lifting a value above its base.
        let sigma = base.sigma_min + (base.sigma[b] - base.sigma_min) * shrink;
        out.sigma[b] = sigma.min(base.sigma[b]);
        let floor = base.miss_floor.min(base.miss[b]);
        out.miss[b] = (floor + (base.miss[b] - floor) * shrink).min(base.miss[b]);
    }
    out.counts = counts;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateDetector {
    pub params: SurrogateParams,
    pub sensor: SensorConfig,
}

impl SurrogateDetector {
    pub fn new(params: SurrogateParams, sensor: SensorConfig) -> Self {
        Self { params, sensor }
    }

    /// Misses or noisy detections for every visible BV.
    ///
    /// Draws one uniform and two normals per target regardless of outcome so
    /// the noise stream stays aligned across parameter changes.
    pub fn detect<R: Rng + ?Sized>(
        &self,
        net: &GarageNetwork,
        scene: &SceneState,
        rng: &mut R,
    ) -> PerceptionOutput {
        let mut targets: Vec<Target> = sightings(net, scene, &self.sensor)
            .into_iter()
            .filter(|s| s.visible)
            .map(|s| s.target)
            .collect();
        targets.sort_by_key(|t| t.vehicle);
        let mut detections = Vec::new();
        for t in &targets {
            let b = self.params.bin(t);
            let u: f64 = rng.random();
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            if u < self.params.miss[b] {
                continue;
            }
            let s = self.params.sigma[b];
            detections.push(Detection {
                x: t.x + s * nx,
                y: t.y + s * ny,
                source: t.vehicle,
                matched: None,
            });
        }
        PerceptionOutput {
            detections,
            targets,
        }
    }

    /// Detection followed by matching and metrics.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        net: &GarageNetwork,
        scene: &SceneState,
        rng: &mut R,
    ) -> (PerceptionOutput, PerceptionMetrics) {
        let mut out = self.detect(net, scene, rng);
        let matches = match_detections(&out);
        for (d, m) in out.detections.iter_mut().zip(matches) {
            d.matched = m;
        }
        let m = metrics(&out);
        (out, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::sim::VehicleState;

    fn target(id: u32, x: f64, y: f64) -> Target {
        Target {
            vehicle: id,
            x,
            y,
            distance: 5.0,
            occlusion: 0.0,
            density: 0,
        }
    }

    fn open_net() -> GarageNetwork {
        GarageNetwork::from_json(
            r#"{
            "nodes": [{"id":0,"x":0,"y":0},{"id":1,"x":100,"y":0},{"id":2,"x":0,"y":5},{"id":3,"x":100,"y":5}],
            "lanes": [{"id":0,"from":0,"to":1,"length":100,"speed":3},
                      {"id":1,"from":1,"to":0,"length":100,"speed":3},
                      {"id":2,"from":2,"to":3,"length":100,"speed":3},
                      {"id":3,"from":3,"to":2,"length":100,"speed":3}],
            "decision_points": [],
            "obstacles": [{"a":[30,-3],"b":[30,3]}],
            "spawn_points": [],
            "exit_points": [],
            "av_route": [0,1]
        }"#,
        )
        .unwrap()
    }

    fn scene_with(bvs: &[(u32, u32, f64)]) -> SceneState {
        let mut vehicles = vec![VehicleState {
            id: 0,
            lane: 0,
            progress: 10.0,
            speed: 0.0,
            role: Role::Av,
            parked: false,
            dwell: 0,
            route_index: 0,
            committed: None,
        }];
        for &(id, lane, progress) in bvs {
            vehicles.push(VehicleState {
                id,
                lane,
                progress,
                speed: 0.0,
                role: Role::Bv,
                parked: false,
                dwell: 0,
                route_index: 0,
                committed: None,
            });
        }
        SceneState {
            timestep: 0,
            time: 0.0,
            vehicles,
            next_id: 100,
        }
    }

    fn bare_sensor() -> SensorConfig {
        SensorConfig {
            mount_offset: 0.0,
            ..SensorConfig::default()
        }
    }

    #[test]
    fn out_of_range_is_invisible() {
        let net = open_net();
        // Lane 2 runs along y = 5; 28 m ahead is inside range, 35 m is not.
        let scene = scene_with(&[(1, 2, 28.0), (2, 3, 100.0 - 25.0 - 40.0)]);
        let vis = visible_set(&net, &scene, &bare_sensor());
        assert_eq!(vis, vec![1]);
    }

    #[test]
    fn wall_blocks_sight() {
        let net = open_net();
        // AV at x = 10; wall at x = 30 spans y in [-3, 3].
        let scene = scene_with(&[(1, 0, 35.0)]);
        assert!(visible_set(&net, &scene, &bare_sensor()).is_empty());
    }

    #[test]
    fn vehicle_directly_behind_another_is_hidden() {
        let net = open_net();
        let scene = scene_with(&[(1, 0, 17.0), (2, 0, 25.0)]);
        assert_eq!(visible_set(&net, &scene, &bare_sensor()), vec![1]);
        let s = sightings(&net, &scene, &bare_sensor());
        assert_eq!(s[1].target.occlusion, 1.0);
        assert_eq!(s[0].target.density, 2);
    }

    #[test]
    fn narrow_fov_excludes_rear() {
        let net = open_net();
        let scene = scene_with(&[(1, 0, 2.0)]);
        let sensor = SensorConfig {
            fov: std::f64::consts::FRAC_PI_2,
            ..bare_sensor()
        };
        assert!(visible_set(&net, &scene, &sensor).is_empty());
        assert_eq!(visible_set(&net, &scene, &bare_sensor()), vec![1]);
    }

    #[test]
    fn noiseless_detector_reproduces_ground_truth() {
        let net = open_net();
        let scene = scene_with(&[(1, 0, 20.0), (2, 2, 5.0)]);
        let det = SurrogateDetector::new(SurrogateParams::uniform(0.0, 0.0), bare_sensor());
        let (out, m) = det.observe(&net, &scene, &mut stream_rng(1, Stream::Perception));
        assert_eq!(out.detections.len(), 2);
        assert_eq!(m.te_max, 0.0);
        assert_eq!(m.fn_count, 0);
    }

    #[test]
    fn certain_miss_counts_every_visible_bv() {
        let net = open_net();
        let scene = scene_with(&[(1, 0, 20.0), (2, 2, 5.0)]);
        let det = SurrogateDetector::new(SurrogateParams::uniform(0.0, 1.0), bare_sensor());
        let (out, m) = det.observe(&net, &scene, &mut stream_rng(1, Stream::Perception));
        assert!(out.detections.is_empty());
        assert_eq!(m.fn_count, 2);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let net = open_net();
        let scene = scene_with(&[(1, 0, 20.0)]);
        let det = SurrogateDetector::new(SurrogateParams::uniform(0.4, 0.0), bare_sensor());
        let mut rng = stream_rng(5, Stream::Perception);
        let n = 10_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let out = det.detect(&net, &scene, &mut rng);
            let e = out.detections[0].x - out.targets[0].x;
            sum += e;
            sq += e * e;
        }
        let mean = sum / n as f64;
        let std = (sq / n as f64 - mean * mean).sqrt();
        assert!((std - 0.4).abs() < 0.02, "std {std}");
    }

    #[test]
    fn matching_hand_example() {
        let out = PerceptionOutput {
            detections: vec![Detection {
                x: 0.3,
                y: 0.0,
                source: 1,
                matched: None,
            }],
            targets: vec![target(1, 0.0, 0.0), target(2, 10.0, 0.0)],
        };
        let m = metrics(&out);
        assert!((m.te_max - 0.3).abs() < 1e-12);
        assert_eq!(m.fn_count, 1);
    }

    #[test]
    fn detection_outside_gate_is_unmatched() {
        let out = PerceptionOutput {
            detections: vec![Detection {
                x: 5.0,
                y: 0.0,
                source: 1,
                matched: None,
            }],
            targets: vec![target(1, 0.0, 0.0)],
        };
        assert_eq!(match_detections(&out), vec![None]);
        let m = metrics(&out);
        assert_eq!((m.te_max, m.fn_count), (0.0, 1));
    }

    #[test]
    fn greedy_matching_is_one_to_one() {
        let out = PerceptionOutput {
            detections: vec![
                Detection {
                    x: 0.5,
                    y: 0.0,
                    source: 1,
                    matched: None,
                },
                Detection {
                    x: 0.1,
                    y: 0.0,
                    source: 2,
                    matched: None,
                },
            ],
            targets: vec![target(1, 0.0, 0.0), target(2, 1.5, 0.0)],
        };
        // Closest pair (det 1, target 1) wins; det 0 falls back to target 2 at 1.0 m.
        assert_eq!(match_detections(&out), vec![Some(2), Some(1)]);
        assert!((metrics(&out).te_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn failure_definitions() {
        let m = PerceptionMetrics {
            te_max: 0.6,
            fn_count: 0,
        };
        assert!(is_failure(
            &m,
            &FailureDefinition::TeMaxAbove { theta: 0.5 }
        ));
        assert!(!is_failure(
            &m,
            &FailureDefinition::TeMaxAbove { theta: 0.8 }
        ));
        assert!(!is_failure(&m, &FailureDefinition::FnPositive));
        assert_eq!(
            FailureDefinition::from_label("c").unwrap(),
            FailureDefinition::TeMaxAbove { theta: 1.0 }
        );
        assert!(FailureDefinition::from_label("e").is_err());
        assert_eq!(FailureDefinition::standard()[1].label(), "b");
    }

    #[test]
    fn fit_learning_curve_value() {
        let mut base = SurrogateParams::uniform(0.5, 0.2);
        base.sigma_min = 0.1;
        base.tau = 1000.0;
        let shrink = (-1.0f64).exp();
        let sigma = base.sigma_min + (0.5 - base.sigma_min) * shrink;
        assert!((sigma - 0.2471517764685769).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_keeps_base() {
        let base = SurrogateParams::default_garage();
        assert_eq!(fit_surrogate(&[], &base), base);
    }

    #[test]
    fn params_round_trip_and_validate() {
        let p = SurrogateParams::default_garage();
        assert!(p.validate().is_ok());
        assert_eq!(SurrogateParams::from_json(&p.to_json()).unwrap(), p);
        let mut bad = p.clone();
        bad.sigma[0] = 0.01;
        assert!(bad.validate().is_err());
    }
}
