//! Discrete-time garage traffic.
//!
//! Vehicle 0 is the AV and follows `av_route` forever. Background vehicles
//! enter at spawn points, move along lanes under a nominal-speed / hard-headway
//! rule, pick routes only at decision points and leave at exit points.
//!
//! A BV that reaches the end of a lane ending in a decision point stops on
//! the node and waits there until the next step supplies a `RouteChoice`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::network::{DecisionPoint, DecisionPointId, GarageNetwork, LaneId};
use crate::perception::SurrogateDetector;
use crate::recorder::{Episode, EpisodeHeader, FrameRecord, ManeuverRecord};
use crate::rng::{stream_rng, Stream};

pub const AV_ID: u32 = 0;
const END_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Av,
    Bv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub lane: LaneId,
    /// Meters from the lane's start node.
    pub progress: f64,
    pub speed: f64,
    pub role: Role,
    #[serde(default)]
    pub parked: bool,
    /// Steps left before a parked BV leaves its spot.
    #[serde(default)]
    pub dwell: u32,
    /// AV only: index of `lane` in the AV route.
    #[serde(default)]
    pub route_index: u32,
    /// BV only: lane chosen at the decision point it is held at.
    #[serde(default)]
    pub committed: Option<LaneId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub timestep: u64,
    pub time: f64,
    pub vehicles: Vec<VehicleState>,
    /// Id handed to the next spawned BV.
    pub next_id: u32,
}

impl SceneState {
    pub fn av(&self) -> &VehicleState {
        self.vehicles
            .iter()
            .find(|v| v.id == AV_ID)
            .expect("scene always holds the AV")
    }

    pub fn vehicle(&self, id: u32) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn bvs(&self) -> impl Iterator<Item = &VehicleState> {
        self.vehicles.iter().filter(|v| v.role == Role::Bv)
    }

    pub fn pose(&self, net: &GarageNetwork, id: u32) -> Option<Pose> {
        self.vehicle(id).map(|v| vehicle_pose(net, v))
    }
}

pub fn vehicle_pose(net: &GarageNetwork, v: &VehicleState) -> Pose {
    let len = net.lane(v.lane).length;
    net.pose_on_lane(v.lane, v.progress.clamp(0.0, len))
        .expect("lane id valid for simulated vehicle")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManeuverKind {
    Continue,
    RouteChoice {
        decision_point: DecisionPointId,
        option: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Maneuver {
    pub vehicle: u32,
    #[serde(flatten)]
    pub kind: ManeuverKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Step length, seconds (2 Hz sampling).
    pub dt: f64,
    /// BV target speed, m/s.
    pub v_nominal: f64,
    /// AV target speed, m/s.
    pub av_speed: f64,
    pub v_max: f64,
    /// Center-to-center gap kept behind a leader, meters.
    pub min_headway: f64,
    pub vehicle_length: f64,
    /// Overrides every spawn point's rate when set, vehicles/s.
    pub spawn_rate: Option<f64>,
    pub max_bvs: usize,
    pub initial_bvs: usize,
    /// Episode horizon T in steps; an episode records T + 1 frames.
    pub horizon: u64,
    pub seed: u64,
    /// Parking dwell range, seconds.
    pub dwell_min_s: f64,
    pub dwell_max_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            v_nominal: 3.5,
            av_speed: 2.5,
            v_max: 5.0,
            min_headway: 7.0,
            vehicle_length: 4.5,
            spawn_rate: None,
            max_bvs: 12,
            initial_bvs: 4,
            horizon: 3600,
            seed: 0,
            dwell_min_s: 20.0,
            dwell_max_s: 90.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.dt > 0.0) {
            problems.push("dt must be positive".to_string());
        }
        if !(self.min_headway > self.vehicle_length) {
            problems.push("min_headway must exceed vehicle_length".to_string());
        }
        if self.horizon < 1 {
            problems.push("horizon must be at least 1 step".to_string());
        }
        if !(self.v_nominal > 0.0 && self.av_speed > 0.0) {
            problems.push("target speeds must be positive".to_string());
        }
        if self.v_nominal > self.v_max || self.av_speed > self.v_max {
            problems.push("target speeds must not exceed v_max".to_string());
        }
        if self.dwell_min_s < 0.0 || self.dwell_max_s < self.dwell_min_s {
            problems.push("dwell range is invalid".to_string());
        }
        if let Some(r) = self.spawn_rate {
            if !(r >= 0.0) {
                problems.push("spawn_rate must be nonnegative".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Horizon covering `seconds` of scenario time.
    pub fn steps_for(&self, seconds: f64) -> u64 {
        (seconds / self.dt).round() as u64
    }
}

/// Which branch produced a maneuver distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChoiceSource {
    Standard,
    Model,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub probs: Vec<f64>,
    pub source: ChoiceSource,
}

/// Supplies the route distribution for a BV waiting at a decision point.
pub trait ManeuverProvider: Sync {
    fn choose(
        &self,
        net: &GarageNetwork,
        scene: &SceneState,
        bv: &VehicleState,
        dp: &DecisionPoint,
    ) -> Result<Choice>;
}

/// The map's default routing split.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardProvider;

impl ManeuverProvider for StandardProvider {
    fn choose(
        &self,
        _net: &GarageNetwork,
        _scene: &SceneState,
        _bv: &VehicleState,
        dp: &DecisionPoint,
    ) -> Result<Choice> {
        Ok(Choice {
            probs: dp.weights.clone(),
            source: ChoiceSource::Standard,
        })
    }
}

/// Decision point at which the BV must choose a route now, if any.
///
/// A BV that already chose and is held by traffic keeps its choice.
pub fn waiting_at(net: &GarageNetwork, v: &VehicleState) -> Option<DecisionPointId> {
    if v.role != Role::Bv || v.parked || v.committed.is_some() {
        return None;
    }
    let lane = net.lane(v.lane);
    if v.progress < lane.length - END_EPS {
        return None;
    }
    net.decision_point_at(lane.to).map(|dp| dp.id)
}

fn lane_has_clear_entry(vehicles: &[VehicleState], lane: LaneId, headway: f64) -> bool {
    vehicles
        .iter()
        .all(|v| v.lane != lane || v.progress >= headway)
}

pub fn init_scene(net: &GarageNetwork, cfg: &SimConfig, seed: u64) -> SceneState {
    let first = net.av_route[0];
    let mut vehicles = vec![VehicleState {
        id: AV_ID,
        lane: first,
        progress: 0.0,
        speed: cfg.av_speed.min(net.lane(first).speed),
        role: Role::Av,
        parked: false,
        dwell: 0,
        route_index: 0,
        committed: None,
    }];

    // Initial BVs sit on through lanes, length-weighted, outside each other's headway.
    let eligible: Vec<LaneId> = net
        .lanes
        .iter()
        .filter(|l| !net.is_parking(l.to) && !net.is_exit(l.to) && l.length > 1.0)
        .map(|l| l.id)
        .collect();
    let total: f64 = eligible.iter().map(|&l| net.lane(l).length).sum();
    let mut rng = stream_rng(seed, Stream::Init);
    let mut next_id = 1;
    if total > 0.0 {
        for _ in 0..cfg.initial_bvs.min(cfg.max_bvs) {
            for _attempt in 0..100 {
                let mut u = rng.random::<f64>() * total;
                let mut lane = *eligible.last().unwrap();
                for &l in &eligible {
                    let len = net.lane(l).length;
                    if u < len {
                        lane = l;
                        break;
                    }
                    u -= len;
                }
                let len = net.lane(lane).length;
                // Keep clear of the lane end so nobody starts on a decision node.
                let progress = rng.random::<f64>() * (len - 0.5);
                let clash = vehicles
                    .iter()
                    .any(|v| v.lane == lane && (v.progress - progress).abs() < cfg.min_headway);
                if !clash {
                    vehicles.push(VehicleState {
                        id: next_id,
                        lane,
                        progress,
                        speed: cfg.v_nominal.min(net.lane(lane).speed),
                        role: Role::Bv,
                        parked: false,
                        dwell: 0,
                        route_index: 0,
                        committed: None,
                    });
                    next_id += 1;
                    break;
                }
            }
        }
    }
    SceneState {
        timestep: 0,
        time: 0.0,
        vehicles,
        next_id,
    }
}

/// Gap from vehicle `idx` to its leader along the lane and the known next lane.
///
/// Parked BVs sit in a bay off the lane and never lead.
fn leader_gap(vehicles: &[VehicleState], idx: usize, remaining: f64, next: Option<LaneId>) -> f64 {
    let me = &vehicles[idx];
    let mut gap = f64::INFINITY;
    if remaining > 0.0 {
        for (j, v) in vehicles.iter().enumerate() {
            if j == idx || v.lane != me.lane || v.parked {
                continue;
            }
            let ahead = v.progress > me.progress || (v.progress == me.progress && j < idx);
            if ahead {
                gap = gap.min(v.progress - me.progress);
            }
        }
    }
    if gap.is_infinite() {
        if let Some(next) = next {
            for v in vehicles {
                if v.lane == next && v.id != me.id && !v.parked {
                    gap = gap.min(remaining + v.progress);
                }
            }
        }
    }
    gap
}

/// Advances the scene by one step.
///
/// `maneuvers` must hold exactly one `RouteChoice` for every BV waiting at a
/// decision point; `Continue` entries for other vehicles are accepted and
/// ignored.
pub fn step<R: Rng + ?Sized>(
    net: &GarageNetwork,
    cfg: &SimConfig,
    scene: &SceneState,
    maneuvers: &[Maneuver],
    rng: &mut R,
) -> Result<SceneState> {
    let mut chosen: Vec<Option<LaneId>> = vec![None; scene.vehicles.len()];
    for m in maneuvers {
        let ManeuverKind::RouteChoice {
            decision_point,
            option,
        } = m.kind
        else {
            continue;
        };
        let idx = scene
            .vehicles
            .iter()
            .position(|v| v.id == m.vehicle)
            .ok_or(Error::UnknownVehicle(m.vehicle))?;
        let v = &scene.vehicles[idx];
        if waiting_at(net, v) != Some(decision_point) {
            return Err(Error::NotAtDecisionPoint {
                vehicle: m.vehicle,
                decision_point,
            });
        }
        let dp = net
            .decision_point(decision_point)
            .ok_or(Error::UnknownDecisionPoint(decision_point))?;
        let Some(&lane) = dp.options.get(option) else {
            return Err(Error::InvalidManeuver(format!(
                "option {option} out of range at decision point {decision_point} ({} options)",
                dp.options.len()
            )));
        };
        if chosen[idx].replace(lane).is_some() {
            return Err(Error::InvalidManeuver(format!(
                "vehicle {} received two route choices",
                m.vehicle
            )));
        }
    }
    for (idx, v) in scene.vehicles.iter().enumerate() {
        if let Some(dp) = waiting_at(net, v) {
            if chosen[idx].is_none() {
                return Err(Error::InvalidManeuver(format!(
                    "vehicle {} waits at decision point {dp} without a route choice",
                    v.id
                )));
            }
        }
    }

    let mut vehicles = scene.vehicles.clone();
    let mut despawn = vec![false; vehicles.len()];
    let dwell_range = (
        (cfg.dwell_min_s / cfg.dt).round() as u32,
        (cfg.dwell_max_s / cfg.dt).round() as u32,
    );

    for idx in 0..vehicles.len() {
        let v = vehicles[idx].clone();
        let lane = net.lane(v.lane);

        if v.parked {
            let mut nv = v.clone();
            if nv.dwell > 0 {
                nv.dwell -= 1;
            }
            if nv.dwell == 0 {
                let out = net.outgoing(lane.to)[0];
                if lane_has_clear_entry(&vehicles, out, cfg.min_headway) {
                    nv.parked = false;
                    nv.lane = out;
                    nv.progress = 0.0;
                    nv.speed = 0.0;
                }
            }
            vehicles[idx] = nv;
            continue;
        }

        let remaining = (lane.length - v.progress).max(0.0);
        let next: Option<LaneId> = match v.role {
            Role::Av => {
                let n = net.av_route.len();
                Some(net.av_route[(v.route_index as usize + 1) % n])
            }
            Role::Bv => {
                if let Some(lane) = chosen[idx].or(v.committed) {
                    Some(lane)
                } else if net.decision_point_at(lane.to).is_some()
                    || net.is_exit(lane.to)
                    || net.is_parking(lane.to)
                {
                    None
                } else {
                    net.outgoing(lane.to).first().copied()
                }
            }
        };
        let gap = leader_gap(&vehicles, idx, remaining, next);
        let target = match v.role {
            Role::Av => cfg.av_speed,
            Role::Bv => cfg.v_nominal,
        }
        .min(lane.speed)
        .min(cfg.v_max);
        let speed = if gap < cfg.min_headway {
            0.0
        } else {
            ((gap - cfg.min_headway) / cfg.dt).clamp(0.0, target)
        };
        let mut travel = speed * cfg.dt;

        let mut nv = v.clone();
        nv.speed = speed;
        if v.role == Role::Bv && chosen[idx].is_some() {
            nv.committed = chosen[idx];
        }
        if travel <= remaining {
            nv.progress = (v.progress + travel).min(lane.length);
        } else if let Some(next_lane) = next {
            travel -= remaining;
            let nl = net.lane(next_lane);
            nv.lane = next_lane;
            nv.committed = None;
            nv.progress = travel.min(nl.length);
            if v.role == Role::Av {
                nv.route_index = (v.route_index + 1) % net.av_route.len() as u32;
            }
        } else {
            nv.progress = lane.length;
        }

        if nv.role == Role::Bv {
            let cur = net.lane(nv.lane);
            if nv.progress >= cur.length - END_EPS {
                if net.is_exit(cur.to) {
                    despawn[idx] = true;
                } else if net.is_parking(cur.to) {
                    nv.parked = true;
                    nv.speed = 0.0;
                    nv.dwell = rng.random_range(dwell_range.0..=dwell_range.1).max(1);
                }
            }
        }
        vehicles[idx] = nv;
    }

    let mut vehicles: Vec<VehicleState> = vehicles
        .into_iter()
        .zip(despawn)
        .filter_map(|(v, gone)| (!gone).then_some(v))
        .collect();

    // Poisson arrivals thinned to at most one per spawn point per step.
    let mut next_id = scene.next_id;
    for sp in &net.spawn_points {
        let rate = cfg.spawn_rate.unwrap_or(sp.rate);
        let p = 1.0 - (-rate * cfg.dt).exp();
        let u: f64 = rng.random();
        let bv_count = vehicles.iter().filter(|v| v.role == Role::Bv).count();
        let lane = net.outgoing(sp.node)[0];
        if u < p && bv_count < cfg.max_bvs && lane_has_clear_entry(&vehicles, lane, cfg.min_headway)
        {
            vehicles.push(VehicleState {
                id: next_id,
                lane,
                progress: 0.0,
                speed: cfg.v_nominal.min(net.lane(lane).speed),
                role: Role::Bv,
                parked: false,
                dwell: 0,
                route_index: 0,
                committed: None,
            });
            next_id += 1;
        }
    }

    let timestep = scene.timestep + 1;
    Ok(SceneState {
        timestep,
        time: timestep as f64 * cfg.dt,
        vehicles,
        next_id,
    })
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Queries the provider for every waiting BV and samples its route.
pub fn choose_maneuvers<R: Rng + ?Sized>(
    net: &GarageNetwork,
    scene: &SceneState,
    provider: &dyn ManeuverProvider,
    rng: &mut R,
) -> Result<Vec<ManeuverRecord>> {
    let mut out = Vec::new();
    for v in scene.bvs() {
        let Some(dp_id) = waiting_at(net, v) else {
            continue;
        };
        let dp = &net.decision_points[dp_id as usize];
        let choice = provider.choose(net, scene, v, dp)?;
        if choice.probs.len() != dp.options.len() {
            return Err(Error::InvalidManeuver(format!(
                "provider returned {} probabilities for {} options at decision point {dp_id}",
                choice.probs.len(),
                dp.options.len()
            )));
        }
        let option = sample_index(&choice.probs, rng);
        out.push(ManeuverRecord {
            vehicle: v.id,
            decision_point: dp_id,
            option,
            probs: choice.probs,
            source: choice.source,
        });
    }
    Ok(out)
}

pub fn to_maneuvers(records: &[ManeuverRecord]) -> Vec<Maneuver> {
    records
        .iter()
        .map(|m| Maneuver {
            vehicle: m.vehicle,
            kind: ManeuverKind::RouteChoice {
                decision_point: m.decision_point,
                option: m.option,
            },
        })
        .collect()
}

/// Runs `cfg.horizon` steps from a seeded initial scene.
pub fn run_episode(
    net: &GarageNetwork,
    cfg: &SimConfig,
    seed: u64,
    provider: &dyn ManeuverProvider,
    detector: &SurrogateDetector,
) -> Result<Episode> {
    let scene0 = init_scene(net, cfg, seed);
    run_episode_from(net, cfg, scene0, seed, provider, detector)
}

/// Runs `cfg.horizon` steps from a given initial scene.
///
/// Each frame k holds S_k, the perception of S_k and the maneuvers U_k
/// sampled in S_k, so an episode of horizon T has T + 1 frames.
pub fn run_episode_from(
    net: &GarageNetwork,
    cfg: &SimConfig,
    scene0: SceneState,
    seed: u64,
    provider: &dyn ManeuverProvider,
    detector: &SurrogateDetector,
) -> Result<Episode> {
    let mut traffic = stream_rng(seed, Stream::Traffic);
    let mut choice_rng = stream_rng(seed, Stream::Maneuver);
    let mut sensor_rng = stream_rng(seed, Stream::Perception);

    let mut frames = Vec::with_capacity(cfg.horizon as usize + 1);
    let mut scene = scene0;
    for k in 0..=cfg.horizon {
        let records = choose_maneuvers(net, &scene, provider, &mut choice_rng)?;
        let (perception, metrics) = detector.observe(net, &scene, &mut sensor_rng);
        frames.push(FrameRecord::new(
            net,
            &scene,
            records.clone(),
            perception,
            metrics,
        ));
        if k < cfg.horizon {
            scene = step(net, cfg, &scene, &to_maneuvers(&records), &mut traffic)?;
        }
    }
    Ok(Episode {
        header: EpisodeHeader::new(seed, net, cfg),
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{SensorConfig, SurrogateParams};

    fn loop_net() -> GarageNetwork {
        // 40 m x 20 m rectangle, counter-clockwise.
        GarageNetwork::from_json(
            r#"{
            "nodes": [{"id":0,"x":0,"y":0},{"id":1,"x":40,"y":0},{"id":2,"x":40,"y":20},{"id":3,"x":0,"y":20}],
            "lanes": [{"id":0,"from":0,"to":1,"length":40,"speed":3},
                      {"id":1,"from":1,"to":2,"length":20,"speed":3},
                      {"id":2,"from":2,"to":3,"length":40,"speed":3},
                      {"id":3,"from":3,"to":0,"length":20,"speed":3}],
            "decision_points": [],
            "spawn_points": [],
            "exit_points": [],
            "av_route": [0,1,2,3]
        }"#,
        )
        .unwrap()
    }

    fn quiet_cfg() -> SimConfig {
        SimConfig {
            spawn_rate: Some(0.0),
            initial_bvs: 0,
            av_speed: 2.0,
            v_nominal: 2.0,
            ..SimConfig::default()
        }
    }

    fn bv(id: u32, lane: LaneId, progress: f64, speed: f64) -> VehicleState {
        VehicleState {
            id,
            lane,
            progress,
            speed,
            role: Role::Bv,
            parked: false,
            dwell: 0,
            route_index: 0,
            committed: None,
        }
    }

    #[test]
    fn empty_traffic_scene_holds_only_av() {
        let net = loop_net();
        let scene = init_scene(&net, &quiet_cfg(), 3);
        assert_eq!(scene.vehicles.len(), 1);
        assert_eq!(scene.av().id, AV_ID);
    }

    #[test]
    fn av_advances_speed_times_dt() {
        let net = loop_net();
        let cfg = quiet_cfg();
        let s0 = init_scene(&net, &cfg, 1);
        let mut rng = stream_rng(1, Stream::Traffic);
        let s1 = step(&net, &cfg, &s0, &[], &mut rng).unwrap();
        assert_eq!(s1.av().progress, 1.0);
        assert_eq!(s1.timestep, 1);
        assert_eq!(s1.time, 0.5);
    }

    #[test]
    fn av_crosses_lane_joins_along_route() {
        let net = loop_net();
        let cfg = quiet_cfg();
        let mut scene = init_scene(&net, &cfg, 1);
        let mut rng = stream_rng(1, Stream::Traffic);
        for _ in 0..41 {
            scene = step(&net, &cfg, &scene, &[], &mut rng).unwrap();
        }
        let av = scene.av();
        assert_eq!(av.lane, 1);
        assert!((av.progress - 1.0).abs() < 1e-9);
        assert_eq!(av.route_index, 1);
    }

    #[test]
    fn headway_stops_follower() {
        let net = loop_net();
        let cfg = SimConfig {
            min_headway: 2.0,
            vehicle_length: 1.5,
            ..quiet_cfg()
        };
        let mut scene = init_scene(&net, &cfg, 1);
        scene.vehicles[0].progress = 10.0;
        scene.vehicles[0].speed = 0.0;
        // Leader: a stopped BV; follower 1 m behind it.
        scene.vehicles.push(bv(1, 2, 20.0, 0.0));
        scene.vehicles.push(bv(2, 2, 19.0, 2.0));
        scene.vehicles[0].lane = 0;
        let mut rng = stream_rng(1, Stream::Traffic);
        let next = step(&net, &cfg, &scene, &[], &mut rng).unwrap();
        assert_eq!(next.vehicle(2).unwrap().speed, 0.0);
        assert_eq!(next.vehicle(2).unwrap().progress, 19.0);
    }

    #[test]
    fn step_is_deterministic() {
        let net = loop_net();
        let cfg = SimConfig {
            initial_bvs: 3,
            ..quiet_cfg()
        };
        let s0 = init_scene(&net, &cfg, 9);
        let a = step(&net, &cfg, &s0, &[], &mut stream_rng(9, Stream::Traffic)).unwrap();
        let b = step(&net, &cfg, &s0, &[], &mut stream_rng(9, Stream::Traffic)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_horizon_episode_has_one_frame() {
        let net = loop_net();
        let cfg = SimConfig {
            horizon: 0,
            ..quiet_cfg()
        };
        let det =
            SurrogateDetector::new(SurrogateParams::default_garage(), SensorConfig::default());
        let ep = run_episode(&net, &cfg, 1, &StandardProvider, &det).unwrap();
        assert_eq!(ep.frames.len(), 1);
    }

    #[test]
    fn hour_long_episode_frame_count() {
        let net = loop_net();
        let cfg = SimConfig {
            horizon: 7200,
            ..quiet_cfg()
        };
        let det =
            SurrogateDetector::new(SurrogateParams::default_garage(), SensorConfig::default());
        let ep = run_episode(&net, &cfg, 1, &StandardProvider, &det).unwrap();
        assert_eq!(ep.frames.len(), 7201);
        let span = ep.frames.last().unwrap().time - ep.frames[0].time;
        assert_eq!(span, 3600.0);
        // 17 h at 2 Hz is the reference collection size.
        assert_eq!(cfg.steps_for(17.0 * 3600.0), 122_400);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig {
            dt: 0.0,
            min_headway: 1.0,
            ..SimConfig::default()
        };
        let Err(Error::Config(msg)) = bad.validate() else {
            panic!()
        };
        assert!(msg.contains("dt") && msg.contains("headway"));
    }
}
