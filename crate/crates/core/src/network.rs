//! Parking-garage road network.
//!
//! A network is a directed graph of straight lanes between 2D nodes. Junction
//! nodes carry decision points where background vehicles pick one of two or
//! three outgoing lanes. Obstacles are wall or pillar segments that block
//! sight lines. The AV drives a fixed cyclic route.
//!
//! Networks are read from JSON (see `docs/network-format.md`). Ids are the
//! element's position in its array and must be written out explicitly so
//! that validation messages can name them.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Vec2};

pub type NodeId = u32;
pub type LaneId = u32;
pub type DecisionPointId = u32;

const WEIGHT_TOL: f64 = 1e-9;
const LENGTH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub from: NodeId,
    pub to: NodeId,
    /// Meters; must equal the straight-line distance between the endpoints.
    pub length: f64,
    /// Nominal speed, m/s.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub id: DecisionPointId,
    pub node: NodeId,
    /// Outgoing lanes in option order.
    pub options: Vec<LaneId>,
    /// Standard routing split. Empty in the file means uniform.
    #[serde(default)]
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Obstacle {
    pub fn endpoints(&self) -> (Vec2, Vec2) {
        (
            Vec2::new(self.a[0], self.a[1]),
            Vec2::new(self.b[0], self.b[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnPoint {
    pub node: NodeId,
    /// Arrival rate, vehicles per second.
    pub rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Topology {
    outgoing: Vec<Vec<LaneId>>,
    dp_at_node: Vec<Option<DecisionPointId>>,
    exit: Vec<bool>,
    parking: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarageNetwork {
    #[serde(default)]
    pub name: String,
    pub nodes: Vec<Node>,
    pub lanes: Vec<Lane>,
    pub decision_points: Vec<DecisionPoint>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub spawn_points: Vec<SpawnPoint>,
    pub exit_points: Vec<NodeId>,
    #[serde(default)]
    pub parking_spots: Vec<NodeId>,
    pub av_route: Vec<LaneId>,
    #[serde(skip)]
    topo: Topology,
}

/// Reads, validates and indexes a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<GarageNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GarageNetwork::from_json(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
        other => other,
    })
}

impl GarageNetwork {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut net: GarageNetwork =
            serde_json::from_str(text).map_err(|e| Error::parse("network", e))?;
        net.finalize()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// Fills defaults, checks every invariant and builds the lookup tables.
    pub fn finalize(&mut self) -> Result<()> {
        for dp in &mut self.decision_points {
            if dp.weights.is_empty() && !dp.options.is_empty() {
                let w = 1.0 / dp.options.len() as f64;
                dp.weights = vec![w; dp.options.len()];
            }
        }
        let violations = self.violations();
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        self.topo = self.build_topology();
        Ok(())
    }

    /// All invariant violations, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let n_nodes = self.nodes.len() as u32;
        let n_lanes = self.lanes.len() as u32;
        let node_ok = |id: NodeId| id < n_nodes;
        let lane_ok = |id: LaneId| id < n_lanes;

        for (i, node) in self.nodes.iter().enumerate() {
            if node.id as usize != i {
                v.push(format!("node at index {i} has id {}", node.id));
            }
            if !node.x.is_finite() || !node.y.is_finite() {
                v.push(format!("node {} has non-finite coordinates", node.id));
            }
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.id as usize != i {
                v.push(format!("lane at index {i} has id {}", lane.id));
            }
            if !node_ok(lane.from) || !node_ok(lane.to) {
                v.push(format!(
                    "lane {} references missing node ({} -> {})",
                    lane.id, lane.from, lane.to
                ));
                continue;
            }
            if lane.from == lane.to {
                v.push(format!("lane {} is a self-loop", lane.id));
            }
            let geo = self.node_pos(lane.from).dist(self.node_pos(lane.to));
            if (geo - lane.length).abs() > LENGTH_TOL {
                v.push(format!(
                    "lane {} length {} differs from endpoint distance {geo}",
                    lane.id, lane.length
                ));
            }
            if !(lane.speed > 0.0) {
                v.push(format!("lane {} has non-positive speed", lane.id));
            }
        }

        let mut dp_nodes = BTreeSet::new();
        for (i, dp) in self.decision_points.iter().enumerate() {
            if dp.id as usize != i {
                v.push(format!("decision point at index {i} has id {}", dp.id));
            }
            if !node_ok(dp.node) {
                v.push(format!(
                    "decision point {} references missing node {}",
                    dp.id, dp.node
                ));
                continue;
            }
            if !dp_nodes.insert(dp.node) {
                v.push(format!(
                    "decision point {} duplicates node {}",
                    dp.id, dp.node
                ));
            }
            if !(2..=3).contains(&dp.options.len()) {
                v.push(format!(
                    "decision point {} has {} route options (need 2 or 3)",
                    dp.id,
                    dp.options.len()
                ));
            }
            let mut seen = BTreeSet::new();
            for &opt in &dp.options {
                if !lane_ok(opt) {
                    v.push(format!(
                        "decision point {} option references missing lane {opt}",
                        dp.id
                    ));
                } else if self.lanes[opt as usize].from != dp.node {
                    v.push(format!(
                        "decision point {} option lane {opt} leaves node {} instead of {}",
                        dp.id, self.lanes[opt as usize].from, dp.node
                    ));
                }
                if !seen.insert(opt) {
                    v.push(format!(
                        "decision point {} repeats option lane {opt}",
                        dp.id
                    ));
                }
            }
            if dp.weights.len() != dp.options.len() {
                v.push(format!(
                    "decision point {} has {} weights for {} options",
                    dp.id,
                    dp.weights.len(),
                    dp.options.len()
                ));
            } else {
                if dp.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    v.push(format!(
                        "decision point {} has a negative or non-finite weight",
                        dp.id
                    ));
                }
                let sum: f64 = dp.weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_TOL {
                    v.push(format!(
                        "decision point {} weights sum to {sum}, not 1",
                        dp.id
                    ));
                }
            }
        }

        for o in &self.obstacles {
            if o.a.iter().chain(o.b.iter()).any(|c| !c.is_finite()) {
                v.push("obstacle with non-finite coordinates".to_string());
            }
        }

        // Branching nodes must be decision points so BV routing is always defined.
        if self.lanes.iter().all(|l| node_ok(l.from) && node_ok(l.to)) {
            let mut out = vec![Vec::new(); self.nodes.len()];
            for lane in &self.lanes {
                out[lane.from as usize].push(lane.id);
            }
            for (node, lanes) in out.iter().enumerate() {
                if lanes.len() >= 2 && !dp_nodes.contains(&(node as u32)) {
                    v.push(format!(
                        "node {node} has {} outgoing lanes but no decision point",
                        lanes.len()
                    ));
                }
                let is_exit = self.exit_points.contains(&(node as u32));
                let has_incoming = self.lanes.iter().any(|l| l.to as usize == node);
                if lanes.is_empty() && has_incoming && !is_exit {
                    v.push(format!("node {node} is a dead end but not an exit point"));
                }
            }
            for sp in &self.spawn_points {
                if node_ok(sp.node) && out[sp.node as usize].len() != 1 {
                    v.push(format!(
                        "spawn node {} must have exactly one outgoing lane",
                        sp.node
                    ));
                }
            }
            for &p in &self.parking_spots {
                if node_ok(p) && out[p as usize].len() != 1 {
                    v.push(format!(
                        "parking spot node {p} must have exactly one outgoing lane"
                    ));
                }
            }
        }

        for sp in &self.spawn_points {
            if !node_ok(sp.node) {
                v.push(format!("spawn point references missing node {}", sp.node));
            }
            if !(sp.rate >= 0.0) || !sp.rate.is_finite() {
                v.push(format!(
                    "spawn point at node {} has invalid rate {}",
                    sp.node, sp.rate
                ));
            }
        }
        for &e in &self.exit_points {
            if !node_ok(e) {
                v.push(format!("exit point references missing node {e}"));
            }
        }
        for &p in &self.parking_spots {
            if !node_ok(p) {
                v.push(format!("parking spot references missing node {p}"));
            }
        }

        if self.av_route.is_empty() {
            v.push("av_route is empty".to_string());
        } else if self.av_route.iter().all(|&l| lane_ok(l)) {
            let n = self.av_route.len();
            for i in 0..n {
                let cur = &self.lanes[self.av_route[i] as usize];
                let next = &self.lanes[self.av_route[(i + 1) % n] as usize];
                if cur.to != next.from {
                    if i + 1 == n {
                        v.push(
                            "av_route is not cyclic (last lane does not reach the first)".into(),
                        );
                    } else {
                        v.push(format!("av_route discontinuity at index {}", i + 1));
                    }
                }
            }
        } else {
            for (i, &l) in self.av_route.iter().enumerate() {
                if !lane_ok(l) {
                    v.push(format!("av_route index {i} references missing lane {l}"));
                }
            }
        }
        v
    }

    fn build_topology(&self) -> Topology {
        let n = self.nodes.len();
        let mut topo = Topology {
            outgoing: vec![Vec::new(); n],
            dp_at_node: vec![None; n],
            exit: vec![false; n],
            parking: vec![false; n],
        };
        for lane in &self.lanes {
            topo.outgoing[lane.from as usize].push(lane.id);
        }
        for dp in &self.decision_points {
            topo.dp_at_node[dp.node as usize] = Some(dp.id);
        }
        for &e in &self.exit_points {
            topo.exit[e as usize] = true;
        }
        for &p in &self.parking_spots {
            topo.parking[p as usize] = true;
        }
        topo
    }

    pub fn node_pos(&self, id: NodeId) -> Vec2 {
        let n = &self.nodes[id as usize];
        Vec2::new(n.x, n.y)
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id as usize]
    }

    pub fn decision_point(&self, id: DecisionPointId) -> Option<&DecisionPoint> {
        self.decision_points.get(id as usize)
    }

    pub fn outgoing(&self, node: NodeId) -> &[LaneId] {
        &self.topo.outgoing[node as usize]
    }

    pub fn decision_point_at(&self, node: NodeId) -> Option<&DecisionPoint> {
        self.topo.dp_at_node[node as usize].map(|id| &self.decision_points[id as usize])
    }

    pub fn is_exit(&self, node: NodeId) -> bool {
        self.topo.exit[node as usize]
    }

    pub fn is_parking(&self, node: NodeId) -> bool {
        self.topo.parking[node as usize]
    }

    pub fn lane_heading(&self, id: LaneId) -> f64 {
        let lane = self.lane(id);
        let d = self.node_pos(lane.to).sub(self.node_pos(lane.from));
        d.y.atan2(d.x)
    }

    pub fn pose_on_lane(&self, lane: LaneId, progress: f64) -> Result<Pose> {
        pose_on_lane(self, lane, progress)
    }

    /// Sum of the AV route's lane lengths.
    pub fn av_loop_length(&self) -> f64 {
        self.av_route.iter().map(|&l| self.lane(l).length).sum()
    }
}

/// Linear interpolation along a lane.
pub fn pose_on_lane(net: &GarageNetwork, lane: LaneId, progress: f64) -> Result<Pose> {
    let Some(l) = net.lanes.get(lane as usize) else {
        return Err(Error::ProgressOutOfRange {
            lane,
            progress,
            length: f64::NAN,
        });
    };
    if !(0.0..=l.length).contains(&progress) {
        return Err(Error::ProgressOutOfRange {
            lane,
            progress,
            length: l.length,
        });
    }
    let a = net.node_pos(l.from);
    let b = net.node_pos(l.to);
    let t = progress / l.length;
    let p = a.add(b.sub(a).scale(t));
    Ok(Pose {
        x: p.x,
        y: p.y,
        heading: net.lane_heading(lane),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> GarageNetwork {
        // Two nodes joined both ways; AV loops over them.
        GarageNetwork::from_json(
            r#"{
            "nodes": [{"id":0,"x":0,"y":0},{"id":1,"x":6,"y":8}],
            "lanes": [{"id":0,"from":0,"to":1,"length":10,"speed":3},
                      {"id":1,"from":1,"to":0,"length":10,"speed":3}],
            "decision_points": [],
            "spawn_points": [],
            "exit_points": [],
            "av_route": [0,1]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn pose_endpoints_and_midpoint() {
        let net = straight();
        let p0 = net.pose_on_lane(0, 0.0).unwrap();
        assert_eq!((p0.x, p0.y), (0.0, 0.0));
        let p1 = net.pose_on_lane(0, 10.0).unwrap();
        assert!((p1.x - 6.0).abs() < 1e-12 && (p1.y - 8.0).abs() < 1e-12);
        let mid = net.pose_on_lane(0, 5.0).unwrap();
        assert!((mid.x - 3.0).abs() < 1e-12 && (mid.y - 4.0).abs() < 1e-12);
        assert!((mid.heading - 8f64.atan2(6.0)).abs() < 1e-12);
    }

    #[test]
    fn pose_out_of_range() {
        let net = straight();
        assert!(matches!(
            net.pose_on_lane(0, 10.5),
            Err(Error::ProgressOutOfRange { .. })
        ));
        assert!(net.pose_on_lane(0, -0.1).is_err());
    }

    #[test]
    fn weights_default_to_uniform() {
        let net = GarageNetwork::from_json(
            r#"{
            "nodes": [{"id":0,"x":0,"y":0},{"id":1,"x":10,"y":0},{"id":2,"x":0,"y":10}],
            "lanes": [{"id":0,"from":0,"to":1,"length":10,"speed":3},
                      {"id":1,"from":0,"to":2,"length":10,"speed":3},
                      {"id":2,"from":1,"to":0,"length":10,"speed":3},
                      {"id":3,"from":2,"to":0,"length":10,"speed":3}],
            "decision_points": [{"id":0,"node":0,"options":[0,1]}],
            "spawn_points": [],
            "exit_points": [],
            "av_route": [0,2]
        }"#,
        )
        .unwrap();
        assert_eq!(net.decision_points[0].weights, vec![0.5, 0.5]);
        assert_eq!(net.decision_point_at(0).unwrap().id, 0);
        assert_eq!(net.outgoing(0), &[0, 1]);
    }

    #[test]
    fn option_leaving_other_node_is_named() {
        let err = GarageNetwork::from_json(
            r#"{
            "nodes": [{"id":0,"x":0,"y":0},{"id":1,"x":10,"y":0},{"id":2,"x":0,"y":10}],
            "lanes": [{"id":0,"from":0,"to":1,"length":10,"speed":3},
                      {"id":1,"from":0,"to":2,"length":10,"speed":3},
                      {"id":2,"from":1,"to":0,"length":10,"speed":3},
                      {"id":3,"from":2,"to":0,"length":10,"speed":3}],
            "decision_points": [{"id":0,"node":0,"options":[0,2]}],
            "spawn_points": [],
            "exit_points": [],
            "av_route": [0,2]
        }"#,
        )
        .unwrap_err();
        let Error::Validation(list) = err else {
            panic!("expected validation error")
        };
        assert!(list
            .iter()
            .any(|m| m.contains("decision point 0") && m.contains("lane 2")));
        // node 0 still branches into lanes 0 and 1, which is covered by the dp.
    }

    #[test]
    fn av_route_discontinuity_reports_index() {
        let err = GarageNetwork::from_json(
            r#"{
            "nodes": [{"id":0,"x":0,"y":0},{"id":1,"x":10,"y":0},{"id":2,"x":10,"y":10}],
            "lanes": [{"id":0,"from":0,"to":1,"length":10,"speed":3},
                      {"id":1,"from":2,"to":0,"length":14.142135623730951,"speed":3},
                      {"id":2,"from":1,"to":2,"length":10,"speed":3}],
            "decision_points": [],
            "spawn_points": [],
            "exit_points": [],
            "av_route": [0,1,2]
        }"#,
        )
        .unwrap_err();
        let Error::Validation(list) = err else {
            panic!()
        };
        assert!(
            list.iter()
                .any(|m| m == "av_route discontinuity at index 1"),
            "{list:?}"
        );
    }

    #[test]
    fn violations_are_collected_together() {
        let err = GarageNetwork::from_json(
            r#"{
            "nodes": [{"id":0,"x":0,"y":0},{"id":1,"x":10,"y":0}],
            "lanes": [{"id":0,"from":0,"to":1,"length":12,"speed":3},
                      {"id":1,"from":1,"to":0,"length":10,"speed":-1}],
            "decision_points": [{"id":0,"node":1,"options":[1],"weights":[0.7]}],
            "spawn_points": [{"node":0,"rate":-1}],
            "exit_points": [],
            "av_route": [0,1]
        }"#,
        )
        .unwrap_err();
        let Error::Validation(list) = err else {
            panic!()
        };
        assert!(list.len() >= 5, "{list:?}");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(
            GarageNetwork::from_json("{ not json"),
            Err(Error::Parse { .. })
        ));
    }
}
