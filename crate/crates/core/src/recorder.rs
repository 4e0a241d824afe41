//! Frame logs, failure windows and the critical-state edit.
//!
//! A failure scenario is the window of frames ending at a failure frame. The
//! critical BVs of a scenario are those visible within `radius` of the AV in
//! the failure frame; their states over the trailing `lookback` are the
//! critical states. Training datasets keep either every decision-point
//! sample of every window or only the critical ones.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Vec2};
use crate::network::{DecisionPointId, GarageNetwork};
use crate::perception::{
    is_failure, visible_set, FailureDefinition, PerceptionMetrics, PerceptionOutput, SensorConfig,
};
use crate::policy::{featurize, FeatureVector};
use crate::sim::{vehicle_pose, ChoiceSource, SceneState, SimConfig, VehicleState};

pub const EPISODE_SCHEMA: &str = "failgen.episode/1";
pub const DATASET_SCHEMA: &str = "failgen.dataset/1";
pub const SCENARIO_SCHEMA: &str = "failgen.scenarios/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleStatus {
    #[serde(flatten)]
    pub state: VehicleState,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverRecord {
    pub vehicle: u32,
    pub decision_point: DecisionPointId,
    pub option: usize,
    /// Distribution the option was drawn from.
    pub probs: Vec<f64>,
    pub source: ChoiceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub timestep: u64,
    pub time: f64,
    pub av: VehicleStatus,
    pub bvs: Vec<VehicleStatus>,
    pub maneuvers: Vec<ManeuverRecord>,
    pub perception: PerceptionOutput,
    pub metrics: PerceptionMetrics,
    /// Failure flags for the standard definitions a-d.
    pub failures: [bool; 4],
}

impl FrameRecord {
    pub fn new(
        net: &GarageNetwork,
        scene: &SceneState,
        maneuvers: Vec<ManeuverRecord>,
        perception: PerceptionOutput,
        metrics: PerceptionMetrics,
    ) -> Self {
        let status = |v: &VehicleState| VehicleStatus {
            state: v.clone(),
            pose: vehicle_pose(net, v),
        };
        let defs = FailureDefinition::standard();
        Self {
            timestep: scene.timestep,
            time: scene.time,
            av: status(scene.av()),
            bvs: scene.bvs().map(status).collect(),
            maneuvers,
            perception,
            metrics,
            failures: defs.map(|d| is_failure(&metrics, &d)),
        }
    }

    /// Rebuilds the simulated state this frame was recorded from.
    pub fn scene(&self) -> SceneState {
        let mut vehicles = vec![self.av.state.clone()];
        vehicles.extend(self.bvs.iter().map(|b| b.state.clone()));
        let next_id = vehicles.iter().map(|v| v.id).max().unwrap_or(0) + 1;
        SceneState {
            timestep: self.timestep,
            time: self.time,
            vehicles,
            next_id,
        }
    }

    pub fn has_bv(&self, id: u32) -> bool {
        self.bvs.iter().any(|b| b.state.id == id)
    }

    pub fn bv_position(&self, id: u32) -> Option<Vec2> {
        self.bvs
            .iter()
            .find(|b| b.state.id == id)
            .map(|b| b.pose.position())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub schema: String,
    pub episode_id: u64,
    pub seed: u64,
    pub network: String,
    pub dt: f64,
    pub horizon: u64,
    /// Hash of the configuration that produced the log, when known.
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub environment: String,
}

impl EpisodeHeader {
    pub fn new(seed: u64, net: &GarageNetwork, cfg: &SimConfig) -> Self {
        Self {
            schema: EPISODE_SCHEMA.to_string(),
            episode_id: seed,
            seed,
            network: net.name.clone(),
            dt: cfg.dt,
            horizon: cfg.horizon,
            config_hash: String::new(),
            environment: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub header: EpisodeHeader,
    pub frames: Vec<FrameRecord>,
}

impl Episode {
    /// JSON-Lines: header, then one frame per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for f in &self.frames {
            serde_json::to_writer(&mut w, f)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::parse("episode log", "empty file"))?
            .map_err(|e| Error::parse("episode log", e))?;
        let header: EpisodeHeader =
            serde_json::from_str(&first).map_err(|e| Error::parse("episode header", e))?;
        if header.schema != EPISODE_SCHEMA {
            return Err(Error::parse(
                "episode header",
                format!("unsupported schema {:?}", header.schema),
            ));
        }
        let mut frames = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::parse("episode log", e))?;
            if line.trim().is_empty() {
                continue;
            }
            frames.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::parse(format!("episode frame line {}", i + 2), e))?,
            );
        }
        Ok(Self { header, frames })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(file))
    }

    pub fn failure_frames(&self, def: &FailureDefinition) -> usize {
        self.frames
            .iter()
            .filter(|f| is_failure(&f.metrics, def))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticalStateRule {
    /// Meters from the AV center.
    pub radius: f64,
    /// Seconds before (and including) the failure frame.
    pub lookback: f64,
    /// Length of a failure scenario, seconds.
    pub window: f64,
    /// Visibility is judged with this sensor.
    pub sensor: SensorConfig,
}

impl Default for CriticalStateRule {
    fn default() -> Self {
        Self {
            radius: 20.0,
            lookback: 7.5,
            window: 10.0,
            sensor: SensorConfig::default(),
        }
    }
}

impl CriticalStateRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::Config("critical radius must be positive".into()));
        }
        if !(self.lookback > 0.0 && self.lookback <= self.window) {
            return Err(Error::Config("lookback must lie in (0, window]".into()));
        }
        self.sensor.validate()
    }

    pub fn window_frames(&self, dt: f64) -> usize {
        steps_ceil(self.window, dt)
    }

    pub fn lookback_frames(&self, dt: f64) -> usize {
        steps_ceil(self.lookback, dt)
    }
}

fn steps_ceil(seconds: f64, dt: f64) -> usize {
    // Tolerate representation error in seconds / dt before rounding up.
    let r = seconds / dt;
    let n = r.round();
    if (r - n).abs() < 1e-9 {
        n as usize
    } else {
        r.ceil() as usize
    }
}

/// Window of frames ending at one failure frame, borrowed from its episode.
#[derive(Debug, Clone)]
pub struct FailureScenario<'a> {
    pub scenario_id: u64,
    pub episode_id: u64,
    /// Index of the failure frame in the episode.
    pub failure_frame: usize,
    /// Index of the first window frame in the episode.
    pub window_start: usize,
    /// `frames[window_start..=failure_frame]`.
    pub frames: &'a [FrameRecord],
    /// Critical BVs; empty until marked.
    pub critical_bvs: Vec<u32>,
    /// First episode frame index of the lookback span.
    pub lookback_start: usize,
}

impl FailureScenario<'_> {
    pub fn failure_record(&self) -> &FrameRecord {
        self.frames.last().expect("window is never empty")
    }

    /// Whether BV `bv` is in a critical state at episode frame `frame`.
    pub fn is_critical(&self, frame: usize, bv: u32) -> bool {
        frame >= self.lookback_start
            && frame <= self.failure_frame
            && self.critical_bvs.binary_search(&bv).is_ok()
            && self.frames[frame - self.window_start].has_bv(bv)
    }

    /// (total BV states, critical BV states) over the window.
    pub fn state_counts(&self) -> (usize, usize) {
        let mut total = 0;
        let mut critical = 0;
        for (i, f) in self.frames.iter().enumerate() {
            let idx = self.window_start + i;
            total += f.bvs.len();
            critical += f
                .bvs
                .iter()
                .filter(|b| self.is_critical(idx, b.state.id))
                .count();
        }
        (total, critical)
    }

    pub fn record(&self) -> ScenarioRecord {
        ScenarioRecord {
            scenario_id: self.scenario_id,
            episode_id: self.episode_id,
            failure_frame: self.failure_frame,
            window_start: self.window_start,
            lookback_start: self.lookback_start,
            critical_bvs: self.critical_bvs.clone(),
        }
    }
}

/// Serializable index of a failure scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario_id: u64,
    pub episode_id: u64,
    pub failure_frame: usize,
    pub window_start: usize,
    pub lookback_start: usize,
    pub critical_bvs: Vec<u32>,
}

impl ScenarioRecord {
    pub fn attach<'a>(&self, episode: &'a Episode) -> Result<FailureScenario<'a>> {
        if self.failure_frame >= episode.frames.len() || self.window_start > self.failure_frame {
            return Err(Error::parse("scenario record", "window outside episode"));
        }
        Ok(FailureScenario {
            scenario_id: self.scenario_id,
            episode_id: self.episode_id,
            failure_frame: self.failure_frame,
            window_start: self.window_start,
            frames: &episode.frames[self.window_start..=self.failure_frame],
            critical_bvs: self.critical_bvs.clone(),
            lookback_start: self.lookback_start,
        })
    }
}

/// Unique scenario id: episode in the high half, failure frame in the low half.
pub fn scenario_id(episode_id: u64, failure_frame: usize) -> u64 {
    (episode_id << 32) | failure_frame as u64
}

/// One scenario per failure frame, windows may overlap.
pub fn extract_failure_scenarios<'a>(
    episode: &'a Episode,
    def: &FailureDefinition,
    rule: &CriticalStateRule,
) -> Vec<FailureScenario<'a>> {
    let window = rule.window_frames(episode.header.dt).max(1);
    episode
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| is_failure(&f.metrics, def))
        .map(|(i, _)| {
            let start = (i + 1).saturating_sub(window);
            FailureScenario {
                scenario_id: scenario_id(episode.header.episode_id, i),
                episode_id: episode.header.episode_id,
                failure_frame: i,
                window_start: start,
                frames: &episode.frames[start..=i],
                critical_bvs: Vec::new(),
                lookback_start: i + 1,
            }
        })
        .collect()
}

/// Flags the critical BVs of a scenario and their lookback span.
pub fn mark_critical<'a>(
    mut scenario: FailureScenario<'a>,
    rule: &CriticalStateRule,
    net: &GarageNetwork,
    dt: f64,
) -> FailureScenario<'a> {
    let last = scenario.failure_record();
    let scene = last.scene();
    let av = last.av.pose.position();
    let mut critical: Vec<u32> = visible_set(net, &scene, &rule.sensor)
        .into_iter()
        .filter(|&id| {
            last.bv_position(id)
                .is_some_and(|p| p.dist(av) <= rule.radius)
        })
        .collect();
    critical.sort_unstable();
    let look = rule.lookback_frames(dt).max(1);
    scenario.lookback_start = (scenario.failure_frame + 1)
        .saturating_sub(look)
        .max(scenario.window_start);
    scenario.critical_bvs = critical;
    scenario
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    AllStates,
    CriticalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub scenario: u64,
    pub episode: u64,
    /// Episode frame index of the decision.
    pub frame: usize,
    pub vehicle: u32,
    pub decision_point: DecisionPointId,
    pub option: usize,
    pub features: FeatureVector,
    pub critical: bool,
    /// Scenario-level failure indicator; always set for windowed samples.
    pub failure: bool,
}

impl TrainingSample {
    pub fn identity(&self) -> (u64, usize, u32) {
        (self.scenario, self.frame, self.vehicle)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    /// Every contributing scenario, including those that yielded no samples.
    pub scenarios: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    schema: String,
    mode: Option<DatasetMode>,
    scenarios: Vec<u64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples whose scenario is in `keep`.
    pub fn restrict(&self, keep: &[u64]) -> TrainingSet {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        TrainingSet {
            samples: self
                .samples
                .iter()
                .filter(|s| keep.binary_search(&s.scenario).is_ok())
                .cloned()
                .collect(),
            scenarios: self
                .scenarios
                .iter()
                .copied()
                .filter(|id| keep.binary_search(id).is_ok())
                .collect(),
        }
    }

    pub fn critical_only(&self) -> TrainingSet {
        TrainingSet {
            samples: self
                .samples
                .iter()
                .filter(|s| s.critical)
                .cloned()
                .collect(),
            scenarios: self.scenarios.clone(),
        }
    }

    pub fn write_jsonl<W: Write>(
        &self,
        mode: Option<DatasetMode>,
        mut w: W,
    ) -> std::io::Result<()> {
        let header = DatasetHeader {
            schema: DATASET_SCHEMA.to_string(),
            mode,
            scenarios: self.scenarios.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::parse("dataset", "empty file"))?
            .map_err(|e| Error::parse("dataset", e))?;
        let header: DatasetHeader =
            serde_json::from_str(&first).map_err(|e| Error::parse("dataset header", e))?;
        if header.schema != DATASET_SCHEMA {
            return Err(Error::parse(
                "dataset header",
                format!("unsupported schema {:?}", header.schema),
            ));
        }
        let mut samples = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::parse("dataset", e))?;
            if line.trim().is_empty() {
                continue;
            }
            samples
                .push(serde_json::from_str(&line).map_err(|e| Error::parse("dataset sample", e))?);
        }
        Ok(Self {
            samples,
            scenarios: header.scenarios,
        })
    }
}

/// Decision-point samples from marked scenarios.
pub fn build_dataset(
    net: &GarageNetwork,
    scenarios: &[FailureScenario<'_>],
    mode: DatasetMode,
    v_max: f64,
) -> Result<TrainingSet> {
    let mut set = TrainingSet::default();
    for sc in scenarios {
        set.scenarios.push(sc.scenario_id);
        for (i, frame) in sc.frames.iter().enumerate() {
            let idx = sc.window_start + i;
            if frame.maneuvers.is_empty() {
                continue;
            }
            let scene = frame.scene();
            for m in &frame.maneuvers {
                let critical = sc.is_critical(idx, m.vehicle);
                if mode == DatasetMode::CriticalOnly && !critical {
                    continue;
                }
                let features = featurize(net, &scene, m.vehicle, m.decision_point, v_max)?;
                set.samples.push(TrainingSample {
                    scenario: sc.scenario_id,
                    episode: sc.episode_id,
                    frame: idx,
                    vehicle: m.vehicle,
                    decision_point: m.decision_point,
                    option: m.option,
                    features,
                    critical,
                    failure: true,
                });
            }
        }
    }
    Ok(set)
}

/// Table-style state counts over a scenario list.
pub fn state_counts(scenarios: &[FailureScenario<'_>]) -> (usize, usize) {
    scenarios.iter().fold((0, 0), |(t, c), s| {
        let (a, b) = s.state_counts();
        (t + a, c + b)
    })
}

/// Convenience: extract and mark in one pass.
pub fn marked_scenarios<'a>(
    episode: &'a Episode,
    def: &FailureDefinition,
    rule: &CriticalStateRule,
    net: &GarageNetwork,
) -> Vec<FailureScenario<'a>> {
    let dt = episode.header.dt;
    extract_failure_scenarios(episode, def, rule)
        .into_iter()
        .map(|s| mark_critical(s, rule, net, dt))
        .collect()
}

pub fn write_scenarios<W: Write>(
    scenarios: &[FailureScenario<'_>],
    mut w: W,
) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, &serde_json::json!({ "schema": SCENARIO_SCHEMA }))?;
    w.write_all(b"\n")?;
    for s in scenarios {
        serde_json::to_writer(&mut w, &s.record())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scenarios<R: BufRead>(r: R) -> Result<Vec<ScenarioRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::parse("scenarios", e))?;
        if i == 0 {
            let v: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| Error::parse("scenarios header", e))?;
            if v.get("schema").and_then(|s| s.as_str()) != Some(SCENARIO_SCHEMA) {
                return Err(Error::parse("scenarios header", "unsupported schema"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse("scenario record", e))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use crate::perception::{PerceptionMetrics, PerceptionOutput};
    use crate::sim::{Role, AV_ID};

    pub(crate) fn status(id: u32, lane: u32, progress: f64, x: f64, y: f64) -> VehicleStatus {
        VehicleStatus {
            state: VehicleState {
                id,
                lane,
                progress,
                speed: 0.0,
                role: if id == AV_ID { Role::Av } else { Role::Bv },
                parked: false,
                dwell: 0,
                route_index: 0,
                committed: None,
            },
            pose: Pose { x, y, heading: 0.0 },
        }
    }

    fn frame(k: u64, fail: bool) -> FrameRecord {
        FrameRecord {
            timestep: k,
            time: k as f64 * 0.5,
            av: status(0, 0, 0.0, 0.0, 0.0),
            bvs: vec![],
            maneuvers: vec![],
            perception: PerceptionOutput::default(),
            metrics: PerceptionMetrics {
                te_max: if fail { 0.9 } else { 0.1 },
                fn_count: 0,
            },
            failures: [fail, fail, false, false],
        }
    }

    fn episode(fails: &[usize], n: usize) -> Episode {
        Episode {
            header: EpisodeHeader {
                schema: EPISODE_SCHEMA.into(),
                episode_id: 3,
                seed: 3,
                network: "t".into(),
                dt: 0.5,
                horizon: n as u64 - 1,
                config_hash: String::new(),
                environment: String::new(),
            },
            frames: (0..n)
                .map(|k| frame(k as u64, fails.contains(&k)))
                .collect(),
        }
    }

    #[test]
    fn no_failures_no_scenarios() {
        let ep = episode(&[], 50);
        let def = FailureDefinition::TeMaxAbove { theta: 0.5 };
        assert!(extract_failure_scenarios(&ep, &def, &CriticalStateRule::default()).is_empty());
    }

    #[test]
    fn window_is_twenty_frames() {
        let ep = episode(&[30], 50);
        let def = FailureDefinition::TeMaxAbove { theta: 0.5 };
        let sc = extract_failure_scenarios(&ep, &def, &CriticalStateRule::default());
        assert_eq!(sc.len(), 1);
        assert_eq!(sc[0].window_start, 11);
        assert_eq!(sc[0].frames.len(), 20);
        assert_eq!(sc[0].frames[0].timestep, 11);
        assert_eq!(sc[0].failure_record().timestep, 30);
    }

    #[test]
    fn window_truncates_at_episode_start() {
        let ep = episode(&[5], 50);
        let def = FailureDefinition::TeMaxAbove { theta: 0.5 };
        let sc = extract_failure_scenarios(&ep, &def, &CriticalStateRule::default());
        assert_eq!((sc[0].window_start, sc[0].frames.len()), (0, 6));
    }

    #[test]
    fn overlapping_windows_are_kept_in_order() {
        let ep = episode(&[25, 20], 50);
        let def = FailureDefinition::TeMaxAbove { theta: 0.5 };
        let sc = extract_failure_scenarios(&ep, &def, &CriticalStateRule::default());
        let idx: Vec<usize> = sc.iter().map(|s| s.failure_frame).collect();
        assert_eq!(idx, vec![20, 25]);
    }

    #[test]
    fn lookback_counts_match_rule() {
        let rule = CriticalStateRule::default();
        assert_eq!(rule.window_frames(0.5), 20);
        assert_eq!(rule.lookback_frames(0.5), 15);
        assert_eq!(steps_ceil(10.0, 0.3), 34);
    }

    #[test]
    fn episode_jsonl_round_trip() {
        let ep = episode(&[3], 6);
        let mut buf = Vec::new();
        ep.write_jsonl(&mut buf).unwrap();
        let back = Episode::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, ep);
    }
}
