//! BV maneuver distribution.
//!
//! One multinomial logistic regression per decision point maps features of
//! the scene around the deciding BV to a distribution over route options.
//! Training minimizes the negative log-likelihood of the taken options over
//! the samples kept in a dataset, which is how both the failure indicator
//! and the critical-state indicator enter the objective.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DecisionPointId, GarageNetwork};
use crate::perception::DENSITY_RADIUS;
use crate::recorder::{TrainingSample, TrainingSet};
use crate::rng::{stream_rng, Stream};
use crate::sim::{vehicle_pose, waiting_at, Role, SceneState};

pub const FEATURE_LEN: usize = 7;
pub const FEATURE_VERSION: &str = "garage-relative-v1";
pub const MODEL_SCHEMA: &str = "failgen.policy/1";

/// Distance normalizer for positions, meters.
const POS_SCALE: f64 = 20.0;
const DENSITY_SCALE: f64 = 5.0;

/// `[av_x, av_y, av_dist, av_speed, bv_speed, density, bias]`; AV position in
/// the BV's frame (x forward, y left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn featurize(
    net: &GarageNetwork,
    scene: &SceneState,
    bv: u32,
    decision_point: DecisionPointId,
    v_max: f64,
) -> Result<FeatureVector> {
    let v = scene.vehicle(bv).ok_or(Error::UnknownVehicle(bv))?;
    if waiting_at(net, v) != Some(decision_point) {
        return Err(Error::NotAtDecisionPoint {
            vehicle: bv,
            decision_point,
        });
    }
    let pose = vehicle_pose(net, v);
    let av = scene.av();
    let av_pos = vehicle_pose(net, av).position();
    let rel = pose.to_local(av_pos);
    let me = pose.position();
    let density = scene
        .vehicles
        .iter()
        .filter(|o| o.id != bv && o.role == Role::Bv && !o.parked)
        .filter(|o| vehicle_pose(net, o).position().dist(me) <= DENSITY_RADIUS)
        .count();
    Ok(FeatureVector([
        rel.x / POS_SCALE,
        rel.y / POS_SCALE,
        av_pos.dist(me) / POS_SCALE,
        av.speed / v_max,
        v.speed / v_max,
        density as f64 / DENSITY_SCALE,
        1.0,
    ]))
}

/// Row-major `options x FEATURE_LEN` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBlock {
    pub options: usize,
    pub weights: Vec<f64>,
}

impl WeightBlock {
    pub fn zeros(options: usize) -> Self {
        Self {
            options,
            weights: vec![0.0; options * FEATURE_LEN],
        }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * FEATURE_LEN..(o + 1) * FEATURE_LEN]
    }

    fn logits(&self, f: &FeatureVector) -> Vec<f64> {
        (0..self.options)
            .map(|o| self.row(o).iter().zip(f.0.iter()).map(|(w, x)| w * x).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub schema: String,
    pub feature_version: String,
    #[serde(with = "block_list")]
    pub blocks: BTreeMap<DecisionPointId, WeightBlock>,
}

/// Blocks are stored as a list so the model also survives being embedded in
/// tagged or flattened documents, where integer map keys do not round-trip.
mod block_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        decision_point: DecisionPointId,
        options: usize,
        weights: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(
        blocks: &BTreeMap<DecisionPointId, WeightBlock>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(blocks.iter().map(|(&decision_point, b)| Entry {
            decision_point,
            options: b.options,
            weights: b.weights.clone(),
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<DecisionPointId, WeightBlock>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        let n = entries.len();
        let map: BTreeMap<_, _> = entries
            .into_iter()
            .map(|e| {
                let block = WeightBlock {
                    options: e.options,
                    weights: e.weights,
                };
                (e.decision_point, block)
            })
            .collect();
        if map.len() != n {
            return Err(serde::de::Error::custom("duplicate decision point block"));
        }
        Ok(map)
    }
}

impl PolicyModel {
    /// Zero weights, i.e. uniform over every decision point's options.
    pub fn zeros(net: &GarageNetwork) -> Self {
        Self {
            schema: MODEL_SCHEMA.to_string(),
            feature_version: FEATURE_VERSION.to_string(),
            blocks: net
                .decision_points
                .iter()
                .map(|dp| (dp.id, WeightBlock::zeros(dp.options.len())))
                .collect(),
        }
    }

    pub fn block(&self, dp: DecisionPointId) -> Result<&WeightBlock> {
        self.blocks.get(&dp).ok_or(Error::UnknownDecisionPoint(dp))
    }

    pub fn check_features(&self) -> Result<()> {
        if self.feature_version != FEATURE_VERSION {
            return Err(Error::FeatureSpecMismatch {
                model: self.feature_version.clone(),
                featurizer: FEATURE_VERSION.to_string(),
            });
        }
        Ok(())
    }

    /// Checks that every decision point of `net` has a block of the right size.
    pub fn check_network(&self, net: &GarageNetwork) -> Result<()> {
        for dp in &net.decision_points {
            let b = self.block(dp.id)?;
            if b.options != dp.options.len() || b.weights.len() != b.options * FEATURE_LEN {
                return Err(Error::Config(format!(
                    "model block for decision point {} has {} options, network has {}",
                    dp.id,
                    b.options,
                    dp.options.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::parse("policy model", e))?;
        if m.schema != MODEL_SCHEMA {
            return Err(Error::parse(
                "policy model",
                format!("unsupported schema {:?}", m.schema),
            ));
        }
        Ok(m)
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn predict(model: &PolicyModel, f: &FeatureVector, dp: DecisionPointId) -> Result<Vec<f64>> {
    let block = model.block(dp)?;
    Ok(log_softmax(&block.logits(f))
        .into_iter()
        .map(f64::exp)
        .collect())
}

fn sample_log_prob(model: &PolicyModel, s: &TrainingSample) -> Result<f64> {
    let block = model.block(s.decision_point)?;
    if s.option >= block.options {
        return Err(Error::InvalidManeuver(format!(
            "sample option {} out of range at decision point {}",
            s.option, s.decision_point
        )));
    }
    Ok(log_softmax(&block.logits(&s.features))[s.option])
}

/// Negative log-likelihood summed over the samples.
pub fn loss(model: &PolicyModel, set: &TrainingSet) -> Result<f64> {
    if set.is_empty() {
        log::warn!("loss evaluated on an empty training set");
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in &set.samples {
        total -= sample_log_prob(model, s)?;
    }
    Ok(total)
}

/// `loss / n`, or 0 for an empty set.
pub fn mean_loss(model: &PolicyModel, set: &TrainingSet) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    Ok(loss(model, set)? / set.len() as f64)
}

/// Product of the taken options' probabilities, evaluated directly.
///
/// Underflows on long sequences; only meant for checking the log form.
pub fn product_likelihood(model: &PolicyModel, set: &TrainingSet) -> Result<f64> {
    let mut p = 1.0;
    for s in &set.samples {
        p *= predict(model, &s.features, s.decision_point)?[s.option];
    }
    Ok(p)
}

pub type Gradients = BTreeMap<DecisionPointId, Vec<f64>>;

/// Gradient of [`loss`] with respect to every weight block.
pub fn gradient(model: &PolicyModel, set: &TrainingSet) -> Result<Gradients> {
    let mut grads: Gradients = model
        .blocks
        .iter()
        .map(|(&id, b)| (id, vec![0.0; b.weights.len()]))
        .collect();
    for s in &set.samples {
        let block = model.block(s.decision_point)?;
        if s.option >= block.options {
            return Err(Error::InvalidManeuver(format!(
                "sample option {} out of range at decision point {}",
                s.option, s.decision_point
            )));
        }
        let probs: Vec<f64> = log_softmax(&block.logits(&s.features))
            .into_iter()
            .map(f64::exp)
            .collect();
        let g = grads.get_mut(&s.decision_point).expect("block exists");
        for (o, p) in probs.iter().enumerate() {
            let coef = p - if o == s.option { 1.0 } else { 0.0 };
            for (k, x) in s.features.0.iter().enumerate() {
                g[o * FEATURE_LEN + k] += coef * x;
            }
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Fraction of scenarios held out for validation.
    pub validation_fraction: f64,
    pub split_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 400,
            validation_fraction: 0.2,
            split_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(
                "validation fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: PolicyModel,
    /// Mean per-sample loss before each epoch's update.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl TrainOutcome {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss")?;
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            writeln!(w, "{},{},{}", i + 1, t, v)?;
        }
        Ok(())
    }
}

/// Scenario-level split: `(train ids, validation ids)`.
pub fn split_scenarios(scenarios: &[u64], fraction: f64, seed: u64) -> (Vec<u64>, Vec<u64>) {
    let mut ids = scenarios.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = stream_rng(seed, Stream::Analysis);
    ids.shuffle(&mut rng);
    let n_val = (ids.len() as f64 * fraction).round() as usize;
    let n_val = if fraction > 0.0 && ids.len() > 1 {
        n_val.clamp(1, ids.len() - 1)
    } else {
        n_val.min(ids.len())
    };
    let val = ids[..n_val].to_vec();
    let train = ids[n_val..].to_vec();
    (train, val)
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(model: &PolicyModel) -> Self {
        let zeros: Gradients = model
            .blocks
            .iter()
            .map(|(&id, b)| (id, vec![0.0; b.weights.len()]))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn update(&mut self, model: &mut PolicyModel, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (id, g) in grads {
            let w = &mut model.blocks.get_mut(id).expect("block exists").weights;
            let m = self.m.get_mut(id).expect("moment exists");
            let v = self.v.get_mut(id).expect("moment exists");
            for k in 0..g.len() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                w[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Full-batch Adam on an explicit train/validation pair.
///
/// Optimizes the mean per-sample loss; histories record the loss of the
/// weights each epoch starts from, then the final weights are returned.
pub fn train_with_validation(
    model0: &PolicyModel,
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let mut model = model0.clone();
    let mut adam = Adam::new(&model);
    let n = train_set.len() as f64;
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut grads = gradient(&model, train_set)?;
        train_loss.push(loss(&model, train_set)? / n);
        val_loss.push(mean_loss(&model, val_set)?);
        for g in grads.values_mut() {
            g.iter_mut().for_each(|x| *x /= n);
        }
        adam.update(&mut model, &grads, cfg);
    }
    Ok(TrainOutcome {
        model,
        train_loss,
        val_loss,
    })
}

/// Splits by scenario with `cfg.split_seed`, then trains.
pub fn train(model0: &PolicyModel, set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let (train_ids, val_ids) =
        split_scenarios(&set.scenarios, cfg.validation_fraction, cfg.split_seed);
    let mut train_set = set.restrict(&train_ids);
    let val_set = set.restrict(&val_ids);
    if train_set.is_empty() {
        // Every sample fell in held-out scenarios; train on all of them.
        train_set = set.clone();
    }
    train_with_validation(model0, &train_set, &val_set, cfg)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample(dp: u32, option: usize, f: [f64; FEATURE_LEN]) -> TrainingSample {
        TrainingSample {
            scenario: 0,
            episode: 0,
            frame: 0,
            vehicle: 1,
            decision_point: dp,
            option,
            features: FeatureVector(f),
            critical: true,
            failure: true,
        }
    }

    pub(crate) fn model_with(options: &[usize]) -> PolicyModel {
        PolicyModel {
            schema: MODEL_SCHEMA.into(),
            feature_version: FEATURE_VERSION.into(),
            blocks: options
                .iter()
                .enumerate()
                .map(|(i, &o)| (i as u32, WeightBlock::zeros(o)))
                .collect(),
        }
    }

    #[test]
    fn zero_weights_are_uniform() {
        let m = model_with(&[3]);
        let p = predict(&m, &FeatureVector([0.3; FEATURE_LEN]), 0).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unknown_decision_point() {
        let m = model_with(&[3]);
        assert!(matches!(
            predict(&m, &FeatureVector([0.0; FEATURE_LEN]), 4),
            Err(Error::UnknownDecisionPoint(4))
        ));
    }

    #[test]
    fn uniform_log_loss() {
        let m = model_with(&[3]);
        let set = TrainingSet {
            samples: (0..5)
                .map(|i| sample(0, i % 3, [0.1 * i as f64; FEATURE_LEN]))
                .collect(),
            scenarios: vec![0],
        };
        assert!((loss(&m, &set).unwrap() - 5.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_set_has_zero_loss_and_gradient() {
        let m = model_with(&[2, 3]);
        let set = TrainingSet::default();
        assert_eq!(loss(&m, &set).unwrap(), 0.0);
        assert!(gradient(&m, &set)
            .unwrap()
            .values()
            .all(|g| g.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn saturated_sample_has_no_gradient() {
        let mut m = model_with(&[2]);
        m.blocks.get_mut(&0).unwrap().weights[FEATURE_LEN - 1] = 60.0;
        let mut f = [0.0; FEATURE_LEN];
        f[FEATURE_LEN - 1] = 1.0;
        let set = TrainingSet {
            samples: vec![sample(0, 0, f)],
            scenarios: vec![0],
        };
        let g = gradient(&m, &set).unwrap();
        assert!(g[&0].iter().all(|x| x.abs() < 1e-20));
        assert!(loss(&m, &set).unwrap() < 1e-20);
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let m = model_with(&[2]);
        let set = TrainingSet {
            samples: vec![sample(0, 0, [1.0; FEATURE_LEN])],
            scenarios: vec![0],
        };
        assert!(matches!(train(&m, &set, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn separable_point_descends() {
        let m = model_with(&[3]);
        let set = TrainingSet {
            samples: vec![sample(0, 2, [0.5, -0.2, 0.4, 0.1, 0.3, 0.2, 1.0])],
            scenarios: vec![0],
        };
        let out = train_with_validation(&m, &set, &TrainingSet::default(), &TrainConfig::default())
            .unwrap();
        for w in out.train_loss[..11].windows(2) {
            assert!(w[1] < w[0]);
        }
        assert_eq!(out.train_loss.len(), 400);
    }

    #[test]
    fn split_is_by_scenario_and_seeded() {
        let ids: Vec<u64> = (0..10).collect();
        let (t1, v1) = split_scenarios(&ids, 0.2, 4);
        let (t2, v2) = split_scenarios(&ids, 0.2, 4);
        assert_eq!((t1.clone(), v1.clone()), (t2, v2));
        assert_eq!(v1.len(), 2);
        assert_eq!(t1.len(), 8);
    }

    #[test]
    fn model_json_round_trip() {
        let mut m = model_with(&[2, 3]);
        m.blocks.get_mut(&1).unwrap().weights[4] = -0.25;
        assert_eq!(PolicyModel::from_json(&m.to_json()).unwrap(), m);
    }
}
