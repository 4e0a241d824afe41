//! Intelligent testing environments.
//!
//! A BV waiting at a decision point draws its route from the trained model
//! when it is in a critical state right now (close to the AV and visible),
//! and from the map's standard split otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DecisionPoint, GarageNetwork};
use crate::perception::{visible_set, FailureDefinition, SensorConfig};
use crate::policy::{featurize, predict, train, PolicyModel, TrainConfig, TrainOutcome};
use crate::recorder::{
    build_dataset, marked_scenarios, state_counts, CriticalStateRule, DatasetMode, Episode,
    TrainingSet,
};
use crate::sim::{
    vehicle_pose, waiting_at, Choice, ChoiceSource, ManeuverProvider, SceneState, StandardProvider,
    VehicleState,
};

/// Instantaneous criticality test used while an episode runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeRule {
    pub radius: f64,
    pub sensor: SensorConfig,
}

impl Default for RuntimeRule {
    fn default() -> Self {
        Self {
            radius: 20.0,
            sensor: SensorConfig::default(),
        }
    }
}

impl RuntimeRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::Config(
                "runtime critical radius must be positive".into(),
            ));
        }
        self.sensor.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Environment {
    Original,
    /// Model trained on every state of the failure windows.
    IntelligentA {
        model: PolicyModel,
    },
    /// Model trained on critical states only.
    IntelligentB {
        model: PolicyModel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(flatten)]
    pub env: Environment,
    #[serde(default)]
    pub rule: RuntimeRule,
}

impl EnvironmentSpec {
    pub fn original() -> Self {
        Self {
            env: Environment::Original,
            rule: RuntimeRule::default(),
        }
    }

    pub fn intelligent_a(model: PolicyModel) -> Self {
        Self {
            env: Environment::IntelligentA { model },
            rule: RuntimeRule::default(),
        }
    }

    pub fn intelligent_b(model: PolicyModel) -> Self {
        Self {
            env: Environment::IntelligentB { model },
            rule: RuntimeRule::default(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.env {
            Environment::Original => "original",
            Environment::IntelligentA { .. } => "intelligent_a",
            Environment::IntelligentB { .. } => "intelligent_b",
        }
    }

    pub fn model(&self) -> Option<&PolicyModel> {
        match &self.env {
            Environment::Original => None,
            Environment::IntelligentA { model } | Environment::IntelligentB { model } => {
                Some(model)
            }
        }
    }

    pub fn validate(&self, net: &GarageNetwork) -> Result<()> {
        self.rule.validate()?;
        if let Some(m) = self.model() {
            m.check_features()?;
            m.check_network(net)?;
        }
        Ok(())
    }

    /// Maneuver provider realizing this environment.
    pub fn provider<'a>(&'a self, v_max: f64) -> Box<dyn ManeuverProvider + 'a> {
        match self.model() {
            None => Box::new(StandardProvider),
            Some(model) => Box::new(IntelligentProvider {
                model,
                rule: self.rule,
                v_max,
            }),
        }
    }
}

/// Whether `bv` is within the rule's radius of the AV and visible to it.
pub fn is_critical_state_runtime(
    net: &GarageNetwork,
    scene: &SceneState,
    bv: &VehicleState,
    rule: &RuntimeRule,
) -> bool {
    let av = vehicle_pose(net, scene.av()).position();
    if vehicle_pose(net, bv).position().dist(av) > rule.radius {
        return false;
    }
    visible_set(net, scene, &rule.sensor)
        .binary_search(&bv.id)
        .is_ok()
}

/// Switches per BV between the model and the standard split.
#[derive(Debug, Clone, Copy)]
pub struct IntelligentProvider<'a> {
    pub model: &'a PolicyModel,
    pub rule: RuntimeRule,
    pub v_max: f64,
}

impl ManeuverProvider for IntelligentProvider<'_> {
    fn choose(
        &self,
        net: &GarageNetwork,
        scene: &SceneState,
        bv: &VehicleState,
        dp: &DecisionPoint,
    ) -> Result<Choice> {
        self.model.check_features()?;
        if is_critical_state_runtime(net, scene, bv, &self.rule) {
            let f = featurize(net, scene, bv.id, dp.id, self.v_max)?;
            Ok(Choice {
                probs: predict(self.model, &f, dp.id)?,
                source: ChoiceSource::Model,
            })
        } else {
            StandardProvider.choose(net, scene, bv, dp)
        }
    }
}

/// Uses the model for every BV regardless of criticality.
#[derive(Debug, Clone, Copy)]
pub struct ModelProvider<'a> {
    pub model: &'a PolicyModel,
    pub v_max: f64,
}

impl ManeuverProvider for ModelProvider<'_> {
    fn choose(
        &self,
        net: &GarageNetwork,
        scene: &SceneState,
        bv: &VehicleState,
        dp: &DecisionPoint,
    ) -> Result<Choice> {
        let f = featurize(net, scene, bv.id, dp.id, self.v_max)?;
        Ok(Choice {
            probs: predict(self.model, &f, dp.id)?,
            source: ChoiceSource::Model,
        })
    }
}

/// One entry per BV waiting at a decision point, in scene order.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeChoice {
    pub vehicle: u32,
    pub decision_point: u32,
    pub choice: Choice,
}

/// Route distributions for every waiting BV under `spec`.
pub fn intelligent_maneuvers(
    net: &GarageNetwork,
    scene: &SceneState,
    spec: &EnvironmentSpec,
    v_max: f64,
) -> Result<Vec<RuntimeChoice>> {
    let provider = spec.provider(v_max);
    let mut out = Vec::new();
    for bv in scene.bvs() {
        let Some(dp_id) = waiting_at(net, bv) else {
            continue;
        };
        let dp = net
            .decision_point(dp_id)
            .ok_or(Error::UnknownDecisionPoint(dp_id))?;
        out.push(RuntimeChoice {
            vehicle: bv.id,
            decision_point: dp_id,
            choice: provider.choose(net, scene, bv, dp)?,
        });
    }
    Ok(out)
}

/// Models and datasets derived from a set of baseline episodes.
#[derive(Debug, Clone)]
pub struct Generated {
    pub intelligent_a: EnvironmentSpec,
    pub intelligent_b: EnvironmentSpec,
    pub all_states: TrainingSet,
    pub critical_only: TrainingSet,
    pub scenarios: usize,
    /// (total BV states, critical BV states) over every failure window.
    pub state_counts: (usize, usize),
    pub curves_a: TrainOutcome,
    pub curves_b: TrainOutcome,
}

/// Extracts failure scenarios under `def`, builds both datasets and trains
/// the environment A and B models from zero weights.
pub fn generate_environments(
    net: &GarageNetwork,
    episodes: &[Episode],
    def: &FailureDefinition,
    critical: &CriticalStateRule,
    train_cfg: &TrainConfig,
    runtime: RuntimeRule,
    v_max: f64,
) -> Result<Generated> {
    let scenarios: Vec<_> = episodes
        .iter()
        .flat_map(|ep| marked_scenarios(ep, def, critical, net))
        .collect();
    let all_states = build_dataset(net, &scenarios, DatasetMode::AllStates, v_max)?;
    let critical_only = all_states.critical_only();
    let model0 = PolicyModel::zeros(net);
    let curves_a = train(&model0, &all_states, train_cfg)?;
    let curves_b = train(&model0, &critical_only, train_cfg)?;
    let with_rule = |mut spec: EnvironmentSpec| {
        spec.rule = runtime;
        spec
    };
    Ok(Generated {
        intelligent_a: with_rule(EnvironmentSpec::intelligent_a(curves_a.model.clone())),
        intelligent_b: with_rule(EnvironmentSpec::intelligent_b(curves_b.model.clone())),
        state_counts: state_counts(&scenarios),
        scenarios: scenarios.len(),
        all_states,
        critical_only,
        curves_a,
        curves_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::tests::model_with;

    #[test]
    fn spec_json_round_trip() {
        let mut m = model_with(&[2, 3]);
        m.blocks.get_mut(&1).unwrap().weights[3] = 0.5;
        for spec in [
            EnvironmentSpec::original(),
            EnvironmentSpec::intelligent_a(m.clone()),
            EnvironmentSpec::intelligent_b(m),
        ] {
            let text = serde_json::to_string(&spec).unwrap();
            let back: EnvironmentSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, spec);
        }
    }
}
