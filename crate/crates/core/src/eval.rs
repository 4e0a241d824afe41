//! Monte Carlo evaluation of testing environments.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envgen::{EnvironmentSpec, ModelProvider};
use crate::error::{Error, Result};
use crate::network::GarageNetwork;
use crate::perception::{
    fit_surrogate, is_failure, FailureDefinition, SensorConfig, SurrogateDetector, SurrogateParams,
};
use crate::policy::{
    featurize, loss, product_likelihood, split_scenarios, train_with_validation, FeatureVector,
    PolicyModel, TrainConfig,
};
use crate::recorder::{Episode, TrainingSample, TrainingSet};
use crate::rng::{stream_rng, Stream};
use crate::sim::{choose_maneuvers, run_episode, step, to_maneuvers, SceneState, SimConfig};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const ENUMERATION_CAP: u64 = 1_000_000;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Everything an episode needs besides the environment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub net: GarageNetwork,
    pub sim: SimConfig,
    pub sensor: SensorConfig,
    pub surrogate: SurrogateParams,
}

impl Experiment {
    pub fn detector(&self) -> SurrogateDetector {
        SurrogateDetector::new(self.surrogate.clone(), self.sensor)
    }

    pub fn with_surrogate(&self, surrogate: SurrogateParams) -> Self {
        Self {
            surrogate,
            ..self.clone()
        }
    }

    fn sim_for(&self, duration: f64) -> Result<SimConfig> {
        let horizon = self.sim.steps_for(duration);
        if horizon < 1 {
            return Err(Error::Config(format!(
                "duration {duration} s is shorter than one step"
            )));
        }
        Ok(SimConfig {
            horizon,
            ..self.sim.clone()
        })
    }

    /// One episode per seed, run concurrently, returned in seed order.
    pub fn run_environment(
        &self,
        env: &EnvironmentSpec,
        duration: f64,
        seeds: &[u64],
    ) -> Result<Vec<Episode>> {
        env.validate(&self.net)?;
        let cfg = self.sim_for(duration)?;
        let detector = self.detector();
        seeds
            .par_iter()
            .map(|&seed| {
                let provider = env.provider(cfg.v_max);
                let mut ep = run_episode(&self.net, &cfg, seed, provider.as_ref(), &detector)?;
                ep.header.environment = env.label().to_string();
                Ok(ep)
            })
            .collect()
    }
}

/// Failure counts of one definition, pooled over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitionRatio {
    pub definition: String,
    pub failures: u64,
    pub frames: u64,
    pub ratio: f64,
    pub wilson: (f64, f64),
    /// Percentile interval from resampling whole seeds.
    pub bootstrap: (f64, f64),
    pub per_seed: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvReport {
    pub environment: String,
    pub seeds: Vec<u64>,
    pub duration: f64,
    pub frames: u64,
    pub definitions: Vec<DefinitionRatio>,
}

impl EnvReport {
    pub fn definition(&self, label: &str) -> Option<&DefinitionRatio> {
        self.definitions.iter().find(|d| d.definition == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub environments: Vec<EnvReport>,
}

impl EvalReport {
    pub fn environment(&self, label: &str) -> Option<&EnvReport> {
        self.environments.iter().find(|e| e.environment == label)
    }

    /// Wide CSV: one row per environment and definition.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "environment,definition,failures,frames,ratio,wilson_lo,wilson_hi,bootstrap_lo,bootstrap_hi"
        )?;
        for e in &self.environments {
            for d in &e.definitions {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    e.environment,
                    d.definition,
                    d.failures,
                    d.frames,
                    d.ratio,
                    d.wilson.0,
                    d.wilson.1,
                    d.bootstrap.0,
                    d.bootstrap.1
                )?;
            }
        }
        Ok(())
    }

    /// Long-format `env,definition,ratio` table for plotting.
    pub fn write_long_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "env,definition,ratio")?;
        for e in &self.environments {
            for d in &e.definitions {
                writeln!(w, "{},{},{}", e.environment, d.definition, d.ratio)?;
            }
        }
        Ok(())
    }
}

fn bootstrap_interval(per_seed: &[(u64, u64)], rng: &mut ChaCha8Rng) -> (f64, f64) {
    if per_seed.is_empty() {
        return (0.0, 1.0);
    }
    let mut ratios: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let (mut f, mut n) = (0u64, 0u64);
            for _ in 0..per_seed.len() {
                let (a, b) = per_seed[rng.random_range(0..per_seed.len())];
                f += a;
                n += b;
            }
            if n == 0 {
                0.0
            } else {
                f as f64 / n as f64
            }
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let at = |q: f64| ratios[((q * (ratios.len() - 1) as f64).round()) as usize];
    (at(0.025), at(0.975))
}

/// Pools failure frames of each definition over already-run episodes.
pub fn summarize(
    label: &str,
    episodes: &[Episode],
    duration: f64,
    defs: &[FailureDefinition],
) -> EnvReport {
    let frames: u64 = episodes.iter().map(|e| e.frames.len() as u64).sum();
    let mut boot_rng = stream_rng(0, Stream::Analysis);
    let definitions = defs
        .iter()
        .map(|def| {
            let per_seed: Vec<(u64, u64)> = episodes
                .iter()
                .map(|e| (e.failure_frames(def) as u64, e.frames.len() as u64))
                .collect();
            let failures = per_seed.iter().map(|p| p.0).sum();
            DefinitionRatio {
                definition: def.label(),
                failures,
                frames,
                ratio: if frames == 0 {
                    0.0
                } else {
                    failures as f64 / frames as f64
                },
                wilson: wilson_interval(failures, frames, Z95),
                bootstrap: bootstrap_interval(&per_seed, &mut boot_rng),
                per_seed,
            }
        })
        .collect();
    EnvReport {
        environment: label.to_string(),
        seeds: episodes.iter().map(|e| e.header.seed).collect(),
        duration,
        frames,
        definitions,
    }
}

/// Runs one episode per seed in `env` and pools the failure frames.
pub fn failure_ratio(
    exp: &Experiment,
    env: &EnvironmentSpec,
    duration: f64,
    seeds: &[u64],
    defs: &[FailureDefinition],
) -> Result<EnvReport> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let episodes = exp.run_environment(env, duration, seeds)?;
    Ok(summarize(env.label(), &episodes, duration, defs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub probability: f64,
    pub std_error: f64,
    pub episodes: usize,
}

/// Fraction of episodes with at least one failure frame.
pub fn estimate_event_probability(
    episodes: &[Episode],
    def: &FailureDefinition,
) -> Result<Estimate> {
    if episodes.is_empty() {
        return Err(Error::InsufficientData(
            "no episodes to estimate from".into(),
        ));
    }
    let hits = episodes
        .iter()
        .filter(|e| e.frames.iter().any(|f| is_failure(&f.metrics, def)))
        .count();
    let n = episodes.len() as f64;
    let p = hits as f64 / n;
    Ok(Estimate {
        probability: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        episodes: episodes.len(),
    })
}

/// Result of enumerating every maneuver sequence from a fixed start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exhaustive {
    pub probability: f64,
    /// Sum of sequence probabilities; 1 up to rounding.
    pub total_mass: f64,
    pub sequences: u64,
    /// Largest relative gap between the product likelihood and
    /// `exp(-loss)` over the enumerated sequences.
    pub loss_identity_error: f64,
}

struct Enumerator<'a> {
    net: &'a GarageNetwork,
    cfg: &'a SimConfig,
    model: &'a PolicyModel,
    detector: &'a SurrogateDetector,
    def: &'a FailureDefinition,
    cap: u64,
    out: Exhaustive,
}

impl Enumerator<'_> {
    fn fails(&self, scene: &SceneState) -> bool {
        // The detector is deterministic here, so any stream gives the same answer.
        let mut rng = stream_rng(0, Stream::Perception);
        let (_, m) = self.detector.observe(self.net, scene, &mut rng);
        is_failure(&m, self.def)
    }

    fn visit(
        &mut self,
        scene: &SceneState,
        traffic: &ChaCha8Rng,
        k: u64,
        prob: f64,
        failed: bool,
        samples: &mut Vec<TrainingSample>,
    ) -> Result<()> {
        let failed = failed || self.fails(scene);
        if k == self.cfg.horizon {
            self.out.sequences += 1;
            if self.out.sequences > self.cap {
                return Err(Error::EnumerationCap { cap: self.cap });
            }
            self.out.total_mass += prob;
            if failed {
                self.out.probability += prob;
            }
            let set = TrainingSet {
                samples: samples.clone(),
                scenarios: vec![0],
            };
            let direct = product_likelihood(self.model, &set)?;
            let via_log = (-loss(self.model, &set)?).exp();
            let err = (direct - via_log).abs() / direct.abs().max(f64::MIN_POSITIVE);
            self.out.loss_identity_error = self.out.loss_identity_error.max(err);
            return Ok(());
        }
        let provider = ModelProvider {
            model: self.model,
            v_max: self.cfg.v_max,
        };
        // Distributions do not depend on the sampling stream; only the option
        // draws do, and those are replaced by enumeration.
        let mut dummy = stream_rng(0, Stream::Maneuver);
        let records = choose_maneuvers(self.net, scene, &provider, &mut dummy)?;
        let features: Vec<FeatureVector> = records
            .iter()
            .map(|r| featurize(self.net, scene, r.vehicle, r.decision_point, self.cfg.v_max))
            .collect::<Result<_>>()?;
        let sizes: Vec<usize> = records.iter().map(|r| r.probs.len()).collect();
        let mut choice = vec![0usize; records.len()];
        loop {
            let mut recs = records.clone();
            let mut p = prob;
            let before = samples.len();
            for (i, r) in recs.iter_mut().enumerate() {
                r.option = choice[i];
                p *= r.probs[choice[i]];
                samples.push(TrainingSample {
                    scenario: 0,
                    episode: 0,
                    frame: k as usize,
                    vehicle: r.vehicle,
                    decision_point: r.decision_point,
                    option: choice[i],
                    features: features[i],
                    critical: true,
                    failure: failed,
                });
            }
            let mut rng = traffic.clone();
            let next = step(self.net, self.cfg, scene, &to_maneuvers(&recs), &mut rng)?;
            self.visit(&next, &rng, k + 1, p, failed, samples)?;
            samples.truncate(before);

            // Odometer increment over the joint option space.
            let mut i = 0;
            loop {
                if i == choice.len() {
                    return Ok(());
                }
                choice[i] += 1;
                if choice[i] < sizes[i] {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}

/// Exact event probability by enumerating every maneuver sequence.
///
/// Requires a tiny instance: horizon at most 4, at most 2 BVs, no spawning,
/// and a detector without noise whose miss rates are 0 or 1. Traffic
/// randomness follows the `seed` streams exactly as [`run_episode`] would.
pub fn exhaustive_event_probability(
    net: &GarageNetwork,
    cfg: &SimConfig,
    scene0: &SceneState,
    seed: u64,
    model: &PolicyModel,
    detector: &SurrogateDetector,
    def: &FailureDefinition,
) -> Result<Exhaustive> {
    if cfg.horizon > 4 {
        return Err(Error::Config(
            "enumeration needs a horizon of at most 4".into(),
        ));
    }
    if scene0.bvs().count() > 2 {
        return Err(Error::Config("enumeration supports at most 2 BVs".into()));
    }
    let spawning = net
        .spawn_points
        .iter()
        .any(|s| cfg.spawn_rate.unwrap_or(s.rate) > 0.0);
    if spawning {
        return Err(Error::Config("enumeration needs spawning disabled".into()));
    }
    let p = &detector.params;
    if p.sigma.iter().any(|&s| s > 0.0) || p.miss.iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(Error::Config(
            "enumeration needs a noiseless detector with miss rates in {0, 1}".into(),
        ));
    }
    let mut e = Enumerator {
        net,
        cfg,
        model,
        detector,
        def,
        cap: ENUMERATION_CAP,
        out: Exhaustive {
            probability: 0.0,
            total_mass: 0.0,
            sequences: 0,
            loss_identity_error: 0.0,
        },
    };
    let traffic = stream_rng(seed, Stream::Traffic);
    e.visit(scene0, &traffic, 0, 1.0, false, &mut Vec::new())?;
    Ok(e.out)
}

/// Validation curves of the two dataset modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub critical_only: Vec<f64>,
    pub all_states: Vec<f64>,
    pub critical_only_train: Vec<f64>,
    pub all_states_train: Vec<f64>,
    /// First epoch (1-based) within 5% of the curve's own minimum.
    pub critical_only_epoch: usize,
    pub all_states_epoch: usize,
    pub validation_samples: usize,
    #[serde(skip)]
    pub critical_only_model: Option<PolicyModel>,
    #[serde(skip)]
    pub all_states_model: Option<PolicyModel>,
}

impl CurveReport {
    pub fn write_long_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mode,epoch,train_loss,val_loss")?;
        for (mode, train, val) in [
            (
                "critical_only",
                &self.critical_only_train,
                &self.critical_only,
            ),
            ("all_states", &self.all_states_train, &self.all_states),
        ] {
            for (i, (t, v)) in train.iter().zip(val).enumerate() {
                writeln!(w, "{mode},{},{t},{v}", i + 1)?;
            }
        }
        Ok(())
    }
}

fn settle_epoch(curve: &[f64]) -> usize {
    let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    curve
        .iter()
        .position(|&l| l <= min + 0.05 * min.abs())
        .map_or(0, |i| i + 1)
}

pub const MIN_SCENARIOS: usize = 50;

/// Trains both dataset modes on one scenario split and scores both on the
/// critical samples of the held-out scenarios.
///
/// `set` must be an all-states dataset; its critical flags define the
/// critical-only subset.
pub fn compare_training_modes(
    net: &GarageNetwork,
    set: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<CurveReport> {
    cfg.validate()?;
    if set.scenarios.len() < MIN_SCENARIOS {
        return Err(Error::InsufficientData(format!(
            "{} failure scenarios, need at least {MIN_SCENARIOS}",
            set.scenarios.len()
        )));
    }
    let (train_ids, val_ids) =
        split_scenarios(&set.scenarios, cfg.validation_fraction, cfg.split_seed);
    let all_train = set.restrict(&train_ids);
    let crit_train = all_train.critical_only();
    let val = set.restrict(&val_ids).critical_only();
    if crit_train.is_empty() {
        return Err(Error::InsufficientData(
            "no critical samples in the training split".into(),
        ));
    }
    let model0 = PolicyModel::zeros(net);
    let crit = train_with_validation(&model0, &crit_train, &val, cfg)?;
    let all = train_with_validation(&model0, &all_train, &val, cfg)?;
    Ok(CurveReport {
        critical_only_epoch: settle_epoch(&crit.val_loss),
        all_states_epoch: settle_epoch(&all.val_loss),
        validation_samples: val.len(),
        critical_only: crit.val_loss,
        all_states: all.val_loss,
        critical_only_train: crit.train_loss,
        all_states_train: all.train_loss,
        critical_only_model: Some(crit.model),
        all_states_model: Some(all.model),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub original_frames: u64,
    pub intelligent_frames: u64,
    pub original_trained: EnvReport,
    pub intelligent_trained: EnvReport,
    /// `(definition, 1 - intel / orig)`; 0 when the original ratio is 0.
    pub reduction: Vec<(String, f64)>,
    #[serde(skip)]
    pub original_surrogate: Option<SurrogateParams>,
    #[serde(skip)]
    pub intelligent_surrogate: Option<SurrogateParams>,
}

/// Refits the surrogate on each dataset and evaluates both in the original
/// environment.
pub fn retraining_comparison(
    exp: &Experiment,
    orig_dataset: &[Episode],
    intel_dataset: &[Episode],
    base: &SurrogateParams,
    duration: f64,
    seeds: &[u64],
    defs: &[FailureDefinition],
) -> Result<RetrainReport> {
    let frames = |d: &[Episode]| d.iter().map(|e| e.frames.len() as u64).sum::<u64>();
    if frames(orig_dataset) == 0 || frames(intel_dataset) == 0 {
        return Err(Error::InsufficientData(
            "retraining datasets must be nonempty".into(),
        ));
    }
    let orig_params = fit_surrogate(orig_dataset, base);
    let intel_params = fit_surrogate(intel_dataset, base);
    let env = EnvironmentSpec::original();
    let mut a = failure_ratio(
        &exp.with_surrogate(orig_params.clone()),
        &env,
        duration,
        seeds,
        defs,
    )?;
    let mut b = failure_ratio(
        &exp.with_surrogate(intel_params.clone()),
        &env,
        duration,
        seeds,
        defs,
    )?;
    a.environment = "original_trained".into();
    b.environment = "intelligent_trained".into();
    let reduction = a
        .definitions
        .iter()
        .zip(&b.definitions)
        .map(|(x, y)| {
            let r = if x.ratio > 0.0 {
                1.0 - y.ratio / x.ratio
            } else {
                0.0
            };
            (x.definition.clone(), r)
        })
        .collect();
    Ok(RetrainReport {
        original_frames: frames(orig_dataset),
        intelligent_frames: frames(intel_dataset),
        original_trained: a,
        intelligent_trained: b,
        reduction,
        original_surrogate: Some(orig_params),
        intelligent_surrogate: Some(intel_params),
    })
}

/// Keeps whole frames from the front of `episodes` until `frames` are taken.
pub fn truncate_frames(episodes: &[Episode], frames: usize) -> Vec<Episode> {
    let mut left = frames;
    let mut out = Vec::new();
    for e in episodes {
        if left == 0 {
            break;
        }
        let take = left.min(e.frames.len());
        out.push(Episode {
            header: e.header.clone(),
            frames: e.frames[..take].to_vec(),
        });
        left -= take;
    }
    out
}
