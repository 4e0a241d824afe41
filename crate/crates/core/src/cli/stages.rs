//! Pipeline stages. Each reads and writes only under the output root.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Resolved;
use crate::envgen::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::eval::{failure_ratio, EvalReport, Experiment};
use crate::perception::FailureDefinition;
use crate::policy::{train, PolicyModel};
use crate::recorder::{
    build_dataset, marked_scenarios, state_counts, write_scenarios, DatasetMode, Episode,
    TrainingSet,
};
use crate::sim::{run_episode, SimConfig, StandardProvider};

pub const ENVIRONMENTS: [&str; 3] = ["original", "intelligent_a", "intelligent_b"];

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("serializes") + "\n"),
    )
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn episode_path(out: &Path, seed: u64) -> PathBuf {
    out.join("episodes").join(format!("baseline_{seed}.jsonl"))
}

fn dataset_path(out: &Path, mode: DatasetMode) -> PathBuf {
    out.join("datasets").join(match mode {
        DatasetMode::AllStates => "all_states.jsonl",
        DatasetMode::CriticalOnly => "critical_only.jsonl",
    })
}

fn model_path(out: &Path, env: &str) -> PathBuf {
    out.join("models").join(format!("{env}.json"))
}

fn env_path(out: &Path, env: &str) -> PathBuf {
    out.join("environments").join(format!("{env}.json"))
}

fn experiment(r: &Resolved) -> Experiment {
    Experiment {
        net: r.net.clone(),
        sim: r.config.sim.clone(),
        sensor: r.config.sensor,
        surrogate: r.surrogate.clone(),
    }
}

/// Baseline episodes in the original environment, one log per seed.
pub fn simulate(r: &Resolved) -> Result<()> {
    let runs = &r.config.baseline;
    let cfg = SimConfig {
        horizon: r.config.sim.steps_for(runs.duration),
        ..r.config.sim.clone()
    };
    let exp = experiment(r);
    let detector = exp.detector();
    for &seed in &runs.seeds {
        let mut ep = run_episode(&r.net, &cfg, seed, &StandardProvider, &detector)?;
        ep.header.config_hash = r.hash.clone();
        ep.header.environment = "original".into();
        let path = episode_path(&r.output, seed);
        ensure_dir(path.parent().expect("has parent"))?;
        ep.save(&path)?;
    }
    log::info!("simulated {} baseline episodes", runs.seeds.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct StateCounts {
    config_hash: String,
    definition: String,
    scenarios: usize,
    total_states: usize,
    critical_states: usize,
    all_states_samples: usize,
    critical_only_samples: usize,
}

/// Failure windows, critical marks and both training datasets.
pub fn extract(r: &Resolved) -> Result<()> {
    let episodes = r
        .config
        .baseline
        .seeds
        .iter()
        .map(|&s| Episode::load(&episode_path(&r.output, s)))
        .collect::<Result<Vec<_>>>()?;
    let scenarios: Vec<_> = episodes
        .iter()
        .flat_map(|ep| marked_scenarios(ep, &r.definition, &r.config.critical, &r.net))
        .collect();
    let v_max = r.config.sim.v_max;
    let all = build_dataset(&r.net, &scenarios, DatasetMode::AllStates, v_max)?;
    let crit = build_dataset(&r.net, &scenarios, DatasetMode::CriticalOnly, v_max)?;
    let out = &r.output;
    write_with(&out.join("scenarios").join("scenarios.jsonl"), |w| {
        write_scenarios(&scenarios, w)
    })?;
    for (mode, set) in [
        (DatasetMode::AllStates, &all),
        (DatasetMode::CriticalOnly, &crit),
    ] {
        write_with(&dataset_path(out, mode), |w| set.write_jsonl(Some(mode), w))?;
    }
    let (total, critical) = state_counts(&scenarios);
    write_json(
        &out.join("scenarios").join("state_counts.json"),
        &StateCounts {
            config_hash: r.hash.clone(),
            definition: r.definition.label(),
            scenarios: scenarios.len(),
            total_states: total,
            critical_states: critical,
            all_states_samples: all.len(),
            critical_only_samples: crit.len(),
        },
    )?;
    log::info!("extracted {} failure scenarios", scenarios.len());
    Ok(())
}

/// Model A from all states, model B from critical states only.
pub fn train_models(r: &Resolved) -> Result<()> {
    let out = &r.output;
    for (env, mode) in [
        ("intelligent_a", DatasetMode::AllStates),
        ("intelligent_b", DatasetMode::CriticalOnly),
    ] {
        let path = dataset_path(out, mode);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let set = TrainingSet::read_jsonl(BufReader::new(file))?;
        let outcome = train(&PolicyModel::zeros(&r.net), &set, &r.config.train)?;
        write_text(&model_path(out, env), &(outcome.model.to_json() + "\n"))?;
        write_with(&out.join("models").join(format!("{env}_loss.csv")), |w| {
            outcome.write_csv(w)
        })?;
    }
    Ok(())
}

/// Environment specs for the three compared environments.
pub fn gen_env(r: &Resolved) -> Result<()> {
    let out = &r.output;
    for env in ENVIRONMENTS {
        let mut spec = match env {
            "original" => EnvironmentSpec::original(),
            _ => {
                let path = model_path(out, env);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let model = PolicyModel::from_json(&text)?;
                if env == "intelligent_a" {
                    EnvironmentSpec::intelligent_a(model)
                } else {
                    EnvironmentSpec::intelligent_b(model)
                }
            }
        };
        spec.rule = r.config.runtime;
        spec.validate(&r.net)?;
        write_json(&env_path(out, env), &spec)?;
    }
    Ok(())
}

/// Failure-frame ratios of every environment under all four definitions.
pub fn evaluate(r: &Resolved) -> Result<()> {
    let out = &r.output;
    let exp = experiment(r);
    let defs = FailureDefinition::standard();
    let runs = &r.config.evaluation;
    let mut report = EvalReport {
        config_hash: r.hash.clone(),
        environments: Vec::new(),
    };
    for env in ENVIRONMENTS {
        let spec: EnvironmentSpec = read_json(&env_path(out, env))?;
        let rep = failure_ratio(&exp, &spec, runs.duration, &runs.seeds, &defs)?;
        log::info!(
            "{env}: {} frames, ratio(a) = {:.4}",
            rep.frames,
            rep.definitions[0].ratio
        );
        report.environments.push(rep);
    }
    let dir = out.join("reports");
    write_json(&dir.join("eval.json"), &report)?;
    write_with(&dir.join("eval.csv"), |w| report.write_csv(w))?;
    write_with(&dir.join("ratios_long.csv"), |w| report.write_long_csv(w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub definition: String,
    pub original: f64,
    pub intelligent_a: f64,
    pub intelligent_b: f64,
    pub amplification_a: f64,
    pub amplification_b: f64,
}

pub fn comparison(report: &EvalReport) -> Result<Vec<ComparisonRow>> {
    let get = |env: &str| {
        report
            .environment(env)
            .ok_or_else(|| Error::InsufficientData(format!("report lacks environment {env}")))
    };
    let (o, a, b) = (
        get("original")?,
        get("intelligent_a")?,
        get("intelligent_b")?,
    );
    let amp = |x: f64, base: f64| if base > 0.0 { x / base } else { f64::NAN };
    Ok(o.definitions
        .iter()
        .map(|d| {
            let ra = a.definition(&d.definition).map_or(f64::NAN, |x| x.ratio);
            let rb = b.definition(&d.definition).map_or(f64::NAN, |x| x.ratio);
            ComparisonRow {
                definition: d.definition.clone(),
                original: d.ratio,
                intelligent_a: ra,
                intelligent_b: rb,
                amplification_a: amp(ra, d.ratio),
                amplification_b: amp(rb, d.ratio),
            }
        })
        .collect())
}

/// Environment comparison table from the evaluation report.
pub fn report(r: &Resolved) -> Result<()> {
    let out = &r.output;
    let eval: EvalReport = read_json(&out.join("reports").join("eval.json"))?;
    let rows = comparison(&eval)?;
    write_with(&out.join("report").join("comparison.csv"), |w| {
        writeln!(
            w,
            "definition,original,intelligent_a,intelligent_b,amplification_a,amplification_b"
        )?;
        for c in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.definition,
                c.original,
                c.intelligent_a,
                c.intelligent_b,
                c.amplification_a,
                c.amplification_b
            )?;
        }
        Ok(())
    })?;
    let mut md = format!(
        "# Failure-frame ratios\n\nconfig `{}`\n\n| definition | original | intelligent a | intelligent b |\n|---|---|---|---|\n",
        eval.config_hash
    );
    for c in &rows {
        md.push_str(&format!(
            "| {} | {:.2}% | {:.2}% | {:.2}% |\n",
            c.definition,
            100.0 * c.original,
            100.0 * c.intelligent_a,
            100.0 * c.intelligent_b
        ));
    }
    write_text(&out.join("report").join("comparison.md"), &md)
}
