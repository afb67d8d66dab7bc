use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::{json, Value};

use seedbank::analysis::variability;
use seedbank::dual::{Block, CoalescenceRecord, DualSimulator, DualState};
use seedbank::forward::ForwardSimulator;
use seedbank::model::config::{apply_override, ExperimentConfig};
use seedbank::model::{Configuration, Model};
use seedbank::replicate::run_replicates;
use seedbank::rng::experiment_id;
use seedbank::stats::{wilson_interval, MeanVar};

use crate::output::Inventory;
use crate::{ExperimentArgs, Failure, Outcome};

pub struct Loaded {
    pub config: ExperimentConfig,
    pub model: Model,
    pub out_dir: PathBuf,
}

/// Reads the config, applies overrides and builds the model. Every failure
/// here is a configuration error.
pub fn load(args: &ExperimentArgs) -> Outcome<Loaded> {
    let cfg_err = |e: anyhow::Error| Failure::Config(e);
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))
        .map_err(cfg_err)?;
    let mut doc: Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", args.config.display()))
        .map_err(cfg_err)?;
    // A run manifest carries its resolved config and can be replayed directly.
    if doc.get("tool").and_then(Value::as_str) == Some("seedbank") {
        doc = doc
            .get_mut("config")
            .map(Value::take)
            .ok_or_else(|| cfg_err(anyhow!("manifest has no config section")))?;
    }
    for assignment in &args.overrides {
        apply_override(&mut doc, assignment).map_err(|e| cfg_err(e.into()))?;
    }
    if let Some(seed) = args.seed {
        apply_override(&mut doc, &format!("seed={seed}")).map_err(|e| cfg_err(e.into()))?;
    }
    let config = ExperimentConfig::from_value(doc).map_err(|e| cfg_err(e.into()))?;
    let model = config.build_model().map_err(|e| cfg_err(e.into()))?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("seedbank-out"));
    Ok(Loaded {
        config,
        model,
        out_dir,
    })
}

#[derive(Serialize)]
struct SiteSummary {
    site: usize,
    active_fraction: f64,
    active_fraction_se: f64,
    dormant_fraction: f64,
    dormant_fraction_se: f64,
}

#[derive(Serialize)]
struct TimeSummary {
    t: f64,
    sites: Vec<SiteSummary>,
    /// Fraction of replicates in one of the two monomorphic states.
    monomorphic: f64,
    /// Mean over colonies of the within-colony variability.
    mean_variability: f64,
}

fn summarize_forward(
    model: &Model,
    schedule: &[f64],
    runs: &[Vec<Configuration>],
) -> Vec<TimeSummary> {
    let p = &model.profile;
    let top = Configuration::top(p);
    let n = runs.len() as f64;
    schedule
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let sites = (0..model.sites())
                .map(|i| {
                    let (mut x, mut y) = (MeanVar::default(), MeanVar::default());
                    for r in runs {
                        x.push(r[k].active[i] as f64 / p.active(i) as f64);
                        y.push(r[k].dormant[i] as f64 / p.dormant(i) as f64);
                    }
                    SiteSummary {
                        site: i,
                        active_fraction: x.mean,
                        active_fraction_se: x.std_error(),
                        dormant_fraction: y.mean,
                        dormant_fraction_se: y.std_error(),
                    }
                })
                .collect();
            let monomorphic = runs
                .iter()
                .filter(|r| r[k].is_zero() || r[k] == top)
                .count() as f64
                / n;
            let mean_variability = runs
                .iter()
                .map(|r| {
                    (0..model.sites())
                        .map(|i| variability(p, &r[k], i, i))
                        .sum::<f64>()
                        / model.sites() as f64
                })
                .sum::<f64>()
                / n;
            TimeSummary {
                t,
                sites,
                monomorphic,
                mean_variability,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct DualRecord {
    replicate: u64,
    partition: Vec<Block>,
    coalescences: Vec<CoalescenceRecord>,
}

fn run_dual(
    loaded: &Loaded,
    schedule: &[f64],
    inventory: &mut Inventory,
) -> anyhow::Result<Option<Value>> {
    let Some(section) = &loaded.config.dual else {
        return Ok(None);
    };
    let model = &loaded.model;
    let particles: Vec<_> = section
        .particles
        .iter()
        .map(|p| (p.site, p.state))
        .collect();
    let start = DualState::new(model, &particles)?;
    let initial = start.live();
    let dual = DualSimulator::new(model);
    let runs = run_replicates(
        loaded.config.seed,
        experiment_id("run-dual"),
        loaded.config.replicates,
        |r, rng| {
            let (traj, _) = dual.simulate(start.clone(), schedule, rng);
            let live: Vec<usize> = traj.snapshots.iter().map(|s| s.live).collect();
            (
                live,
                DualRecord {
                    replicate: r,
                    partition: traj.partition,
                    coalescences: traj.coalescences,
                },
            )
        },
    );
    let reps = runs.len() as u64;
    let monotone = runs
        .iter()
        .all(|r| r.0.windows(2).all(|w| w[1] <= w[0]) && r.0.first().is_none_or(|&n| n <= initial));
    let mut csv = String::from("t,replicates,uncoalesced,estimate,ci_lo,ci_hi,mean_live\n");
    for (k, &t) in schedule.iter().enumerate() {
        let survivors = runs.iter().filter(|r| r.0[k] == initial).count() as u64;
        let mean_live = runs.iter().map(|r| r.0[k] as f64).sum::<f64>() / reps as f64;
        let (lo, hi) = wilson_interval(survivors, reps, 1.96);
        writeln!(
            csv,
            "{t},{reps},{survivors},{},{lo},{hi},{mean_live}",
            survivors as f64 / reps as f64
        )?;
    }
    inventory.emit(&loaded.out_dir, "survival.csv", csv.as_bytes(), false)?;
    let records: Vec<&DualRecord> = runs.iter().map(|r| &r.1).collect();
    inventory.emit_json(&loaded.out_dir, "partitions.json", &records)?;
    Ok(Some(
        json!({ "initial_particles": initial, "replicates": reps, "monotone": monotone }),
    ))
}

pub fn run(args: &ExperimentArgs) -> Outcome<()> {
    let started = Instant::now();
    let loaded = load(args)?;
    let runtime = |e: anyhow::Error| Failure::Runtime(e);
    let config = &loaded.config;
    let model = &loaded.model;
    let schedule = config.schedule();
    let fwd = ForwardSimulator::new(model);
    let runs: Vec<Vec<Configuration>> = run_replicates(
        config.seed,
        experiment_id("run-forward"),
        config.replicates,
        |_, rng| {
            let initial = config
                .initial
                .sample(&model.profile, rng)
                .expect("initial law validated against the profile");
            fwd.simulate(initial, &schedule, rng)
        },
    );
    let simulated = started.elapsed().as_secs_f64();
    let in_bounds = runs
        .iter()
        .flatten()
        .all(|z| z.validate(&model.profile).is_ok());
    let mut checks = vec![json!({ "name": "snapshots-in-bounds", "pass": in_bounds })];

    let mut inventory = Inventory::default();
    let mut csv = String::from("replicate,t,site,X,Y\n");
    for (r, snaps) in runs.iter().enumerate() {
        for (&t, z) in schedule.iter().zip(snaps) {
            for i in 0..model.sites() {
                let _ = writeln!(csv, "{r},{t},{i},{},{}", z.active[i], z.dormant[i]);
            }
        }
    }
    inventory
        .emit(&loaded.out_dir, "snapshots.csv", csv.as_bytes(), args.gzip)
        .map_err(runtime)?;
    let summary = json!({
        "seed": config.seed,
        "replicates": config.replicates,
        "schedule": schedule,
        "times": summarize_forward(model, &schedule, &runs),
    });
    inventory
        .emit_json(&loaded.out_dir, "summary.json", &summary)
        .map_err(runtime)?;
    let dual = run_dual(&loaded, &schedule, &mut inventory).map_err(runtime)?;
    if let Some(d) = &dual {
        checks.push(json!({ "name": "dual-live-nonincreasing", "pass": d["monotone"] }));
    }

    let manifest = json!({
        "tool": "seedbank",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "run",
        "seed": config.seed,
        "threads": rayon::current_num_threads(),
        "config": config,
        "dual": dual,
        "checks": checks,
        "outputs": inventory.files,
        "timings": { "simulate_secs": simulated, "total_secs": started.elapsed().as_secs_f64() },
    });
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| runtime(anyhow!(e)))?;
    text.push('\n');
    crate::output::write_bytes(&loaded.out_dir.join("manifest.json"), text.as_bytes())
        .map_err(runtime)?;
    if checks.iter().any(|c| c["pass"] != true) {
        return Err(runtime(anyhow!("run checks failed; see manifest.json")));
    }
    println!(
        "run: {} replicates, {} snapshot times, outputs in {}",
        config.replicates,
        schedule.len(),
        loaded.out_dir.display()
    );
    Ok(())
}
