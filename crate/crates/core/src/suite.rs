//! Verification suite over fixed reference systems.
//!
//! The quick level runs the deterministic oracle checks; the full level adds
//! the Monte Carlo comparisons and property suites. Reports carry no timings,
//! so two runs with the same options serialize to identical bytes.

use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    clustering_identity_check, correlation_inequality_check, correlation_inequality_exact,
    density_conservation_check, dual_form, first_moment_identity_check, heterozygosity_exact,
    moment_form, random_configuration, second_moment_identity_check, PairKind,
};
use crate::dual::pair::Lineage;
use crate::dual::{DualSimulator, DualState};
use crate::duality::{
    mc_duality_check, raw_moments_from_dual, StirlingTable, DEFAULT_STIRLING_CAP,
};
use crate::error::{Error, Result};
use crate::forward::ForwardSimulator;
use crate::model::configuration::sample_binomial;
use crate::model::{Activity, Configuration, Model};
use crate::oracle::{
    build_dual_generator, build_forward_generator, duality_matrix, exact_duality_check,
    generator_criterion_residual, DualFault, ExplicitChain, FORWARD_STATE_CAP,
};
use crate::replicate::run_replicates;
use crate::rng::experiment_id;
use crate::stats::{proportion_se, z_score, Z_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteLevel {
    Quick,
    Full,
}

impl FromStr for SuiteLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(SuiteLevel::Quick),
            "full" => Ok(SuiteLevel::Full),
            other => Err(Error::Parse(format!("unknown suite '{other}'"))),
        }
    }
}

/// Rate perturbation used as the sensitivity control.
pub const FAULT: DualFault = DualFault {
    site: 0,
    delta: 1e-3,
};

pub const GENERATOR_TOL: f64 = 1e-12;
pub const EXACT_DUALITY_TOL: f64 = 1e-8;
pub const UNIFORMIZATION_TOL: f64 = 1e-10;
pub const ABSORPTION_TOL: f64 = 1e-10;
pub const MOMENT_TOL: f64 = 1e-8;
pub const FAULT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub level: SuiteLevel,
    pub seed: u64,
    /// Replicates per Monte Carlo check.
    pub replicates: u64,
    /// Trajectories (or random states) per property suite.
    pub property_runs: u64,
    /// Perturb the dual generator used by the exact duality checks.
    pub inject_fault: bool,
}

impl SuiteOptions {
    pub fn new(level: SuiteLevel, seed: u64) -> Self {
        Self {
            level,
            seed,
            replicates: 100_000,
            property_runs: 10_000,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Exact,
    Statistical,
    Property,
    Control,
}

/// One verdict: `metric` is compared against `threshold` in the direction
/// stated by `kind` (upper bound except for controls, which need a floor).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Acceptance criterion this check belongs to, if any.
    pub criterion: Option<u8>,
    pub kind: CheckKind,
    pub metric: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: Value,
}

impl CheckResult {
    fn below(name: &str, criterion: u8, kind: CheckKind, metric: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            criterion: Some(criterion),
            kind,
            metric,
            threshold,
            pass: metric < threshold,
            detail: Value::Null,
        }
    }

    fn within_z(name: &str, criterion: Option<u8>, max_abs_z: f64, detail: Value) -> Self {
        Self {
            name: name.to_string(),
            criterion,
            kind: CheckKind::Statistical,
            metric: max_abs_z,
            threshold: Z_THRESHOLD,
            pass: max_abs_z <= Z_THRESHOLD,
            detail,
        }
    }

    fn violations(name: &str, count: u64, runs: u64) -> Self {
        Self {
            name: name.to_string(),
            criterion: Some(8),
            kind: CheckKind::Property,
            metric: count as f64,
            threshold: 0.0,
            pass: count == 0,
            detail: json!({ "runs": runs }),
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub options: SuiteOptions,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Verdict of all checks tagged with `criterion`, or `None` if none ran.
    pub fn criterion_pass(&self, criterion: u8) -> Option<bool> {
        let mut it = self
            .checks
            .iter()
            .filter(|c| c.criterion == Some(criterion))
            .peekable();
        it.peek()?;
        Some(it.all(|c| c.pass))
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// One colony with three active and two dormant slots, exchange rate 1.
pub fn reference_single_colony() -> Model {
    Model::single_colony(3, 2, 1.0).expect("valid reference")
}

/// Two-site nearest-neighbor torus, `N = 2`, `M = 1` everywhere.
pub fn reference_two_site() -> Model {
    Model::nearest_neighbor_torus(1, 2, vec![2, 2], vec![1, 1], 1.0).expect("valid reference")
}

/// Four-site ring with unequal colony sizes.
pub fn reference_heterogeneous() -> Model {
    Model::nearest_neighbor_torus(1, 4, vec![2, 3, 2, 1], vec![1, 2, 2, 1], 1.0)
        .expect("valid reference")
}

/// Five-site ring, `N = M = 2`.
pub fn reference_ring_five() -> Model {
    Model::nearest_neighbor_torus(1, 5, vec![2; 5], vec![2; 5], 1.0).expect("valid reference")
}

/// Three-site ring, `N = 2`, `M = 1`.
pub fn reference_ring_three() -> Model {
    Model::nearest_neighbor_torus(1, 3, vec![2; 3], vec![1; 3], 1.0).expect("valid reference")
}

/// One colony with two active slots and one dormant slot.
pub fn reference_small_colony() -> Model {
    Model::single_colony(2, 1, 1.0).expect("valid reference")
}

struct ExactSystem {
    name: &'static str,
    forward: ExplicitChain<Configuration>,
    dual: ExplicitChain<Configuration>,
    d: Vec<f64>,
}

fn exact_system(
    name: &'static str,
    model: &Model,
    particles: u32,
    fault: Option<DualFault>,
) -> Result<ExactSystem> {
    let forward = build_forward_generator(model, FORWARD_STATE_CAP)?;
    let dual = build_dual_generator(model, particles, fault)?;
    let d = duality_matrix(&model.profile, forward.states(), dual.states())?;
    Ok(ExactSystem {
        name,
        forward,
        dual,
        d,
    })
}

fn reference_systems(fault: Option<DualFault>) -> Result<Vec<ExactSystem>> {
    let single = reference_single_colony();
    let full = single.profile.active(0) + single.profile.dormant(0);
    Ok(vec![
        exact_system("single-colony", &single, full, fault)?,
        exact_system("two-site", &reference_two_site(), 2, fault)?,
    ])
}

const EXACT_TIMES: [f64; 3] = [0.25, 1.0, 4.0];

fn duality_checks(opts: &SuiteOptions, out: &mut Vec<CheckResult>) -> Result<()> {
    let fault = opts.inject_fault.then_some(FAULT);
    for sys in reference_systems(fault)? {
        let residual = generator_criterion_residual(&sys.forward, &sys.dual, &sys.d)?;
        out.push(
            CheckResult::below(
                &format!("generator-criterion/{}", sys.name),
                1,
                CheckKind::Exact,
                residual,
                GENERATOR_TOL,
            )
            .with_detail(json!({
                "forward_states": sys.forward.len(),
                "dual_states": sys.dual.len(),
                "fault_injected": fault.is_some(),
            })),
        );
        let gaps = EXACT_TIMES
            .iter()
            .map(|&t| exact_duality_check(&sys.forward, &sys.dual, &sys.d, t, UNIFORMIZATION_TOL))
            .collect::<Result<Vec<f64>>>()?;
        let worst = gaps.iter().copied().fold(0.0, f64::max);
        out.push(
            CheckResult::below(
                &format!("exact-duality/{}", sys.name),
                2,
                CheckKind::Exact,
                worst,
                EXACT_DUALITY_TOL,
            )
            .with_detail(json!({ "times": EXACT_TIMES, "gaps": gaps })),
        );
    }
    Ok(())
}

/// The perturbed dual must be detected by both exact checks.
fn fault_control(out: &mut Vec<CheckResult>) -> Result<()> {
    let sys = reference_systems(Some(FAULT))?.swap_remove(0);
    let residual = generator_criterion_residual(&sys.forward, &sys.dual, &sys.d)?;
    let gap = exact_duality_check(&sys.forward, &sys.dual, &sys.d, 1.0, UNIFORMIZATION_TOL)?;
    out.push(CheckResult {
        name: "fault-control/single-colony".into(),
        criterion: None,
        kind: CheckKind::Control,
        metric: residual.min(gap),
        threshold: FAULT_FLOOR,
        pass: residual >= FAULT_FLOOR && gap >= FAULT_FLOOR,
        detail: json!({ "delta": FAULT.delta, "residual": residual, "gap_t1": gap }),
    });
    Ok(())
}

/// Limit law from state `s`: absorption weights times class stationary laws.
fn limit_law(
    chain: &ExplicitChain<Configuration>,
    classes: &[crate::oracle::ClosedClass],
    absorption: &[Vec<f64>],
    s: usize,
) -> Vec<f64> {
    let mut law = vec![0.0; chain.len()];
    for (c, class) in classes.iter().enumerate() {
        for (k, p) in class.stationary.iter().enumerate() {
            law[k] += absorption[s][c] * p;
        }
    }
    law
}

fn single_colony_equilibrium(out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_single_colony();
    let (n, m) = (model.profile.active(0), model.profile.dormant(0));
    let total = (n + m) as f64;
    let fwd = build_forward_generator(&model, FORWARD_STATE_CAP)?;
    let classes = fwd.stationary_distributions()?;
    let top = Configuration::top(&model.profile);
    let expected_classes = vec![
        vec![fwd.index_of(&Configuration::zeros(1)).expect("zero state")],
        vec![fwd.index_of(&top).expect("top state")],
    ];
    let found: Vec<Vec<usize>> = classes.iter().map(|c| c.members.clone()).collect();
    let absorption = fwd.absorption_probabilities(&classes)?;
    let top_class = classes
        .iter()
        .position(|c| c.members == [fwd.index_of(&top).expect("top state")])
        .ok_or_else(|| Error::Invariant("top state is not absorbing".into()))?;
    let mut worst_absorption: f64 = 0.0;
    let mut worst_moment: f64 = 0.0;
    let mut worst_stirling: f64 = 0.0;
    let dual = build_dual_generator(&model, 1, None)?;
    let dual_classes = dual.stationary_distributions()?;
    let one = dual_classes
        .iter()
        .find(|c| c.members.len() == 2)
        .ok_or_else(|| Error::Invariant("no one-particle class".into()))?;
    let a = dual
        .index_of(&Configuration::from_pairs(&[[1, 0]]))
        .expect("state");
    let b = dual
        .index_of(&Configuration::from_pairs(&[[0, 1]]))
        .expect("state");
    let split = (one.stationary[a], one.stationary[b]);
    let table = StirlingTable::new(DEFAULT_STIRLING_CAP);
    for (s, state) in fwd.states().iter().enumerate() {
        let (x, y) = (state.active[0], state.dormant[0]);
        let frac = (x + y) as f64 / total;
        worst_absorption = worst_absorption.max((absorption[s][top_class] - frac).abs());
        let law = limit_law(&fwd, &classes, &absorption, s);
        for e_n in 0..=3usize {
            for e_m in 0..=2usize {
                if e_n + e_m == 0 {
                    continue;
                }
                let expected = (n as f64).powi(e_n as i32) * (m as f64).powi(e_m as i32) * frac;
                let moment: f64 = fwd
                    .states()
                    .iter()
                    .zip(&law)
                    .map(|(z, p)| {
                        p * (z.active[0] as f64).powi(e_n as i32)
                            * (z.dormant[0] as f64).powi(e_m as i32)
                    })
                    .sum();
                worst_moment = worst_moment.max((moment - expected).abs());
                let stirling = raw_moments_from_dual(&table, (n, m), (x, y), (e_n, e_m), split)?;
                worst_stirling = worst_stirling.max((stirling - expected).abs());
            }
        }
    }
    out.push(
        CheckResult::below(
            "equilibrium/absorption-exact",
            3,
            CheckKind::Exact,
            worst_absorption,
            ABSORPTION_TOL,
        )
        .with_detail(json!({
            "absorbing_states_ok": found == expected_classes,
            "states": fwd.len(),
        })),
    );
    if found != expected_classes {
        out.last_mut().expect("just pushed").pass = false;
    }
    out.push(
        CheckResult::below(
            "moments/stationary-exact",
            4,
            CheckKind::Exact,
            worst_moment,
            MOMENT_TOL,
        )
        .with_detail(json!({ "max_exponents": [3, 2] })),
    );
    out.push(
        CheckResult::below(
            "moments/stirling-from-dual",
            4,
            CheckKind::Exact,
            worst_stirling,
            MOMENT_TOL,
        )
        .with_detail(json!({ "dual_split": [split.0, split.1] })),
    );
    Ok(())
}

fn dual_split_exact(out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_single_colony();
    let (n, m) = (model.profile.active(0), model.profile.dormant(0));
    let expected_active = n as f64 / (n + m) as f64;
    let dual = build_dual_generator(&model, 2, None)?;
    let classes = dual.stationary_distributions()?;
    let absorption = dual.absorption_probabilities(&classes)?;
    let a = dual
        .index_of(&Configuration::from_pairs(&[[1, 0]]))
        .expect("state");
    let b = dual
        .index_of(&Configuration::from_pairs(&[[0, 1]]))
        .expect("state");
    let mut worst: f64 = 0.0;
    let mut starts = Vec::new();
    for (s, state) in dual.states().iter().enumerate() {
        if state.mass() != 2 {
            continue;
        }
        let law = limit_law(&dual, &classes, &absorption, s);
        worst = worst
            .max((law[a] - expected_active).abs())
            .max((law[b] - (1.0 - expected_active)).abs());
        starts.push([state.active[0], state.dormant[0]]);
    }
    out.push(
        CheckResult::below(
            "dual-split/exact",
            5,
            CheckKind::Exact,
            worst,
            ABSORPTION_TOL,
        )
        .with_detail(json!({ "starts": starts, "expected_active": expected_active })),
    );
    Ok(())
}

fn correlation_exact(out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_small_colony();
    let mut min_margin = f64::INFINITY;
    let mut all = Vec::new();
    for (a, b) in small_colony_pairs() {
        for t in [0.5, 1.0] {
            let c = correlation_inequality_exact(&model, a, b, t, UNIFORMIZATION_TOL)?;
            min_margin = min_margin.min(c.min_margin);
            all.push(c);
        }
    }
    let pass = all.iter().all(|c| c.pass);
    out.push(CheckResult {
        name: "correlation-inequality/exact".into(),
        criterion: Some(10),
        kind: CheckKind::Exact,
        metric: min_margin,
        threshold: -UNIFORMIZATION_TOL,
        pass,
        detail: serde_json::to_value(&all).expect("serializable"),
    });
    Ok(())
}

fn small_colony_pairs() -> [(Lineage, Lineage); 3] {
    [
        (Lineage::active(0), Lineage::active(0)),
        (Lineage::active(0), Lineage::dormant(0)),
        (Lineage::dormant(0), Lineage::active(0)),
    ]
}

fn fixation_mc(opts: &SuiteOptions, out: &mut Vec<CheckResult>) {
    let model = reference_single_colony();
    let start = Configuration::from_pairs(&[[2, 1]]);
    let expected = 3.0 / 5.0;
    let fwd = ForwardSimulator::new(&model);
    let outcomes = run_replicates(
        opts.seed,
        experiment_id("suite-fixation"),
        opts.replicates,
        |_, rng| fwd.run_until_absorbed(start.clone(), rng, 10_000_000),
    );
    let fixed = outcomes.iter().filter(|o| **o == Some(true)).count() as u64;
    let censored = outcomes.iter().filter(|o| o.is_none()).count() as u64;
    let p = fixed as f64 / opts.replicates as f64;
    let se = proportion_se(expected, opts.replicates);
    let z = z_score(p, expected, se);
    let mut check = CheckResult::within_z(
        "equilibrium/fixation-mc",
        Some(3),
        z.abs(),
        json!({ "estimate": p, "expected": expected, "z": z, "censored": censored }),
    );
    check.pass &= censored == 0;
    out.push(check);
}

/// Runs each pair until one particle remains, then a further `MIX_TIME`
/// so the survivor's activity is drawn from its invariant law.
const MIX_TIME: f64 = 20.0;

fn dual_split_mc(opts: &SuiteOptions, out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_single_colony();
    let (n, m) = (model.profile.active(0), model.profile.dormant(0));
    let expected = n as f64 / (n + m) as f64;
    let dual = DualSimulator::new(&model);
    for pair in [[2u32, 0u32], [1, 1], [0, 2]] {
        let start = DualState::from_counts(&model, &Configuration::from_pairs(&[pair]))?;
        let ends = run_replicates(
            opts.seed,
            experiment_id(&format!("suite-dual-split-{}-{}", pair[0], pair[1])),
            opts.replicates,
            |_, rng| {
                let merged = dual.run_until_single(start.clone(), rng, 10_000_000)?;
                let time = merged.time + MIX_TIME;
                let end = dual.state_at(merged, time, rng);
                Some(end.counts().active[0] == 1)
            },
        );
        let unmerged = ends.iter().filter(|e| e.is_none()).count() as u64;
        let active = ends.iter().filter(|e| **e == Some(true)).count() as u64;
        let p = active as f64 / opts.replicates as f64;
        let z = z_score(p, expected, proportion_se(expected, opts.replicates));
        let mut check = CheckResult::within_z(
            &format!("dual-split/mc-from-{}-{}", pair[0], pair[1]),
            Some(5),
            z.abs(),
            json!({ "estimate": p, "expected": expected, "z": z, "unmerged": unmerged, "mix_time": MIX_TIME }),
        );
        check.pass &= unmerged == 0;
        out.push(check);
    }
    Ok(())
}

fn duality_mc(opts: &SuiteOptions, out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_heterogeneous();
    let eta = Configuration::from_pairs(&[[1, 0], [2, 1], [1, 2], [0, 1]]);
    let duals = [
        Configuration::from_pairs(&[[1, 0], [1, 0], [0, 0], [0, 0]]),
        Configuration::from_pairs(&[[0, 0], [1, 1], [0, 1], [0, 0]]),
        Configuration::from_pairs(&[[0, 0], [2, 0], [1, 0], [0, 1]]),
    ];
    for (k, xi) in duals.iter().enumerate() {
        for t in [0.5, 2.0] {
            let seed = opts.seed ^ crate::rng::splitmix64(k as u64);
            let c = mc_duality_check(&model, &eta, xi, t, opts.replicates, seed)?;
            out.push(CheckResult::within_z(
                &format!("mc-duality/dual-{k}/t={t}"),
                Some(6),
                c.z.abs(),
                serde_json::to_value(&c).expect("serializable"),
            ));
        }
    }
    Ok(())
}

fn clustering_mc(opts: &SuiteOptions, out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_ring_five();
    let c = clustering_identity_check(
        &model,
        0,
        0.5,
        &[0.5, 1.0, 2.0, 4.0],
        opts.replicates,
        opts.seed,
    )?;
    out.push(CheckResult::within_z(
        "clustering-identity/ring-five",
        Some(7),
        c.curve.max_abs_z,
        serde_json::to_value(&c).expect("serializable"),
    ));
    Ok(())
}

fn density_mc(opts: &SuiteOptions, out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_heterogeneous();
    let c = density_conservation_check(&model, 0.3, &[0.5, 1.0, 2.0], opts.replicates, opts.seed)?;
    out.push(CheckResult::within_z(
        "density-conservation/heterogeneous",
        Some(9),
        c.max_abs_z,
        serde_json::to_value(&c).expect("serializable"),
    ));
    Ok(())
}

fn correlation_mc(opts: &SuiteOptions, out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_small_colony();
    let mut worst = f64::NEG_INFINITY;
    let mut all = Vec::new();
    for (k, (a, b)) in small_colony_pairs().into_iter().enumerate() {
        for t in [0.5, 1.0] {
            let seed = opts.seed ^ crate::rng::splitmix64(100 + k as u64);
            let c = correlation_inequality_check(&model, a, b, t, opts.replicates, seed)?;
            for m in &c.margins {
                worst = worst.max(-z_score(m.single, m.coalesced, m.sigma));
            }
            all.push(c);
        }
    }
    out.push(CheckResult {
        name: "correlation-inequality/mc".into(),
        criterion: Some(10),
        kind: CheckKind::Statistical,
        metric: worst,
        threshold: Z_THRESHOLD,
        pass: all.iter().all(|c| c.pass),
        detail: serde_json::to_value(&all).expect("serializable"),
    });
    Ok(())
}

fn moment_identities_mc(opts: &SuiteOptions, out: &mut Vec<CheckResult>) -> Result<()> {
    let model = reference_ring_three();
    let eta = Configuration::from_pairs(&[[2, 1], [0, 0], [0, 0]]);
    for site in [0, 1] {
        let c = first_moment_identity_check(&model, site, &eta, 1.0, opts.replicates, opts.seed)?;
        out.push(CheckResult::within_z(
            &format!("first-moment/site-{site}"),
            None,
            c.active.z.abs().max(c.dormant.z.abs()),
            serde_json::to_value(&c).expect("serializable"),
        ));
    }
    let c = second_moment_identity_check(
        &model,
        Lineage::active(0),
        Lineage::active(1),
        &eta,
        1.0,
        opts.replicates,
        opts.seed,
    )?;
    out.push(CheckResult::within_z(
        "second-moment/active-pair",
        None,
        c.comparison.z.abs(),
        serde_json::to_value(&c).expect("serializable"),
    ));
    Ok(())
}

/// Box invariance and heterozygosity range along forward trajectories.
fn forward_properties(opts: &SuiteOptions, out: &mut Vec<CheckResult>) {
    let model = reference_heterogeneous();
    let p = &model.profile;
    let sites = model.sites();
    let grid = [0.25, 0.5, 1.0, 2.0];
    let fwd = ForwardSimulator::new(&model);
    let counts = run_replicates(
        opts.seed,
        experiment_id("suite-forward-properties"),
        opts.property_runs,
        |_, rng| {
            let initial = sample_binomial(p, 0.4, rng);
            let mut box_bad = 0u64;
            let snaps = fwd.simulate_with(initial, &grid, rng, |state, _| {
                if !state.config.in_box(p) {
                    box_bad += 1;
                }
            });
            let mut het_bad = 0u64;
            for z in &snaps {
                for i in 0..sites {
                    for j in 0..sites {
                        for kind in [PairKind::ActiveActive, PairKind::ActiveDormant] {
                            let h = heterozygosity_exact(p, z, i, j, kind);
                            if *h.numer() < 0 || h.numer() > h.denom() {
                                het_bad += 1;
                            }
                        }
                    }
                }
                if *z == Configuration::top(p) || z.is_zero() {
                    let mono_bad = (0..sites).any(|i| {
                        (0..sites).any(|j| {
                            heterozygosity_exact(p, z, i, j, PairKind::ActiveActive) != 0.into()
                                || heterozygosity_exact(p, z, i, j, PairKind::ActiveDormant)
                                    != 0.into()
                        })
                    });
                    het_bad += mono_bad as u64;
                }
            }
            (box_bad, het_bad)
        },
    );
    let box_bad = counts.iter().map(|c| c.0).sum();
    let het_bad = counts.iter().map(|c| c.1).sum();
    out.push(CheckResult::violations(
        "property/forward-box",
        box_bad,
        opts.property_runs,
    ));
    out.push(CheckResult::violations(
        "property/heterozygosity-range",
        het_bad,
        opts.property_runs,
    ));
}

/// Exclusion, particle bookkeeping and monotone particle count along dual runs.
fn dual_properties(opts: &SuiteOptions, out: &mut Vec<CheckResult>) {
    let model = reference_heterogeneous();
    let p = &model.profile;
    let dual = DualSimulator::new(&model);
    let counts = run_replicates(
        opts.seed,
        experiment_id("suite-dual-properties"),
        opts.property_runs,
        |_, rng| {
            let mut counts = random_configuration(p, rng);
            if counts.is_zero() {
                counts.active[0] = 1;
            }
            let start = DualState::from_counts(&model, &counts).expect("box counts");
            let initial = start.live();
            let mut previous = initial;
            let (mut exclusion_bad, mut count_bad) = (0u64, 0u64);
            dual.simulate_with(start, &[2.0], rng, |state, _| {
                let mut recount = Configuration::zeros(p.sites());
                for particle in state.particles() {
                    match particle.activity {
                        Activity::Active => recount.active[particle.site] += 1,
                        Activity::Dormant => recount.dormant[particle.site] += 1,
                    }
                }
                if !state.counts().in_box(p) || recount != *state.counts() {
                    exclusion_bad += 1;
                }
                if state.live() > previous || state.live() + state.coalescences.len() != initial {
                    count_bad += 1;
                }
                previous = state.live();
            });
            (exclusion_bad, count_bad)
        },
    );
    out.push(CheckResult::violations(
        "property/dual-exclusion",
        counts.iter().map(|c| c.0).sum(),
        opts.property_runs,
    ));
    out.push(CheckResult::violations(
        "property/dual-count-monotone",
        counts.iter().map(|c| c.1).sum(),
        opts.property_runs,
    ));
}

/// Heterozygosity against its moment and duality-function forms on random states.
fn pointwise_identities(opts: &SuiteOptions, out: &mut Vec<CheckResult>) {
    let model = reference_heterogeneous();
    let p = &model.profile;
    let sites = model.sites();
    let bad = run_replicates(
        opts.seed,
        experiment_id("suite-pointwise"),
        opts.property_runs,
        |_, rng| {
            let z = random_configuration(p, rng);
            let mut bad = 0u64;
            for i in 0..sites {
                for j in 0..sites {
                    for kind in [PairKind::ActiveActive, PairKind::ActiveDormant] {
                        let h = heterozygosity_exact(p, &z, i, j, kind);
                        match moment_form(p, &z, i, j, kind) {
                            Some(mf) => {
                                let df = dual_form(p, &z, i, j, kind).expect("valid pair");
                                let hf = *h.numer() as f64 / *h.denom() as f64;
                                if mf != h || (df - hf).abs() > 1e-14 {
                                    bad += 1;
                                }
                            }
                            None => bad += (h != 0.into()) as u64,
                        }
                    }
                }
            }
            bad
        },
    );
    out.push(CheckResult::violations(
        "property/pointwise-moment-identities",
        bad.iter().sum(),
        opts.property_runs,
    ));
}

/// Runs the suite at the requested level.
pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    if opts.replicates == 0 || opts.property_runs == 0 {
        return Err(Error::Parameter("suite sizes must be positive".into()));
    }
    let mut checks = Vec::new();
    duality_checks(opts, &mut checks)?;
    fault_control(&mut checks)?;
    single_colony_equilibrium(&mut checks)?;
    dual_split_exact(&mut checks)?;
    correlation_exact(&mut checks)?;
    if opts.level == SuiteLevel::Full {
        fixation_mc(opts, &mut checks);
        dual_split_mc(opts, &mut checks)?;
        duality_mc(opts, &mut checks)?;
        clustering_mc(opts, &mut checks)?;
        density_mc(opts, &mut checks)?;
        correlation_mc(opts, &mut checks)?;
        moment_identities_mc(opts, &mut checks)?;
        forward_properties(opts, &mut checks);
        dual_properties(opts, &mut checks);
        pointwise_identities(opts, &mut checks);
    }
    log::info!(
        "suite finished: {} checks, {} failed",
        checks.len(),
        checks.iter().filter(|c| !c.pass).count()
    );
    Ok(SuiteReport {
        options: opts.clone(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let report = run_suite(&SuiteOptions::new(SuiteLevel::Quick, 1)).unwrap();
        if let Some(c) = report.failures().next() {
            panic!("{} failed: {} vs {}", c.name, c.metric, c.threshold);
        }
        for k in [1, 2, 3, 4, 5, 10] {
            assert_eq!(report.criterion_pass(k), Some(true));
        }
        assert_eq!(report.criterion_pass(6), None);
    }

    #[test]
    fn fault_is_detected() {
        let mut opts = SuiteOptions::new(SuiteLevel::Quick, 1);
        opts.inject_fault = true;
        let report = run_suite(&opts).unwrap();
        assert!(!report.pass);
        assert_eq!(report.criterion_pass(1), Some(false));
        assert_eq!(report.criterion_pass(2), Some(false));
    }

    #[test]
    fn small_full_suite_is_deterministic() {
        let mut opts = SuiteOptions::new(SuiteLevel::Full, 3);
        opts.replicates = 2_000;
        opts.property_runs = 200;
        let a = run_suite(&opts).unwrap().to_json();
        let b = run_suite(&opts).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn level_parses() {
        assert_eq!("quick".parse::<SuiteLevel>().unwrap(), SuiteLevel::Quick);
        assert!("slow".parse::<SuiteLevel>().is_err());
    }
}
