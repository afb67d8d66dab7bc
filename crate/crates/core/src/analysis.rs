//! Genetic variability observables and the moment identities linking forward
//! expectations to one- and two-particle dual quantities.
//!
//! Every statistical check here compares two independent estimators (forward
//! runs against dual runs) drawn from separate random streams.

use std::fmt::Write as _;

use num_rational::Ratio;
use rand::Rng;
use serde::Serialize;

use crate::dual::pair::{two_particle_simulate, validate_pair, Lineage, PairConfig};
use crate::dual::{DualSimulator, DualState};
use crate::duality::duality_d;
use crate::error::{Error, Result};
use crate::forward::ForwardSimulator;
use crate::model::configuration::sample_binomial;
use crate::model::{Activity, ColonyProfile, Configuration, Model};
use crate::oracle::{build_pair_chain, build_single_chain};
use crate::replicate::run_replicates;
use crate::rng::experiment_id;
use crate::stats::{pooled_sigma, proportion_se, z_score, MeanVar, Z_THRESHOLD};

/// Which pools the two sampled individuals come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PairKind {
    /// Active at `i`, active at `j`.
    #[serde(rename = "AA")]
    ActiveActive,
    /// Active at `i`, dormant at `j`.
    #[serde(rename = "AD")]
    ActiveDormant,
}

impl PairKind {
    /// The two sampled lineages.
    pub fn lineages(self, i: usize, j: usize) -> (Lineage, Lineage) {
        match self {
            PairKind::ActiveActive => (Lineage::active(i), Lineage::active(j)),
            PairKind::ActiveDormant => (Lineage::active(i), Lineage::dormant(j)),
        }
    }
}

fn frac(num: u32, den: u32) -> Ratio<i64> {
    Ratio::new(num as i64, den as i64)
}

fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Probability that two individuals drawn without replacement from the given
/// pools carry different types, as an exact fraction.
pub fn heterozygosity_exact(
    profile: &ColonyProfile,
    state: &Configuration,
    i: usize,
    j: usize,
    kind: PairKind,
) -> Ratio<i64> {
    let (xi, ni) = (state.active[i], profile.active(i));
    match kind {
        PairKind::ActiveActive if i == j => {
            if ni == 1 {
                Ratio::from_integer(0)
            } else {
                Ratio::new(
                    2 * xi as i64 * (ni - xi) as i64,
                    ni as i64 * (ni - 1) as i64,
                )
            }
        }
        PairKind::ActiveActive => {
            let (xj, nj) = (state.active[j], profile.active(j));
            frac(xi, ni) * frac(nj - xj, nj) + frac(xj, nj) * frac(ni - xi, ni)
        }
        PairKind::ActiveDormant => {
            let (yj, mj) = (state.dormant[j], profile.dormant(j));
            frac(xi, ni) * frac(mj - yj, mj) + frac(ni - xi, ni) * frac(yj, mj)
        }
    }
}

pub fn heterozygosity(
    profile: &ColonyProfile,
    state: &Configuration,
    i: usize,
    j: usize,
    kind: PairKind,
) -> f64 {
    to_f64(heterozygosity_exact(profile, state, i, j, kind))
}

/// Total variability between colonies `i` and `j`: the active-active plus the
/// active-dormant heterozygosity.
pub fn variability(profile: &ColonyProfile, state: &Configuration, i: usize, j: usize) -> f64 {
    to_f64(
        heterozygosity_exact(profile, state, i, j, PairKind::ActiveActive)
            + heterozygosity_exact(profile, state, i, j, PairKind::ActiveDormant),
    )
}

/// Heterozygosity rewritten through first and second factorial moments, e.g.
/// `x_i + y_j - 2 x_i y_j`. `None` for two actives at a colony of size one,
/// where the second factorial moment is undefined.
pub fn moment_form(
    profile: &ColonyProfile,
    state: &Configuration,
    i: usize,
    j: usize,
    kind: PairKind,
) -> Option<Ratio<i64>> {
    let two = Ratio::from_integer(2);
    let x = |k: usize| frac(state.active[k], profile.active(k));
    match kind {
        PairKind::ActiveActive if i == j => {
            let (xi, ni) = (state.active[i] as i64, profile.active(i) as i64);
            if ni == 1 {
                return None;
            }
            let second = Ratio::new(xi * (xi - 1), ni * (ni - 1));
            Some(two * (x(i) - second))
        }
        PairKind::ActiveActive => Some(x(i) + x(j) - two * x(i) * x(j)),
        PairKind::ActiveDormant => {
            let y = frac(state.dormant[j], profile.dormant(j));
            Some(x(i) + y - two * x(i) * y)
        }
    }
}

/// Dual particle counts of a set of lineages.
pub fn lineage_counts(sites: usize, lineages: &[Lineage]) -> Configuration {
    let mut c = Configuration::zeros(sites);
    for l in lineages {
        match l.activity {
            Activity::Active => c.active[l.site] += 1,
            Activity::Dormant => c.dormant[l.site] += 1,
        }
    }
    c
}

/// `D(eta; a) + D(eta; b) - 2 D(eta; a + b)`: the same heterozygosity written
/// with the duality function.
pub fn dual_form(
    profile: &ColonyProfile,
    state: &Configuration,
    i: usize,
    j: usize,
    kind: PairKind,
) -> Result<f64> {
    let (a, b) = kind.lineages(i, j);
    let n = profile.sites();
    let d = |ls: &[Lineage]| duality_d(profile, state, &lineage_counts(n, ls)).map(|v| v.value);
    Ok(d(&[a])? + d(&[b])? - 2.0 * d(&[a, b])?)
}

/// Outcome of one two-estimator comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub t: f64,
    pub forward: f64,
    pub forward_se: f64,
    pub dual: f64,
    pub dual_se: f64,
    pub z: f64,
    pub pass: bool,
}

impl Comparison {
    fn new(t: f64, forward: (f64, f64), dual: (f64, f64)) -> Self {
        let z = z_score(forward.0, dual.0, pooled_sigma(forward.1, dual.1));
        Self {
            t,
            forward: forward.0,
            forward_se: forward.1,
            dual: dual.0,
            dual_se: dual.1,
            z,
            pass: z.abs() <= Z_THRESHOLD,
        }
    }
}

fn summarize(samples: impl Iterator<Item = f64>) -> (f64, f64) {
    let acc = samples.fold(MeanVar::default(), |mut acc, x| {
        acc.push(x);
        acc
    });
    (acc.mean, acc.std_error())
}

fn column(runs: &[Vec<f64>], k: usize) -> (f64, f64) {
    summarize(runs.iter().map(|r| r[k]))
}

fn sorted_grid(t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Parameter(format!("bad time grid {t_grid:?}")));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

fn check_replicates(replicates: u64) -> Result<()> {
    if replicates == 0 {
        Err(Error::Parameter("replicates must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "theta must lie in [0,1], got {theta}"
        )))
    }
}

/// One-particle dual estimate of `E^{l}[D(eta; xi(t))]` on a grid.
fn single_dual_runs(
    model: &Model,
    start: Lineage,
    eta: &Configuration,
    grid: &[f64],
    replicates: u64,
    seed: u64,
    name: &str,
) -> Result<Vec<Vec<f64>>> {
    let initial = DualState::new(model, &[(start.site, start.activity)])?;
    let dual = DualSimulator::new(model);
    Ok(run_replicates(
        seed,
        experiment_id(name),
        replicates,
        |_, rng| {
            let (traj, _) = dual.simulate(initial.clone(), grid, rng);
            traj.snapshots
                .iter()
                .map(|s| {
                    duality_d(&model.profile, eta, &s.counts)
                        .expect("valid counts")
                        .value
                })
                .collect()
        },
    ))
}

/// Forward runs from a fixed configuration, mapped through `observe` at each
/// grid time.
fn forward_runs<F>(
    model: &Model,
    initial: &Configuration,
    grid: &[f64],
    replicates: u64,
    seed: u64,
    name: &str,
    observe: F,
) -> Vec<Vec<Vec<f64>>>
where
    F: Fn(&Configuration) -> Vec<f64> + Sync,
{
    let fwd = ForwardSimulator::new(model);
    run_replicates(seed, experiment_id(name), replicates, |_, rng| {
        fwd.simulate(initial.clone(), grid, rng)
            .iter()
            .map(&observe)
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstMomentCheck {
    pub site: usize,
    /// `E[X_i(t)/N_i]` against the dual started from an active particle.
    pub active: Comparison,
    /// `E[Y_i(t)/M_i]` against the dual started from a dormant particle.
    pub dormant: Comparison,
    pub pass: bool,
}

/// First-moment identity at colony `site`.
pub fn first_moment_identity_check(
    model: &Model,
    site: usize,
    eta: &Configuration,
    t: f64,
    replicates: u64,
    seed: u64,
) -> Result<FirstMomentCheck> {
    eta.validate(&model.profile)?;
    check_replicates(replicates)?;
    if site >= model.sites() {
        return Err(Error::DualState(format!("site {site} out of range")));
    }
    let grid = sorted_grid(&[t])?;
    let p = &model.profile;
    let fwd = forward_runs(
        model,
        eta,
        &grid,
        replicates,
        seed,
        "first-moment-forward",
        |z| {
            vec![
                z.active[site] as f64 / p.active(site) as f64,
                z.dormant[site] as f64 / p.dormant(site) as f64,
            ]
        },
    );
    let fwd_active = summarize(fwd.iter().map(|r| r[0][0]));
    let fwd_dormant = summarize(fwd.iter().map(|r| r[0][1]));
    let from_active = single_dual_runs(
        model,
        Lineage::active(site),
        eta,
        &grid,
        replicates,
        seed,
        "first-moment-dual-active",
    )?;
    let from_dormant = single_dual_runs(
        model,
        Lineage::dormant(site),
        eta,
        &grid,
        replicates,
        seed,
        "first-moment-dual-dormant",
    )?;
    let active = Comparison::new(t, fwd_active, column(&from_active, 0));
    let dormant = Comparison::new(t, fwd_dormant, column(&from_dormant, 0));
    Ok(FirstMomentCheck {
        site,
        pass: active.pass && dormant.pass,
        active,
        dormant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMomentCheck {
    pub first: Lineage,
    pub second: Lineage,
    pub comparison: Comparison,
    /// Dual contribution from runs still uncoalesced at `t`.
    pub uncoalesced_part: f64,
    /// Dual contribution from runs coalesced before `t`.
    pub coalesced_part: f64,
}

/// Second-moment identity for the pair `(a, b)`: forward mixed factorial
/// moment against the two-particle dual decomposition.
pub fn second_moment_identity_check(
    model: &Model,
    a: Lineage,
    b: Lineage,
    eta: &Configuration,
    t: f64,
    replicates: u64,
    seed: u64,
) -> Result<SecondMomentCheck> {
    validate_pair(model, a, b)?;
    eta.validate(&model.profile)?;
    check_replicates(replicates)?;
    let grid = sorted_grid(&[t])?;
    let p = &model.profile;
    let pair = lineage_counts(model.sites(), &[a, b]);
    let fwd = forward_runs(
        model,
        eta,
        &grid,
        replicates,
        seed,
        "second-moment-forward",
        |z| vec![duality_d(p, z, &pair).expect("valid pair").value],
    );
    let runs = run_replicates(
        seed,
        experiment_id("second-moment-dual"),
        replicates,
        |_, rng| {
            let out = two_particle_simulate(model, a, b, &grid, rng).expect("validated pair");
            let config = out.snapshots[0];
            let counts = lineage_counts(model.sites(), &config.lineages());
            let value = duality_d(p, eta, &counts).expect("valid counts").value;
            (value, config.coalesced())
        },
    );
    let n = replicates as f64;
    let coalesced_part = runs.iter().filter(|r| r.1).map(|r| r.0).sum::<f64>() / n;
    let uncoalesced_part = runs.iter().filter(|r| !r.1).map(|r| r.0).sum::<f64>() / n;
    let comparison = Comparison::new(
        t,
        summarize(fwd.iter().map(|r| r[0][0])),
        summarize(runs.iter().map(|r| r.0)),
    );
    Ok(SecondMomentCheck {
        first: a,
        second: b,
        comparison,
        uncoalesced_part,
        coalesced_part,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMargin {
    pub target: Lineage,
    /// Probability the single particle from the first lineage sits at `target`.
    pub single: f64,
    /// Probability the pair has merged and the survivor sits at `target`.
    pub coalesced: f64,
    pub margin: f64,
    /// Standard error of the margin (zero for exact solves).
    pub sigma: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCheck {
    pub first: Lineage,
    pub second: Lineage,
    pub t: f64,
    pub margins: Vec<CorrelationMargin>,
    pub min_margin: f64,
    pub pass: bool,
}

fn all_targets(model: &Model) -> Vec<Lineage> {
    (0..model.sites())
        .flat_map(|s| [Lineage::active(s), Lineage::dormant(s)])
        .collect()
}

fn finish_correlation(
    a: Lineage,
    b: Lineage,
    t: f64,
    margins: Vec<CorrelationMargin>,
) -> CorrelationCheck {
    let min_margin = margins
        .iter()
        .map(|m| m.margin)
        .fold(f64::INFINITY, f64::min);
    CorrelationCheck {
        first: a,
        second: b,
        t,
        pass: margins.iter().all(|m| m.pass),
        margins,
        min_margin,
    }
}

/// Exact comparison of the one-particle law against the coalesced part of
/// the two-particle law, from transient solves of both chains.
pub fn correlation_inequality_exact(
    model: &Model,
    a: Lineage,
    b: Lineage,
    t: f64,
    tol: f64,
) -> Result<CorrelationCheck> {
    let single = build_single_chain(model, a)?;
    let pair = build_pair_chain(model, a, b)?;
    let p_single = single.transient_distribution(0, t, tol);
    let p_pair = pair.transient_distribution(0, t, tol);
    let mass = |chain: &[PairConfig], probs: &[f64], target: Lineage| -> f64 {
        chain
            .iter()
            .zip(probs)
            .filter(|(c, _)| **c == PairConfig::One(target))
            .map(|(_, p)| p)
            .sum()
    };
    let margins = all_targets(model)
        .into_iter()
        .map(|target| {
            let s = mass(single.states(), &p_single, target);
            let c = mass(pair.states(), &p_pair, target);
            CorrelationMargin {
                target,
                single: s,
                coalesced: c,
                margin: s - c,
                sigma: 0.0,
                pass: s - c >= -tol,
            }
        })
        .collect();
    Ok(finish_correlation(a, b, t, margins))
}

/// Monte Carlo version; a target fails only when the coalesced probability
/// exceeds the single-particle probability by more than the threshold.
pub fn correlation_inequality_check(
    model: &Model,
    a: Lineage,
    b: Lineage,
    t: f64,
    replicates: u64,
    seed: u64,
) -> Result<CorrelationCheck> {
    validate_pair(model, a, b)?;
    check_replicates(replicates)?;
    let grid = sorted_grid(&[t])?;
    let initial = DualState::new(model, &[(a.site, a.activity)])?;
    let dual = DualSimulator::new(model);
    let singles = run_replicates(
        seed,
        experiment_id("correlation-single"),
        replicates,
        |_, rng| {
            let end = dual.state_at(initial.clone(), t, rng);
            let p = &end.particles()[0];
            Lineage {
                site: p.site,
                activity: p.activity,
            }
        },
    );
    let pairs = run_replicates(
        seed,
        experiment_id("correlation-pair"),
        replicates,
        |_, rng| {
            two_particle_simulate(model, a, b, &grid, rng)
                .expect("validated pair")
                .snapshots[0]
        },
    );
    let margins = all_targets(model)
        .into_iter()
        .map(|target| {
            let s = singles.iter().filter(|l| **l == target).count() as f64 / replicates as f64;
            let c = pairs
                .iter()
                .filter(|c| **c == PairConfig::One(target))
                .count() as f64
                / replicates as f64;
            let sigma = pooled_sigma(proportion_se(s, replicates), proportion_se(c, replicates));
            CorrelationMargin {
                target,
                single: s,
                coalesced: c,
                margin: s - c,
                sigma,
                pass: z_score(s, c, sigma) >= -Z_THRESHOLD,
            }
        })
        .collect();
    Ok(finish_correlation(a, b, t, margins))
}

/// Per-time comparison curve with a joint verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub points: Vec<Comparison>,
    pub max_abs_z: f64,
    pub pass: bool,
}

impl Curve {
    fn new(points: Vec<Comparison>) -> Self {
        let max_abs_z = points.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
        Self {
            pass: points.iter().all(|p| p.pass),
            points,
            max_abs_z,
        }
    }

    /// `t,forward,forward_se,dual,dual_se,z,pass` rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,forward,forward_se,dual,dual_se,z,pass\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.t, p.forward, p.forward_se, p.dual, p.dual_se, p.z, p.pass
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringCheck {
    pub site: usize,
    pub theta: f64,
    pub curve: Curve,
}

/// Forward mean of `X_i (M_i - Y_i) / (N_i M_i)` under fresh product-binomial
/// initials against `theta (1 - theta) P(tau >= t)` for the pair started from
/// an active and a dormant lineage at `site`.
pub fn clustering_identity_check(
    model: &Model,
    site: usize,
    theta: f64,
    t_grid: &[f64],
    replicates: u64,
    seed: u64,
) -> Result<ClusteringCheck> {
    check_theta(theta)?;
    check_replicates(replicates)?;
    let grid = sorted_grid(t_grid)?;
    let (a, b) = (Lineage::active(site), Lineage::dormant(site));
    validate_pair(model, a, b)?;
    let p = &model.profile;
    let (n, m) = (p.active(site) as f64, p.dormant(site) as f64);
    let fwd = ForwardSimulator::new(model);
    let forward = run_replicates(
        seed,
        experiment_id("clustering-forward"),
        replicates,
        |_, rng| {
            let initial = sample_binomial(p, theta, rng);
            fwd.simulate(initial, &grid, rng)
                .iter()
                .map(|z| z.active[site] as f64 * (m - z.dormant[site] as f64) / (n * m))
                .collect::<Vec<f64>>()
        },
    );
    let horizon = grid[grid.len() - 1];
    let taus = run_replicates(
        seed,
        experiment_id("clustering-dual"),
        replicates,
        |_, rng| {
            two_particle_simulate(model, a, b, &[horizon], rng)
                .expect("validated pair")
                .tau
        },
    );
    let scale = theta * (1.0 - theta);
    let points = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let survivors = taus.iter().filter(|tau| tau.is_none_or(|s| s >= t)).count();
            let s = survivors as f64 / replicates as f64;
            Comparison::new(
                t,
                column(&forward, k),
                (scale * s, scale * proportion_se(s, replicates)),
            )
        })
        .collect();
    Ok(ClusteringCheck {
        site,
        theta,
        curve: Curve::new(points),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityPoint {
    pub t: f64,
    pub site: usize,
    pub activity: Activity,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCheck {
    pub theta: f64,
    pub points: Vec<DensityPoint>,
    pub max_abs_z: f64,
    pub pass: bool,
}

impl DensityCheck {
    /// `t,site,state,mean,std_error,z,pass` rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,site,state,mean,std_error,z,pass\n");
        for p in &self.points {
            let state = match p.activity {
                Activity::Active => "A",
                Activity::Dormant => "D",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.t, p.site, state, p.mean, p.std_error, p.z, p.pass
            );
        }
        out
    }
}

/// Per-site active and dormant type densities under fresh product-binomial
/// initials, each compared with `theta`.
pub fn density_conservation_check(
    model: &Model,
    theta: f64,
    t_grid: &[f64],
    replicates: u64,
    seed: u64,
) -> Result<DensityCheck> {
    check_theta(theta)?;
    check_replicates(replicates)?;
    let grid = sorted_grid(t_grid)?;
    let p = &model.profile;
    let sites = model.sites();
    let fwd = ForwardSimulator::new(model);
    let runs = run_replicates(
        seed,
        experiment_id("density-conservation"),
        replicates,
        |_, rng| {
            let initial = sample_binomial(p, theta, rng);
            fwd.simulate(initial, &grid, rng)
        },
    );
    let mut points = Vec::with_capacity(grid.len() * sites * 2);
    for (k, &t) in grid.iter().enumerate() {
        for site in 0..sites {
            for activity in [Activity::Active, Activity::Dormant] {
                let cap = model.capacity(site, activity) as f64;
                let (mean, std_error) = summarize(runs.iter().map(|r| {
                    let c = &r[k];
                    match activity {
                        Activity::Active => c.active[site] as f64 / cap,
                        Activity::Dormant => c.dormant[site] as f64 / cap,
                    }
                }));
                let z = z_score(mean, theta, std_error);
                points.push(DensityPoint {
                    t,
                    site,
                    activity,
                    mean,
                    std_error,
                    z,
                    pass: z.abs() <= Z_THRESHOLD,
                });
            }
        }
    }
    let max_abs_z = points.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    Ok(DensityCheck {
        theta,
        pass: points.iter().all(|p| p.pass),
        points,
        max_abs_z,
    })
}

/// Forward and dual estimates of expected heterozygosity over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariabilityReport {
    pub first: Lineage,
    pub second: Lineage,
    pub kind: PairKind,
    pub curve: Curve,
}

/// Expected heterozygosity from forward runs, against the dual expression
/// `E^a[D] + E^b[D] - 2 E^{a,b}[D]` built from one- and two-particle runs.
#[allow(clippy::too_many_arguments)]
pub fn variability_report(
    model: &Model,
    i: usize,
    j: usize,
    kind: PairKind,
    eta: &Configuration,
    t_grid: &[f64],
    replicates: u64,
    seed: u64,
) -> Result<VariabilityReport> {
    eta.validate(&model.profile)?;
    check_replicates(replicates)?;
    let grid = sorted_grid(t_grid)?;
    let (a, b) = kind.lineages(i, j);
    validate_pair(model, a, b)?;
    let p = &model.profile;
    let forward = forward_runs(
        model,
        eta,
        &grid,
        replicates,
        seed,
        "variability-forward",
        |z| vec![heterozygosity(p, z, i, j, kind)],
    );
    // Two actives at a colony of size one are the same individual.
    let degenerate = kind == PairKind::ActiveActive && i == j && p.active(i) == 1;
    let points = if degenerate {
        grid.iter()
            .enumerate()
            .map(|(k, &t)| {
                Comparison::new(t, summarize(forward.iter().map(|r| r[k][0])), (0.0, 0.0))
            })
            .collect()
    } else {
        let from_a = single_dual_runs(model, a, eta, &grid, replicates, seed, "variability-a")?;
        let from_b = single_dual_runs(model, b, eta, &grid, replicates, seed, "variability-b")?;
        let pairs = run_replicates(
            seed,
            experiment_id("variability-pair"),
            replicates,
            |_, rng| {
                two_particle_simulate(model, a, b, &grid, rng)
                    .expect("validated pair")
                    .snapshots
                    .iter()
                    .map(|c| {
                        let counts = lineage_counts(model.sites(), &c.lineages());
                        duality_d(p, eta, &counts).expect("valid counts").value
                    })
                    .collect::<Vec<f64>>()
            },
        );
        grid.iter()
            .enumerate()
            .map(|(k, &t)| {
                let (ma, sa) = column(&from_a, k);
                let (mb, sb) = column(&from_b, k);
                let (mp, sp) = column(&pairs, k);
                let dual = (
                    ma + mb - 2.0 * mp,
                    (sa * sa + sb * sb + 4.0 * sp * sp).sqrt(),
                );
                Comparison::new(t, summarize(forward.iter().map(|r| r[k][0])), dual)
            })
            .collect()
    };
    Ok(VariabilityReport {
        first: a,
        second: b,
        kind,
        curve: Curve::new(points),
    })
}

/// Uniform random box configuration, used by the pointwise property suites.
pub fn random_configuration<R: Rng + ?Sized>(
    profile: &ColonyProfile,
    rng: &mut R,
) -> Configuration {
    let mut c = Configuration::zeros(profile.sites());
    for i in 0..profile.sites() {
        c.active[i] = rng.random_range(0..=profile.active(i));
        c.dormant[i] = rng.random_range(0..=profile.dormant(i));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn torus(active: Vec<u32>, dormant: Vec<u32>) -> Model {
        let sites = active.len();
        Model::nearest_neighbor_torus(1, sites, active, dormant, 1.0).unwrap()
    }

    #[test]
    fn heterozygosity_examples() {
        let p = ColonyProfile::new(vec![2, 2], vec![1, 1]).unwrap();
        let top = Configuration::top(&p);
        for kind in [PairKind::ActiveActive, PairKind::ActiveDormant] {
            assert_eq!(heterozygosity(&p, &top, 0, 1, kind), 0.0);
            assert_eq!(
                heterozygosity(&p, &Configuration::zeros(2), 0, 0, kind),
                0.0
            );
        }
        let half = Configuration::from_pairs(&[[1, 0], [1, 0]]);
        assert_eq!(heterozygosity(&p, &half, 0, 1, PairKind::ActiveActive), 0.5);
        assert_eq!(heterozygosity(&p, &half, 0, 0, PairKind::ActiveActive), 1.0);
        let single = ColonyProfile::new(vec![1], vec![1]).unwrap();
        let s = Configuration::from_pairs(&[[1, 0]]);
        assert_eq!(
            heterozygosity(&single, &s, 0, 0, PairKind::ActiveActive),
            0.0
        );
        assert_eq!(
            heterozygosity(&single, &s, 0, 0, PairKind::ActiveDormant),
            1.0
        );
        assert_eq!(variability(&single, &s, 0, 0), 1.0);
    }

    #[test]
    fn moment_form_undefined_for_singleton_colony() {
        let p = ColonyProfile::new(vec![1], vec![1]).unwrap();
        let s = Configuration::from_pairs(&[[1, 1]]);
        assert!(moment_form(&p, &s, 0, 0, PairKind::ActiveActive).is_none());
        assert!(moment_form(&p, &s, 0, 0, PairKind::ActiveDormant).is_some());
    }

    proptest! {
        #[test]
        fn pointwise_moment_identities(
            sizes in proptest::collection::vec((1u32..=5, 1u32..=4), 3),
            seed in any::<u64>(),
            i in 0usize..3,
            j in 0usize..3,
        ) {
            use rand::SeedableRng;
            let p = ColonyProfile::new(
                sizes.iter().map(|s| s.0).collect(),
                sizes.iter().map(|s| s.1).collect(),
            ).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let z = random_configuration(&p, &mut rng);
            for kind in [PairKind::ActiveActive, PairKind::ActiveDormant] {
                let h = heterozygosity_exact(&p, &z, i, j, kind);
                prop_assert!(h >= Ratio::from_integer(0) && h <= Ratio::from_integer(1));
                if let Some(mf) = moment_form(&p, &z, i, j, kind) {
                    prop_assert_eq!(mf, h);
                    let df = dual_form(&p, &z, i, j, kind).unwrap();
                    prop_assert!((df - to_f64(h)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn first_moment_trivial_cases() {
        let m = torus(vec![2, 2, 2], vec![1, 1, 1]);
        let top = Configuration::top(&m.profile);
        let c = first_moment_identity_check(&m, 1, &top, 1.0, 200, 3).unwrap();
        assert_eq!((c.active.forward, c.active.dual), (1.0, 1.0));
        assert_eq!((c.dormant.forward, c.dormant.dual), (1.0, 1.0));
        let eta = Configuration::from_pairs(&[[1, 0], [2, 1], [0, 1]]);
        let c = first_moment_identity_check(&m, 0, &eta, 0.0, 50, 3).unwrap();
        assert_eq!((c.active.forward, c.active.dual), (0.5, 0.5));
        assert_eq!((c.dormant.forward, c.dormant.dual), (0.0, 0.0));
    }

    #[test]
    fn first_moment_agrees_on_small_torus() {
        let m = torus(vec![2, 2, 2], vec![1, 1, 1]);
        let eta = Configuration::from_pairs(&[[2, 1], [0, 0], [1, 0]]);
        let c = first_moment_identity_check(&m, 1, &eta, 1.0, 20_000, 11).unwrap();
        assert!(c.pass, "{c:?}");
    }

    #[test]
    fn second_moment_trivial_cases() {
        let m = torus(vec![2, 2, 2], vec![1, 1, 1]);
        let top = Configuration::top(&m.profile);
        let c = second_moment_identity_check(
            &m,
            Lineage::active(0),
            Lineage::active(1),
            &top,
            1.0,
            200,
            5,
        )
        .unwrap();
        assert_eq!((c.comparison.forward, c.comparison.dual), (1.0, 1.0));
        assert!((c.coalesced_part + c.uncoalesced_part - 1.0).abs() < 1e-12);
        let zero = Configuration::zeros(3);
        let c = second_moment_identity_check(
            &m,
            Lineage::active(0),
            Lineage::dormant(2),
            &zero,
            1.0,
            200,
            5,
        )
        .unwrap();
        assert_eq!((c.comparison.forward, c.comparison.dual), (0.0, 0.0));
    }

    #[test]
    fn second_moment_rejects_invalid_pair() {
        let m = torus(vec![2, 2, 2], vec![1, 1, 1]);
        let eta = Configuration::zeros(3);
        assert!(second_moment_identity_check(
            &m,
            Lineage::dormant(0),
            Lineage::dormant(0),
            &eta,
            1.0,
            10,
            1
        )
        .is_err());
    }

    #[test]
    fn correlation_exact_single_colony() {
        let m = Model::single_colony(2, 1, 1.0).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let c =
                correlation_inequality_exact(&m, Lineage::active(0), Lineage::dormant(0), t, 1e-13)
                    .unwrap();
            assert!(c.pass, "{c:?}");
            if t == 0.0 {
                assert!(c.margins.iter().all(|x| x.coalesced == 0.0));
            } else {
                assert!(c.margins.iter().all(|x| x.margin > 0.0));
            }
        }
    }

    #[test]
    fn correlation_flags_violation_contract() {
        let m = Model::single_colony(2, 1, 1.0).unwrap();
        let mut c =
            correlation_inequality_check(&m, Lineage::active(0), Lineage::active(0), 1.0, 2_000, 9)
                .unwrap();
        assert!(c.pass);
        let bad = CorrelationMargin {
            target: Lineage::active(0),
            single: 0.1,
            coalesced: 0.5,
            margin: -0.4,
            sigma: 0.01,
            pass: false,
        };
        c.margins.push(bad);
        let c = finish_correlation(c.first, c.second, c.t, c.margins);
        assert!(!c.pass);
        assert_eq!(c.min_margin, -0.4);
    }

    #[test]
    fn clustering_trivial_cases() {
        let m = torus(vec![2; 5], vec![2; 5]);
        for theta in [0.0, 1.0] {
            let c = clustering_identity_check(&m, 0, theta, &[0.5, 1.0], 100, 2).unwrap();
            assert!(c
                .curve
                .points
                .iter()
                .all(|p| p.forward == 0.0 && p.dual == 0.0));
        }
        let c = clustering_identity_check(&m, 0, 0.5, &[0.0], 20_000, 2).unwrap();
        assert_eq!(c.curve.points[0].dual, 0.25);
        assert!(c.curve.pass, "{c:?}");
    }

    #[test]
    fn density_trivial_cases() {
        let m = torus(vec![2, 3, 2, 1], vec![1, 2, 2, 1]);
        let zero = density_conservation_check(&m, 0.0, &[0.5, 1.0], 50, 4).unwrap();
        assert!(zero.points.iter().all(|p| p.mean == 0.0 && p.pass));
        let one = density_conservation_check(&m, 1.0, &[0.5, 1.0], 50, 4).unwrap();
        assert!(one.points.iter().all(|p| p.mean == 1.0 && p.pass));
        assert!(one.csv().lines().count() == 1 + 2 * 4 * 2);
    }

    #[test]
    fn variability_report_agrees() {
        let m = torus(vec![2, 2, 2], vec![1, 1, 1]);
        let eta = Configuration::from_pairs(&[[2, 1], [0, 0], [1, 1]]);
        for kind in [PairKind::ActiveActive, PairKind::ActiveDormant] {
            let r = variability_report(&m, 0, 1, kind, &eta, &[0.5, 1.0], 20_000, 8).unwrap();
            assert!(r.curve.pass, "{r:?}");
            assert!(r
                .curve
                .points
                .iter()
                .all(|p| (0.0..=1.0).contains(&p.forward)));
        }
    }
}
