use serde::Serialize;

use super::pair::{two_particle_simulate, validate_pair, Lineage};
use super::{DualSimulator, DualState};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::replicate::run_replicates;
use crate::rng::experiment_id;
use crate::stats::wilson_interval;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalPoint {
    pub t: f64,
    /// Replicates with `tau >= t` (censored runs count as survivors).
    pub survivors: u64,
    pub replicates: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Monte Carlo estimate of `P(tau >= t)` on a grid, with 95% Wilson intervals.
pub fn coalescence_probability(
    model: &Model,
    a: Lineage,
    b: Lineage,
    t_grid: &[f64],
    replicates: u64,
    seed: u64,
) -> Result<Vec<SurvivalPoint>> {
    validate_pair(model, a, b)?;
    if replicates == 0 {
        return Err(Error::Parameter("replicates must be at least 1".into()));
    }
    let horizon = t_grid.iter().copied().fold(0.0, f64::max);
    let taus = run_replicates(
        seed,
        experiment_id("coalescence-probability"),
        replicates,
        |_, rng| {
            two_particle_simulate(model, a, b, &[horizon], rng)
                .expect("validated pair")
                .tau
        },
    );
    Ok(survival_curve(&taus, t_grid))
}

/// Survival counts from (possibly censored) coalescence times.
pub fn survival_curve(taus: &[Option<f64>], t_grid: &[f64]) -> Vec<SurvivalPoint> {
    let n = taus.len() as u64;
    t_grid
        .iter()
        .map(|&t| {
            let survivors = taus.iter().filter(|tau| tau.is_none_or(|s| s >= t)).count() as u64;
            let (ci_lo, ci_hi) = wilson_interval(survivors, n, 1.96);
            SurvivalPoint {
                t,
                survivors,
                replicates: n,
                estimate: survivors as f64 / n as f64,
                ci_lo,
                ci_hi,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaTail {
    pub horizon: f64,
    pub replicates: u64,
    /// `Gamma(0)`.
    pub start_radius: u64,
    /// `tail[k] = P(Gamma(T) >= k)` for `k = 0..=L/2`.
    pub tail: Vec<f64>,
    /// `excess_tail[k] = P(Gamma(T) >= Gamma(0) + k)`.
    pub excess_tail: Vec<f64>,
    /// Partial sums of `sum_{|i| = k} N_i * P(Gamma(T) >= k)` over `k`.
    pub weighted_sums: Vec<f64>,
    /// Fraction of runs whose radius hit the torus cap.
    pub saturated_fraction: f64,
}

/// Empirical tail of the dual's spatial radius at time `horizon`.
pub fn gamma_tail_diagnostic(
    model: &Model,
    initial: &DualState,
    horizon: f64,
    replicates: u64,
    seed: u64,
) -> Result<GammaTail> {
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::Parameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if replicates == 0 {
        return Err(Error::Parameter("replicates must be at least 1".into()));
    }
    let sim = DualSimulator::new(model);
    let radii = run_replicates(seed, experiment_id("gamma-tail"), replicates, |_, rng| {
        sim.state_at(initial.clone(), horizon, rng).gamma
    });
    let cap = model.geometry.norm_cap();
    let n = replicates as f64;
    let tail: Vec<f64> = (0..=cap)
        .map(|k| radii.iter().filter(|&&g| g >= k).count() as f64 / n)
        .collect();
    let start = initial.gamma;
    let excess_tail = (0..=cap.saturating_sub(start))
        .map(|k| radii.iter().filter(|&&g| g >= start + k).count() as f64 / n)
        .collect();
    let mut shell_mass = vec![0.0; cap as usize + 1];
    for site in 0..model.sites() {
        shell_mass[model.geometry.norm(site) as usize] += model.profile.active(site) as f64;
    }
    let mut acc = 0.0;
    let weighted_sums = tail
        .iter()
        .zip(&shell_mass)
        .map(|(p, w)| {
            acc += p * w;
            acc
        })
        .collect();
    let saturated_fraction = if model.sites() > 1 {
        radii.iter().filter(|&&g| g >= cap).count() as f64 / n
    } else {
        0.0
    };
    Ok(GammaTail {
        horizon,
        replicates,
        start_radius: start,
        tail,
        excess_tail,
        weighted_sums,
        saturated_fraction,
    })
}

/// `P(Poisson(mean) >= k)`.
pub fn poisson_tail(mean: f64, k: u64) -> f64 {
    let mut term = (-mean).exp();
    let mut below = 0.0;
    for j in 0..k {
        below += term;
        term *= mean / (j + 1) as f64;
    }
    (1.0 - below).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activity;

    #[test]
    fn survival_starts_at_one_and_decreases() {
        let m = Model::single_colony(2, 2, 1.0).unwrap();
        let curve = coalescence_probability(
            &m,
            Lineage::active(0),
            Lineage::dormant(0),
            &[0.0, 0.5, 1.0, 4.0],
            2000,
            3,
        )
        .unwrap();
        assert_eq!(curve[0].estimate, 1.0);
        assert!(curve.windows(2).all(|w| w[1].survivors <= w[0].survivors));
        assert!(curve
            .iter()
            .all(|p| p.ci_lo <= p.estimate && p.estimate <= p.ci_hi));
    }

    #[test]
    fn poisson_tail_values() {
        assert_eq!(poisson_tail(1.0, 0), 1.0);
        assert!((poisson_tail(1.0, 1) - (1.0 - (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn gamma_tail_is_monotone_and_dominated() {
        let m = Model::nearest_neighbor_torus(1, 40, vec![2; 40], vec![2; 40], 1.0).unwrap();
        let init = DualState::new(&m, &[(0, Activity::Active)]).unwrap();
        let reps = 20_000;
        let g = gamma_tail_diagnostic(&m, &init, 1.0, reps, 8).unwrap();
        assert_eq!(g.tail[0], 1.0);
        assert!(g.tail.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(g.saturated_fraction, 0.0);
        for (k, &p) in g.excess_tail.iter().enumerate() {
            let bound = poisson_tail(m.c(), k as u64);
            let sigma = (bound * (1.0 - bound) / reps as f64)
                .sqrt()
                .max(1.0 / reps as f64);
            assert!(p <= bound + 4.0 * sigma, "k={k}: {p} > {bound}");
        }
    }

    #[test]
    fn tiny_horizon_keeps_radius() {
        let m = Model::nearest_neighbor_torus(1, 9, vec![2; 9], vec![2; 9], 1.0).unwrap();
        let init = DualState::new(&m, &[(2, Activity::Active)]).unwrap();
        let g = gamma_tail_diagnostic(&m, &init, 1e-9, 500, 1).unwrap();
        assert_eq!(g.start_radius, 2);
        assert_eq!(g.tail[3], 0.0);
        assert_eq!(g.tail[2], 1.0);
    }
}
