//! Numeric partial-sum diagnostics for the summability conditions under which
//! the duality relation holds on `Z^d`.
//!
//! These are heuristics over a finite radius grid, never proofs.

use serde::Serialize;

use super::geometry::{max_norm, Geometry};
use super::kernel::{lattice_ball, KernelSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionMode {
    /// Exponential kernel moment with subexponential colony growth.
    Exponential { delta: f64 },
    /// Polynomial kernel moment with polynomially bounded colony growth.
    Polynomial { delta: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converging,
    Inconclusive,
    Diverging,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub mode: ConditionMode,
    pub radii: Vec<u64>,
    /// Weighted kernel partial sums, one per radius.
    pub kernel_sums: Vec<f64>,
    /// `max log N_i / |i|` over the outermost shell (exponential mode) or
    /// `sup N_i / |i|^delta` over the ball (polynomial mode), one per radius.
    pub profile_stats: Vec<f64>,
    pub kernel_verdict: Verdict,
    pub profile_verdict: Verdict,
    pub verdict: Verdict,
    /// Polynomial mode only: whether `gamma > d + delta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_gap_ok: Option<bool>,
}

fn radius_grid(max_radius: u64) -> Vec<u64> {
    let mut grid = Vec::new();
    let mut r = 1;
    while r < max_radius {
        grid.push(r);
        r *= 2;
    }
    grid.push(max_radius);
    grid
}

fn series_verdict(partial: &[f64]) -> Verdict {
    let n = partial.len();
    if n < 3 {
        return Verdict::Inconclusive;
    }
    let inc: Vec<f64> = partial.windows(2).map(|w| w[1] - w[0]).collect();
    let last = inc[inc.len() - 1];
    let prev = inc[inc.len() - 2];
    if !partial[n - 1].is_finite() {
        return Verdict::Diverging;
    }
    if last <= 1e-9 * partial[n - 1].abs() {
        return Verdict::Converging;
    }
    let ratio = last / prev;
    if prev > 0.0 && ratio >= 1.0 {
        Verdict::Diverging
    } else if prev > 0.0 && ratio <= 0.5 {
        Verdict::Converging
    } else {
        Verdict::Inconclusive
    }
}

/// Decaying sequence (exponential mode profile side).
fn decay_verdict(stats: &[f64]) -> Verdict {
    let n = stats.len();
    if n < 3 {
        return Verdict::Inconclusive;
    }
    let (prev, last) = (stats[n - 2], stats[n - 1]);
    if last <= 0.0 {
        return Verdict::Converging;
    }
    let monotone = stats.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    if last >= prev * (1.0 - 1e-12) {
        Verdict::Diverging
    } else if monotone && last <= 0.5 * stats[0] {
        Verdict::Converging
    } else {
        Verdict::Inconclusive
    }
}

/// Stabilizing sequence (polynomial mode profile side).
fn saturation_verdict(stats: &[f64]) -> Verdict {
    let n = stats.len();
    if n < 3 {
        return Verdict::Inconclusive;
    }
    let g1 = stats[n - 1] / stats[n - 2];
    let g0 = stats[n - 2] / stats[n - 3];
    if !stats[n - 1].is_finite() || (g1 >= 1.5 && g0 >= 1.5) {
        Verdict::Diverging
    } else if g1 <= 1.01 {
        Verdict::Converging
    } else {
        Verdict::Inconclusive
    }
}

fn joint(kernel: Verdict, profile: Verdict) -> Verdict {
    match (kernel, profile) {
        (Verdict::Diverging, _) | (_, Verdict::Diverging) => Verdict::Diverging,
        (Verdict::Converging, Verdict::Converging) => Verdict::Converging,
        _ => Verdict::Inconclusive,
    }
}

/// Evaluates the summability diagnostics up to `max_radius` on `Z^dim`.
///
/// `active_size` gives `N_i` at a lattice point. The kernel is normalized on
/// the ball of radius `max_radius` and kept fixed across the grid.
pub fn check_duality_condition(
    kernel: &KernelSpec,
    active_size: &dyn Fn(&[i64]) -> f64,
    dim: usize,
    max_radius: u64,
    mode: ConditionMode,
) -> Result<ConditionReport> {
    if max_radius < 1 {
        return Err(Error::Parameter("radius must be at least 1".into()));
    }
    let (delta, gamma) = match mode {
        ConditionMode::Exponential { delta } => (delta, None),
        ConditionMode::Polynomial { delta, gamma } => (delta, Some(gamma)),
    };
    if !(delta.is_finite() && delta > 0.0) || gamma.is_some_and(|g| !(g.is_finite() && g > 0.0)) {
        return Err(Error::Parameter("delta and gamma must be positive".into()));
    }
    Geometry::new(dim, 1)?;
    let (table, _) = kernel.lattice_table(dim, max_radius)?;
    let weight = |k: u64| match gamma {
        None => (delta * k as f64).exp(),
        Some(g) => (k as f64).powf(g),
    };

    let radii = radius_grid(max_radius);
    let kernel_sums: Vec<f64> = radii
        .iter()
        .map(|&r| {
            table
                .iter()
                .map(|(v, a)| (max_norm(v), a))
                .filter(|(k, _)| *k <= r)
                .map(|(k, a)| weight(k) * a)
                .sum()
        })
        .collect();

    let points: Vec<(u64, f64)> = lattice_ball(dim, max_radius)
        .into_iter()
        .filter_map(|p| {
            let k = max_norm(&p);
            (k > 0).then(|| (k, active_size(&p)))
        })
        .collect();
    let profile_stats: Vec<f64> = radii
        .iter()
        .map(|&r| match gamma {
            None => points
                .iter()
                .filter(|(k, _)| *k == r)
                .map(|(k, n)| n.ln() / *k as f64)
                .fold(f64::NEG_INFINITY, f64::max),
            Some(_) => points
                .iter()
                .filter(|(k, _)| *k <= r)
                .map(|(k, n)| n / (*k as f64).powf(delta))
                .fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();

    let kernel_verdict = series_verdict(&kernel_sums);
    let profile_verdict = match gamma {
        None => decay_verdict(&profile_stats),
        Some(_) => saturation_verdict(&profile_stats),
    };
    Ok(ConditionReport {
        mode,
        radii,
        kernel_sums,
        profile_stats,
        kernel_verdict,
        profile_verdict,
        verdict: joint(kernel_verdict, profile_verdict),
        exponent_gap_ok: gamma.map(|g| g > dim as f64 + delta),
    })
}
