//! Factorial-moment duality function, Stirling machinery, moment conversion
//! and Monte Carlo duality harnesses.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dual::{DualSimulator, DualState};
use crate::error::{Error, Result};
use crate::forward::ForwardSimulator;
use crate::model::{ColonyProfile, Configuration, Model};
use crate::replicate::run_replicates;
use crate::rng::experiment_id;
use crate::stats::{pooled_sigma, z_score, MeanVar, Z_THRESHOLD};

/// `x (x-1) ... (x-r+1)`, with `(x)_0 = 1`.
pub fn falling_factorial(x: i64, r: u32) -> i128 {
    (0..r as i64).fold(1i128, |acc, k| acc * (x - k) as i128)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityValue {
    pub value: f64,
    /// Some indicator `n_i <= X_i`, `m_i <= Y_i` failed.
    pub excluded: bool,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact fraction accumulator with a floating fallback on overflow.
struct Fraction {
    exact: Option<(u128, u128)>,
    approx: f64,
}

impl Fraction {
    fn one() -> Self {
        Self {
            exact: Some((1, 1)),
            approx: 1.0,
        }
    }

    fn mul(&mut self, num: u128, den: u128) {
        self.approx *= num as f64 / den as f64;
        if let Some((p, q)) = self.exact {
            let g1 = gcd(num, q).max(1);
            let g2 = gcd(p, den).max(1);
            self.exact = (p / g2)
                .checked_mul(num / g1)
                .zip((q / g1).checked_mul(den / g2));
        }
    }

    fn value(&self) -> f64 {
        match self.exact {
            Some((p, q)) => p as f64 / q as f64,
            None => self.approx,
        }
    }
}

/// `prod_i (X_i)_{n_i}/(N_i)_{n_i} * (Y_i)_{m_i}/(M_i)_{m_i}` with exclusion
/// indicators; only sites carrying dual particles contribute.
pub fn duality_d(
    profile: &ColonyProfile,
    eta: &Configuration,
    xi: &Configuration,
) -> Result<DualityValue> {
    if xi.sites() != profile.sites() || eta.sites() != profile.sites() {
        return Err(Error::Dimension(
            "configuration and profile sizes differ".into(),
        ));
    }
    xi.validate(profile)
        .map_err(|e| Error::DualState(format!("dual counts outside the state space: {e}")))?;
    let mut acc = Fraction::one();
    for i in 0..profile.sites() {
        let (n, m) = (xi.active[i], xi.dormant[i]);
        if n + m == 0 {
            continue;
        }
        if n > eta.active[i] || m > eta.dormant[i] {
            return Ok(DualityValue {
                value: 0.0,
                excluded: true,
            });
        }
        for (x, cap, r) in [
            (eta.active[i], profile.active(i), n),
            (eta.dormant[i], profile.dormant(i), m),
        ] {
            for k in 0..r {
                acc.mul((x - k) as u128, (cap - k) as u128);
            }
        }
    }
    Ok(DualityValue {
        value: acc.value(),
        excluded: false,
    })
}

/// Stirling numbers of the second kind `S(n, j)` for `n <= cap`.
#[derive(Debug, Clone)]
pub struct StirlingTable {
    rows: Vec<Vec<u128>>,
}

pub const DEFAULT_STIRLING_CAP: usize = 20;

impl StirlingTable {
    pub fn new(cap: usize) -> Self {
        let mut rows = vec![vec![1u128]];
        for n in 0..cap {
            let prev = &rows[n];
            let row = (0..=n + 1)
                .map(|j| {
                    let stay = if j <= n { j as u128 * prev[j] } else { 0 };
                    let grow = if j >= 1 { prev[j - 1] } else { 0 };
                    stay + grow
                })
                .collect();
            rows.push(row);
        }
        Self { rows }
    }

    pub fn cap(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, n: usize, j: usize) -> u128 {
        self.rows
            .get(n)
            .and_then(|r| r.get(j))
            .copied()
            .unwrap_or(0)
    }

    pub fn row(&self, n: usize) -> &[u128] {
        &self.rows[n]
    }

    /// Bell number `B_n`.
    pub fn bell(&self, n: usize) -> u128 {
        self.rows[n].iter().sum()
    }
}

/// `lim_t E[X^n Y^m]` for one colony from the factorial-moment expansion
/// `x^n = sum_j S(n,j) (x)_j`, given the limit dual expectation
/// `limit_dual(i, j) = lim_t E^{(i,j)}[D((X,Y); Z*(t))]`.
pub fn raw_moment_limit(
    table: &StirlingTable,
    sizes: (u32, u32),
    exponents: (usize, usize),
    limit_dual: &dyn Fn(u32, u32) -> f64,
) -> Result<f64> {
    let (n, m) = exponents;
    if n == 0 && m == 0 {
        return Err(Error::Parameter(
            "exponents (0,0) carry no information".into(),
        ));
    }
    if n > table.cap() || m > table.cap() {
        return Err(Error::Parameter(format!(
            "exponent exceeds Stirling cap {}",
            table.cap()
        )));
    }
    let (big_n, big_m) = sizes;
    let mut total = 0.0;
    for i in 0..=n.min(big_n as usize) {
        for j in 0..=m.min(big_m as usize) {
            let coeff = table.get(n, i) as f64
                * table.get(m, j) as f64
                * falling_factorial(big_n as i64, i as u32) as f64
                * falling_factorial(big_m as i64, j as u32) as f64;
            if coeff != 0.0 {
                total += coeff * limit_dual(i as u32, j as u32);
            }
        }
    }
    Ok(total)
}

/// Single-colony limit moment using the one-particle absorption split
/// `(P(end active), P(end dormant))`.
pub fn raw_moments_from_dual(
    table: &StirlingTable,
    sizes: (u32, u32),
    initial: (u32, u32),
    exponents: (usize, usize),
    split: (f64, f64),
) -> Result<f64> {
    let (big_n, big_m) = sizes;
    let (x, y) = initial;
    let one_particle = split.0 * x as f64 / big_n as f64 + split.1 * y as f64 / big_m as f64;
    raw_moment_limit(table, sizes, exponents, &|i, j| {
        if i + j == 0 {
            1.0
        } else {
            one_particle
        }
    })
}

fn mixed_radix(dims: &[usize]) -> Vec<usize> {
    let mut strides = Vec::with_capacity(dims.len());
    let mut s = 1;
    for &d in dims {
        strides.push(s);
        s *= d;
    }
    strides
}

/// Applies `matrix` along each axis of a tensor stored in little-endian order.
fn apply_per_axis(values: &[f64], dims: &[usize], matrices: &[DMatrix<f64>]) -> Vec<f64> {
    let strides = mixed_radix(dims);
    let mut cur = values.to_vec();
    for (axis, mat) in matrices.iter().enumerate() {
        let (d, stride) = (dims[axis], strides[axis]);
        let mut next = vec![0.0; cur.len()];
        for base in 0..cur.len() {
            if (base / stride) % d != 0 {
                continue;
            }
            for r in 0..d {
                let mut s = 0.0;
                for c in 0..d {
                    s += mat[(r, c)] * cur[base + c * stride];
                }
                next[base + r * stride] = s;
            }
        }
        cur = next;
    }
    cur
}

fn vandermonde(size: u32) -> DMatrix<f64> {
    let d = size as usize + 1;
    DMatrix::from_fn(d, d, |k, s| (s as f64).powi(k as i32))
}

/// Mixed raw moments `E[prod_c V_c^{k_c}]` for every exponent tuple in the box
/// `prod_c [0, sizes_c]`, from a probability vector over the same box.
pub fn moments_from_distribution(p: &[f64], sizes: &[u32]) -> Vec<f64> {
    let dims: Vec<usize> = sizes.iter().map(|&s| s as usize + 1).collect();
    let mats: Vec<_> = sizes.iter().map(|&s| vandermonde(s)).collect();
    apply_per_axis(p, &dims, &mats)
}

/// Inverts the Kronecker-product Vandermonde system to recover a distribution
/// on `prod_c [0, sizes_c]` from its mixed raw moments.
pub fn distribution_from_moments(moments: &[f64], sizes: &[u32], tol: f64) -> Result<Vec<f64>> {
    let dims: Vec<usize> = sizes.iter().map(|&s| s as usize + 1).collect();
    if moments.len() != dims.iter().product::<usize>() {
        return Err(Error::Dimension(format!(
            "{} moments for a box with {} points",
            moments.len(),
            dims.iter().product::<usize>()
        )));
    }
    if sizes.iter().any(|&s| s > 12) {
        log::warn!("Vandermonde inversion with sizes {sizes:?} is poorly conditioned");
    }
    let inverses = sizes
        .iter()
        .map(|&s| {
            vandermonde(s)
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::Invariant("singular Vandermonde system".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut p = apply_per_axis(moments, &dims, &inverses);
    if let Some(bad) = p.iter().find(|&&v| !(-tol..=1.0 + tol).contains(&v)) {
        return Err(Error::Invariant(format!(
            "recovered probability {bad} outside [0,1]"
        )));
    }
    p.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub sigma: f64,
    pub z: f64,
    pub replicates: u64,
    pub seed: u64,
    pub pass: bool,
}

/// Compares `E^eta[D(Z(t); xi)]` from forward runs against
/// `E^xi[D(eta; Z*(t))]` from dual runs.
pub fn mc_duality_check(
    model: &Model,
    eta: &Configuration,
    xi: &Configuration,
    t: f64,
    replicates: u64,
    seed: u64,
) -> Result<DualityCheck> {
    eta.validate(&model.profile)?;
    let start = duality_d(&model.profile, eta, xi)?.value;
    let dual_start = DualState::from_counts(model, xi)?;
    if t == 0.0 {
        return Ok(DualityCheck {
            lhs: start,
            rhs: start,
            sigma: 0.0,
            z: 0.0,
            replicates,
            seed,
            pass: true,
        });
    }
    let fwd = ForwardSimulator::new(model);
    let lhs_samples = run_replicates(
        seed,
        experiment_id("duality-forward"),
        replicates,
        |_, rng| {
            let end = fwd
                .simulate(eta.clone(), &[t], rng)
                .pop()
                .expect("one snapshot");
            duality_d(&model.profile, &end, xi)
                .expect("valid dual counts")
                .value
        },
    );
    let dual = DualSimulator::new(model);
    let rhs_samples = run_replicates(seed, experiment_id("duality-dual"), replicates, |_, rng| {
        let end = dual.state_at(dual_start.clone(), t, rng);
        duality_d(&model.profile, eta, end.counts())
            .expect("valid dual counts")
            .value
    });
    let (l, r) = (
        MeanVar::from_slice(&lhs_samples),
        MeanVar::from_slice(&rhs_samples),
    );
    let sigma = pooled_sigma(l.std_error(), r.std_error());
    let z = z_score(l.mean, r.mean, sigma);
    Ok(DualityCheck {
        lhs: l.mean,
        rhs: r.mean,
        sigma,
        z,
        replicates,
        seed,
        pass: z.abs() <= Z_THRESHOLD,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratingPoint {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratingCurve {
    pub theta: f64,
    pub points: Vec<GeneratingPoint>,
    /// No grid step decreases by more than the pooled threshold.
    pub monotone: bool,
    /// Estimate at the last grid time.
    pub limit_estimate: f64,
}

/// `E^xi[theta^{|Z*(t)|}]` along a time grid from one set of dual runs.
pub fn equilibrium_generating_check(
    model: &Model,
    xi: &Configuration,
    theta: f64,
    t_grid: &[f64],
    replicates: u64,
    seed: u64,
) -> Result<GeneratingCurve> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Parameter(format!(
            "theta must lie in [0,1], got {theta}"
        )));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let start = DualState::from_counts(model, xi)?;
    let dual = DualSimulator::new(model);
    let runs = run_replicates(
        seed,
        experiment_id("equilibrium-generating"),
        replicates,
        |_, rng| {
            let (traj, _) = dual.simulate(start.clone(), &grid, rng);
            traj.snapshots
                .iter()
                .map(|s| theta.powi(s.live as i32))
                .collect::<Vec<f64>>()
        },
    );
    let points: Vec<GeneratingPoint> = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let acc = runs.iter().fold(MeanVar::default(), |mut acc, r| {
                acc.push(r[k]);
                acc
            });
            GeneratingPoint {
                t,
                mean: acc.mean,
                std_error: acc.std_error(),
            }
        })
        .collect();
    let monotone = points.windows(2).all(|w| {
        w[0].mean - w[1].mean <= Z_THRESHOLD * pooled_sigma(w[0].std_error, w[1].std_error)
    });
    let limit_estimate = points
        .last()
        .map_or(theta.powi(start.live() as i32), |p| p.mean);
    Ok(GeneratingCurve {
        theta,
        points,
        monotone,
        limit_estimate,
    })
}
