//! Translation-invariant migration kernels wrapped onto a torus.
//!
//! A kernel is specified on `Z^d` as a displacement-rate table `a(0, v)` with
//! `a(0, 0) = 1/2`. On the torus every displacement congruent to `v` modulo
//! `L` contributes to the wrapped rate of `v`. Nonzero displacements that wrap
//! onto the origin would turn migration into extra within-colony resampling;
//! they are dropped and reported in [`MigrationKernel::dropped_mass`] so that
//! the center rate stays exactly `1/2`.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::geometry::{max_norm, Geometry};
use crate::error::{Error, Result};

/// Displacement vectors with their rates.
pub type LatticeTable = Vec<(Vec<i64>, f64)>;

/// The within-colony resampling rate `a(0, 0)`.
pub const CENTER_RATE: f64 = 0.5;

/// Upper bound on the number of `Z^d` lattice points enumerated when wrapping.
const MAX_ENUMERATED_POINTS: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `mass` is split evenly over the `2d` unit displacements.
    NearestNeighbor {
        #[serde(default = "default_mass")]
        mass: f64,
    },
    /// Off-center weights proportional to `rho^|v|`.
    Geometric {
        rho: f64,
        #[serde(default = "default_mass")]
        mass: f64,
    },
    /// Off-center weights proportional to `|v|^-exponent`, `exponent > d`.
    PowerLaw {
        exponent: f64,
        #[serde(default = "default_mass")]
        mass: f64,
    },
    /// Explicit `(displacement, rate)` pairs on `Z^d`.
    Explicit { entries: Vec<(Vec<i64>, f64)> },
}

fn default_mass() -> f64 {
    0.5
}

impl KernelSpec {
    pub fn nearest_neighbor() -> Self {
        KernelSpec::NearestNeighbor { mass: 0.5 }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let check_mass = |mass: f64| {
            if mass.is_finite() && mass > 0.0 {
                Ok(())
            } else {
                Err(Error::Kernel(format!(
                    "off-center mass must be positive, got {mass}"
                )))
            }
        };
        match self {
            KernelSpec::NearestNeighbor { mass } => check_mass(*mass),
            KernelSpec::Geometric { rho, mass } => {
                if !(*rho > 0.0 && *rho < 1.0) {
                    return Err(Error::Kernel(format!(
                        "geometric rho must lie in (0,1), got {rho}"
                    )));
                }
                check_mass(*mass)
            }
            KernelSpec::PowerLaw { exponent, mass } => {
                if !(exponent.is_finite() && *exponent > dim as f64) {
                    return Err(Error::Kernel(format!(
                        "power-law exponent must exceed d={dim}, got {exponent}"
                    )));
                }
                check_mass(*mass)
            }
            KernelSpec::Explicit { entries } => {
                let mut seen = std::collections::HashSet::new();
                let mut center = 0.0;
                for (v, rate) in entries {
                    if v.len() != dim {
                        return Err(Error::Kernel(format!(
                            "displacement {v:?} has dimension {}, expected {dim}",
                            v.len()
                        )));
                    }
                    if !(rate.is_finite() && *rate > 0.0) {
                        return Err(Error::Kernel(format!("nonpositive rate {rate} at {v:?}")));
                    }
                    if !seen.insert(v.clone()) {
                        return Err(Error::Kernel(format!("duplicate displacement {v:?}")));
                    }
                    if v.iter().all(|&c| c == 0) {
                        center = *rate;
                    }
                }
                if center != CENTER_RATE {
                    return Err(Error::CenterRate(center));
                }
                Ok(())
            }
        }
    }

    /// Unnormalized off-center weight of a displacement with max-norm `k`.
    fn shell_weight(&self, k: u64) -> f64 {
        match self {
            KernelSpec::Geometric { rho, .. } => rho.powi(k as i32),
            KernelSpec::PowerLaw { exponent, .. } => (k as f64).powf(-exponent),
            _ => 0.0,
        }
    }

    /// Rates `a(0, v)` on `Z^d` for `|v| <= radius`.
    ///
    /// Built-in kernels are normalized so that the off-center mass inside the
    /// radius equals `mass`. The second value is the relative tail mass that
    /// lies beyond the radius before renormalization (zero for finite tables).
    pub fn lattice_table(&self, dim: usize, radius: u64) -> Result<(LatticeTable, f64)> {
        self.validate(dim)?;
        let origin = vec![0i64; dim];
        match self {
            KernelSpec::NearestNeighbor { mass } => {
                let mut out = vec![(origin, CENTER_RATE)];
                if radius >= 1 {
                    for axis in 0..dim {
                        for sign in [1i64, -1] {
                            let mut v = vec![0i64; dim];
                            v[axis] = sign;
                            out.push((v, mass / (2 * dim) as f64));
                        }
                    }
                }
                Ok((out, 0.0))
            }
            KernelSpec::Explicit { entries } => {
                let kept: Vec<_> = entries
                    .iter()
                    .filter(|(v, _)| max_norm(v) <= radius)
                    .cloned()
                    .collect();
                let total: f64 = entries.iter().map(|(_, r)| r).sum();
                let kept_total: f64 = kept.iter().map(|(_, r)| r).sum();
                Ok((kept, (total - kept_total) / total))
            }
            KernelSpec::Geometric { mass, .. } | KernelSpec::PowerLaw { mass, .. } => {
                let points = (2 * radius + 1).checked_pow(dim as u32).map(|p| p as usize);
                if points.is_none_or(|p| p > MAX_ENUMERATED_POINTS) {
                    return Err(Error::Kernel(format!(
                        "truncation radius {radius} in d={dim} enumerates too many points"
                    )));
                }
                let inside: f64 = (1..=radius)
                    .map(|k| shell_count(dim, k) * self.shell_weight(k))
                    .sum();
                if inside.is_nan() || inside <= 0.0 {
                    return Err(Error::Kernel(
                        "kernel has no off-center mass within radius".into(),
                    ));
                }
                let tail = self.tail_weight(dim, radius) / inside;
                let mut out = vec![(origin, CENTER_RATE)];
                for v in lattice_ball(dim, radius) {
                    let k = max_norm(&v);
                    if k == 0 {
                        continue;
                    }
                    out.push((v, mass * self.shell_weight(k) / inside));
                }
                Ok((out, tail))
            }
        }
    }

    fn tail_weight(&self, dim: usize, radius: u64) -> f64 {
        let mut sum = 0.0;
        let limit = radius + 200_000;
        for k in radius + 1..=limit {
            let term = shell_count(dim, k) * self.shell_weight(k);
            sum += term;
            if term < 1e-300 {
                break;
            }
        }
        if let KernelSpec::PowerLaw { exponent, .. } = self {
            // remaining integral of 2d (2k)^(d-1) k^-exponent beyond the loop
            let d = dim as f64;
            sum +=
                2.0 * d * 2f64.powf(d - 1.0) * (limit as f64).powf(d - exponent) / (exponent - d);
        }
        sum
    }
}

/// Number of lattice points of `Z^d` with max-norm exactly `k`.
pub fn shell_count(dim: usize, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let d = dim as i32;
    (2.0 * k as f64 + 1.0).powi(d) - (2.0 * k as f64 - 1.0).powi(d)
}

/// All points of `Z^d` with max-norm at most `radius`.
pub fn lattice_ball(dim: usize, radius: u64) -> Vec<Vec<i64>> {
    let r = radius as i64;
    let mut out = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-r..=r).map(move |c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    out
}

/// One wrapped displacement of the kernel on the torus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelEntry {
    /// Centered torus displacement, components in `(-L/2, L/2]`.
    pub offset: Vec<i64>,
    pub rate: f64,
}

/// Migration kernel `a(i, j) = a(0, j - i)` on a finite torus.
#[derive(Debug, Clone)]
pub struct MigrationKernel {
    geometry: Geometry,
    support: Vec<KernelEntry>,
    total: f64,
    cumulative: Vec<f64>,
    /// `targets[i][k]` is site `i` translated by `support[k].offset`.
    targets: Vec<Vec<usize>>,
    by_offset: HashMap<Vec<i64>, usize>,
    dropped_mass: f64,
    tail_fraction: f64,
}

/// Default truncation radius for wrapping: `8L`.
pub fn default_truncation_radius(geometry: &Geometry) -> u64 {
    8 * geometry.side() as u64
}

/// Wraps a kernel specification onto the torus and validates it.
pub fn build_kernel(
    spec: &KernelSpec,
    geometry: &Geometry,
    truncation_radius: Option<u64>,
) -> Result<MigrationKernel> {
    let radius = truncation_radius.unwrap_or_else(|| default_truncation_radius(geometry));
    if radius == 0 && !matches!(spec, KernelSpec::Explicit { .. }) {
        return Err(Error::Kernel("truncation radius must be at least 1".into()));
    }
    let (table, tail_fraction) = spec.lattice_table(geometry.dim(), radius)?;
    if tail_fraction > 0.0 {
        log::info!(
            "kernel truncated at radius {radius}: relative tail mass {tail_fraction:.3e} dropped"
        );
    }

    let mut wrapped: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    let mut dropped = 0.0;
    for (v, rate) in table {
        let is_center = v.iter().all(|&c| c == 0);
        let w: Vec<i64> = v.iter().map(|&c| geometry.wrap_component(c)).collect();
        if !is_center && w.iter().all(|&c| c == 0) {
            dropped += rate;
            continue;
        }
        *wrapped.entry(w).or_insert(0.0) += rate;
    }
    if dropped > 0.0 {
        log::info!("kernel wrapping dropped self-congruent mass {dropped:.3e}");
    }
    MigrationKernel::from_wrapped(geometry, wrapped, dropped, tail_fraction)
}

impl MigrationKernel {
    fn from_wrapped(
        geometry: &Geometry,
        wrapped: BTreeMap<Vec<i64>, f64>,
        dropped_mass: f64,
        tail_fraction: f64,
    ) -> Result<Self> {
        let origin = vec![0i64; geometry.dim()];
        match wrapped.get(&origin) {
            Some(&c) if c == CENTER_RATE => {}
            Some(&c) => return Err(Error::CenterRate(c)),
            None => return Err(Error::CenterRate(0.0)),
        }
        // center first, then the rest in lexicographic order
        let mut support = vec![KernelEntry {
            offset: origin.clone(),
            rate: CENTER_RATE,
        }];
        support.extend(
            wrapped
                .into_iter()
                .filter(|(v, _)| *v != origin)
                .map(|(offset, rate)| KernelEntry { offset, rate }),
        );

        let reached = reachable_sites(geometry, &support);
        if reached != geometry.sites() {
            return Err(Error::Reducible {
                reached,
                sites: geometry.sites(),
            });
        }

        let mut acc = 0.0;
        let cumulative: Vec<f64> = support
            .iter()
            .map(|e| {
                acc += e.rate;
                acc
            })
            .collect();
        let total = acc;
        let targets = (0..geometry.sites())
            .map(|i| {
                support
                    .iter()
                    .map(|e| geometry.translate(i, &e.offset))
                    .collect()
            })
            .collect();
        let by_offset = support
            .iter()
            .enumerate()
            .map(|(k, e)| (e.offset.clone(), k))
            .collect();
        Ok(Self {
            geometry: *geometry,
            support,
            total,
            cumulative,
            targets,
            by_offset,
            dropped_mass,
            tail_fraction,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Total mass `c = sum_v a(0, v)`.
    pub fn total_rate(&self) -> f64 {
        self.total
    }

    pub fn support(&self) -> &[KernelEntry] {
        &self.support
    }

    /// Sites reachable from `site` in one kernel draw, aligned with [`Self::support`].
    pub fn targets(&self, site: usize) -> &[usize] {
        &self.targets[site]
    }

    /// `(j, a(i, j))` pairs for every support displacement, `j = i` first.
    pub fn neighbors(&self, site: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.targets[site]
            .iter()
            .zip(&self.support)
            .map(|(&j, e)| (j, e.rate))
    }

    /// `a(i, j)`, zero outside the support.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let v = self.geometry.displacement(i, j);
        self.by_offset
            .get(&v)
            .map_or(0.0, |&k| self.support[k].rate)
    }

    /// Maps a uniform draw in `[0, c)` to a support index.
    pub fn sample_index(&self, u: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.support.len() - 1)
    }

    /// Mass of nonzero displacements that wrapped onto the origin and was dropped.
    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    /// Relative kernel mass lying beyond the truncation radius.
    pub fn tail_fraction(&self) -> f64 {
        self.tail_fraction
    }
}

fn reachable_sites(geometry: &Geometry, support: &[KernelEntry]) -> usize {
    let n = geometry.sites();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(s) = queue.pop_front() {
        for e in support.iter().filter(|e| e.rate > 0.0) {
            let t = geometry.translate(s, &e.offset);
            if !seen[t] {
                seen[t] = true;
                count += 1;
                queue.push_back(t);
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbor_line() {
        let g = Geometry::new(1, 8).unwrap();
        let k = build_kernel(&KernelSpec::nearest_neighbor(), &g, None).unwrap();
        assert_eq!(k.rate(0, 0), 0.5);
        assert_eq!(k.rate(0, 1), 0.25);
        assert_eq!(k.rate(0, 7), 0.25);
        assert_eq!(k.rate(0, 2), 0.0);
        assert_eq!(k.total_rate(), 1.0);
        assert_eq!(k.support().len(), 3);
    }

    #[test]
    fn center_rate_enforced() {
        let g = Geometry::new(1, 8).unwrap();
        let spec = KernelSpec::Explicit {
            entries: vec![(vec![0], 0.4), (vec![1], 0.3), (vec![-1], 0.3)],
        };
        let err = build_kernel(&spec, &g, None).unwrap_err();
        assert_eq!(err, Error::CenterRate(0.4));
        assert!(err.to_string().contains("center rate must be 1/2"));
    }

    #[test]
    fn even_support_is_reducible() {
        let g = Geometry::new(1, 8).unwrap();
        let spec = KernelSpec::Explicit {
            entries: vec![(vec![0], 0.5), (vec![2], 0.25), (vec![-2], 0.25)],
        };
        let err = build_kernel(&spec, &g, None).unwrap_err();
        assert!(matches!(
            err,
            Error::Reducible {
                reached: 4,
                sites: 8
            }
        ));
        assert!(err.to_string().contains("kernel not irreducible"));
    }

    #[test]
    fn rejects_nonpositive_rates() {
        let g = Geometry::new(1, 4).unwrap();
        let spec = KernelSpec::Explicit {
            entries: vec![(vec![0], 0.5), (vec![1], 0.0)],
        };
        assert!(matches!(
            build_kernel(&spec, &g, None),
            Err(Error::Kernel(_))
        ));
        let spec = KernelSpec::Geometric {
            rho: 1.5,
            mass: 0.5,
        };
        assert!(build_kernel(&spec, &g, None).is_err());
        let spec = KernelSpec::PowerLaw {
            exponent: 1.0,
            mass: 0.5,
        };
        assert!(build_kernel(&spec, &g, None).is_err());
    }

    #[test]
    fn two_site_torus_merges_neighbors() {
        let g = Geometry::new(1, 2).unwrap();
        let k = build_kernel(&KernelSpec::nearest_neighbor(), &g, None).unwrap();
        assert_eq!(k.rate(0, 1), 0.5);
        assert_eq!(k.total_rate(), 1.0);
        assert_eq!(k.support().len(), 2);
    }

    #[test]
    fn single_colony_keeps_center_only() {
        let g = Geometry::single();
        let k = build_kernel(&KernelSpec::nearest_neighbor(), &g, None).unwrap();
        assert_eq!(k.total_rate(), 0.5);
        assert_eq!(k.dropped_mass(), 0.5);
    }

    #[test]
    fn geometric_wraps_with_center_exact() {
        let g = Geometry::new(2, 5).unwrap();
        let k = build_kernel(
            &KernelSpec::Geometric {
                rho: 0.5,
                mass: 0.5,
            },
            &g,
            Some(12),
        )
        .unwrap();
        assert_eq!(k.rate(3, 3), 0.5);
        let sum: f64 = k.support().iter().map(|e| e.rate).sum();
        assert!((sum - k.total_rate()).abs() <= 1e-12 * k.total_rate());
        // translation invariance
        assert_eq!(k.rate(0, 7), k.rate(5, 12));
    }

    #[test]
    fn sampling_follows_cumulative() {
        let g = Geometry::new(1, 8).unwrap();
        let k = build_kernel(&KernelSpec::nearest_neighbor(), &g, None).unwrap();
        assert_eq!(k.sample_index(0.0), 0);
        assert_eq!(k.sample_index(0.49), 0);
        assert_eq!(k.sample_index(0.5), 1);
        assert_eq!(k.sample_index(0.99), 2);
    }
}
