use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::geometry::{max_norm, Geometry};
use crate::error::{Error, Result};
use crate::rng::splitmix64;

/// Built-in and explicit colony-size patterns.
///
/// Patterns are defined on all of `Z^d` so the same description can be
/// evaluated on a torus (through centered coordinates) and on a growing ball
/// for the summability diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant {
        active: u32,
        dormant: u32,
    },
    /// Sizes alternate with the parity of the coordinate sum.
    TwoPeriodic {
        active: [u32; 2],
        dormant: [u32; 2],
    },
    /// Independent uniform sizes in inclusive ranges, keyed by `(seed, site)`.
    UniformRange {
        active: [u32; 2],
        dormant: [u32; 2],
        seed: u64,
    },
    /// `N_i = ceil((1 + |i|)^exponent)` with constant dormant size.
    PowerGrowth {
        exponent: f64,
        dormant: u32,
    },
    /// Per-site sizes on the torus, periodically extended to `Z^d`.
    Explicit {
        active: Vec<u32>,
        dormant: Vec<u32>,
    },
}

impl ProfileSpec {
    fn validate(&self) -> Result<()> {
        let positive = |v: u32, what: &str| {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::Profile(format!("{what} size must be at least 1")))
            }
        };
        match self {
            ProfileSpec::Constant { active, dormant } => {
                positive(*active, "active")?;
                positive(*dormant, "dormant")
            }
            ProfileSpec::TwoPeriodic { active, dormant } => {
                active.iter().try_for_each(|&v| positive(v, "active"))?;
                dormant.iter().try_for_each(|&v| positive(v, "dormant"))
            }
            ProfileSpec::UniformRange {
                active, dormant, ..
            } => {
                for (range, what) in [(active, "active"), (dormant, "dormant")] {
                    positive(range[0], what)?;
                    if range[0] > range[1] {
                        return Err(Error::Profile(format!("empty {what} range {range:?}")));
                    }
                }
                Ok(())
            }
            ProfileSpec::PowerGrowth { exponent, dormant } => {
                if !(exponent.is_finite() && *exponent >= 0.0) {
                    return Err(Error::Profile(format!(
                        "growth exponent must be >= 0, got {exponent}"
                    )));
                }
                positive(*dormant, "dormant")
            }
            ProfileSpec::Explicit { active, dormant } => {
                if active.len() != dormant.len() {
                    return Err(Error::Profile(
                        "active and dormant lists differ in length".into(),
                    ));
                }
                active.iter().try_for_each(|&v| positive(v, "active"))?;
                dormant.iter().try_for_each(|&v| positive(v, "dormant"))
            }
        }
    }

    /// Active size at a lattice point of `Z^d`, or `None` for explicit tables
    /// when no torus is given to extend them periodically.
    pub fn active_at(&self, point: &[i64], torus: Option<&Geometry>) -> Option<u64> {
        self.sizes_at(point, torus).map(|(n, _)| n as u64)
    }

    fn sizes_at(&self, point: &[i64], torus: Option<&Geometry>) -> Option<(u32, u32)> {
        Some(match self {
            ProfileSpec::Constant { active, dormant } => (*active, *dormant),
            ProfileSpec::TwoPeriodic { active, dormant } => {
                let parity = point.iter().sum::<i64>().rem_euclid(2) as usize;
                (active[parity], dormant[parity])
            }
            ProfileSpec::UniformRange {
                active,
                dormant,
                seed,
            } => {
                let mut h = splitmix64(*seed);
                for &c in point {
                    h = splitmix64(h ^ c as u64);
                }
                let pick = |range: &[u32; 2], h: u64| {
                    let width = (range[1] - range[0]) as u64 + 1;
                    range[0] + (h % width) as u32
                };
                (pick(active, h), pick(dormant, splitmix64(h)))
            }
            ProfileSpec::PowerGrowth { exponent, dormant } => {
                let r = max_norm(point) as f64;
                ((1.0 + r).powf(*exponent).ceil() as u32, *dormant)
            }
            ProfileSpec::Explicit { active, dormant } => {
                let site = torus?.index(point);
                (*active.get(site)?, *dormant.get(site)?)
            }
        })
    }
}

/// Per-colony active sizes `N_i`, dormant sizes `M_i` and ratios `K_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColonyProfile {
    active: Vec<u32>,
    dormant: Vec<u32>,
    #[serde(skip)]
    ratio: Vec<Ratio<u64>>,
}

impl ColonyProfile {
    pub fn new(active: Vec<u32>, dormant: Vec<u32>) -> Result<Self> {
        if active.len() != dormant.len() || active.is_empty() {
            return Err(Error::Profile(format!(
                "need equal nonempty size lists (got {} and {})",
                active.len(),
                dormant.len()
            )));
        }
        if let Some(i) = (0..active.len()).find(|&i| active[i] == 0 || dormant[i] == 0) {
            return Err(Error::Profile(format!(
                "site {i} has N={} M={}; both must be at least 1",
                active[i], dormant[i]
            )));
        }
        let ratio = active
            .iter()
            .zip(&dormant)
            .map(|(&n, &m)| Ratio::new(n as u64, m as u64))
            .collect();
        Ok(Self {
            active,
            dormant,
            ratio,
        })
    }

    pub fn uniform(sites: usize, active: u32, dormant: u32) -> Result<Self> {
        Self::new(vec![active; sites], vec![dormant; sites])
    }

    /// Evaluates a pattern on every site of the torus.
    pub fn from_spec(spec: &ProfileSpec, geometry: &Geometry) -> Result<Self> {
        spec.validate()?;
        if let ProfileSpec::Explicit { active, .. } = spec {
            if active.len() != geometry.sites() {
                return Err(Error::Profile(format!(
                    "explicit profile lists {} sites, torus has {}",
                    active.len(),
                    geometry.sites()
                )));
            }
        }
        let (active, dormant) = (0..geometry.sites())
            .map(|s| {
                spec.sizes_at(&geometry.centered(s), Some(geometry))
                    .expect("validated pattern")
            })
            .unzip();
        Self::new(active, dormant)
    }

    pub fn sites(&self) -> usize {
        self.active.len()
    }

    pub fn active(&self, site: usize) -> u32 {
        self.active[site]
    }

    pub fn dormant(&self, site: usize) -> u32 {
        self.dormant[site]
    }

    pub fn active_sizes(&self) -> &[u32] {
        &self.active
    }

    pub fn dormant_sizes(&self) -> &[u32] {
        &self.dormant
    }

    /// `K_i = N_i / M_i` exactly.
    pub fn ratio(&self, site: usize) -> Ratio<u64> {
        self.ratio[site]
    }

    pub fn ratio_f64(&self, site: usize) -> f64 {
        self.active[site] as f64 / self.dormant[site] as f64
    }

    pub fn total_active(&self) -> u64 {
        self.active.iter().map(|&n| n as u64).sum()
    }

    pub fn total_capacity(&self) -> u64 {
        self.active
            .iter()
            .zip(&self.dormant)
            .map(|(&n, &m)| (n + m) as u64)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact() {
        let p = ColonyProfile::new(vec![3, 4], vec![2, 6]).unwrap();
        assert_eq!(p.ratio(0), Ratio::new(3, 2));
        assert_eq!(p.ratio(1), Ratio::new(2, 3));
    }

    #[test]
    fn rejects_empty_colonies() {
        assert!(ColonyProfile::new(vec![1, 0], vec![1, 1]).is_err());
        assert!(ColonyProfile::new(vec![1], vec![0]).is_err());
        assert!(ColonyProfile::new(vec![1], vec![1, 2]).is_err());
    }

    #[test]
    fn two_periodic_alternates() {
        let g = Geometry::new(1, 4).unwrap();
        let spec = ProfileSpec::TwoPeriodic {
            active: [2, 5],
            dormant: [1, 3],
        };
        let p = ColonyProfile::from_spec(&spec, &g).unwrap();
        assert_eq!(p.active_sizes(), &[2, 5, 2, 5]);
        assert_eq!(p.dormant_sizes(), &[1, 3, 1, 3]);
    }

    #[test]
    fn power_growth_uses_norm() {
        let g = Geometry::new(1, 8).unwrap();
        let spec = ProfileSpec::PowerGrowth {
            exponent: 1.0,
            dormant: 1,
        };
        let p = ColonyProfile::from_spec(&spec, &g).unwrap();
        assert_eq!(p.active(0), 1);
        assert_eq!(p.active(1), 2);
        assert_eq!(p.active(7), 2);
        assert_eq!(p.active(4), 5);
    }

    #[test]
    fn uniform_range_is_seeded_and_bounded() {
        let g = Geometry::new(2, 4).unwrap();
        let spec = ProfileSpec::UniformRange {
            active: [2, 6],
            dormant: [1, 3],
            seed: 9,
        };
        let a = ColonyProfile::from_spec(&spec, &g).unwrap();
        let b = ColonyProfile::from_spec(&spec, &g).unwrap();
        assert_eq!(a, b);
        assert!(a.active_sizes().iter().all(|&n| (2..=6).contains(&n)));
        assert!(a.dormant_sizes().iter().all(|&m| (1..=3).contains(&m)));
    }

    #[test]
    fn explicit_length_checked() {
        let g = Geometry::new(1, 3).unwrap();
        let spec = ProfileSpec::Explicit {
            active: vec![1, 2],
            dormant: vec![1, 1],
        };
        assert!(ColonyProfile::from_spec(&spec, &g).is_err());
    }
}
