use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::profile::ColonyProfile;
use crate::error::{Error, Result};

/// Per-site active and dormant counts.
///
/// Used both for forward states `(X_i, Y_i)` and for dual block counts
/// `(n_i, m_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub active: Vec<u32>,
    pub dormant: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Configuration {
    pub fn zeros(sites: usize) -> Self {
        Self {
            active: vec![0; sites],
            dormant: vec![0; sites],
        }
    }

    /// The all-`♥` configuration `(N_i, M_i)` everywhere.
    pub fn top(profile: &ColonyProfile) -> Self {
        Self {
            active: profile.active_sizes().to_vec(),
            dormant: profile.dormant_sizes().to_vec(),
        }
    }

    /// Builds from `[X_i, Y_i]` rows.
    pub fn from_pairs(pairs: &[[u32; 2]]) -> Self {
        Self {
            active: pairs.iter().map(|p| p[0]).collect(),
            dormant: pairs.iter().map(|p| p[1]).collect(),
        }
    }

    pub fn sites(&self) -> usize {
        self.active.len()
    }

    pub fn mass(&self) -> u64 {
        self.active
            .iter()
            .chain(&self.dormant)
            .map(|&v| v as u64)
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.mass() == 0
    }

    /// Checks `0 <= X_i <= N_i`, `0 <= Y_i <= M_i`.
    pub fn validate(&self, profile: &ColonyProfile) -> Result<()> {
        if self.sites() != profile.sites() || self.dormant.len() != profile.sites() {
            return Err(Error::Configuration(format!(
                "configuration has {} sites, profile has {}",
                self.sites(),
                profile.sites()
            )));
        }
        for i in 0..self.sites() {
            if self.active[i] > profile.active(i) || self.dormant[i] > profile.dormant(i) {
                return Err(Error::Configuration(format!(
                    "site {i}: ({}, {}) outside box [0,{}]x[0,{}]",
                    self.active[i],
                    self.dormant[i],
                    profile.active(i),
                    profile.dormant(i)
                )));
            }
        }
        Ok(())
    }

    pub fn in_box(&self, profile: &ColonyProfile) -> bool {
        self.validate(profile).is_ok()
    }

    /// Componentwise `self ± increment`, clamped into the box.
    ///
    /// Values above `N_i` (resp. `M_i`) become `N_i` (resp. `M_i`); negative
    /// values become 0.
    pub fn add_sub(&self, increment: &Configuration, sign: Sign, profile: &ColonyProfile) -> Self {
        let combine = |base: &[u32], inc: &[u32], cap: &dyn Fn(usize) -> u32| {
            base.iter()
                .zip(inc)
                .enumerate()
                .map(|(i, (&b, &d))| {
                    let raw = match sign {
                        Sign::Plus => b as i64 + d as i64,
                        Sign::Minus => b as i64 - d as i64,
                    };
                    raw.clamp(0, cap(i) as i64) as u32
                })
                .collect()
        };
        Self {
            active: combine(&self.active, &increment.active, &|i| profile.active(i)),
            dormant: combine(&self.dormant, &increment.dormant, &|i| profile.dormant(i)),
        }
    }
}

/// Initial law of the forward process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialLaw {
    /// Product of `Binomial(N_i, theta) x Binomial(M_i, theta)`.
    Binomial { theta: f64 },
    /// Fixed `[X_i, Y_i]` per site.
    Deterministic { matrix: Vec<[u32; 2]> },
}

impl InitialLaw {
    pub fn validate(&self, profile: &ColonyProfile) -> Result<()> {
        match self {
            InitialLaw::Binomial { theta } => {
                if (0.0..=1.0).contains(theta) {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!(
                        "theta must lie in [0,1], got {theta}"
                    )))
                }
            }
            InitialLaw::Deterministic { matrix } => {
                Configuration::from_pairs(matrix).validate(profile)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        profile: &ColonyProfile,
        rng: &mut R,
    ) -> Result<Configuration> {
        match self {
            InitialLaw::Deterministic { matrix } => {
                let c = Configuration::from_pairs(matrix);
                c.validate(profile)?;
                Ok(c)
            }
            InitialLaw::Binomial { theta } => {
                self.validate(profile)?;
                Ok(sample_binomial(profile, *theta, rng))
            }
        }
    }
}

/// One draw from the product-binomial law with success probability `theta`.
pub fn sample_binomial<R: Rng + ?Sized>(
    profile: &ColonyProfile,
    theta: f64,
    rng: &mut R,
) -> Configuration {
    let mut draw = |n: u32| -> u32 {
        if theta <= 0.0 {
            0
        } else if theta >= 1.0 {
            n
        } else {
            Binomial::new(n as u64, theta)
                .expect("theta in (0,1)")
                .sample(rng) as u32
        }
    };
    let mut out = Configuration::zeros(profile.sites());
    for i in 0..profile.sites() {
        out.active[i] = draw(profile.active(i));
        out.dormant[i] = draw(profile.dormant(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile() -> ColonyProfile {
        ColonyProfile::new(vec![3, 1], vec![2, 4]).unwrap()
    }

    #[test]
    fn add_sub_examples() {
        let p = profile();
        let eta = Configuration::from_pairs(&[[3, 1], [0, 2]]);
        let zero = Configuration::zeros(2);
        assert_eq!(eta.add_sub(&zero, Sign::Plus, &p), eta);
        let unit = Configuration::from_pairs(&[[1, 0], [1, 0]]);
        let plus = eta.add_sub(&unit, Sign::Plus, &p);
        assert_eq!(plus.active, vec![3, 1]);
        let minus = eta.add_sub(&unit, Sign::Minus, &p);
        assert_eq!(minus.active, vec![2, 0]);
    }

    #[test]
    fn degenerate_binomials() {
        let p = profile();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert!(sample_binomial(&p, 0.0, &mut rng).is_zero());
            assert_eq!(sample_binomial(&p, 1.0, &mut rng), Configuration::top(&p));
        }
    }

    #[test]
    fn deterministic_law_checked() {
        let p = profile();
        let law = InitialLaw::Deterministic {
            matrix: vec![[4, 0], [0, 0]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(law.sample(&p, &mut rng).is_err());
        let law = InitialLaw::Deterministic {
            matrix: vec![[2, 1], [1, 3]],
        };
        assert_eq!(
            law.sample(&p, &mut rng).unwrap(),
            Configuration::from_pairs(&[[2, 1], [1, 3]])
        );
    }

    #[test]
    fn binomial_mean_within_four_sigma() {
        let p = ColonyProfile::new(vec![10], vec![4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let sum: u64 = (0..draws)
            .map(|_| sample_binomial(&p, 0.3, &mut rng).active[0] as u64)
            .sum();
        let mean = sum as f64 / draws as f64;
        let sigma = (10.0 * 0.3 * 0.7 / draws as f64).sqrt();
        assert!((mean - 3.0).abs() <= 4.0 * sigma, "mean {mean}");
    }

    proptest! {
        #[test]
        fn add_sub_stays_in_box(
            x in proptest::collection::vec((0u32..=3, 0u32..=4), 2),
            d in proptest::collection::vec((0u32..=6, 0u32..=6), 2),
            plus in any::<bool>(),
        ) {
            let p = ColonyProfile::new(vec![3, 3], vec![4, 4]).unwrap();
            let eta = Configuration {
                active: x.iter().map(|v| v.0).collect(),
                dormant: x.iter().map(|v| v.1).collect(),
            };
            let inc = Configuration {
                active: d.iter().map(|v| v.0).collect(),
                dormant: d.iter().map(|v| v.1).collect(),
            };
            let sign = if plus { Sign::Plus } else { Sign::Minus };
            prop_assert!(eta.add_sub(&inc, sign, &p).in_box(&p));
        }
    }
}
