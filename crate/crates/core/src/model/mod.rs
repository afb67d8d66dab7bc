//! System description: geometry, colony sizes, migration kernel, exchange rate.

pub mod condition;
pub mod config;
pub mod configuration;
pub mod geometry;
pub mod kernel;
pub mod profile;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use configuration::{Configuration, InitialLaw, Sign};
pub use geometry::Geometry;
pub use kernel::{build_kernel, KernelSpec, MigrationKernel};
pub use profile::{ColonyProfile, ProfileSpec};

/// Activity state of an individual or dual particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Activity {
    #[serde(rename = "A")]
    Active,
    #[serde(rename = "D")]
    Dormant,
}

/// A fully specified multi-colony system.
#[derive(Debug, Clone)]
pub struct Model {
    pub geometry: Geometry,
    pub kernel: MigrationKernel,
    pub profile: ColonyProfile,
    /// Active/dormant exchange rate.
    pub lambda: f64,
}

impl Model {
    pub fn new(kernel: MigrationKernel, profile: ColonyProfile, lambda: f64) -> Result<Self> {
        let geometry = *kernel.geometry();
        if profile.sites() != geometry.sites() {
            return Err(Error::Dimension(format!(
                "profile has {} sites, geometry has {}",
                profile.sites(),
                geometry.sites()
            )));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Parameter(format!(
                "exchange rate must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            geometry,
            kernel,
            profile,
            lambda,
        })
    }

    /// One colony with `active` and `dormant` slots.
    pub fn single_colony(active: u32, dormant: u32, lambda: f64) -> Result<Self> {
        let geometry = Geometry::single();
        let kernel = build_kernel(&KernelSpec::nearest_neighbor(), &geometry, None)?;
        Self::new(
            kernel,
            ColonyProfile::new(vec![active], vec![dormant])?,
            lambda,
        )
    }

    /// Nearest-neighbor torus with per-site sizes.
    pub fn nearest_neighbor_torus(
        dim: usize,
        side: usize,
        active: Vec<u32>,
        dormant: Vec<u32>,
        lambda: f64,
    ) -> Result<Self> {
        let geometry = Geometry::new(dim, side)?;
        let kernel = build_kernel(&KernelSpec::nearest_neighbor(), &geometry, None)?;
        Self::new(kernel, ColonyProfile::new(active, dormant)?, lambda)
    }

    pub fn sites(&self) -> usize {
        self.geometry.sites()
    }

    /// Total migration/resampling rate `c` of the kernel.
    pub fn c(&self) -> f64 {
        self.kernel.total_rate()
    }

    /// Thinning envelope `sum_i (c + lambda) N_i`.
    pub fn envelope(&self) -> f64 {
        (self.c() + self.lambda) * self.profile.total_active() as f64
    }

    pub fn capacity(&self, site: usize, activity: Activity) -> u32 {
        match activity {
            Activity::Active => self.profile.active(site),
            Activity::Dormant => self.profile.dormant(site),
        }
    }
}
