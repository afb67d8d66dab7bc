use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `d`-dimensional discrete torus of side `L`.
///
/// Sites are numbered `0..L^d` in little-endian mixed radix: coordinate 0
/// varies fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    dim: usize,
    side: usize,
}

impl Geometry {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 || side == 0 {
            return Err(Error::Geometry(format!(
                "dimension and side length must be positive (d={dim}, L={side})"
            )));
        }
        let sites = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(side));
        match sites {
            Some(n) if n <= u32::MAX as usize => Ok(Self { dim, side }),
            _ => Err(Error::Geometry(format!(
                "L^d overflows for d={dim}, L={side}"
            ))),
        }
    }

    /// Single colony, the `L = 1` special case.
    pub fn single() -> Self {
        Self { dim: 1, side: 1 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Coordinates in `[0, L)^d`.
    pub fn coords(&self, mut site: usize) -> Vec<i64> {
        debug_assert!(site < self.sites());
        let mut out = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            out.push((site % self.side) as i64);
            site /= self.side;
        }
        out
    }

    /// Site index of an arbitrary lattice point, reduced modulo `L`.
    pub fn index(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let l = self.side as i64;
        coords
            .iter()
            .rev()
            .fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(l) as usize)
    }

    /// Reduces one coordinate to the centered representative in `(-L/2, L/2]`.
    pub fn wrap_component(&self, c: i64) -> i64 {
        let l = self.side as i64;
        let r = c.rem_euclid(l);
        if 2 * r > l {
            r - l
        } else {
            r
        }
    }

    /// Centered lift of a site: coordinates in `(-L/2, L/2]^d`.
    pub fn centered(&self, site: usize) -> Vec<i64> {
        self.coords(site)
            .into_iter()
            .map(|c| self.wrap_component(c))
            .collect()
    }

    /// Wrapped displacement `to - from`, each component in `(-L/2, L/2]`.
    pub fn displacement(&self, from: usize, to: usize) -> Vec<i64> {
        self.coords(from)
            .iter()
            .zip(self.coords(to))
            .map(|(a, b)| self.wrap_component(b - a))
            .collect()
    }

    /// Translate `site` by the lattice vector `by`.
    pub fn translate(&self, site: usize, by: &[i64]) -> usize {
        let shifted: Vec<i64> = self
            .coords(site)
            .iter()
            .zip(by)
            .map(|(a, b)| a + b)
            .collect();
        self.index(&shifted)
    }

    /// Max-norm of the wrapped displacement between two sites.
    pub fn distance(&self, a: usize, b: usize) -> u64 {
        max_norm(&self.displacement(a, b))
    }

    /// Max-norm of a site measured from the origin (site 0).
    pub fn norm(&self, site: usize) -> u64 {
        max_norm(&self.centered(site))
    }

    /// Largest norm any site can have on this torus.
    pub fn norm_cap(&self) -> u64 {
        (self.side / 2) as u64
    }
}

pub fn max_norm(v: &[i64]) -> u64 {
    v.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate() {
        assert!(Geometry::new(0, 3).is_err());
        assert!(Geometry::new(2, 0).is_err());
    }

    #[test]
    fn index_coords_bijection() {
        let g = Geometry::new(3, 4).unwrap();
        for s in 0..g.sites() {
            assert_eq!(g.index(&g.coords(s)), s);
            assert_eq!(g.index(&g.centered(s)), s);
        }
    }

    #[test]
    fn self_displacement_is_zero() {
        let g = Geometry::new(2, 5).unwrap();
        for s in 0..g.sites() {
            assert!(g.displacement(s, s).iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn wrapped_norms() {
        let g = Geometry::new(1, 8).unwrap();
        assert_eq!(g.norm(7), 1);
        assert_eq!(g.norm(4), 4);
        assert_eq!(g.distance(1, 7), 2);
        assert_eq!(g.translate(6, &[3]), 1);
        assert_eq!(g.norm_cap(), 4);
    }
}
