use crate::dual::pair::{pair_transitions, validate_pair, Lineage, PairConfig};
use crate::dual::{apply_to_counts, count_transitions, DualEvent};
use crate::duality::duality_d;
use crate::error::{Error, Result};
use crate::model::{ColonyProfile, Configuration, Model};

use super::ExplicitChain;

/// Default cap on forward state-space size.
pub const FORWARD_STATE_CAP: usize = 200_000;

/// Largest particle count for enumerated dual chains.
pub const DUAL_PARTICLE_CAP: u32 = 6;

/// Perturbation of the dual generator used as a sensitivity control: adds
/// `delta` to every positive active-to-dormant rate at `site`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualFault {
    pub site: usize,
    pub delta: f64,
}

/// All box configurations in mixed-radix little-endian order over sites,
/// active count before dormant count.
pub fn enumerate_box(profile: &ColonyProfile) -> Vec<Configuration> {
    let radices: Vec<u32> = (0..profile.sites())
        .flat_map(|i| [profile.active(i) + 1, profile.dormant(i) + 1])
        .collect();
    let total: usize = radices.iter().map(|&r| r as usize).product();
    let mut digits = vec![0u32; radices.len()];
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        out.push(Configuration {
            active: digits.iter().step_by(2).copied().collect(),
            dormant: digits.iter().skip(1).step_by(2).copied().collect(),
        });
        for (d, &r) in digits.iter_mut().zip(&radices) {
            *d += 1;
            if *d < r {
                break;
            }
            *d = 0;
        }
    }
    out
}

fn box_size(profile: &ColonyProfile) -> Option<usize> {
    (0..profile.sites()).try_fold(1usize, |acc, i| {
        acc.checked_mul((profile.active(i) as usize + 1) * (profile.dormant(i) as usize + 1))
    })
}

/// Forward transitions of a configuration with their rates.
pub fn forward_transitions(model: &Model, x: &Configuration) -> Vec<(Configuration, f64)> {
    let p = &model.profile;
    let mut out = Vec::new();
    for i in 0..model.sites() {
        let (n_i, m_i) = (p.active(i) as f64, p.dormant(i) as f64);
        let (x_i, y_i) = (x.active[i] as f64, x.dormant[i] as f64);
        let (mut down, mut up) = (0.0, 0.0);
        for (j, a) in model.kernel.neighbors(i) {
            let (n_j, x_j) = (p.active(j) as f64, x.active[j] as f64);
            down += a * x_i * (n_j - x_j) / n_j;
            up += a * (n_i - x_i) * x_j / n_j;
        }
        let mut push = |da: i32, dd: i32, rate: f64| {
            if rate > 0.0 {
                let mut next = x.clone();
                next.active[i] = (next.active[i] as i32 + da) as u32;
                next.dormant[i] = (next.dormant[i] as i32 + dd) as u32;
                out.push((next, rate));
            }
        };
        push(-1, 0, down);
        push(1, 0, up);
        push(-1, 1, model.lambda * x_i * (m_i - y_i) / m_i);
        push(1, -1, model.lambda * (n_i - x_i) * y_i / m_i);
    }
    out
}

pub fn build_forward_generator(model: &Model, cap: usize) -> Result<ExplicitChain<Configuration>> {
    let size = box_size(&model.profile).unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::CapExceeded { states: size, cap });
    }
    ExplicitChain::from_transitions(enumerate_box(&model.profile), |x| {
        forward_transitions(model, x)
    })
}

/// Dual block counts with at most `max_particles` particles, in the same
/// order as [`enumerate_box`].
pub fn enumerate_dual(profile: &ColonyProfile, max_particles: u32) -> Vec<Configuration> {
    fn recurse(
        profile: &ColonyProfile,
        slot: usize,
        left: u32,
        digits: &mut Vec<u32>,
        out: &mut Vec<Configuration>,
    ) {
        if slot == 2 * profile.sites() {
            out.push(Configuration {
                active: digits.iter().step_by(2).copied().collect(),
                dormant: digits.iter().skip(1).step_by(2).copied().collect(),
            });
            return;
        }
        let site = slot / 2;
        let cap = if slot.is_multiple_of(2) {
            profile.active(site)
        } else {
            profile.dormant(site)
        };
        for v in 0..=cap.min(left) {
            digits.push(v);
            recurse(profile, slot + 1, left - v, digits, out);
            digits.pop();
        }
    }
    let mut out = Vec::new();
    recurse(profile, 0, max_particles, &mut Vec::new(), &mut out);
    let code = |c: &Configuration| -> Vec<u32> {
        let mut digits: Vec<u32> = c
            .active
            .iter()
            .zip(&c.dormant)
            .flat_map(|(&a, &d)| [a, d])
            .collect();
        digits.reverse();
        digits
    };
    out.sort_by_key(code);
    out
}

pub fn dual_transitions(
    model: &Model,
    counts: &Configuration,
    fault: Option<DualFault>,
) -> Vec<(Configuration, f64)> {
    count_transitions(model, counts)
        .into_iter()
        .map(|(event, mut rate)| {
            if let (Some(f), DualEvent::Sleep { site }) = (fault, event) {
                if site == f.site {
                    rate += f.delta;
                }
            }
            (apply_to_counts(counts, event), rate)
        })
        .collect()
}

pub fn build_dual_generator(
    model: &Model,
    max_particles: u32,
    fault: Option<DualFault>,
) -> Result<ExplicitChain<Configuration>> {
    if max_particles > DUAL_PARTICLE_CAP {
        return Err(Error::CapExceeded {
            states: max_particles as usize,
            cap: DUAL_PARTICLE_CAP as usize,
        });
    }
    ExplicitChain::from_transitions(enumerate_dual(&model.profile, max_particles), |c| {
        dual_transitions(model, c, fault)
    })
}

/// Labelled two-particle chain reachable from `(a, b)`.
pub fn build_pair_chain(
    model: &Model,
    a: Lineage,
    b: Lineage,
) -> Result<ExplicitChain<PairConfig>> {
    validate_pair(model, a, b)?;
    ExplicitChain::explore(
        PairConfig::Two(a, b),
        |c| pair_transitions(model, *c),
        FORWARD_STATE_CAP,
    )
}

/// One-particle chain reachable from `start`.
pub fn build_single_chain(model: &Model, start: Lineage) -> Result<ExplicitChain<PairConfig>> {
    ExplicitChain::explore(
        PairConfig::One(start),
        |c| pair_transitions(model, *c),
        FORWARD_STATE_CAP,
    )
}

/// Row-major matrix `D[eta][xi]`.
pub fn duality_matrix(
    profile: &ColonyProfile,
    forward: &[Configuration],
    dual: &[Configuration],
) -> Result<Vec<f64>> {
    let mut d = Vec::with_capacity(forward.len() * dual.len());
    for eta in forward {
        for xi in dual {
            d.push(duality_d(profile, eta, xi)?.value);
        }
    }
    Ok(d)
}

fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

fn check_dims<S: Clone + Eq + std::hash::Hash, T: Clone + Eq + std::hash::Hash>(
    forward: &ExplicitChain<S>,
    dual: &ExplicitChain<T>,
    d: &[f64],
) -> Result<()> {
    if d.len() != forward.len() * dual.len() {
        return Err(Error::Dimension(format!(
            "duality matrix has {} entries, expected {} x {}",
            d.len(),
            forward.len(),
            dual.len()
        )));
    }
    Ok(())
}

/// `max |(L D(., xi))(eta) - (L* D(eta, .))(xi)|` over all pairs.
pub fn generator_criterion_residual(
    forward: &ExplicitChain<Configuration>,
    dual: &ExplicitChain<Configuration>,
    d: &[f64],
) -> Result<f64> {
    check_dims(forward, dual, d)?;
    let (nf, nd) = (forward.len(), dual.len());
    let lhs = forward.apply_right(d, nd);
    let rhs = transpose(&dual.apply_right(&transpose(d, nf, nd), nf), nd, nf);
    Ok(lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `max |E^eta D(Z(t), xi) - E^xi D(eta, Z*(t))|` over all pairs.
pub fn exact_duality_check(
    forward: &ExplicitChain<Configuration>,
    dual: &ExplicitChain<Configuration>,
    d: &[f64],
    t: f64,
    tol: f64,
) -> Result<f64> {
    check_dims(forward, dual, d)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let (nf, nd) = (forward.len(), dual.len());
    let lhs = forward.evolve_functions(d, nd, t, tol);
    let rhs = transpose(
        &dual.evolve_functions(&transpose(d, nf, nd), nf, t, tol),
        nd,
        nf,
    );
    Ok(lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Closed classes of a dual chain holding two or more particles, where
/// coalescence can no longer happen.
pub fn dual_trap_classes(dual: &ExplicitChain<Configuration>) -> Vec<Vec<usize>> {
    dual.closed_classes()
        .into_iter()
        .filter(|c| c.iter().any(|&i| dual.states()[i].mass() >= 2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::forward_total_rate;

    #[test]
    fn forward_small_systems() {
        let m = Model::single_colony(2, 1, 1.0).unwrap();
        let f = build_forward_generator(&m, FORWARD_STATE_CAP).unwrap();
        assert_eq!(f.len(), 6);
        let i = f.index_of(&Configuration::from_pairs(&[[1, 1]])).unwrap();
        assert!((f.exit_rate(i) - 1.5).abs() < 1e-15);
        assert_eq!(f.states()[1], Configuration::from_pairs(&[[1, 0]]));
        assert_eq!(f.states()[3], Configuration::from_pairs(&[[0, 1]]));

        let m = Model::nearest_neighbor_torus(1, 2, vec![1, 1], vec![1, 1], 1.0).unwrap();
        let f = build_forward_generator(&m, FORWARD_STATE_CAP).unwrap();
        assert_eq!(f.len(), 16);
        assert!(f.row_sum_residual() < 1e-14);
        for (k, s) in f.states().iter().enumerate() {
            assert!((f.exit_rate(k) - forward_total_rate(&m, s)).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_cap_enforced() {
        let m = Model::nearest_neighbor_torus(1, 4, vec![5; 4], vec![5; 4], 1.0).unwrap();
        assert!(matches!(
            build_forward_generator(&m, 1000),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn dual_small_systems() {
        let m = Model::single_colony(3, 2, 1.5).unwrap();
        let d = build_dual_generator(&m, 1, None).unwrap();
        assert_eq!(d.len(), 3);
        let a = d.index_of(&Configuration::from_pairs(&[[1, 0]])).unwrap();
        let b = d.index_of(&Configuration::from_pairs(&[[0, 1]])).unwrap();
        assert!((d.rate(a, b) - 1.5).abs() < 1e-15);
        assert!((d.rate(b, a) - 1.5 * 1.5).abs() < 1e-15);

        let m = Model::single_colony(1, 1, 1.0).unwrap();
        let d = build_dual_generator(&m, 2, None).unwrap();
        let pair = d.index_of(&Configuration::from_pairs(&[[1, 1]])).unwrap();
        assert_eq!(d.exit_rate(pair), 0.0);
        assert_eq!(dual_trap_classes(&d), vec![vec![pair]]);
        assert!(build_dual_generator(&m, 7, None).is_err());
    }

    #[test]
    fn dual_enumeration_counts() {
        let p = ColonyProfile::new(vec![2, 2], vec![1, 1]).unwrap();
        let states = enumerate_dual(&p, 2);
        assert!(states.iter().all(|s| s.mass() <= 2 && s.in_box(&p)));
        // (0,0,0,0), four singles, and 4 choose 2 + two doubled actives = 8 pairs
        assert_eq!(states.len(), 1 + 4 + 8);
        assert_eq!(states[0], Configuration::zeros(2));
    }

    #[test]
    fn single_particle_dual_matches_one_particle_chain() {
        let m = Model::nearest_neighbor_torus(1, 3, vec![2, 1, 3], vec![1, 2, 2], 0.7).unwrap();
        let d = build_dual_generator(&m, 1, None).unwrap();
        let one = build_single_chain(&m, Lineage::active(0)).unwrap();
        let counts = |l: Lineage| {
            let mut c = Configuration::zeros(3);
            match l.activity {
                crate::model::Activity::Active => c.active[l.site] = 1,
                crate::model::Activity::Dormant => c.dormant[l.site] = 1,
            }
            c
        };
        assert_eq!(one.len(), 6);
        for (i, s) in one.states().iter().enumerate() {
            for (j, t) in one.states().iter().enumerate() {
                let di = d.index_of(&counts(s.first())).unwrap();
                let dj = d.index_of(&counts(t.first())).unwrap();
                assert!((one.rate(i, j) - d.rate(di, dj)).abs() < 1e-15);
            }
        }
    }
}
