//! Two labelled dual particles with aggregate rates, tracking the coalescence
//! time. After coalescence the survivor moves as a single dual particle.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activity, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lineage {
    pub site: usize,
    pub activity: Activity,
}

impl Lineage {
    pub fn active(site: usize) -> Self {
        Self {
            site,
            activity: Activity::Active,
        }
    }

    pub fn dormant(site: usize) -> Self {
        Self {
            site,
            activity: Activity::Dormant,
        }
    }
}

/// Positions of the labelled pair, or of the single survivor after merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PairConfig {
    Two(Lineage, Lineage),
    One(Lineage),
}

impl PairConfig {
    /// Position of the first labelled particle (the survivor after merging).
    pub fn first(&self) -> Lineage {
        match *self {
            PairConfig::Two(a, _) | PairConfig::One(a) => a,
        }
    }

    pub fn coalesced(&self) -> bool {
        matches!(self, PairConfig::One(_))
    }

    /// `(site, activity)` of each live particle.
    pub fn lineages(&self) -> Vec<Lineage> {
        match *self {
            PairConfig::Two(a, b) => vec![a, b],
            PairConfig::One(a) => vec![a],
        }
    }
}

/// Checks that two particles fit the exclusion constraints together.
pub fn validate_pair(model: &Model, a: Lineage, b: Lineage) -> Result<()> {
    for l in [a, b] {
        if l.site >= model.sites() {
            return Err(Error::DualState(format!("site {} out of range", l.site)));
        }
    }
    if a.site == b.site && a.activity == b.activity && model.capacity(a.site, a.activity) < 2 {
        return Err(Error::DualState(format!(
            "two {:?} particles do not fit at site {} of capacity 1",
            a.activity, a.site
        )));
    }
    Ok(())
}

fn single_transitions(model: &Model, l: Lineage, out: &mut Vec<(PairConfig, f64)>) {
    match l.activity {
        Activity::Active => {
            for (j, a) in model.kernel.neighbors(l.site).filter(|&(j, _)| j != l.site) {
                out.push((PairConfig::One(Lineage::active(j)), a));
            }
            out.push((PairConfig::One(Lineage::dormant(l.site)), model.lambda));
        }
        Activity::Dormant => {
            out.push((
                PairConfig::One(Lineage::active(l.site)),
                model.lambda * model.profile.ratio_f64(l.site),
            ));
        }
    }
}

/// Moves of particle `me` given its partner; `rebuild` places the moved
/// particle back into its slot of the ordered pair.
fn member_transitions(
    model: &Model,
    me: Lineage,
    partner: Lineage,
    rebuild: &dyn Fn(Lineage) -> PairConfig,
    out: &mut Vec<(PairConfig, f64)>,
) {
    let p = &model.profile;
    let lambda = model.lambda;
    match me.activity {
        Activity::Active => {
            for (j, a) in model
                .kernel
                .neighbors(me.site)
                .filter(|&(j, _)| j != me.site)
            {
                if partner == Lineage::active(j) {
                    let n_j = p.active(j) as f64;
                    let migrate = a * (1.0 - 1.0 / n_j);
                    if migrate > 0.0 {
                        out.push((rebuild(Lineage::active(j)), migrate));
                    }
                    out.push((PairConfig::One(partner), a / n_j));
                } else {
                    out.push((rebuild(Lineage::active(j)), a));
                }
            }
            let sleep = if partner == Lineage::dormant(me.site) {
                lambda * (1.0 - 1.0 / p.dormant(me.site) as f64)
            } else {
                lambda
            };
            if sleep > 0.0 {
                out.push((rebuild(Lineage::dormant(me.site)), sleep));
            }
        }
        Activity::Dormant => {
            let k = p.ratio_f64(me.site);
            let wake = if partner == Lineage::active(me.site) {
                lambda * (k - 1.0 / p.dormant(me.site) as f64)
            } else {
                lambda * k
            };
            if wake > 0.0 {
                out.push((rebuild(Lineage::active(me.site)), wake));
            }
        }
    }
}

/// All transitions out of a pair configuration with their rates.
pub fn pair_transitions(model: &Model, config: PairConfig) -> Vec<(PairConfig, f64)> {
    let mut out = Vec::new();
    match config {
        PairConfig::One(l) => single_transitions(model, l, &mut out),
        PairConfig::Two(a, b) => {
            if a == b && a.activity == Activity::Active {
                // within-colony coalescence
                out.push((
                    PairConfig::One(a),
                    1.0 / model.profile.active(a.site) as f64,
                ));
            }
            member_transitions(model, a, b, &|x| PairConfig::Two(x, b), &mut out);
            member_transitions(model, b, a, &|x| PairConfig::Two(a, x), &mut out);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOutcome {
    /// Coalescence time, `None` if censored at the horizon.
    pub tau: Option<f64>,
    /// Configuration at each schedule time.
    pub snapshots: Vec<PairConfig>,
}

/// Simulates the pair to the last time of the sorted `schedule`.
pub fn two_particle_simulate<R: Rng + ?Sized>(
    model: &Model,
    a: Lineage,
    b: Lineage,
    schedule: &[f64],
    rng: &mut R,
) -> Result<PairOutcome> {
    validate_pair(model, a, b)?;
    let mut config = PairConfig::Two(a, b);
    let mut time = 0.0;
    let mut tau = None;
    let mut snapshots = Vec::with_capacity(schedule.len());
    let mut moves = pair_transitions(model, config);
    let mut total: f64 = moves.iter().map(|(_, r)| r).sum();
    let mut next = time + holding(total, rng);
    for &t in schedule {
        while next <= t {
            time = next;
            let mut u = rng.random::<f64>() * total;
            let mut chosen = moves[moves.len() - 1].0;
            for (target, rate) in &moves {
                if u < *rate {
                    chosen = *target;
                    break;
                }
                u -= rate;
            }
            if chosen.coalesced() && !config.coalesced() {
                tau = Some(time);
            }
            config = chosen;
            moves = pair_transitions(model, config);
            total = moves.iter().map(|(_, r)| r).sum();
            next = time + holding(total, rng);
        }
        snapshots.push(config);
    }
    Ok(PairOutcome { tau, snapshots })
}

fn holding<R: Rng + ?Sized>(total: f64, rng: &mut R) -> f64 {
    if total <= 0.0 {
        f64::INFINITY
    } else {
        let e: f64 = Exp1.sample(rng);
        e / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_site_actives_need_room() {
        let m = Model::single_colony(1, 3, 1.0).unwrap();
        assert!(validate_pair(&m, Lineage::active(0), Lineage::active(0)).is_err());
        assert!(validate_pair(&m, Lineage::active(0), Lineage::dormant(0)).is_ok());
        assert!(validate_pair(&m, Lineage::dormant(0), Lineage::dormant(0)).is_ok());
    }

    #[test]
    fn colocated_coalescence_hazard() {
        let m = Model::nearest_neighbor_torus(1, 3, vec![5; 3], vec![2; 3], 1.0).unwrap();
        let moves = pair_transitions(&m, PairConfig::Two(Lineage::active(1), Lineage::active(1)));
        let hazard: f64 = moves
            .iter()
            .filter(|(c, _)| c.coalesced())
            .map(|(_, r)| r)
            .sum();
        assert!((hazard - 0.2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_colony_traps_mixed_pair() {
        let m = Model::single_colony(1, 1, 1.0).unwrap();
        let moves = pair_transitions(&m, PairConfig::Two(Lineage::active(0), Lineage::dormant(0)));
        assert!(moves.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = two_particle_simulate(
            &m,
            Lineage::active(0),
            Lineage::dormant(0),
            &[10.0],
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.tau, None);
    }

    #[test]
    fn rates_match_single_particle_after_merge() {
        let m = Model::nearest_neighbor_torus(1, 4, vec![2; 4], vec![3; 4], 0.5).unwrap();
        let one = pair_transitions(&m, PairConfig::One(Lineage::active(0)));
        let total: f64 = one.iter().map(|(_, r)| r).sum();
        assert!((total - (0.5 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn single_colony_eventually_coalesces() {
        let m = Model::single_colony(2, 2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let out = two_particle_simulate(
                &m,
                Lineage::active(0),
                Lineage::dormant(0),
                &[200.0],
                &mut rng,
            )
            .unwrap();
            assert!(out.tau.is_some());
            assert!(out.snapshots[0].coalesced());
        }
    }
}
