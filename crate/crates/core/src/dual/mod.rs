//! The dual system of interacting coalescing random walks.
//!
//! Simulation follows the slot mechanics: each active particle at `i` rings
//! at rate `a(i, j)` for every `j` and picks a uniform active slot at `j`,
//! and at rate `lambda` picks a uniform dormant slot at `i`; each dormant
//! particle rings at rate `lambda K_i` and picks a uniform active slot at `i`.
//! Aggregate block-count rates are available separately through
//! [`count_transitions`] for the exact oracle.

pub mod diagnostics;
pub mod pair;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Activity, Configuration, Model};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Particle {
    pub site: usize,
    pub activity: Activity,
    /// Initial lineage labels carried by this particle.
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoalescenceRecord {
    pub time: f64,
    /// Smallest label of the absorbed particle.
    pub absorbed: u32,
    /// Smallest label of the surviving particle.
    pub survivor: u32,
    pub site: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    particles: Vec<Particle>,
    counts: Configuration,
    pub time: f64,
    /// Largest torus norm of any site occupied so far.
    pub gamma: u64,
    pub coalescences: Vec<CoalescenceRecord>,
    initial_count: usize,
}

impl DualState {
    /// Particles labelled `0..k` in the given order.
    pub fn new(model: &Model, particles: &[(usize, Activity)]) -> Result<Self> {
        let mut counts = Configuration::zeros(model.sites());
        for &(site, activity) in particles {
            if site >= model.sites() {
                return Err(Error::DualState(format!("site {site} out of range")));
            }
            match activity {
                Activity::Active => counts.active[site] += 1,
                Activity::Dormant => counts.dormant[site] += 1,
            }
        }
        validate_counts(model, &counts)?;
        let gamma = particles
            .iter()
            .map(|&(s, _)| model.geometry.norm(s))
            .max()
            .unwrap_or(0);
        let particles = particles
            .iter()
            .enumerate()
            .map(|(k, &(site, activity))| Particle {
                site,
                activity,
                labels: vec![k as u32],
            })
            .collect::<Vec<_>>();
        let initial_count = particles.len();
        Ok(Self {
            particles,
            counts,
            time: 0.0,
            gamma,
            coalescences: Vec::new(),
            initial_count,
        })
    }

    /// Expands block counts into particles, site by site, active first.
    pub fn from_counts(model: &Model, counts: &Configuration) -> Result<Self> {
        validate_counts(model, counts)?;
        let mut list = Vec::new();
        for i in 0..model.sites() {
            list.extend(std::iter::repeat_n(
                (i, Activity::Active),
                counts.active[i] as usize,
            ));
            list.extend(std::iter::repeat_n(
                (i, Activity::Dormant),
                counts.dormant[i] as usize,
            ));
        }
        Self::new(model, &list)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Block counts `(n_i, m_i)`.
    pub fn counts(&self) -> &Configuration {
        &self.counts
    }

    pub fn live(&self) -> usize {
        self.particles.len()
    }

    pub fn initial_count(&self) -> usize {
        self.initial_count
    }

    /// Label partition: one block per live particle with its position and mark.
    pub fn partition(&self) -> Vec<Block> {
        let mut blocks: Vec<Block> = self
            .particles
            .iter()
            .map(|p| {
                let mut labels = p.labels.clone();
                labels.sort_unstable();
                Block {
                    labels,
                    site: p.site,
                    activity: p.activity,
                }
            })
            .collect();
        blocks.sort_by(|a, b| a.labels.cmp(&b.labels));
        blocks
    }
}

fn validate_counts(model: &Model, counts: &Configuration) -> Result<()> {
    counts
        .validate(&model.profile)
        .map_err(|e| Error::DualState(format!("exclusion constraint violated: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub labels: Vec<u32>,
    pub site: usize,
    #[serde(rename = "state")]
    pub activity: Activity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualEvent {
    /// An active particle at `from` merges into an active particle at `into`.
    Coalesce {
        from: usize,
        into: usize,
    },
    Migrate {
        from: usize,
        to: usize,
    },
    Sleep {
        site: usize,
    },
    Wake {
        site: usize,
    },
    /// A clock rang on an occupied or own slot.
    NoOp,
}

/// Transitions of the block-count chain with their aggregate rates.
///
/// Coalescences are reported per `(from, into)` site pair.
pub fn count_transitions(model: &Model, counts: &Configuration) -> Vec<(DualEvent, f64)> {
    let p = &model.profile;
    let lambda = model.lambda;
    let mut out = Vec::new();
    for i in 0..model.sites() {
        let (n_i, m_i) = (counts.active[i] as f64, counts.dormant[i] as f64);
        let (cap_n, cap_m) = (p.active(i) as f64, p.dormant(i) as f64);
        if n_i > 0.0 {
            for (j, a) in model.kernel.neighbors(i) {
                let n_j = counts.active[j] as f64;
                let cap_j = p.active(j) as f64;
                if j == i {
                    let rate = n_i * (n_i - 1.0) / 2.0 / cap_n;
                    if rate > 0.0 {
                        out.push((DualEvent::Coalesce { from: i, into: i }, rate));
                    }
                    continue;
                }
                let merge = n_i * a * n_j / cap_j;
                if merge > 0.0 {
                    out.push((DualEvent::Coalesce { from: i, into: j }, merge));
                }
                let migrate = n_i * a * (cap_j - n_j) / cap_j;
                if migrate > 0.0 {
                    out.push((DualEvent::Migrate { from: i, to: j }, migrate));
                }
            }
            let sleep = lambda * n_i * (cap_m - m_i) / cap_m;
            if sleep > 0.0 {
                out.push((DualEvent::Sleep { site: i }, sleep));
            }
        }
        let wake = lambda * (cap_n - n_i) * m_i / cap_m;
        if wake > 0.0 {
            out.push((DualEvent::Wake { site: i }, wake));
        }
    }
    out
}

/// Block counts after applying a transition.
pub fn apply_to_counts(counts: &Configuration, event: DualEvent) -> Configuration {
    let mut next = counts.clone();
    match event {
        DualEvent::Coalesce { from, .. } => next.active[from] -= 1,
        DualEvent::Migrate { from, to } => {
            next.active[from] -= 1;
            next.active[to] += 1;
        }
        DualEvent::Sleep { site } => {
            next.active[site] -= 1;
            next.dormant[site] += 1;
        }
        DualEvent::Wake { site } => {
            next.active[site] += 1;
            next.dormant[site] -= 1;
        }
        DualEvent::NoOp => {}
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSnapshot {
    pub time: f64,
    pub counts: Configuration,
    pub live: usize,
    pub gamma: u64,
    /// Whether `gamma` reached the torus cap `L/2`.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualTrajectory {
    pub snapshots: Vec<DualSnapshot>,
    pub partition: Vec<Block>,
    pub coalescences: Vec<CoalescenceRecord>,
}

pub struct DualSimulator<'a> {
    model: &'a Model,
}

impl<'a> DualSimulator<'a> {
    pub fn new(model: &'a Model) -> Self {
        Self { model }
    }

    fn particle_rate(&self, p: &Particle) -> f64 {
        match p.activity {
            Activity::Active => self.model.c() + self.model.lambda,
            Activity::Dormant => self.model.lambda * self.model.profile.ratio_f64(p.site),
        }
    }

    /// Sum of all particle clock rates, including no-op rings.
    pub fn clock_rate(&self, state: &DualState) -> f64 {
        state.particles.iter().map(|p| self.particle_rate(p)).sum()
    }

    /// Applies one clock ring without advancing time.
    pub fn ring<R: Rng + ?Sized>(&self, state: &mut DualState, rng: &mut R) -> DualEvent {
        let m = self.model;
        let total = self.clock_rate(state);
        let mut u = rng.random::<f64>() * total;
        let mut k = state.particles.len() - 1;
        for (idx, p) in state.particles.iter().enumerate() {
            let r = self.particle_rate(p);
            if u < r {
                k = idx;
                break;
            }
            u -= r;
        }
        let site = state.particles[k].site;
        match state.particles[k].activity {
            Activity::Dormant => {
                let slot = rng.random_range(0..m.profile.active(site));
                if slot < state.counts.active[site] {
                    return DualEvent::NoOp;
                }
                state.particles[k].activity = Activity::Active;
                state.counts.dormant[site] -= 1;
                state.counts.active[site] += 1;
                DualEvent::Wake { site }
            }
            Activity::Active => {
                let w = rng.random::<f64>() * (m.c() + m.lambda);
                if w >= m.c() {
                    let slot = rng.random_range(0..m.profile.dormant(site));
                    if slot < state.counts.dormant[site] {
                        return DualEvent::NoOp;
                    }
                    state.particles[k].activity = Activity::Dormant;
                    state.counts.active[site] -= 1;
                    state.counts.dormant[site] += 1;
                    return DualEvent::Sleep { site };
                }
                let target = m.kernel.targets(site)[m.kernel.sample_index(w)];
                let slot = rng.random_range(0..m.profile.active(target));
                if slot < state.counts.active[target] {
                    // the slot belongs to the `slot`-th active particle at `target`
                    let occupant = state
                        .particles
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| p.site == target && p.activity == Activity::Active)
                        .nth(slot as usize)
                        .map(|(idx, _)| idx)
                        .expect("occupied slot has an owner");
                    if occupant == k {
                        return DualEvent::NoOp;
                    }
                    self.merge(state, k, occupant);
                    DualEvent::Coalesce {
                        from: site,
                        into: target,
                    }
                } else if target == site {
                    DualEvent::NoOp
                } else {
                    state.particles[k].site = target;
                    state.counts.active[site] -= 1;
                    state.counts.active[target] += 1;
                    state.gamma = state.gamma.max(m.geometry.norm(target));
                    DualEvent::Migrate {
                        from: site,
                        to: target,
                    }
                }
            }
        }
    }

    fn merge(&self, state: &mut DualState, absorbed: usize, survivor: usize) {
        let site = state.particles[absorbed].site;
        let moved = state.particles.swap_remove(absorbed);
        // swap_remove moved the last particle into `absorbed`
        let survivor = if survivor == state.particles.len() {
            absorbed
        } else {
            survivor
        };
        state.coalescences.push(CoalescenceRecord {
            time: state.time,
            absorbed: *moved.labels.iter().min().expect("nonempty"),
            survivor: *state.particles[survivor]
                .labels
                .iter()
                .min()
                .expect("nonempty"),
            site,
        });
        state.particles[survivor].labels.extend(moved.labels);
        state.counts.active[site] -= 1;
    }

    /// Draws a holding time and applies one ring.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut DualState, rng: &mut R) -> DualEvent {
        let total = self.clock_rate(state);
        if total <= 0.0 {
            state.time = f64::INFINITY;
            return DualEvent::NoOp;
        }
        let dt: f64 = Exp1.sample(rng);
        state.time += dt / total;
        self.ring(state, rng)
    }

    /// Runs to each time in the sorted `schedule`, recording right-continuous
    /// snapshots. `observer` sees the state after every ring.
    pub fn simulate_with<R, F>(
        &self,
        mut state: DualState,
        schedule: &[f64],
        rng: &mut R,
        mut observer: F,
    ) -> (DualTrajectory, DualState)
    where
        R: Rng + ?Sized,
        F: FnMut(&DualState, DualEvent),
    {
        let cap = self.model.geometry.norm_cap();
        let mut snapshots = Vec::with_capacity(schedule.len());
        let mut next = state.time + self.holding(&state, rng);
        for &t in schedule {
            while next <= t {
                state.time = next;
                let event = self.ring(&mut state, rng);
                observer(&state, event);
                next += self.holding(&state, rng);
            }
            snapshots.push(DualSnapshot {
                time: t,
                counts: state.counts.clone(),
                live: state.live(),
                gamma: state.gamma,
                saturated: self.model.sites() > 1 && state.gamma >= cap,
            });
        }
        let trajectory = DualTrajectory {
            snapshots,
            partition: state.partition(),
            coalescences: state.coalescences.clone(),
        };
        (trajectory, state)
    }

    fn holding<R: Rng + ?Sized>(&self, state: &DualState, rng: &mut R) -> f64 {
        let total = self.clock_rate(state);
        if total <= 0.0 {
            f64::INFINITY
        } else {
            let e: f64 = Exp1.sample(rng);
            e / total
        }
    }

    pub fn simulate<R: Rng + ?Sized>(
        &self,
        state: DualState,
        schedule: &[f64],
        rng: &mut R,
    ) -> (DualTrajectory, DualState) {
        self.simulate_with(state, schedule, rng, |_, _| {})
    }

    /// State of the dual at time `t`.
    pub fn state_at<R: Rng + ?Sized>(&self, state: DualState, t: f64, rng: &mut R) -> DualState {
        self.simulate(state, &[t], rng).1
    }

    /// Rings until one particle remains; `None` after `max_rings` rings.
    pub fn run_until_single<R: Rng + ?Sized>(
        &self,
        mut state: DualState,
        rng: &mut R,
        max_rings: u64,
    ) -> Option<DualState> {
        let mut rings = 0;
        while state.live() > 1 {
            if rings >= max_rings {
                return None;
            }
            self.step(&mut state, rng);
            rings += 1;
        }
        Some(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_exclusion_violation() {
        let m = Model::single_colony(1, 1, 1.0).unwrap();
        assert!(DualState::new(&m, &[(0, Activity::Active), (0, Activity::Active)]).is_err());
        assert!(DualState::new(&m, &[(0, Activity::Active), (0, Activity::Dormant)]).is_ok());
    }

    #[test]
    fn single_particle_stays_singleton() {
        let m = Model::nearest_neighbor_torus(1, 5, vec![2; 5], vec![1; 5], 1.0).unwrap();
        let sim = DualSimulator::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = DualState::new(&m, &[(2, Activity::Active)]).unwrap();
        let (traj, _) = sim.simulate(s, &[1.0, 5.0, 20.0], &mut rng);
        assert!(traj.snapshots.iter().all(|s| s.live == 1));
        assert_eq!(traj.partition.len(), 1);
        assert_eq!(traj.partition[0].labels, vec![0]);
    }

    #[test]
    fn aggregate_rates_two_active_same_site() {
        let m = Model::single_colony(2, 1, 1.0).unwrap();
        let counts = Configuration::from_pairs(&[[2, 0]]);
        let t = count_transitions(&m, &counts);
        let coal: f64 = t
            .iter()
            .filter(|(e, _)| matches!(e, DualEvent::Coalesce { .. }))
            .map(|(_, r)| r)
            .sum();
        assert!((coal - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lone_dormant_only_wakes() {
        let m = Model::single_colony(3, 2, 1.5).unwrap();
        let t = count_transitions(&m, &Configuration::from_pairs(&[[0, 1]]));
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].0, DualEvent::Wake { site: 0 });
        assert!((t[0].1 - 1.5 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn fills_single_colony_then_coalesces_to_one() {
        let m = Model::single_colony(2, 2, 1.0).unwrap();
        let sim = DualSimulator::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s = DualState::from_counts(&m, &Configuration::from_pairs(&[[2, 2]])).unwrap();
            let end = sim
                .run_until_single(s, &mut rng, 1_000_000)
                .expect("absorbs");
            assert_eq!(end.live(), 1);
            assert_eq!(end.partition()[0].labels, vec![0, 1, 2, 3]);
        }
    }

    /// First-event frequencies of the slot mechanics against aggregate rates.
    #[test]
    fn first_event_frequencies_match_aggregate_rates() {
        let m = Model::nearest_neighbor_torus(1, 3, vec![2, 3, 1], vec![2, 1, 2], 0.8).unwrap();
        let counts = Configuration::from_pairs(&[[2, 1], [1, 1], [0, 1]]);
        let start = DualState::from_counts(&m, &counts).unwrap();
        let sim = DualSimulator::new(&m);
        let clock = sim.clock_rate(&start);
        let mut expected: std::collections::BTreeMap<DualEvent, f64> = Default::default();
        for (e, r) in count_transitions(&m, &counts) {
            *expected.entry(e).or_default() += r;
        }
        let draws = 400_000;
        let mut seen: std::collections::BTreeMap<DualEvent, u64> = Default::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..draws {
            let mut s = start.clone();
            *seen.entry(sim.ring(&mut s, &mut rng)).or_default() += 1;
        }
        for (e, rate) in &expected {
            let p = rate / clock;
            let got = *seen.get(e).unwrap_or(&0) as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((got - p).abs() <= 4.0 * sigma, "{e:?}: {got} vs {p}");
        }
        for e in seen.keys() {
            assert!(
                *e == DualEvent::NoOp || expected.contains_key(e),
                "unexpected {e:?}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn exclusion_and_monotone_count(seed in any::<u64>()) {
            let m = Model::nearest_neighbor_torus(1, 4, vec![2, 3, 2, 1], vec![1, 2, 2, 1], 1.0).unwrap();
            let counts = Configuration::from_pairs(&[[2, 1], [1, 2], [1, 0], [1, 1]]);
            let s = DualState::from_counts(&m, &counts).unwrap();
            let sim = DualSimulator::new(&m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ok = true;
            let mut last = s.live();
            sim.simulate_with(s, &[3.0], &mut rng, |st, _| {
                ok &= st.counts().in_box(&m.profile);
                ok &= st.live() <= last;
                ok &= st.live() + st.coalescences.len() == st.initial_count();
                let mut labels: Vec<u32> = st.particles().iter().flat_map(|p| p.labels.clone()).collect();
                labels.sort_unstable();
                ok &= labels == (0..9).collect::<Vec<u32>>();
                last = st.live();
            });
            prop_assert!(ok);
        }
    }
}
