//! Exact simulation of the forward multi-colony process by thinning.
//!
//! Proposals arrive at the constant envelope rate `sum_i (c + lambda) N_i`.
//! A proposal picks a site `i` with probability proportional to `N_i`, then
//! either a kernel source `j` (weight `a(i,j)`) or an exchange (weight
//! `lambda`), and is accepted with the ratio of the true rate to the
//! proposal rate.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::model::{Configuration, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardEventKind {
    /// `X_i -= 1`: an active `♥` at `i` copies a non-`♥` from `j`.
    ResampleDown,
    /// `X_i += 1`.
    ResampleUp,
    /// `(X_i, Y_i) -> (X_i - 1, Y_i + 1)`.
    ExchangeToDormant,
    /// `(X_i, Y_i) -> (X_i + 1, Y_i - 1)`.
    ExchangeToActive,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForwardEvent {
    pub kind: ForwardEventKind,
    pub site: usize,
    /// Kernel source for resampling events.
    pub source: Option<usize>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    pub config: Configuration,
    active_frac: Vec<f64>,
    dormant_frac: Vec<f64>,
    mass: u64,
    pub time: f64,
    pub events: u64,
}

impl ForwardState {
    pub fn new(model: &Model, config: Configuration) -> Self {
        let p = &model.profile;
        let active_frac = (0..p.sites())
            .map(|i| config.active[i] as f64 / p.active(i) as f64)
            .collect();
        let dormant_frac = (0..p.sites())
            .map(|i| config.dormant[i] as f64 / p.dormant(i) as f64)
            .collect();
        let mass = config.mass();
        Self {
            config,
            active_frac,
            dormant_frac,
            mass,
            time: 0.0,
            events: 0,
        }
    }

    pub fn active_fraction(&self, site: usize) -> f64 {
        self.active_frac[site]
    }

    pub fn dormant_fraction(&self, site: usize) -> f64 {
        self.dormant_frac[site]
    }

    /// All-zero or all-top configurations, where every rate vanishes.
    pub fn is_absorbed(&self, model: &Model) -> bool {
        self.mass == 0 || self.mass == model.profile.total_capacity()
    }

    fn shift(&mut self, model: &Model, site: usize, d_active: i32, d_dormant: i32) {
        let p = &model.profile;
        let x = self.config.active[site] as i64 + d_active as i64;
        let y = self.config.dormant[site] as i64 + d_dormant as i64;
        assert!(
            (0..=p.active(site) as i64).contains(&x) && (0..=p.dormant(site) as i64).contains(&y),
            "accepted event leaves the state box at site {site}"
        );
        self.config.active[site] = x as u32;
        self.config.dormant[site] = y as u32;
        self.active_frac[site] = x as f64 / p.active(site) as f64;
        self.dormant_frac[site] = y as f64 / p.dormant(site) as f64;
        self.mass = (self.mass as i64 + d_active as i64 + d_dormant as i64) as u64;
    }
}

/// Exact total transition rate of a configuration, by direct summation.
pub fn forward_total_rate(model: &Model, config: &Configuration) -> f64 {
    let p = &model.profile;
    let mut total = 0.0;
    for i in 0..model.sites() {
        let (n_i, m_i) = (p.active(i) as f64, p.dormant(i) as f64);
        let (x_i, y_i) = (config.active[i] as f64, config.dormant[i] as f64);
        for (j, a) in model.kernel.neighbors(i) {
            let (n_j, x_j) = (p.active(j) as f64, config.active[j] as f64);
            total += a * (x_i * (n_j - x_j) + (n_i - x_i) * x_j) / n_j;
        }
        total += model.lambda * (x_i * (m_i - y_i) + (n_i - x_i) * y_i) / m_i;
    }
    total
}

pub struct ForwardSimulator<'a> {
    model: &'a Model,
    envelope: f64,
    /// Cumulative active sizes for site proposals.
    cumulative_active: Vec<u64>,
}

impl<'a> ForwardSimulator<'a> {
    pub fn new(model: &'a Model) -> Self {
        let mut acc = 0u64;
        let cumulative_active = model
            .profile
            .active_sizes()
            .iter()
            .map(|&n| {
                acc += n as u64;
                acc
            })
            .collect();
        Self {
            model,
            envelope: model.envelope(),
            cumulative_active,
        }
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    /// Rate of accepted proposals implied by the thinning scheme.
    ///
    /// Equal to [`forward_total_rate`] as an algebraic identity.
    pub fn accepted_rate(&self, state: &ForwardState) -> f64 {
        let m = self.model;
        let (c, lambda) = (m.c(), m.lambda);
        let total_active = m.profile.total_active() as f64;
        let mut rate = 0.0;
        for i in 0..m.sites() {
            let site_rate = self.envelope * m.profile.active(i) as f64 / total_active;
            let x_i = state.active_fraction(i);
            let mut migration = 0.0;
            for (j, a) in m.kernel.neighbors(i) {
                let x_j = state.active_fraction(j);
                migration += a / c * (x_i * (1.0 - x_j) + (1.0 - x_i) * x_j);
            }
            let y_i = state.dormant_fraction(i);
            let exchange = x_i * (1.0 - y_i) + (1.0 - x_i) * y_i;
            rate += site_rate * (c / (c + lambda) * migration + lambda / (c + lambda) * exchange);
        }
        rate
    }

    /// Applies the proposal drawn at the current clock value.
    fn propose<R: Rng + ?Sized>(&self, state: &mut ForwardState, rng: &mut R) -> ForwardEvent {
        let m = self.model;
        let pick = rng.random_range(0..*self.cumulative_active.last().expect("nonempty"));
        let i = self.cumulative_active.partition_point(|&c| c <= pick);
        let (c, lambda) = (m.c(), m.lambda);
        let w = rng.random::<f64>() * (c + lambda);
        let u = rng.random::<f64>();
        let x_i = state.active_fraction(i);
        let mut event = ForwardEvent {
            kind: ForwardEventKind::Rejected,
            site: i,
            source: None,
            time: state.time,
        };
        if w < c {
            let k = m.kernel.sample_index(w);
            let j = m.kernel.targets(i)[k];
            let x_j = state.active_fraction(j);
            let down = x_i * (1.0 - x_j);
            let up = (1.0 - x_i) * x_j;
            event.source = Some(j);
            if u < down {
                state.shift(m, i, -1, 0);
                event.kind = ForwardEventKind::ResampleDown;
            } else if u < down + up {
                state.shift(m, i, 1, 0);
                event.kind = ForwardEventKind::ResampleUp;
            }
        } else {
            let y_i = state.dormant_fraction(i);
            let to_dormant = x_i * (1.0 - y_i);
            let to_active = (1.0 - x_i) * y_i;
            if u < to_dormant {
                state.shift(m, i, -1, 1);
                event.kind = ForwardEventKind::ExchangeToDormant;
            } else if u < to_dormant + to_active {
                state.shift(m, i, 1, -1);
                event.kind = ForwardEventKind::ExchangeToActive;
            }
        }
        state.events += 1;
        event
    }

    fn holding<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / self.envelope
    }

    /// Advances the clock by one envelope holding time and applies one proposal.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut ForwardState, rng: &mut R) -> ForwardEvent {
        state.time += self.holding(rng);
        self.propose(state, rng)
    }

    /// Runs to `horizon`, recording the right-continuous state at each time of
    /// the sorted `schedule`. `observer` sees every proposal after it is applied.
    pub fn simulate_with<R, F>(
        &self,
        initial: Configuration,
        schedule: &[f64],
        rng: &mut R,
        mut observer: F,
    ) -> Vec<Configuration>
    where
        R: Rng + ?Sized,
        F: FnMut(&ForwardState, &ForwardEvent),
    {
        debug_assert!(schedule.windows(2).all(|w| w[0] <= w[1]));
        let mut state = ForwardState::new(self.model, initial);
        let mut out = Vec::with_capacity(schedule.len());
        let mut next = if state.is_absorbed(self.model) {
            f64::INFINITY
        } else {
            self.holding(rng)
        };
        for &t in schedule {
            while next <= t {
                state.time = next;
                let event = self.propose(&mut state, rng);
                observer(&state, &event);
                next = if state.is_absorbed(self.model) {
                    f64::INFINITY
                } else {
                    next + self.holding(rng)
                };
            }
            out.push(state.config.clone());
        }
        out
    }

    pub fn simulate<R: Rng + ?Sized>(
        &self,
        initial: Configuration,
        schedule: &[f64],
        rng: &mut R,
    ) -> Vec<Configuration> {
        self.simulate_with(initial, schedule, rng, |_, _| {})
    }

    /// Runs until absorption; `Some(true)` for the all-top state, `None` if
    /// `max_events` proposals pass first.
    pub fn run_until_absorbed<R: Rng + ?Sized>(
        &self,
        initial: Configuration,
        rng: &mut R,
        max_events: u64,
    ) -> Option<bool> {
        let mut state = ForwardState::new(self.model, initial);
        while !state.is_absorbed(self.model) {
            if state.events >= max_events {
                return None;
            }
            self.propose(&mut state, rng);
        }
        Some(state.mass != 0)
    }
}
