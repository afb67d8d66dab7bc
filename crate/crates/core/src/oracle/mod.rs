//! Explicit continuous-time Markov chains on enumerated state spaces:
//! uniformization, closed classes, stationary laws, absorption probabilities.

mod build;

pub use build::*;

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};

/// Largest block solved with dense linear algebra.
pub const DENSE_SOLVE_CAP: usize = 4000;

/// Largest `lambda * dt` handled in one uniformization chunk.
const CHUNK_MASS: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct ExplicitChain<S> {
    states: Vec<S>,
    index: HashMap<S, usize>,
    /// Off-diagonal rates per row, sorted by column.
    rows: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
    uniformization: f64,
}

impl<S: Clone + Eq + Hash> ExplicitChain<S> {
    /// Builds a chain from a state list and a transition function. Duplicate
    /// targets are merged and self-loops dropped.
    pub fn from_transitions<F>(states: Vec<S>, transitions: F) -> Result<Self>
    where
        F: Fn(&S) -> Vec<(S, f64)>,
    {
        let index: HashMap<S, usize> = states
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        if index.len() != states.len() {
            return Err(Error::Invariant("duplicate states in enumeration".into()));
        }
        let mut rows = Vec::with_capacity(states.len());
        let mut exit = Vec::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for (target, rate) in transitions(s) {
                if rate < 0.0 || !rate.is_finite() {
                    return Err(Error::Invariant(format!("invalid rate {rate}")));
                }
                let j = *index.get(&target).ok_or_else(|| {
                    Error::Invariant("transition leaves the enumerated state space".into())
                })?;
                if j != i && rate > 0.0 {
                    row.push((j, rate));
                }
            }
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, r) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += r,
                    _ => merged.push((j, r)),
                }
            }
            exit.push(merged.iter().map(|e| e.1).sum());
            rows.push(merged);
        }
        let max_exit = exit.iter().copied().fold(0.0, f64::max);
        let uniformization = if max_exit > 0.0 { max_exit * 1.02 } else { 1.0 };
        Ok(Self {
            states,
            index,
            rows,
            exit,
            uniformization,
        })
    }

    /// Explores all states reachable from `start`.
    pub fn explore<F>(start: S, transitions: F, cap: usize) -> Result<Self>
    where
        F: Fn(&S) -> Vec<(S, f64)>,
    {
        let mut states = vec![start.clone()];
        let mut seen: HashMap<S, usize> = HashMap::from([(start, 0)]);
        let mut k = 0;
        while k < states.len() {
            for (target, rate) in transitions(&states[k]) {
                if rate > 0.0 && !seen.contains_key(&target) {
                    if states.len() >= cap {
                        return Err(Error::CapExceeded {
                            states: states.len() + 1,
                            cap,
                        });
                    }
                    seen.insert(target.clone(), states.len());
                    states.push(target);
                }
            }
            k += 1;
        }
        Self::from_transitions(states, transitions)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn index_of(&self, state: &S) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    /// `Q[i][j]` including the diagonal.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return -self.exit[i];
        }
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |k| self.rows[i][k].1)
    }

    pub fn uniformization_rate(&self) -> f64 {
        self.uniformization
    }

    /// Replaces the uniformization constant; must dominate every exit rate.
    pub fn with_uniformization(mut self, rate: f64) -> Result<Self> {
        let max_exit = self.exit.iter().copied().fold(0.0, f64::max);
        if !(rate >= max_exit && rate > 0.0) {
            return Err(Error::Parameter(format!(
                "uniformization {rate} below max exit rate {max_exit}"
            )));
        }
        self.uniformization = rate;
        Ok(self)
    }

    /// Largest absolute row sum of `Q` (zero up to rounding).
    pub fn row_sum_residual(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.exit)
            .map(|(row, &e)| (row.iter().map(|x| x.1).sum::<f64>() - e).abs())
            .fold(0.0, f64::max)
    }

    /// `Q F` for a row-major matrix `F` with `cols` columns.
    pub fn apply_right(&self, f: &[f64], cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for i in 0..self.len() {
            let dst = &mut out[i * cols..(i + 1) * cols];
            for (j, r) in &self.rows[i] {
                let src = &f[j * cols..(j + 1) * cols];
                for c in 0..cols {
                    dst[c] += r * (src[c] - f[i * cols + c]);
                }
            }
        }
        out
    }

    /// `v Q` for a row vector `v`.
    pub fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.len() {
            if v[i] == 0.0 {
                continue;
            }
            out[i] -= v[i] * self.exit[i];
            for (j, r) in &self.rows[i] {
                out[*j] += v[i] * r;
            }
        }
        out
    }

    /// Poisson-weighted sum of powers of `P = I + Q / Lambda`, applied by
    /// `step`, split into chunks small enough to avoid underflow.
    fn uniformize(
        &self,
        mut x: Vec<f64>,
        t: f64,
        tol: f64,
        step: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Vec<f64> {
        if t <= 0.0 {
            return x;
        }
        let lam = self.uniformization;
        let chunks = (lam * t / CHUNK_MASS).ceil().max(1.0);
        let dt = t / chunks;
        let a = lam * dt;
        let chunk_tol = tol / chunks;
        for _ in 0..chunks as usize {
            let mut weight = (-a).exp();
            let mut covered = weight;
            let mut power = x.clone();
            let mut acc: Vec<f64> = power.iter().map(|v| weight * v).collect();
            let mut k = 0u64;
            while 1.0 - covered > chunk_tol && k < 100_000 {
                k += 1;
                let q = step(&power);
                power.iter_mut().zip(&q).for_each(|(p, qv)| *p += qv / lam);
                weight *= a / k as f64;
                covered += weight;
                acc.iter_mut()
                    .zip(&power)
                    .for_each(|(s, p)| *s += weight * p);
            }
            x = acc;
        }
        x
    }

    /// Row `initial` of `exp(tQ)`.
    pub fn transient_distribution(&self, initial: usize, t: f64, tol: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        v[initial] = 1.0;
        self.evolve_distribution(v, t, tol)
    }

    /// `v exp(tQ)` for an arbitrary initial row vector.
    pub fn evolve_distribution(&self, v: Vec<f64>, t: f64, tol: f64) -> Vec<f64> {
        self.uniformize(v, t, tol, |p| self.apply_left(p))
    }

    /// `exp(tQ) F` for a row-major matrix `F` with `cols` columns.
    pub fn evolve_functions(&self, f: &[f64], cols: usize, t: f64, tol: f64) -> Vec<f64> {
        self.uniformize(f.to_vec(), t, tol, |p| self.apply_right(p, cols))
    }

    /// Closed communicating classes, each sorted, ordered by smallest member.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let mut graph = DiGraph::<(), ()>::new();
        let nodes: Vec<_> = (0..self.len()).map(|_| graph.add_node(())).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for (j, _) in row {
                graph.add_edge(nodes[i], nodes[*j], ());
            }
        }
        let mut classes: Vec<Vec<usize>> = tarjan_scc(&graph)
            .into_iter()
            .map(|scc| {
                let mut members: Vec<usize> = scc.into_iter().map(|n| n.index()).collect();
                members.sort_unstable();
                members
            })
            .filter(|members| {
                members.iter().all(|&i| {
                    self.rows[i]
                        .iter()
                        .all(|(j, _)| members.binary_search(j).is_ok())
                })
            })
            .collect();
        classes.sort_by_key(|c| c[0]);
        classes
    }

    /// Stationary law of the chain restricted to a closed class.
    pub fn class_stationary(&self, class: &[usize]) -> Result<Vec<f64>> {
        let n = class.len();
        if n == 1 {
            return Ok(vec![1.0]);
        }
        if n > DENSE_SOLVE_CAP {
            return Err(Error::CapExceeded {
                states: n,
                cap: DENSE_SOLVE_CAP,
            });
        }
        let pos: HashMap<usize, usize> = class.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        // transpose(Q_C) pi = 0 with the last equation replaced by sum(pi) = 1
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (k, &i) in class.iter().enumerate() {
            a[(k, k)] -= self.exit[i];
            for (j, r) in &self.rows[i] {
                a[(pos[j], k)] += r;
            }
        }
        for k in 0..n {
            a[(n - 1, k)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Invariant("singular stationary system".into()))?;
        Ok(pi.iter().copied().collect())
    }

    /// Stationary laws of all closed classes, as full-length vectors.
    pub fn stationary_distributions(&self) -> Result<Vec<ClosedClass>> {
        self.closed_classes()
            .into_iter()
            .map(|members| {
                let local = self.class_stationary(&members)?;
                let mut pi = vec![0.0; self.len()];
                members.iter().zip(&local).for_each(|(&i, &p)| pi[i] = p);
                Ok(ClosedClass {
                    members,
                    stationary: pi,
                })
            })
            .collect()
    }

    /// `absorption[s][c]`: probability that the chain from `s` ends in closed class `c`.
    pub fn absorption_probabilities(&self, classes: &[ClosedClass]) -> Result<Vec<Vec<f64>>> {
        let mut class_of = vec![None; self.len()];
        for (c, class) in classes.iter().enumerate() {
            class.members.iter().for_each(|&i| class_of[i] = Some(c));
        }
        let transient: Vec<usize> = (0..self.len()).filter(|&i| class_of[i].is_none()).collect();
        if transient.len() > DENSE_SOLVE_CAP {
            return Err(Error::CapExceeded {
                states: transient.len(),
                cap: DENSE_SOLVE_CAP,
            });
        }
        let pos: HashMap<usize, usize> =
            transient.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let n = transient.len();
        let mut out: Vec<Vec<f64>> = (0..self.len())
            .map(|i| {
                let mut h = vec![0.0; classes.len()];
                if let Some(c) = class_of[i] {
                    h[c] = 1.0;
                }
                h
            })
            .collect();
        if n == 0 {
            return Ok(out);
        }
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DMatrix::<f64>::zeros(n, classes.len());
        for (k, &i) in transient.iter().enumerate() {
            a[(k, k)] = self.exit[i];
            for (j, r) in &self.rows[i] {
                match (pos.get(j), class_of[*j]) {
                    (Some(&l), _) => a[(k, l)] -= r,
                    (None, Some(c)) => b[(k, c)] += r,
                    (None, None) => unreachable!("every state is transient or closed"),
                }
            }
        }
        let h = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Invariant("singular absorption system".into()))?;
        for (k, &i) in transient.iter().enumerate() {
            out[i] = (0..classes.len()).map(|c| h[(k, c)]).collect();
        }
        Ok(out)
    }

    /// Writes nonzero generator entries as `row col value` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.len() {
            let mut entries: Vec<(usize, f64)> = self.rows[i].clone();
            if self.exit[i] != 0.0 {
                entries.push((i, -self.exit[i]));
            }
            entries.sort_by_key(|e| e.0);
            for (j, v) in entries {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedClass {
    pub members: Vec<usize>,
    /// Full-length vector supported on `members`.
    pub stationary: Vec<f64>,
}

/// Writes a row-major dense matrix as `row col value` lines, skipping zeros.
pub fn write_dense_triplets<W: Write>(m: &[f64], cols: usize, mut w: W) -> std::io::Result<()> {
    for (k, v) in m.iter().enumerate() {
        if *v != 0.0 {
            writeln!(w, "{} {} {v:e}", k / cols, k % cols)?;
        }
    }
    Ok(())
}
