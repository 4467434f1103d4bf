//! Device-to-station association as a capacity-constrained assignment.
//!
//! Each station is expanded into one column per cloudlet, each device gets a
//! private zero-weight dummy column, and the resulting rectangular matrix is
//! solved with the Kuhn-Munkres (Hungarian) method. Devices left on a dummy
//! or on a missing edge are unassociated.
//!
//! Among optimal assignments the one returned is the lexicographically
//! smallest station vector, comparing devices in index order, station
//! indices ascending, and "unassociated" ranked after every station.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kuer::{KuerError, PairSolution};

/// Brute-force oracle limits.
pub const ORACLE_MAX_DEVICES: usize = 8;
pub const ORACLE_MAX_SLOTS: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssocError {
    #[error("instance too large for the brute-force oracle ({devices} devices, {slots} slots)")]
    OracleTooLarge { devices: usize, slots: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationInstance {
    /// `weights[m][n]`: rate of the pair, `None` when the pair is infeasible.
    pub weights: Vec<Vec<Option<f64>>>,
    /// Cloudlets per station.
    pub capacities: Vec<u32>,
}

impl AssociationInstance {
    pub fn n_devices(&self) -> usize {
        self.weights.len()
    }

    pub fn n_stations(&self) -> usize {
        self.capacities.len()
    }

    pub fn n_edges(&self) -> usize {
        self.weights.iter().flatten().filter(|w| w.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(device, station)` pairs sorted by device.
    pub pairs: Vec<(usize, usize)>,
    pub total_value: f64,
}

impl Assignment {
    pub fn station_of(&self, device: usize) -> Option<usize> {
        self.pairs.iter().find(|(m, _)| *m == device).map(|(_, n)| *n)
    }

    /// Checks single association per device, capacities, and that every pair is an edge.
    pub fn is_valid_for(&self, instance: &AssociationInstance) -> bool {
        let mut load = vec![0u32; instance.n_stations()];
        let mut seen = vec![false; instance.n_devices()];
        for &(m, n) in &self.pairs {
            if m >= seen.len() || n >= load.len() || seen[m] || instance.weights[m][n].is_none() {
                return false;
            }
            seen[m] = true;
            load[n] += 1;
        }
        load.iter().zip(&instance.capacities).all(|(l, c)| l <= c)
    }
}

/// Edge weights from per-pair solver results; infeasible pairs get no edge.
pub fn build_instance(
    solutions: &[Vec<Result<PairSolution, KuerError>>],
    capacities: &[u32],
) -> AssociationInstance {
    let weights = solutions
        .iter()
        .map(|row| {
            row.iter()
                .map(|r| match r {
                    Ok(s) if s.feasible => Some(s.gamma),
                    _ => None,
                })
                .collect()
        })
        .collect();
    AssociationInstance {
        weights,
        capacities: capacities.to_vec(),
    }
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`).
fn hungarian_min(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let rows = cost.len();
    debug_assert!(rows <= cols);
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    // p[j]: row (1-based) matched to column j; column 0 is a sentinel.
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; rows];
    for j in 1..=cols {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Optimal pairs for `devices` given remaining station capacities.
fn max_weight_pairs(
    weights: &[Vec<Option<f64>>],
    devices: &[usize],
    capacities: &[u32],
) -> (Vec<(usize, usize)>, f64) {
    if devices.is_empty() {
        return (Vec::new(), 0.0);
    }
    let slots: Vec<usize> = capacities
        .iter()
        .enumerate()
        .flat_map(|(n, &c)| std::iter::repeat_n(n, c as usize))
        .collect();
    let cols = slots.len() + devices.len();
    let cost: Vec<Vec<f64>> = devices
        .iter()
        .map(|&m| {
            let mut row: Vec<f64> = slots
                .iter()
                .map(|&n| -weights[m][n].unwrap_or(0.0))
                .collect();
            row.resize(cols, 0.0);
            row
        })
        .collect();
    let assignment = hungarian_min(&cost, cols);
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (row, &col) in assignment.iter().enumerate() {
        let m = devices[row];
        if let Some(&n) = slots.get(col) {
            if let Some(w) = weights[m][n] {
                pairs.push((m, n));
                total += w;
            }
        }
    }
    (pairs, total)
}

fn tie_tolerance(value: f64) -> f64 {
    1e-9 * value.abs().max(1.0)
}

/// Maximum total weight association under per-device and per-station limits.
pub fn solve_association(instance: &AssociationInstance) -> Assignment {
    let weights = &instance.weights;
    let all: Vec<usize> = (0..instance.n_devices()).collect();
    let (_, optimum) = max_weight_pairs(weights, &all, &instance.capacities);
    let tol = tie_tolerance(optimum);

    // Fix devices one at a time to the smallest station that keeps the optimum.
    let mut caps = instance.capacities.clone();
    let mut pairs = Vec::new();
    let mut fixed_value = 0.0;
    for m in 0..instance.n_devices() {
        let rest = &all[m + 1..];
        for n in 0..instance.n_stations() {
            let Some(w) = weights[m][n] else { continue };
            if caps[n] == 0 {
                continue;
            }
            caps[n] -= 1;
            let (_, rest_value) = max_weight_pairs(weights, rest, &caps);
            if fixed_value + w + rest_value >= optimum - tol {
                pairs.push((m, n));
                fixed_value += w;
                break;
            }
            caps[n] += 1;
        }
    }
    Assignment {
        pairs,
        total_value: fixed_value,
    }
}

/// Exhaustive search, for verification on small instances.
pub fn brute_force_association(instance: &AssociationInstance) -> Result<Assignment, AssocError> {
    let slots: u32 = instance.capacities.iter().sum();
    if instance.n_devices() > ORACLE_MAX_DEVICES || slots > ORACLE_MAX_SLOTS {
        return Err(AssocError::OracleTooLarge {
            devices: instance.n_devices(),
            slots,
        });
    }

    struct Search<'a> {
        instance: &'a AssociationInstance,
        caps: Vec<u32>,
        current: Vec<(usize, usize)>,
        best: Option<(Vec<(usize, usize)>, f64)>,
    }

    impl Search<'_> {
        fn visit(&mut self, m: usize, value: f64) {
            if m == self.instance.n_devices() {
                let improves = match &self.best {
                    None => true,
                    Some((_, b)) => value > b + tie_tolerance(*b),
                };
                if improves {
                    self.best = Some((self.current.clone(), value));
                }
                return;
            }
            for n in 0..self.instance.n_stations() {
                let Some(w) = self.instance.weights[m][n] else {
                    continue;
                };
                if self.caps[n] == 0 {
                    continue;
                }
                self.caps[n] -= 1;
                self.current.push((m, n));
                self.visit(m + 1, value + w);
                self.current.pop();
                self.caps[n] += 1;
            }
            self.visit(m + 1, value);
        }
    }

    let mut search = Search {
        instance,
        caps: instance.capacities.clone(),
        current: Vec::new(),
        best: None,
    };
    search.visit(0, 0.0);
    let (pairs, total_value) = search.best.expect("the empty assignment is always visited");
    Ok(Assignment { pairs, total_value })
}
