//! Joint knowledge updating and extraction ratio for one device/station pair.
//!
//! Three solvers share the same inner step: once the uploaded set is fixed,
//! the remaining extraction-ratio problem goes to [`crate::monoopt`].
//!
//! - `optimum` enumerates every subset of the mismatched classes;
//! - `efficient` ranks mismatched classes by a two-tier key and only tries
//!   prefixes of that ranking;
//! - `no_sharing` uploads nothing.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accuracy::AccuracyModel;
use crate::monoopt::{solve_reduced, transform_reduced, PolyblockOptions, XI_FLOOR};
use crate::ratetime::{
    semantic_rate_from_sums, shannon_rate, ClassSet, Partition, PartitionSums, TimeBreakdown,
};
use crate::scenario::{KnowledgeClassProfile, Scenario};

/// Subset counts at or above this are enumerated in parallel.
const PARALLEL_ENUMERATION_BITS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KuerError {
    #[error("no feasible knowledge sharing decision for this pair")]
    PairInfeasible,
    #[error("{mismatched} mismatched classes exceed the enumeration cap of {cap}")]
    EnumerationTooLarge { mismatched: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverTag {
    Optimum,
    Efficient,
    NoSharing,
}

impl SolverTag {
    pub const ALL: [SolverTag; 3] = [SolverTag::Optimum, SolverTag::Efficient, SolverTag::NoSharing];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverTag::Optimum => "optimum",
            SolverTag::Efficient => "efficient",
            SolverTag::NoSharing => "no_sharing",
        }
    }
}

impl fmt::Display for SolverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolverTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown solver '{s}' (expected optimum, efficient or no_sharing)"))
    }
}

/// Everything a pair solve needs, borrowed from a scenario.
#[derive(Debug, Clone)]
pub struct PairContext<'a> {
    pub profiles: &'a [KnowledgeClassProfile],
    /// Classes the station already stores.
    pub k_in: ClassSet,
    /// Link rate (bits/s).
    pub rate: f64,
    pub cpu_speed: f64,
    pub rho: f64,
    pub t_max: f64,
    pub eps_min: f64,
    pub accuracy: &'a AccuracyModel,
    /// `None` when the accuracy floor cannot be met at any ratio.
    pub xi_th: Option<f64>,
    pub polyblock: PolyblockOptions,
    pub enumeration_cap: usize,
}

impl<'a> PairContext<'a> {
    pub fn from_scenario(scenario: &'a Scenario, device: usize, station: usize) -> Self {
        let d = &scenario.devices[device];
        let s = &scenario.stations[station];
        let rate = shannon_rate(
            scenario.channel.bandwidth,
            d.tx_power,
            scenario.gains[device][station],
            scenario.channel.noise_power,
        );
        PairContext {
            profiles: &d.required_classes,
            k_in: ClassSet::from_indices(scenario.initial_matched(device, station)),
            rate,
            cpu_speed: s.cpu_speed,
            rho: scenario.params.rho,
            t_max: d.t_max,
            eps_min: d.eps_min,
            accuracy: &scenario.accuracy,
            xi_th: scenario.accuracy.min_extraction_ratio(d.eps_min).ok(),
            polyblock: PolyblockOptions {
                o1: scenario.params.o1,
                o2: scenario.params.o2,
                max_iter: scenario.params.max_iter,
                record_trace: false,
            },
            enumeration_cap: scenario.params.enumeration_cap,
        }
    }

    pub fn n_required(&self) -> usize {
        self.profiles.len()
    }

    /// Required classes the station lacks.
    pub fn mismatched(&self) -> ClassSet {
        ClassSet::full(self.n_required()).difference(self.k_in)
    }

    fn partition(&self, k_up: ClassSet) -> Partition {
        Partition::new(self.n_required(), self.k_in, k_up).expect("k_up drawn from mismatched classes")
    }
}

/// A decision for one pair, with everything needed to re-verify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSolution {
    pub partition: Partition,
    pub xi: f64,
    /// Envelope accuracy at `xi` (1 when nothing is sent semantically).
    pub accuracy: f64,
    /// Generalized effective semantic rate (suts/s).
    pub gamma: f64,
    pub breakdown: TimeBreakdown,
    pub feasible: bool,
    pub solver: Option<SolverTag>,
    /// Number of uploaded-set candidates the solver examined.
    pub subsets_evaluated: usize,
}

/// Evaluates a fixed partition and extraction ratio.
pub fn evaluate_partition(ctx: &PairContext, partition: &Partition, xi: f64) -> PairSolution {
    let sums = PartitionSums::of(ctx.profiles, partition);
    let xi = if sums.semantic { xi } else { 1.0 };
    let accuracy = if sums.semantic {
        ctx.accuracy.accuracy_of(xi)
    } else {
        1.0
    };
    let breakdown = TimeBreakdown::from_sums(&sums, xi, ctx.rate, ctx.cpu_speed, ctx.rho);
    let (breakdown, delay_ok) = match breakdown {
        Ok(b) => (b, b.t_total <= ctx.t_max),
        Err(_) => (
            TimeBreakdown {
                t_total: f64::INFINITY,
                ..Default::default()
            },
            false,
        ),
    };
    let accuracy_ok = !sums.semantic || accuracy >= ctx.eps_min;
    let gamma = if ctx.rate > 0.0 {
        semantic_rate_from_sums(&sums, xi, accuracy, ctx.rate)
    } else {
        0.0
    };
    PairSolution {
        partition: *partition,
        xi,
        accuracy,
        gamma,
        breakdown,
        feasible: delay_ok && accuracy_ok && ctx.rate > 0.0,
        solver: None,
        subsets_evaluated: 1,
    }
}

/// Best extraction ratio for a fixed uploaded set, if any is feasible.
fn solve_subset(ctx: &PairContext, k_up: ClassSet) -> Option<PairSolution> {
    if !(ctx.rate > 0.0) {
        return None;
    }
    let partition = ctx.partition(k_up);
    let sums = PartitionSums::of(ctx.profiles, &partition);
    if !sums.semantic {
        let sol = evaluate_partition(ctx, &partition, 1.0);
        return sol.feasible.then_some(sol);
    }
    let xi_th = ctx.xi_th?;
    let rp = transform_reduced(
        sums,
        ctx.rate,
        ctx.cpu_speed,
        ctx.rho,
        ctx.t_max,
        xi_th,
        ctx.accuracy,
    )
    .ok()?;
    let reduced = solve_reduced(&rp, &ctx.polyblock).ok()?;
    let sol = evaluate_partition(ctx, &partition, reduced.xi);
    debug_assert!(sol.feasible, "reduced solution must verify");
    sol.feasible.then_some(sol)
}

fn better(candidate: &Option<PairSolution>, incumbent: &Option<PairSolution>) -> bool {
    match (candidate, incumbent) {
        (Some(c), Some(i)) => c.gamma > i.gamma,
        (Some(_), None) => true,
        _ => false,
    }
}

fn finish(
    best: Option<PairSolution>,
    tag: SolverTag,
    subsets: usize,
) -> Result<PairSolution, KuerError> {
    best.map(|mut s| {
        s.solver = Some(tag);
        s.subsets_evaluated = subsets;
        s
    })
    .ok_or(KuerError::PairInfeasible)
}

/// Exhaustive search over every subset of mismatched classes.
pub fn solve_pair_optimum(ctx: &PairContext) -> Result<PairSolution, KuerError> {
    let mismatched: Vec<usize> = ctx.mismatched().iter().collect();
    if mismatched.len() > ctx.enumeration_cap {
        return Err(KuerError::EnumerationTooLarge {
            mismatched: mismatched.len(),
            cap: ctx.enumeration_cap,
        });
    }
    let n_subsets = 1usize << mismatched.len();
    let subset = |mask: usize| {
        ClassSet::from_indices(
            mismatched
                .iter()
                .enumerate()
                .filter(|(j, _)| mask & (1 << j) != 0)
                .map(|(_, &i)| i),
        )
    };

    let best = if mismatched.len() >= PARALLEL_ENUMERATION_BITS {
        (0..n_subsets)
            .into_par_iter()
            .map(|mask| (mask, solve_subset(ctx, subset(mask))))
            .reduce(
                || (usize::MAX, None),
                |a, b| {
                    // Larger rate wins; the lower mask breaks ties.
                    let take_b = match (&a.1, &b.1) {
                        (Some(x), Some(y)) => match y.gamma.partial_cmp(&x.gamma) {
                            Some(Ordering::Greater) => true,
                            Some(Ordering::Equal) => b.0 < a.0,
                            _ => false,
                        },
                        (None, Some(_)) => true,
                        _ => false,
                    };
                    if take_b {
                        b
                    } else {
                        a
                    }
                },
            )
            .1
    } else {
        let mut best = None;
        for mask in 0..n_subsets {
            let candidate = solve_subset(ctx, subset(mask));
            if better(&candidate, &best) {
                best = candidate;
            }
        }
        best
    };
    finish(best, SolverTag::Optimum, n_subsets)
}

/// Two-tier ranking of mismatched classes.
///
/// Primary key: raw-to-knowledge data ratio, descending. Exact ties: the
/// estimated semantic-to-bit completion time ratio at the threshold
/// extraction ratio, ascending. Remaining ties: class id.
pub fn two_tier_sort(ctx: &PairContext) -> Vec<usize> {
    let xi = ctx.xi_th.unwrap_or(1.0).max(XI_FLOOR);
    let omega = xi.powf(-ctx.rho);
    let keys = |i: usize| {
        let c = &ctx.profiles[i];
        let phi_b = c.d_task / c.d_knowledge;
        let semantic = (c.d_knowledge + xi * c.d_task) / ctx.rate + omega * c.cycles / ctx.cpu_speed;
        let bit = c.d_task / ctx.rate + c.cycles / ctx.cpu_speed;
        (phi_b, semantic / bit, c.class_id)
    };
    let mut order: Vec<_> = ctx.mismatched().iter().map(|i| (i, keys(i))).collect();
    order.sort_by(|(_, a), (_, b)| {
        b.0.total_cmp(&a.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    order.into_iter().map(|(i, _)| i).collect()
}

/// Linear search over prefixes of the two-tier ranking.
pub fn solve_pair_efficient(ctx: &PairContext) -> Result<PairSolution, KuerError> {
    let order = two_tier_sort(ctx);
    let mut best = None;
    let mut k_up = ClassSet::empty();
    for k in 0..=order.len() {
        if k > 0 {
            k_up.insert(order[k - 1]);
        }
        let candidate = solve_subset(ctx, k_up);
        if better(&candidate, &best) {
            best = candidate;
        }
    }
    finish(best, SolverTag::Efficient, order.len() + 1)
}

/// Semantic transmission over the initially matched classes only.
pub fn solve_pair_no_sharing(ctx: &PairContext) -> Result<PairSolution, KuerError> {
    finish(solve_subset(ctx, ClassSet::empty()), SolverTag::NoSharing, 1)
}

pub fn solve_pair(ctx: &PairContext, solver: SolverTag) -> Result<PairSolution, KuerError> {
    match solver {
        SolverTag::Optimum => solve_pair_optimum(ctx),
        SolverTag::Efficient => solve_pair_efficient(ctx),
        SolverTag::NoSharing => solve_pair_no_sharing(ctx),
    }
}
