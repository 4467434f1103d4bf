//! Monotonic optimization by polyblock outer approximation.
//!
//! [`polyblock_maximize`] is generic over the dimension: it needs an objective
//! that is nondecreasing componentwise on the box `[v_min, v_max]` and a
//! membership oracle for a normal (downward closed) feasible set that
//! contains `v_min`. [`ReducedProblem`] supplies both for the single-variable
//! extraction-ratio problem that remains once the matched class set is fixed,
//! lifted to two dimensions `(ξ, η)` with an auxiliary variable.
//!
//! The delay constraint is not downward closed in `ξ` (decode compute grows
//! as `ξ` shrinks), so the `ξ` range is first restricted to its delay-feasible
//! interval. Inside that interval the only remaining constraint is
//! `η ≤ ln(a·ξ_hi + b) − ln(a·ξ + b)`, which is normal.

use thiserror::Error;

use crate::accuracy::AccuracyModel;
use crate::ratetime::{semantic_rate_from_sums, PartitionSums, TimeBreakdown};

/// Lower limit on the extraction ratio when the accuracy floor is zero.
pub const XI_FLOOR: f64 = 1e-6;

/// Bisection tolerance for the delay-feasible interval.
pub const INTERVAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonoOptError {
    #[error("feasible set is empty")]
    Infeasible,
    #[error("delay budget {0} s is negative")]
    InfeasibleBudget(f64),
    #[error("no semantic classes: rate is the constant {0}")]
    DegenerateConstant(f64),
    #[error("projection anchor is not feasible")]
    BadAnchor,
    #[error("iteration limit reached after {} iterations", .0.iterations)]
    IterationLimit(Box<PolyblockSolution>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyblockOptions {
    /// Relative gap tolerance: stop once `UB <= (1 + o1)·LB`.
    pub o1: f64,
    /// Width at which the projection bisection stops.
    pub o2: f64,
    pub max_iter: usize,
    /// Keep the per-iteration bounds in [`PolyblockSolution::trace`].
    pub record_trace: bool,
}

impl Default for PolyblockOptions {
    fn default() -> Self {
        PolyblockOptions {
            o1: 1e-3,
            o2: 1e-6,
            max_iter: 10_000,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyblockSolution {
    /// Best feasible point found.
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub upper_bound: f64,
    pub lower_bound: f64,
    /// `(UB_i, LB_i)` after each iteration, when requested.
    pub trace: Vec<(f64, f64)>,
}

/// Outcome of a boundary projection along the ray from the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Upper end of the final bisection bracket.
    pub delta: f64,
    /// Lower end of the bracket; always feasible.
    pub delta_feasible: f64,
    /// `v_min + delta_feasible·(v − v_min)`.
    pub point: Vec<f64>,
    /// `v_min + delta·(v − v_min)`; not below the boundary.
    pub outer: Vec<f64>,
}

fn along(v_min: &[f64], v: &[f64], delta: f64) -> Vec<f64> {
    v_min
        .iter()
        .zip(v)
        .map(|(lo, hi)| lo + delta * (hi - lo))
        .collect()
}

/// Bisection for the largest `δ ∈ [0, 1]` keeping `v_min + δ(v − v_min)` feasible.
pub fn project_to_boundary<G>(
    v: &[f64],
    v_min: &[f64],
    feasible: &G,
    o2: f64,
) -> Result<Projection, MonoOptError>
where
    G: Fn(&[f64]) -> bool,
{
    if !feasible(v_min) {
        return Err(MonoOptError::BadAnchor);
    }
    if feasible(v) {
        return Ok(Projection {
            delta: 1.0,
            delta_feasible: 1.0,
            point: v.to_vec(),
            outer: v.to_vec(),
        });
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > o2 {
        let mid = 0.5 * (lo + hi);
        if feasible(&along(v_min, v, mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Projection {
        delta: hi,
        delta_feasible: lo,
        point: along(v_min, v, lo),
        outer: along(v_min, v, hi),
    })
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

/// Adds `child` unless an existing vertex dominates it; drops vertices it dominates.
fn insert_vertex(vertices: &mut Vec<(Vec<f64>, f64)>, child: Vec<f64>, value: f64) {
    if vertices.iter().any(|(w, _)| dominates(w, &child)) {
        return;
    }
    vertices.retain(|(w, _)| !dominates(&child, w));
    vertices.push((child, value));
}

/// Maximizes a nondecreasing `objective` over a normal feasible set in `[v_min, v_max]`.
///
/// Returns the best projected (feasible) point. On success its value is at
/// least `UB / (1 + o1)`.
pub fn polyblock_maximize<F, G>(
    objective: F,
    feasible: G,
    v_min: &[f64],
    v_max: &[f64],
    opts: &PolyblockOptions,
) -> Result<PolyblockSolution, MonoOptError>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> bool,
{
    assert_eq!(v_min.len(), v_max.len(), "box corners differ in dimension");
    if !feasible(v_min) {
        return Err(MonoOptError::Infeasible);
    }

    let mut vertices = vec![(v_max.to_vec(), objective(v_max))];
    let mut upper = vertices[0].1;
    let mut lower = f64::NEG_INFINITY;
    let mut incumbent = v_min.to_vec();
    let mut iterations = 0;
    let mut trace = Vec::new();

    while lower == f64::NEG_INFINITY || upper > (1.0 + opts.o1) * lower {
        if iterations >= opts.max_iter {
            return Err(MonoOptError::IterationLimit(Box::new(PolyblockSolution {
                value: objective(&incumbent),
                point: incumbent,
                iterations,
                upper_bound: upper,
                lower_bound: lower,
                trace,
            })));
        }
        iterations += 1;

        // Lowest index wins ties.
        let best = vertices
            .iter()
            .enumerate()
            .fold(0, |best, (i, (_, val))| if *val > vertices[best].1 { i } else { best });
        let (vertex, _) = vertices.remove(best);

        let proj = project_to_boundary(&vertex, v_min, &feasible, opts.o2)?;
        let value = objective(&proj.point);
        if value > lower {
            lower = value;
            incumbent = proj.point.clone();
        }

        for l in 0..vertex.len() {
            if proj.outer[l] < vertex[l] {
                let mut child = vertex.clone();
                child[l] = proj.outer[l];
                let val = objective(&child);
                insert_vertex(&mut vertices, child, val);
            }
        }
        // A vertex whose outer projection is itself lies on the boundary (to
        // within o2) and is simply dropped.

        // Vertices bounded by the incumbent cannot improve on it.
        vertices.retain(|(_, val)| *val > lower);
        upper = vertices
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(lower);
        if opts.record_trace {
            trace.push((upper, lower));
        }
    }

    Ok(PolyblockSolution {
        value: lower,
        point: incumbent,
        iterations,
        upper_bound: upper,
        lower_bound: lower,
        trace,
    })
}

/// Extraction-ratio problem for a fixed matched set.
#[derive(Debug, Clone)]
pub struct ReducedProblem<'a> {
    pub sums: PartitionSums,
    /// Link rate (bits/s).
    pub rate: f64,
    /// Cloudlet speed (cycles/s).
    pub cpu_speed: f64,
    pub rho: f64,
    pub t_max: f64,
    /// Upload, bit transmission and raw compute time (s).
    pub t_fixed: f64,
    /// `t_max − t_fixed`.
    pub t_budget: f64,
    pub xi_th: f64,
    pub accuracy: &'a AccuracyModel,
}

impl<'a> ReducedProblem<'a> {
    /// Raw data of matched classes, the slope of the denominator.
    pub fn a(&self) -> f64 {
        self.sums.d_task_cu
    }

    /// Raw data of bit-carried classes.
    pub fn b(&self) -> f64 {
        self.sums.d_task_bit
    }

    /// Numerator of the rate, nondecreasing in `xi`.
    pub fn h(&self, xi: f64) -> f64 {
        self.rate * (self.sums.info_cu * self.accuracy.accuracy_of(xi) + self.sums.info_bit)
    }

    /// Semantic rate at `xi`.
    pub fn gamma(&self, xi: f64) -> f64 {
        semantic_rate_from_sums(&self.sums, xi, self.accuracy.accuracy_of(xi), self.rate)
    }

    pub fn breakdown(&self, xi: f64) -> TimeBreakdown {
        TimeBreakdown::from_sums(&self.sums, xi, self.rate, self.cpu_speed, self.rho)
            .expect("xi stays positive inside the reduced problem")
    }

    /// Full deadline check, bit-identical to evaluating the partition directly.
    pub fn delay_ok(&self, xi: f64) -> bool {
        xi > 0.0 && self.breakdown(xi).t_total <= self.t_max
    }

    /// Semantic transmission plus decode time `A·ξ/R + C_S·ξ^-ρ/f`.
    pub fn variable_time(&self, xi: f64) -> f64 {
        self.a() * xi / self.rate + self.sums.cycles_cu * xi.powf(-self.rho) / self.cpu_speed
    }

    /// Log-domain objective `ln h(ξ) + η − ln(a·ξ_hi + b)`.
    pub fn log_objective(&self, v: &[f64], xi_hi: f64) -> f64 {
        self.h(v[0]).ln() + v[1] - (self.a() * xi_hi + self.b()).ln()
    }
}

/// Builds the reduced problem for one pair and partition.
#[allow(clippy::too_many_arguments)]
pub fn transform_reduced<'a>(
    sums: PartitionSums,
    rate: f64,
    cpu_speed: f64,
    rho: f64,
    t_max: f64,
    xi_th: f64,
    accuracy: &'a AccuracyModel,
) -> Result<ReducedProblem<'a>, MonoOptError> {
    if !sums.semantic {
        return Err(MonoOptError::DegenerateConstant(
            rate * sums.info_bit / sums.d_task_bit,
        ));
    }
    let fixed = TimeBreakdown::from_sums(&sums, 1.0, rate, cpu_speed, rho)
        .expect("xi = 1 is never singular")
        .fixed_part();
    let t_budget = t_max - fixed;
    if t_budget < 0.0 {
        return Err(MonoOptError::InfeasibleBudget(t_budget));
    }
    Ok(ReducedProblem {
        sums,
        rate,
        cpu_speed,
        rho,
        t_max,
        t_fixed: fixed,
        t_budget,
        xi_th,
        accuracy,
    })
}

/// Delay-feasible extraction ratios within `[max(ξ_th, XI_FLOOR), 1]`.
///
/// The variable time is convex in `ξ`, so the feasible set is an interval
/// around its minimizer; each end is found by bisection.
pub fn feasible_xi_interval(rp: &ReducedProblem) -> Option<(f64, f64)> {
    let floor = rp.xi_th.max(XI_FLOOR);
    if floor > 1.0 {
        return None;
    }
    let (a, cs) = (rp.a(), rp.sums.cycles_cu);
    let unconstrained = if cs <= 0.0 {
        floor
    } else if a <= 0.0 {
        1.0
    } else {
        (rp.rho * rp.rate * cs / (rp.cpu_speed * a)).powf(1.0 / (1.0 + rp.rho))
    };
    let center = unconstrained.clamp(floor, 1.0);
    if !rp.delay_ok(center) {
        return None;
    }

    let lo = if rp.delay_ok(floor) {
        floor
    } else {
        let (mut bad, mut good) = (floor, center);
        while good - bad > INTERVAL_TOL {
            let mid = 0.5 * (bad + good);
            if rp.delay_ok(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    let hi = if rp.delay_ok(1.0) {
        1.0
    } else {
        let (mut good, mut bad) = (center, 1.0);
        while bad - good > INTERVAL_TOL {
            let mid = 0.5 * (bad + good);
            if rp.delay_ok(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    Some((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSolution {
    pub xi: f64,
    pub gamma: f64,
    pub interval: (f64, f64),
    pub iterations: usize,
    /// `false` when the iteration limit stopped the search early.
    pub converged: bool,
}

/// Solves the reduced problem with the polyblock method.
pub fn solve_reduced(
    rp: &ReducedProblem,
    opts: &PolyblockOptions,
) -> Result<ReducedSolution, MonoOptError> {
    let (lo, hi) = feasible_xi_interval(rp).ok_or(MonoOptError::Infeasible)?;
    let (a, b) = (rp.a(), rp.b());
    let scale = a * hi + b;
    let log_scale = scale.ln();
    debug_assert!(a * lo + b > 0.0);
    let eta_max = log_scale - (a * lo + b).ln();

    let objective = |v: &[f64]| rp.h(v[0]) * v[1].exp() / scale;
    let feasible = |v: &[f64]| {
        v[0] >= lo && v[0] <= hi && v[1] >= 0.0 && v[1] <= log_scale - (a * v[0] + b).ln()
    };

    let (solution, converged) =
        match polyblock_maximize(objective, feasible, &[lo, 0.0], &[hi, eta_max], opts) {
            Ok(s) => (s, true),
            Err(MonoOptError::IterationLimit(s)) => (*s, false),
            Err(e) => return Err(e),
        };
    let xi = solution.point[0];
    Ok(ReducedSolution {
        xi,
        gamma: rp.gamma(xi),
        interval: (lo, hi),
        iterations: solution.iterations,
        converged,
    })
}

/// Exhaustive scan of the rate over the delay-feasible interval.
pub fn grid_oracle(rp: &ReducedProblem, step: f64) -> Result<(f64, f64), MonoOptError> {
    let (lo, hi) = feasible_xi_interval(rp).ok_or(MonoOptError::Infeasible)?;
    let mut best = (hi, rp.gamma(hi));
    let n = ((hi - lo) / step).floor() as usize;
    for i in 0..=n {
        let xi = (lo + i as f64 * step).min(hi);
        let g = rp.gamma(xi);
        if g > best.1 {
            best = (xi, g);
        }
    }
    Ok(best)
}
