//! Semantic accuracy as a function of the extraction ratio.
//!
//! The raw curve is `θ1·exp(θ2·(1−ξ)) + θ3·exp(−θ4·(1−ξ))` with the tuple
//! substituted verbatim. Optimizers never see the raw curve: they see its
//! running maximum on a uniform grid, clamped to `[0, 1]` and linearly
//! interpolated between nodes, which is nondecreasing by construction.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tuple used by default (fitted to a published semantic transceiver).
pub const DEFAULT_THETA: [f64; 4] = [-6.205e-8, 16.45, 0.9228, -0.06917];

pub const DEFAULT_GRID_STEP: f64 = 1e-4;

/// Bisection tolerance when inverting the envelope.
pub const INVERSION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccuracyError {
    #[error("accuracy {required} is unreachable (envelope maximum {max})")]
    AccuracyUnreachable { required: f64, max: f64 },
    #[error("need at least 4 samples to fit, got {0}")]
    InsufficientSamples(usize),
    #[error("no start of the least-squares fit converged")]
    FitDiverged,
    #[error("invalid sample ({xi}, {eps}): both coordinates must lie in [0, 1]")]
    InvalidSample { xi: f64, eps: f64 },
    #[error("grid step {0} must lie in (0, 1]")]
    InvalidGridStep(f64),
}

/// Raw (unclamped, possibly non-monotone) accuracy curve.
pub fn raw_accuracy(xi: f64, theta: &[f64; 4]) -> f64 {
    let u = 1.0 - xi;
    theta[0] * (theta[1] * u).exp() + theta[2] * (-theta[3] * u).exp()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AccuracyParams {
    theta: [f64; 4],
    #[serde(default = "default_grid_step")]
    grid_step: f64,
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

/// Accuracy model with its tabulated monotone envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AccuracyParams", into = "AccuracyParams")]
pub struct AccuracyModel {
    theta: [f64; 4],
    grid_step: f64,
    envelope: Vec<f64>,
}

impl TryFrom<AccuracyParams> for AccuracyModel {
    type Error = AccuracyError;

    fn try_from(params: AccuracyParams) -> Result<Self, Self::Error> {
        AccuracyModel::with_grid_step(params.theta, params.grid_step)
    }
}

impl From<AccuracyModel> for AccuracyParams {
    fn from(model: AccuracyModel) -> Self {
        AccuracyParams {
            theta: model.theta,
            grid_step: model.grid_step,
        }
    }
}

impl Default for AccuracyModel {
    fn default() -> Self {
        AccuracyModel::new(DEFAULT_THETA)
    }
}

impl AccuracyModel {
    pub fn new(theta: [f64; 4]) -> Self {
        Self::with_grid_step(theta, DEFAULT_GRID_STEP).expect("default grid step is valid")
    }

    pub fn with_grid_step(theta: [f64; 4], grid_step: f64) -> Result<Self, AccuracyError> {
        if !(grid_step > 0.0 && grid_step <= 1.0) {
            return Err(AccuracyError::InvalidGridStep(grid_step));
        }
        let n = (1.0 / grid_step).round().max(1.0) as usize;
        let mut envelope = Vec::with_capacity(n + 1);
        let mut running = f64::NEG_INFINITY;
        for i in 0..=n {
            let xi = i as f64 / n as f64;
            let raw = raw_accuracy(xi, &theta);
            // NaN from overflowing exponentials must not poison the running max.
            if raw.is_finite() {
                running = running.max(raw);
            }
            envelope.push(running.clamp(0.0, 1.0));
        }
        Ok(AccuracyModel {
            theta,
            grid_step,
            envelope,
        })
    }

    pub fn theta(&self) -> [f64; 4] {
        self.theta
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// Tabulated envelope nodes, evenly spaced over `[0, 1]`.
    pub fn envelope(&self) -> &[f64] {
        &self.envelope
    }

    /// Envelope value at `xi` (clamped into `[0, 1]`).
    pub fn accuracy_of(&self, xi: f64) -> f64 {
        let n = self.envelope.len() - 1;
        let x = xi.clamp(0.0, 1.0) * n as f64;
        let i = (x.floor() as usize).min(n);
        if i == n {
            return self.envelope[n];
        }
        let frac = x - i as f64;
        let (lo, hi) = (self.envelope[i], self.envelope[i + 1]);
        lo + frac * (hi - lo)
    }

    /// Largest attainable accuracy, reached at `xi = 1`.
    pub fn max_accuracy(&self) -> f64 {
        *self.envelope.last().expect("envelope is never empty")
    }

    /// Smallest extraction ratio whose envelope accuracy reaches `eps_min`.
    ///
    /// The returned ratio always satisfies `accuracy_of(xi) >= eps_min`; it
    /// exceeds the exact threshold by at most [`INVERSION_TOL`].
    pub fn min_extraction_ratio(&self, eps_min: f64) -> Result<f64, AccuracyError> {
        if eps_min <= self.accuracy_of(0.0) {
            return Ok(0.0);
        }
        let max = self.max_accuracy();
        if eps_min > max {
            return Err(AccuracyError::AccuracyUnreachable {
                required: eps_min,
                max,
            });
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > INVERSION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.accuracy_of(mid) >= eps_min {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Result of a least-squares fit of the raw curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyFit {
    pub theta: [f64; 4],
    pub mse: f64,
}

fn mse(theta: &[f64; 4], samples: &[(f64, f64)]) -> f64 {
    let sum: f64 = samples
        .iter()
        .map(|&(xi, eps)| {
            let r = raw_accuracy(xi, theta) - eps;
            r * r
        })
        .sum();
    sum / samples.len() as f64
}

/// Best (θ1, θ3) for fixed exponents; the curve is linear in those two.
fn linear_coefficients(theta2: f64, theta4: f64, samples: &[(f64, f64)]) -> Option<[f64; 4]> {
    let q = samples.len();
    let design = DMatrix::from_fn(q, 2, |i, j| {
        let u = 1.0 - samples[i].0;
        if j == 0 {
            (theta2 * u).exp()
        } else {
            (-theta4 * u).exp()
        }
    });
    let target = DVector::from_iterator(q, samples.iter().map(|s| s.1));
    let svd = design.svd(true, true);
    let coef = svd.solve(&target, 1e-12).ok()?;
    let theta = [coef[0], theta2, coef[1], theta4];
    theta.iter().all(|t| t.is_finite()).then_some(theta)
}

/// Levenberg-Marquardt with Marquardt diagonal scaling and analytic Jacobian.
fn levenberg_marquardt(start: [f64; 4], samples: &[(f64, f64)]) -> Option<AccuracyFit> {
    const MAX_ITER: usize = 400;
    let mut theta = start;
    let mut cost = mse(&theta, samples);
    if !cost.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITER {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for &(xi, eps) in samples {
            let u = 1.0 - xi;
            let e1 = (theta[1] * u).exp();
            let e2 = (-theta[3] * u).exp();
            let r = theta[0] * e1 + theta[2] * e2 - eps;
            let j = Vector4::new(e1, theta[0] * u * e1, e2, -theta[2] * u * e2);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        if !jtj.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for d in 0..4 {
                damped[(d, d)] += lambda * (jtj[(d, d)] + 1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-jtr))) else {
                lambda *= 4.0;
                continue;
            };
            let trial = [
                theta[0] + step[0],
                theta[1] + step[1],
                theta[2] + step[2],
                theta[3] + step[3],
            ];
            let trial_cost = mse(&trial, samples);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                theta = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-12 || cost < 1e-30 {
                    return Some(AccuracyFit { theta, mse: cost });
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Some(AccuracyFit { theta, mse: cost })
}

/// Fits the raw curve to `(xi, eps)` samples by multi-start damped least squares.
pub fn fit_accuracy_model(samples: &[(f64, f64)]) -> Result<AccuracyFit, AccuracyError> {
    if samples.len() < 4 {
        return Err(AccuracyError::InsufficientSamples(samples.len()));
    }
    if let Some(&(xi, eps)) = samples
        .iter()
        .find(|(xi, eps)| !(0.0..=1.0).contains(xi) || !(0.0..=1.0).contains(eps))
    {
        return Err(AccuracyError::InvalidSample { xi, eps });
    }

    const THETA2_STARTS: [f64; 8] = [0.0, 1.0, 3.0, 6.0, 10.0, 14.0, 17.0, 22.0];
    const THETA4_STARTS: [f64; 7] = [-3.0, -0.5, -0.07, 0.0, 0.5, 2.0, 5.0];

    let mut best: Option<AccuracyFit> = None;
    for &t2 in &THETA2_STARTS {
        for &t4 in &THETA4_STARTS {
            let Some(start) = linear_coefficients(t2, t4, samples) else {
                continue;
            };
            let Some(fit) = levenberg_marquardt(start, samples) else {
                continue;
            };
            if best.map_or(true, |b| fit.mse < b.mse) {
                best = Some(fit);
            }
        }
    }
    best.ok_or(AccuracyError::FitDiverged)
}
