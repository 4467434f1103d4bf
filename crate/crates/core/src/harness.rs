//! Parameter sweeps over random scenarios and CSV output.
//!
//! Every trial draws one scenario from `derive_seed(seed, trial)`. The
//! swept value is then written into that scenario, so a trial sees the same
//! geometry, fading and class profiles at every sweep point and for every
//! solver.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{build_instance, solve_association, Assignment};
use crate::kuer::{solve_pair, KuerError, PairContext, PairSolution, SolverTag};
use crate::scenario::{derive_seed, generate_scenario, Scenario, ScenarioConfig, ScenarioError};

pub const CSV_HEADER: &str = "param,value,solver,trial,seed,total_rate,n_associated,runtime_ms";

pub const PRESET_NAMES: [&str; 6] = ["fig4", "fig5", "fig6", "fig7", "fig8", "fig9"];

pub const DEFAULT_TRIALS: usize = 100;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("failed to write {path}: {source}")]
    WriteFailed {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Scenario fields a sweep can override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParam {
    CpuSpeed,
    Bandwidth,
    EpsMin,
    TMax,
    NCloudlets,
    DKnowledge,
}

impl SweptParam {
    pub const ALL: [SweptParam; 6] = [
        SweptParam::CpuSpeed,
        SweptParam::Bandwidth,
        SweptParam::EpsMin,
        SweptParam::TMax,
        SweptParam::NCloudlets,
        SweptParam::DKnowledge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweptParam::CpuSpeed => "cpu_speed",
            SweptParam::Bandwidth => "bandwidth",
            SweptParam::EpsMin => "eps_min",
            SweptParam::TMax => "t_max",
            SweptParam::NCloudlets => "n_cloudlets",
            SweptParam::DKnowledge => "d_knowledge",
        }
    }

    fn check_value(self, value: f64) -> Result<(), HarnessError> {
        let ok = match self {
            SweptParam::EpsMin => (0.0..=1.0).contains(&value),
            SweptParam::NCloudlets => value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64,
            SweptParam::DKnowledge => value >= 0.0 && value.is_finite(),
            _ => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(HarnessError::InvalidSweep(format!(
                "value {value} is out of range for {self}"
            )))
        }
    }

    /// Writes `value` into every device, station or class the parameter covers.
    pub fn apply(self, scenario: &mut Scenario, value: f64) {
        match self {
            SweptParam::CpuSpeed => scenario.stations.iter_mut().for_each(|s| s.cpu_speed = value),
            SweptParam::Bandwidth => scenario.channel.bandwidth = value,
            SweptParam::EpsMin => scenario.devices.iter_mut().for_each(|d| d.eps_min = value),
            SweptParam::TMax => scenario.devices.iter_mut().for_each(|d| d.t_max = value),
            SweptParam::NCloudlets => scenario
                .stations
                .iter_mut()
                .for_each(|s| s.n_cloudlets = value as u32),
            SweptParam::DKnowledge => scenario
                .devices
                .iter_mut()
                .flat_map(|d| d.required_classes.iter_mut())
                .for_each(|c| c.d_knowledge = value),
        }
    }
}

impl fmt::Display for SweptParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweptParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweptParam::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweptParam::ALL.iter().map(|p| p.as_str()).collect();
                HarnessError::InvalidSweep(format!(
                    "unknown parameter '{s}' (expected one of: {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: ScenarioConfig,
    /// One of the [`SweptParam`] names.
    pub param: String,
    pub values: Vec<f64>,
    pub solvers: Vec<SolverTag>,
    pub trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| {
            ScenarioError::Parse {
                path: path.display().to_string(),
                source,
            }
            .into()
        })
    }

    pub fn validate(&self) -> Result<SweptParam, HarnessError> {
        let param: SweptParam = self.param.parse()?;
        if self.values.is_empty() {
            return Err(HarnessError::InvalidSweep("value list is empty".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::InvalidSweep("trials must be at least 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(HarnessError::InvalidSweep("no solvers selected".into()));
        }
        for &v in &self.values {
            param.check_value(v)?;
        }
        self.scenario.validate()?;
        Ok(param)
    }
}

/// Named sweep setups. Small-network sweeps run all three solvers; the
/// large-network ones skip exhaustive search, whose cost grows as `2^K`.
pub fn preset(name: &str) -> Result<SweepConfig, HarnessError> {
    let small = SolverTag::ALL.to_vec();
    let large = vec![SolverTag::Efficient, SolverTag::NoSharing];
    let (scenario, param, values, solvers) = match name {
        "fig4" => (
            ScenarioConfig::scenario1(),
            SweptParam::CpuSpeed,
            vec![0.5e9, 1e9, 2e9, 4e9, 8e9],
            small,
        ),
        "fig5" => (
            ScenarioConfig::scenario1(),
            SweptParam::Bandwidth,
            vec![5e6, 10e6, 20e6, 30e6, 40e6],
            small,
        ),
        "fig6" => (
            ScenarioConfig::scenario1(),
            SweptParam::EpsMin,
            vec![0.70, 0.75, 0.80, 0.85, 0.90],
            small,
        ),
        "fig7" => (
            ScenarioConfig::scenario2(),
            SweptParam::TMax,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0],
            large,
        ),
        "fig8" => (
            ScenarioConfig::scenario2(),
            SweptParam::NCloudlets,
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            large,
        ),
        "fig9" => (
            ScenarioConfig::scenario2(),
            SweptParam::DKnowledge,
            vec![5e6, 20e6, 40e6, 60e6, 80e6],
            large,
        ),
        _ => {
            return Err(HarnessError::InvalidSweep(format!(
                "unknown preset '{name}' (valid presets: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(SweepConfig {
        scenario,
        param: param.as_str().to_string(),
        values,
        solvers,
        trials: DEFAULT_TRIALS,
        seed: 0,
    })
}

/// Outcome of solving one scenario end to end.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub total_rate: f64,
    pub assignment: Assignment,
    /// `pairs[m][n]`: the per-pair decision (or why there is none).
    pub pairs: Vec<Vec<Result<PairSolution, KuerError>>>,
}

/// Solves every device/station pair with `solver`, then associates.
pub fn run_point(scenario: &Scenario, solver: SolverTag) -> PointOutcome {
    let pairs: Vec<Vec<_>> = (0..scenario.devices.len())
        .map(|m| {
            (0..scenario.stations.len())
                .map(|n| solve_pair(&PairContext::from_scenario(scenario, m, n), solver))
                .collect()
        })
        .collect();
    let capacities: Vec<u32> = scenario.stations.iter().map(|s| s.n_cloudlets).collect();
    let assignment = solve_association(&build_instance(&pairs, &capacities));
    PointOutcome {
        total_rate: assignment.total_value,
        assignment,
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub solver: SolverTag,
    pub trial: usize,
    pub seed: u64,
    /// suts/s
    pub total_rate: f64,
    pub n_associated: usize,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Rows of one solver at one value, in trial order.
    pub fn series(&self, solver: SolverTag, value: f64) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.solver == solver && r.value == value)
            .collect()
    }

    pub fn mean_rate(&self, solver: SolverTag, value: f64) -> f64 {
        let s = self.series(solver, value);
        s.iter().map(|r| r.total_rate).sum::<f64>() / s.len().max(1) as f64
    }
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult, HarnessError> {
    let param = cfg.validate()?;
    let tasks: Vec<(usize, f64)> = (0..cfg.trials)
        .flat_map(|t| cfg.values.iter().map(move |&v| (t, v)))
        .collect();
    let chunks = tasks
        .par_iter()
        .map(|&(trial, value)| {
            let seed = derive_seed(cfg.seed, trial as u64);
            let mut scenario = generate_scenario(&cfg.scenario, seed)?;
            param.apply(&mut scenario, value);
            Ok(cfg
                .solvers
                .iter()
                .map(|&solver| {
                    let start = Instant::now();
                    let out = run_point(&scenario, solver);
                    SweepRow {
                        param: param.as_str().to_string(),
                        value,
                        solver,
                        trial,
                        seed,
                        total_rate: out.total_rate,
                        n_associated: out.assignment.pairs.len(),
                        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut rows: Vec<SweepRow> = chunks.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.solver.cmp(&b.solver))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(SweepResult { rows })
}

/// Writes the CSV text of `result`. Reals carry 17 significant digits.
pub fn write_csv<W: Write>(result: &SweepResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &result.rows {
        writeln!(
            out,
            "{},{:.16e},{},{},{},{:.16e},{},{:.3}",
            r.param, r.value, r.solver, r.trial, r.seed, r.total_rate, r.n_associated, r.runtime_ms
        )?;
    }
    out.flush()
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<(), HarnessError> {
    let wrap = |source| HarnessError::WriteFailed {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(wrap)?;
    write_csv(result, std::io::BufWriter::new(file)).map_err(wrap)
}

/// Parses CSV text produced by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<SweepResult, csv::Error> {
    let mut reader = csv::Reader::from_reader(input);
    let rows = reader.deserialize().collect::<Result<Vec<SweepRow>, _>>()?;
    Ok(SweepResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{BaseStation, ChannelModel, KnowledgeClassProfile, MobileDevice};
    use std::collections::BTreeSet;

    fn small_sweep(param: &str, values: Vec<f64>) -> SweepConfig {
        SweepConfig {
            scenario: ScenarioConfig::scenario1(),
            param: param.into(),
            values,
            solvers: vec![SolverTag::Efficient, SolverTag::NoSharing],
            trials: 2,
            seed: 3,
        }
    }

    fn one_pair(t_max: f64) -> Scenario {
        Scenario {
            devices: vec![MobileDevice {
                id: 0,
                position: [10.0, 0.0],
                tx_power: 0.1,
                eps_min: 0.8,
                t_max,
                required_classes: vec![KnowledgeClassProfile {
                    class_id: 0,
                    d_task: 50e6,
                    d_knowledge: 20e6,
                    info: 10e6,
                    cycles: 50e6,
                }],
            }],
            stations: vec![BaseStation {
                id: 0,
                position: [0.0, 0.0],
                cpu_speed: 2e9,
                n_cloudlets: 1,
                stored_classes: BTreeSet::from([0]),
            }],
            gains: vec![vec![1e-5]],
            channel: ChannelModel::default(),
            params: Default::default(),
            accuracy: Default::default(),
        }
    }

    #[test]
    fn row_count_and_order() {
        let res = run_sweep(&small_sweep("cpu_speed", vec![4e9, 1e9, 2e9])).unwrap();
        assert_eq!(res.rows.len(), 12);
        let keys: Vec<_> = res.rows.iter().map(|r| (r.value, r.solver, r.trial)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        assert_eq!(keys, sorted);
        assert!(res.rows.iter().all(|r| r.total_rate >= 0.0));
    }

    #[test]
    fn unknown_parameter() {
        assert!(matches!(
            run_sweep(&small_sweep("antenna_gain", vec![1.0])),
            Err(HarnessError::InvalidSweep(_))
        ));
    }

    #[test]
    fn empty_values_and_zero_trials() {
        assert!(matches!(
            run_sweep(&small_sweep("t_max", vec![])),
            Err(HarnessError::InvalidSweep(_))
        ));
        let mut cfg = small_sweep("t_max", vec![1.0]);
        cfg.trials = 0;
        assert!(matches!(run_sweep(&cfg), Err(HarnessError::InvalidSweep(_))));
    }

    #[test]
    fn fractional_cloudlets_rejected() {
        assert!(matches!(
            run_sweep(&small_sweep("n_cloudlets", vec![1.5])),
            Err(HarnessError::InvalidSweep(_))
        ));
    }

    #[test]
    fn deterministic_csv() {
        let cfg = small_sweep("eps_min", vec![0.7, 0.8]);
        let strip = |res: &SweepResult| {
            let mut buf = Vec::new();
            let mut r = res.clone();
            r.rows.iter_mut().for_each(|row| row.runtime_ms = 0.0);
            write_csv(&r, &mut buf).unwrap();
            buf
        };
        assert_eq!(strip(&run_sweep(&cfg).unwrap()), strip(&run_sweep(&cfg).unwrap()));
    }

    #[test]
    fn knowledge_size_leaves_no_sharing_unchanged() {
        let mut cfg = small_sweep("d_knowledge", vec![5e6, 40e6, 80e6]);
        cfg.solvers = vec![SolverTag::NoSharing];
        let res = run_sweep(&cfg).unwrap();
        for trial in 0..2 {
            let rates: Vec<f64> = res
                .rows
                .iter()
                .filter(|r| r.trial == trial)
                .map(|r| r.total_rate)
                .collect();
            assert!(rates.iter().all(|&r| r == rates[0]));
        }
    }

    #[test]
    fn csv_round_trip() {
        let res = run_sweep(&small_sweep("bandwidth", vec![5e6, 20e6])).unwrap();
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        let back = read_csv(buf.as_slice()).unwrap();
        for (a, b) in res.rows.iter().zip(&back.rows) {
            assert_eq!(a.value, b.value);
            assert_eq!(a.total_rate, b.total_rate);
            assert_eq!((a.solver, a.trial, a.seed, a.n_associated), (b.solver, b.trial, b.seed, b.n_associated));
        }
    }

    #[test]
    fn empty_result_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_csv(&SweepResult::default(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.csv");
        assert!(matches!(
            emit_csv(&SweepResult::default(), &path),
            Err(HarnessError::WriteFailed { .. })
        ));
    }

    #[test]
    fn single_pair_total_is_pair_rate() {
        let s = one_pair(5.0);
        let out = run_point(&s, SolverTag::Efficient);
        let pair = out.pairs[0][0].as_ref().unwrap();
        assert_eq!(out.total_rate, pair.gamma);
        assert_eq!(out.assignment.pairs, vec![(0, 0)]);
    }

    #[test]
    fn infeasible_scenario_totals_zero() {
        let s = one_pair(1e-6);
        for solver in SolverTag::ALL {
            let out = run_point(&s, solver);
            assert_eq!(out.total_rate, 0.0);
            assert!(out.assignment.pairs.is_empty());
        }
    }

    #[test]
    fn optimum_dominates_no_sharing() {
        let cfg = ScenarioConfig::scenario1();
        for seed in 0..5 {
            let s = generate_scenario(&cfg, seed).unwrap();
            let opt = run_point(&s, SolverTag::Optimum).total_rate;
            let none = run_point(&s, SolverTag::NoSharing).total_rate;
            assert!(opt >= none * (1.0 - 1e-9));
        }
    }

    #[test]
    fn presets_are_valid() {
        for name in PRESET_NAMES {
            preset(name).unwrap().validate().unwrap();
        }
        let err = preset("fig99").unwrap_err().to_string();
        assert!(PRESET_NAMES.iter().all(|p| err.contains(p)));
    }
}
