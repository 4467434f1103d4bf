//! Network instances: devices, stations, links and their random generation.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accuracy::AccuracyModel;

/// A device may require at most this many classes (partitions are bitmasks).
pub const MAX_REQUIRED_CLASSES: usize = 64;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("degenerate geometry: link distance {0} m must be positive")]
    DegenerateGeometry(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// Per-class data of one device's task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeClassProfile {
    pub class_id: u32,
    /// Raw task data (bits).
    pub d_task: f64,
    /// Knowledge data to upload when sharing (bits).
    pub d_knowledge: f64,
    /// Semantic information (suts).
    pub info: f64,
    /// Compute load (CPU cycles).
    pub cycles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileDevice {
    pub id: usize,
    pub position: [f64; 2],
    /// Transmit power (W).
    pub tx_power: f64,
    pub eps_min: f64,
    /// Delay tolerance (s).
    pub t_max: f64,
    pub required_classes: Vec<KnowledgeClassProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    pub position: [f64; 2],
    /// Speed of each cloudlet (cycles/s).
    pub cpu_speed: f64,
    pub n_cloudlets: u32,
    pub stored_classes: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Subchannel bandwidth (Hz).
    pub bandwidth: f64,
    /// Receiver noise power (W).
    pub noise_power: f64,
    /// Power gain at the 1 m reference distance.
    #[serde(default = "default_ref_attenuation")]
    pub ref_attenuation: f64,
    #[serde(default = "default_path_loss_exponent")]
    pub path_loss_exponent: f64,
}

fn default_ref_attenuation() -> f64 {
    1e-3
}

fn default_path_loss_exponent() -> f64 {
    2.0
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            bandwidth: 10e6,
            noise_power: 1e-15,
            ref_attenuation: default_ref_attenuation(),
            path_loss_exponent: default_path_loss_exponent(),
        }
    }
}

impl ChannelModel {
    /// Power gain of a link of length `distance` with squared fading amplitude `fading_sq`.
    pub fn link_gain(&self, distance: f64, fading_sq: f64) -> Result<f64, ScenarioError> {
        if !(distance > 0.0) {
            return Err(ScenarioError::DegenerateGeometry(distance));
        }
        Ok(self.ref_attenuation * fading_sq * distance.powf(-self.path_loss_exponent))
    }
}

/// Solver-wide numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    /// Exponent of the semantic compute ratio `ξ^-ρ`.
    pub rho: f64,
    /// Polyblock relative tolerance.
    pub o1: f64,
    /// Projection bisection tolerance.
    pub o2: f64,
    /// Resolution of the accuracy envelope and of the grid oracle.
    pub grid_step: f64,
    pub max_iter: usize,
    /// Largest number of mismatched classes the exhaustive solver accepts.
    pub enumeration_cap: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            rho: 1.0,
            o1: 1e-3,
            o2: 1e-6,
            grid_step: 1e-4,
            max_iter: 10_000,
            enumeration_cap: 16,
        }
    }
}

/// A complete network instance. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub devices: Vec<MobileDevice>,
    pub stations: Vec<BaseStation>,
    /// `gains[m][n]`: power gain from device `m` to station `n`.
    pub gains: Vec<Vec<f64>>,
    pub channel: ChannelModel,
    #[serde(default)]
    pub params: SystemParams,
    #[serde(default)]
    pub accuracy: AccuracyModel,
}

impl Scenario {
    pub fn from_json_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::InvalidScenario(msg));
        if self.gains.len() != self.devices.len()
            || self.gains.iter().any(|row| row.len() != self.stations.len())
        {
            return bad("gain matrix must be devices × stations".into());
        }
        if self.gains.iter().flatten().any(|g| !(*g > 0.0)) {
            return bad("all link gains must be positive".into());
        }
        if !(self.channel.bandwidth > 0.0 && self.channel.noise_power > 0.0) {
            return bad("bandwidth and noise power must be positive".into());
        }
        if !(self.params.rho > 0.0) {
            return bad("rho must be positive".into());
        }
        for d in &self.devices {
            if !(0.0..=1.0).contains(&d.eps_min) || !(d.t_max > 0.0) {
                return bad(format!("device {}: eps_min in [0,1] and t_max > 0", d.id));
            }
            if d.required_classes.is_empty() || d.required_classes.len() > MAX_REQUIRED_CLASSES
            {
                return bad(format!(
                    "device {}: between 1 and {MAX_REQUIRED_CLASSES} required classes",
                    d.id
                ));
            }
            let ids: BTreeSet<_> = d.required_classes.iter().map(|c| c.class_id).collect();
            if ids.len() != d.required_classes.len() {
                return bad(format!("device {}: duplicate class ids", d.id));
            }
            for c in &d.required_classes {
                if !(c.d_task > 0.0 && c.d_knowledge > 0.0 && c.info > 0.0 && c.cycles > 0.0) {
                    return bad(format!(
                        "device {} class {}: sizes, info and cycles must be positive",
                        d.id, c.class_id
                    ));
                }
            }
        }
        for s in &self.stations {
            if !(s.cpu_speed > 0.0) || s.n_cloudlets == 0 {
                return bad(format!("station {}: cpu_speed > 0 and n_cloudlets >= 1", s.id));
            }
        }
        Ok(())
    }

    /// Positions (in the device's class list) of classes the station already stores.
    pub fn initial_matched(&self, device: usize, station: usize) -> Vec<usize> {
        let stored = &self.stations[station].stored_classes;
        self.devices[device]
            .required_classes
            .iter()
            .enumerate()
            .filter(|(_, c)| stored.contains(&c.class_id))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Closed interval a parameter is drawn from uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub const fn fixed(value: f64) -> Self {
        Range {
            min: value,
            max: value,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }

    fn validate(&self, name: &str) -> Result<(), ScenarioError> {
        if self.min.is_finite() && self.max.is_finite() && self.min <= self.max {
            Ok(())
        } else {
            Err(ScenarioError::InvalidConfig(format!(
                "{name}: need finite min <= max"
            )))
        }
    }
}

/// Integer interval, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

/// Recipe for random scenarios. Every stochastic parameter has a `{min,max}` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_stations: usize,
    pub station_positions: Vec<[f64; 2]>,
    pub n_devices: usize,
    pub area_radius_m: f64,
    pub n_global_classes: usize,
    pub stored_per_station: usize,
    pub required_range: CountRange,
    /// Semantic information per class (suts).
    pub info: Range,
    /// Knowledge data per class (bits).
    pub d_knowledge: Range,
    /// Raw task data per class (bits).
    pub d_task: Range,
    /// Compute load per class (cycles).
    pub cycles: Range,
    pub eps_min: Range,
    /// Delay tolerance (s).
    pub t_max: Range,
    /// Cloudlet speed (cycles/s).
    pub cpu_speed: Range,
    /// Device transmit power (W).
    pub tx_power: Range,
    /// Subchannel bandwidth (Hz).
    pub bandwidth: Range,
    /// Noise power (W).
    pub noise_power: Range,
    pub n_cloudlets: CountRange,
    pub rho: Range,
    #[serde(default = "default_ref_attenuation")]
    pub ref_attenuation: f64,
    #[serde(default = "default_path_loss_exponent")]
    pub path_loss_exponent: f64,
    #[serde(default)]
    pub accuracy: AccuracyModel,
    #[serde(default)]
    pub params: SystemParams,
}

impl ScenarioConfig {
    /// Default per-class and link parameters shared by both presets.
    fn with_layout(
        station_positions: Vec<[f64; 2]>,
        n_devices: usize,
        area_radius_m: f64,
        n_global_classes: usize,
        stored_per_station: usize,
        required_range: CountRange,
    ) -> Self {
        ScenarioConfig {
            n_stations: station_positions.len(),
            station_positions,
            n_devices,
            area_radius_m,
            n_global_classes,
            stored_per_station,
            required_range,
            info: Range::new(2e6, 20e6),
            d_knowledge: Range::new(5e6, 80e6),
            d_task: Range::new(20e6, 100e6),
            cycles: Range::new(1e6, 100e6),
            eps_min: Range::new(0.7, 0.85),
            t_max: Range::new(4.5, 5.5),
            cpu_speed: Range::fixed(2e9),
            tx_power: Range::fixed(0.1),
            bandwidth: Range::fixed(10e6),
            // -120 dBm
            noise_power: Range::fixed(1e-15),
            n_cloudlets: CountRange { min: 2, max: 2 },
            rho: Range::fixed(1.0),
            ref_attenuation: default_ref_attenuation(),
            path_loss_exponent: default_path_loss_exponent(),
            accuracy: AccuracyModel::default(),
            params: SystemParams::default(),
        }
    }

    /// Small network: 3 stations, 5 devices, 10 classes.
    pub fn scenario1() -> Self {
        Self::with_layout(
            vec![[0.0, 75.0], [-75.0, -75.0], [75.0, -75.0]],
            5,
            150.0,
            10,
            6,
            CountRange { min: 3, max: 6 },
        )
    }

    /// Larger network: 5 stations, 10 devices, 20 classes.
    pub fn scenario2() -> Self {
        Self::with_layout(
            vec![
                [0.0, 0.0],
                [150.0, 0.0],
                [0.0, 150.0],
                [-150.0, 0.0],
                [0.0, -150.0],
            ],
            10,
            300.0,
            20,
            8,
            CountRange { min: 11, max: 15 },
        )
    }

    pub fn from_json_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::InvalidConfig(msg));
        if self.station_positions.len() != self.n_stations || self.n_stations == 0 {
            return invalid(format!(
                "n_stations = {} but {} station positions given",
                self.n_stations,
                self.station_positions.len()
            ));
        }
        if !(self.area_radius_m > 0.0) {
            return invalid("area_radius_m must be positive".into());
        }
        if self.stored_per_station > self.n_global_classes {
            return invalid(format!(
                "stored_per_station {} exceeds n_global_classes {}",
                self.stored_per_station, self.n_global_classes
            ));
        }
        let req = self.required_range;
        if req.min == 0 || req.min > req.max || req.max > self.n_global_classes {
            return invalid(format!(
                "required_range [{}, {}] must satisfy 1 <= min <= max <= n_global_classes",
                req.min, req.max
            ));
        }
        if req.max > MAX_REQUIRED_CLASSES {
            return invalid(format!("at most {MAX_REQUIRED_CLASSES} required classes"));
        }
        if self.n_cloudlets.min == 0 || self.n_cloudlets.min > self.n_cloudlets.max {
            return invalid("n_cloudlets range must satisfy 1 <= min <= max".into());
        }
        for (name, r) in self.ranges() {
            r.validate(name)?;
        }
        let positive = [
            ("info", self.info),
            ("d_knowledge", self.d_knowledge),
            ("d_task", self.d_task),
            ("cycles", self.cycles),
            ("t_max", self.t_max),
            ("cpu_speed", self.cpu_speed),
            ("bandwidth", self.bandwidth),
            ("noise_power", self.noise_power),
            ("rho", self.rho),
        ];
        for (name, r) in positive {
            if !(r.min > 0.0) {
                return invalid(format!("{name} must be positive"));
            }
        }
        if self.tx_power.min < 0.0 {
            return invalid("tx_power must be non-negative".into());
        }
        if self.eps_min.min < 0.0 || self.eps_min.max > 1.0 {
            return invalid("eps_min must lie in [0, 1]".into());
        }
        if !(self.ref_attenuation > 0.0) {
            return invalid("ref_attenuation must be positive".into());
        }
        Ok(())
    }

    fn ranges(&self) -> [(&'static str, Range); 12] {
        [
            ("info", self.info),
            ("d_knowledge", self.d_knowledge),
            ("d_task", self.d_task),
            ("cycles", self.cycles),
            ("eps_min", self.eps_min),
            ("t_max", self.t_max),
            ("cpu_speed", self.cpu_speed),
            ("tx_power", self.tx_power),
            ("bandwidth", self.bandwidth),
            ("noise_power", self.noise_power),
            ("rho", self.rho),
            ("area", Range::new(0.0, self.area_radius_m)),
        ]
    }
}

/// SplitMix64 finalizer: derives independent stream seeds from `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform_in_disk<R: Rng>(rng: &mut R, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    [r * phi.cos(), r * phi.sin()]
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Draws a scenario. Deterministic in `(config, seed)`.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let channel = ChannelModel {
        bandwidth: config.bandwidth.sample(&mut rng),
        noise_power: config.noise_power.sample(&mut rng),
        ref_attenuation: config.ref_attenuation,
        path_loss_exponent: config.path_loss_exponent,
    };
    let params = SystemParams {
        rho: config.rho.sample(&mut rng),
        ..config.params.clone()
    };

    let stations: Vec<BaseStation> = config
        .station_positions
        .iter()
        .enumerate()
        .map(|(id, &position)| {
            let stored_classes = sample(&mut rng, config.n_global_classes, config.stored_per_station)
                .into_iter()
                .map(|c| c as u32)
                .collect();
            BaseStation {
                id,
                position,
                cpu_speed: config.cpu_speed.sample(&mut rng),
                n_cloudlets: rng.random_range(config.n_cloudlets.min..=config.n_cloudlets.max)
                    as u32,
                stored_classes,
            }
        })
        .collect();

    let mut devices = Vec::with_capacity(config.n_devices);
    let mut gains = Vec::with_capacity(config.n_devices);
    for id in 0..config.n_devices {
        let position = uniform_in_disk(&mut rng, config.area_radius_m);
        let row = stations
            .iter()
            .map(|s| {
                let fading_sq: f64 = rng.sample(Exp1);
                channel.link_gain(distance(position, s.position), fading_sq)
            })
            .collect::<Result<Vec<_>, _>>()?;
        gains.push(row);

        let count = rng.random_range(config.required_range.min..=config.required_range.max);
        let mut ids: Vec<u32> = sample(&mut rng, config.n_global_classes, count)
            .into_iter()
            .map(|c| c as u32)
            .collect();
        ids.sort_unstable();
        let required_classes = ids
            .into_iter()
            .map(|class_id| KnowledgeClassProfile {
                class_id,
                d_task: config.d_task.sample(&mut rng),
                d_knowledge: config.d_knowledge.sample(&mut rng),
                info: config.info.sample(&mut rng),
                cycles: config.cycles.sample(&mut rng),
            })
            .collect();
        devices.push(MobileDevice {
            id,
            position,
            tx_power: config.tx_power.sample(&mut rng),
            eps_min: config.eps_min.sample(&mut rng),
            t_max: config.t_max.sample(&mut rng),
            required_classes,
        });
    }

    let accuracy = if config.accuracy.grid_step() == params.grid_step {
        config.accuracy.clone()
    } else {
        AccuracyModel::with_grid_step(config.accuracy.theta(), params.grid_step)
            .map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?
    };

    let scenario = Scenario {
        devices,
        stations,
        gains,
        channel,
        params,
        accuracy,
    };
    scenario.validate()?;
    Ok(scenario)
}
