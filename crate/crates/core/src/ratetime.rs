//! Link rate, task completion timing and the generalized effective semantic rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::KnowledgeClassProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateTimeError {
    #[error("extraction ratio {0} gives an unbounded compute ratio")]
    SingularExtraction(f64),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

/// Set of positions in a device's required-class list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassSet(u64);

impl ClassSet {
    pub const fn empty() -> Self {
        ClassSet(0)
    }

    /// All positions `0..n`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= 64);
        if n == 64 {
            ClassSet(u64::MAX)
        } else {
            ClassSet((1u64 << n) - 1)
        }
    }

    pub const fn from_bits(bits: u64) -> Self {
        ClassSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        ClassSet(indices.into_iter().fold(0, |acc, i| acc | (1u64 << i)))
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 & (1u64 << i) != 0
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u64 << i;
    }

    pub fn union(self, other: Self) -> Self {
        ClassSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        ClassSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        ClassSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Positions in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

/// Split of a device's required classes for one station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    /// Already stored at the station.
    pub k_in: ClassSet,
    /// Uploaded before transmission.
    pub k_up: ClassSet,
    /// Matched after upload; carried semantically.
    pub k_cu: ClassSet,
    /// Carried as raw bits.
    pub k_bit: ClassSet,
}

impl Partition {
    pub fn new(n_required: usize, k_in: ClassSet, k_up: ClassSet) -> Result<Self, RateTimeError> {
        let all = ClassSet::full(n_required);
        if !k_in.is_subset(all) || !k_up.is_subset(all) {
            return Err(RateTimeError::InvalidPartition(
                "class position outside the required list".into(),
            ));
        }
        if !k_in.intersection(k_up).is_empty() {
            return Err(RateTimeError::InvalidPartition(
                "uploaded classes must not already be stored".into(),
            ));
        }
        let k_cu = k_in.union(k_up);
        Ok(Partition {
            k_in,
            k_up,
            k_cu,
            k_bit: all.difference(k_cu),
        })
    }
}

/// Per-set sums the timing and rate formulas depend on.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PartitionSums {
    /// Raw data of matched classes (bits).
    pub d_task_cu: f64,
    /// Raw data of unmatched classes (bits).
    pub d_task_bit: f64,
    pub info_cu: f64,
    pub info_bit: f64,
    pub cycles_cu: f64,
    pub cycles_bit: f64,
    /// Knowledge data to upload (bits).
    pub d_knowledge_up: f64,
    /// Whether any class is carried semantically.
    pub semantic: bool,
}

impl PartitionSums {
    /// Sums in the order of the device's class list.
    pub fn of(profiles: &[KnowledgeClassProfile], partition: &Partition) -> Self {
        let mut s = PartitionSums {
            semantic: !partition.k_cu.is_empty(),
            ..Default::default()
        };
        for (i, c) in profiles.iter().enumerate() {
            if partition.k_cu.contains(i) {
                s.d_task_cu += c.d_task;
                s.info_cu += c.info;
                s.cycles_cu += c.cycles;
            } else {
                s.d_task_bit += c.d_task;
                s.info_bit += c.info;
                s.cycles_bit += c.cycles;
            }
            if partition.k_up.contains(i) {
                s.d_knowledge_up += c.d_knowledge;
            }
        }
        s
    }
}

/// Completion time components (s).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeBreakdown {
    pub t_upload: f64,
    pub t_semantic: f64,
    pub t_bit: f64,
    pub t_sem_compute: f64,
    pub t_raw_compute: f64,
    pub t_total: f64,
}

impl TimeBreakdown {
    /// `xi` is ignored when nothing is carried semantically.
    pub fn from_sums(
        sums: &PartitionSums,
        xi: f64,
        rate: f64,
        cpu_speed: f64,
        rho: f64,
    ) -> Result<Self, RateTimeError> {
        let (t_semantic, t_sem_compute) = if sums.semantic {
            let omega = compute_ratio(xi, rho)?;
            (xi * sums.d_task_cu / rate, omega * sums.cycles_cu / cpu_speed)
        } else {
            (0.0, 0.0)
        };
        let t_upload = sums.d_knowledge_up / rate;
        let t_bit = sums.d_task_bit / rate;
        let t_raw_compute = sums.cycles_bit / cpu_speed;
        Ok(TimeBreakdown {
            t_upload,
            t_semantic,
            t_bit,
            t_sem_compute,
            t_raw_compute,
            t_total: t_upload + t_semantic + t_bit + t_sem_compute + t_raw_compute,
        })
    }

    /// Time not depending on the extraction ratio.
    pub fn fixed_part(&self) -> f64 {
        self.t_upload + self.t_bit + self.t_raw_compute
    }
}

/// `W·log2(1 + p·g/σ²)` in bits/s.
pub fn shannon_rate(bandwidth: f64, power: f64, gain: f64, noise: f64) -> f64 {
    bandwidth * (power * gain / noise).ln_1p() / std::f64::consts::LN_2
}

/// Semantic-to-raw compute load ratio `ξ^-ρ`.
pub fn compute_ratio(xi: f64, rho: f64) -> Result<f64, RateTimeError> {
    if xi > 0.0 {
        Ok(xi.powf(-rho))
    } else {
        Err(RateTimeError::SingularExtraction(xi))
    }
}

pub fn time_breakdown(
    profiles: &[KnowledgeClassProfile],
    partition: &Partition,
    xi: f64,
    rate: f64,
    cpu_speed: f64,
    rho: f64,
) -> Result<TimeBreakdown, RateTimeError> {
    TimeBreakdown::from_sums(&PartitionSums::of(profiles, partition), xi, rate, cpu_speed, rho)
}

/// Inclusive deadline check.
pub fn check_delay(breakdown: &TimeBreakdown, t_max: f64) -> bool {
    breakdown.t_total <= t_max
}

/// Generalized effective semantic rate (suts/s) from precomputed sums.
pub fn semantic_rate_from_sums(sums: &PartitionSums, xi: f64, eps: f64, rate: f64) -> f64 {
    if sums.semantic {
        rate * (sums.info_cu * eps + sums.info_bit) / (xi * sums.d_task_cu + sums.d_task_bit)
    } else {
        rate * sums.info_bit / sums.d_task_bit
    }
}

pub fn semantic_rate(
    profiles: &[KnowledgeClassProfile],
    partition: &Partition,
    xi: f64,
    eps: f64,
    rate: f64,
) -> f64 {
    semantic_rate_from_sums(&PartitionSums::of(profiles, partition), xi, eps, rate)
}
