//! Core data types shared by every other module: resources, job types,
//! length distributions, arrival specifications, jobs and configurations.

use crate::rational::{rat_int, rat_u64, to_f64, Rat};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("resource amounts must be non-negative")]
    NegativeAmount,
    #[error("job type {0} has an all-zero demand vector")]
    ZeroDemand(usize),
    #[error("length distribution has no bands")]
    EmptyDistribution,
    #[error("length band probabilities sum to {0}, expected exactly 1")]
    BadProbabilitySum(String),
    #[error("length band [{lo}, {hi}] is invalid")]
    BadBand { lo: u32, hi: u32 },
    #[error("length bands [{0}..] overlap")]
    OverlappingBands(u32),
    #[error("arrival rates must be non-negative")]
    NegativeRate,
    #[error("expected one rate per job type ({expected}), got {got}")]
    RateCount { expected: usize, got: usize },
}

/// Non-negative amounts per resource dimension (e.g. memory GB, compute
/// units, storage GB). The dimension is fixed per scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceVector {
    amounts: Vec<Rat>,
}

impl ResourceVector {
    pub fn new(amounts: Vec<Rat>) -> Result<Self, DomainError> {
        if amounts.iter().any(|a| a.is_negative()) {
            return Err(DomainError::NegativeAmount);
        }
        Ok(Self { amounts })
    }

    pub fn dim(&self) -> usize {
        self.amounts.len()
    }

    pub fn amounts(&self) -> &[Rat] {
        &self.amounts
    }

    pub fn is_zero(&self) -> bool {
        self.amounts.iter().all(Zero::is_zero)
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &ResourceVector) -> Result<bool, DomainError> {
        if self.dim() != other.dim() {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .amounts
            .iter()
            .zip(&other.amounts)
            .all(|(a, b)| a <= b))
    }
}

/// A VM/job type: its index and per-resource demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmTypeSpec {
    pub type_index: usize,
    pub demand: ResourceVector,
}

impl VmTypeSpec {
    pub fn new(type_index: usize, demand: ResourceVector) -> Result<Self, DomainError> {
        if demand.is_zero() {
            return Err(DomainError::ZeroDemand(type_index));
        }
        Ok(Self { type_index, demand })
    }
}

/// One band of a [`LengthDistribution`]: with probability `probability`
/// the length is an integer drawn uniformly from `lo..=hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthBand {
    pub probability: Rat,
    pub lo: u32,
    pub hi: u32,
}

/// Discrete job-length distribution given as disjoint uniform integer bands.
/// Band probabilities must sum to exactly 1 under rational arithmetic.
#[derive(Debug, Clone)]
pub struct LengthDistribution {
    bands: Vec<LengthBand>,
    /// f64 cumulative band weights, for sampling only.
    cumulative: Vec<f64>,
}

impl PartialEq for LengthDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.bands == other.bands
    }
}

impl Eq for LengthDistribution {}

impl LengthDistribution {
    pub fn new(mut bands: Vec<LengthBand>) -> Result<Self, DomainError> {
        if bands.is_empty() {
            return Err(DomainError::EmptyDistribution);
        }
        for b in &bands {
            if b.lo == 0 || b.lo > b.hi {
                return Err(DomainError::BadBand { lo: b.lo, hi: b.hi });
            }
            if b.probability.is_negative() {
                return Err(DomainError::BadProbabilitySum(b.probability.to_string()));
            }
        }
        bands.sort_by_key(|b| b.lo);
        for w in bands.windows(2) {
            if w[1].lo <= w[0].hi {
                return Err(DomainError::OverlappingBands(w[1].lo));
            }
        }
        let total: Rat = bands.iter().map(|b| b.probability.clone()).sum();
        if !total.is_one() {
            return Err(DomainError::BadProbabilitySum(total.to_string()));
        }
        let mut cumulative = Vec::with_capacity(bands.len());
        let mut acc = 0.0;
        for b in &bands {
            acc += to_f64(&b.probability);
            cumulative.push(acc);
        }
        Ok(Self { bands, cumulative })
    }

    /// Single deterministic length `L` with probability 1.
    pub fn constant(length: u32) -> Self {
        Self::new(vec![LengthBand {
            probability: Rat::one(),
            lo: length,
            hi: length,
        }])
        .expect("constant band is valid")
    }

    pub fn bands(&self) -> &[LengthBand] {
        &self.bands
    }

    /// All lengths with positive probability, ascending.
    pub fn support(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for b in &self.bands {
            if b.probability.is_zero() {
                continue;
            }
            out.extend(b.lo..=b.hi);
        }
        out
    }

    pub fn max_length(&self) -> u32 {
        self.bands.last().map(|b| b.hi).unwrap_or(0)
    }

    /// Exact probability of drawing length `l`.
    pub fn probability_of(&self, l: u32) -> Rat {
        for b in &self.bands {
            if l >= b.lo && l <= b.hi {
                return b.probability.clone() / rat_u64(u64::from(b.hi - b.lo + 1));
            }
        }
        Rat::zero()
    }

    /// Exact E[L].
    pub fn mean_length(&self) -> Rat {
        self.bands
            .iter()
            .map(|b| b.probability.clone() * (rat_u64(u64::from(b.lo)) + rat_u64(u64::from(b.hi))) / rat_int(2))
            .sum()
    }

    /// Exact E[1/L], expanded term by term over each band.
    pub fn mean_reciprocal_length(&self) -> Rat {
        self.bands
            .iter()
            .map(|b| {
                let width = rat_u64(u64::from(b.hi - b.lo + 1));
                let harmonic: Rat = (b.lo..=b.hi).map(|l| Rat::new(1.into(), l.into())).sum();
                b.probability.clone() * harmonic / width
            })
            .sum()
    }

    /// Draws one length. Band selection uses the f64 image of the exact
    /// probabilities; the integer inside the band is uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let mut idx = self.cumulative.len() - 1;
        for (i, c) in self.cumulative.iter().enumerate() {
            if u < *c {
                idx = i;
                break;
            }
        }
        let b = &self.bands[idx];
        rng.gen_range(b.lo..=b.hi)
    }
}

/// Arrival specification: per-type genuine and malicious work rates
/// (expected work units per slot **per server**), per-type length
/// distribution, and the server count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalSpec {
    pub genuine_rates: Vec<Rat>,
    pub malicious_rates: Vec<Rat>,
    pub length_dists: Vec<LengthDistribution>,
    pub n_servers: usize,
}

impl ArrivalSpec {
    pub fn new(
        genuine_rates: Vec<Rat>,
        malicious_rates: Vec<Rat>,
        length_dists: Vec<LengthDistribution>,
        n_servers: usize,
    ) -> Result<Self, DomainError> {
        let j = length_dists.len();
        if genuine_rates.len() != j {
            return Err(DomainError::RateCount {
                expected: j,
                got: genuine_rates.len(),
            });
        }
        if malicious_rates.len() != j {
            return Err(DomainError::RateCount {
                expected: j,
                got: malicious_rates.len(),
            });
        }
        if genuine_rates
            .iter()
            .chain(&malicious_rates)
            .any(|r| r.is_negative())
        {
            return Err(DomainError::NegativeRate);
        }
        Ok(Self {
            genuine_rates,
            malicious_rates,
            length_dists,
            n_servers,
        })
    }

    /// Convenience constructor when every type shares one distribution.
    pub fn with_shared_dist(
        genuine_rates: Vec<Rat>,
        malicious_rates: Vec<Rat>,
        dist: LengthDistribution,
        n_servers: usize,
    ) -> Result<Self, DomainError> {
        let j = genuine_rates.len();
        Self::new(
            genuine_rates,
            malicious_rates,
            vec![dist; j],
            n_servers,
        )
    }

    pub fn j_count(&self) -> usize {
        self.length_dists.len()
    }

    /// Total per-server work rate of type `j` (genuine + malicious).
    pub fn total_rate(&self, j: usize) -> Rat {
        self.genuine_rates[j].clone() + self.malicious_rates[j].clone()
    }

    /// Genuine fraction of arriving type-`j` work; `None` for a dead type.
    pub fn genuine_fraction(&self, j: usize) -> Option<Rat> {
        let total = self.total_rate(j);
        if total.is_zero() {
            None
        } else {
            Some(self.genuine_rates[j].clone() / total)
        }
    }
}

/// Hidden ground-truth label of a job. Scheduling logic never reads it;
/// only the scan operation and the metrics collector do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truth {
    Genuine,
    Malicious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanStatus {
    NoScan,
    PendingScan,
    ScannedGenuine,
}

/// A unit of work: type, integer length, hidden label, scan status.
#[derive(Debug, Clone)]
pub struct Job {
    pub id: u64,
    pub type_index: usize,
    pub length: u32,
    pub arrival_slot: u64,
    pub remaining: u32,
    pub scan_status: ScanStatus,
    truth: Truth,
    /// Slot in which this job last received service (one unit or its scan);
    /// used to enforce at most one unit of service per job per slot.
    pub(crate) scheduled_at: u64,
}

impl Job {
    pub fn new(id: u64, type_index: usize, length: u32, truth: Truth, arrival_slot: u64) -> Self {
        assert!(length > 0, "job length must be a positive integer");
        Self {
            id,
            type_index,
            length,
            arrival_slot,
            remaining: length,
            scan_status: ScanStatus::NoScan,
            truth,
            scheduled_at: u64::MAX,
        }
    }

    /// Ground truth, revealed only to the scan operation and metrics.
    pub(crate) fn reveal_truth(&self) -> Truth {
        self.truth
    }
}

/// Integer vector of simultaneously runnable jobs per type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub counts: Vec<u32>,
}

impl Configuration {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn zeros(j: usize) -> Self {
        Self { counts: vec![0; j] }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Componentwise `self <= other`.
    pub fn dominated_by(&self, other: &Configuration) -> bool {
        self.counts
            .iter()
            .zip(&other.counts)
            .all(|(a, b)| a <= b)
    }

    pub fn scaled(&self, n: u32) -> Configuration {
        Configuration::new(self.counts.iter().map(|c| c * n).collect())
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// True iff `config` fits into `capacity`: sum of per-type demands scaled by
/// the configuration counts does not exceed capacity in any dimension.
pub fn job_fits(
    config: &Configuration,
    demands: &[VmTypeSpec],
    capacity: &ResourceVector,
) -> Result<bool, DomainError> {
    if config.dim() != demands.len() {
        return Err(DomainError::DimensionMismatch {
            expected: demands.len(),
            got: config.dim(),
        });
    }
    let dim = capacity.dim();
    let mut used = vec![Rat::zero(); dim];
    for (count, vm) in config.counts.iter().zip(demands) {
        if vm.demand.dim() != dim {
            return Err(DomainError::DimensionMismatch {
                expected: dim,
                got: vm.demand.dim(),
            });
        }
        if *count == 0 {
            continue;
        }
        let c = rat_u64(u64::from(*count));
        for (u, d) in used.iter_mut().zip(vm.demand.amounts()) {
            *u += d.clone() * c.clone();
        }
    }
    Ok(used.iter().zip(capacity.amounts()).all(|(u, c)| u <= c))
}
