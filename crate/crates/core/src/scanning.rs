//! Scanning strategies, the expected-arriving-weight vector, and the
//! stability classifier.
//!
//! Each strategy produces a scanning vector `alpha[(type, length)] in [0,1]`:
//! the probability that a newly arrived job of that type and length is
//! queued for a one-slot scan instead of being run blind. Strategies are
//! interchangeable behind [`ScanStrategy`] and selected by name at runtime.

use crate::capacity::{CapacityError, FeasibleSet, RegionVerdict};
use crate::domain::{ArrivalSpec, DomainError, LengthBand, LengthDistribution, Truth};
use crate::rational::{rat_u64, to_f64, Rat};
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScanError {
    #[error("alpha undefined for type {type_index} length {length}")]
    UndefinedAlpha { type_index: usize, length: u32 },
    #[error("alpha value for type {type_index} length {length} is outside [0,1]")]
    AlphaRange { type_index: usize, length: u32 },
    #[error("scan log is empty: insufficient data to estimate rates")]
    EmptyLog,
    #[error("unknown scan strategy `{0}`")]
    UnknownStrategy(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

/// Per-(type, length) scanning probabilities, defined on each type's
/// distribution support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanVector {
    per_type: Vec<BTreeMap<u32, Rat>>,
}

impl ScanVector {
    pub fn new(per_type: Vec<BTreeMap<u32, Rat>>) -> Result<Self, ScanError> {
        for (j, table) in per_type.iter().enumerate() {
            for (&l, a) in table {
                if a.is_negative() || *a > Rat::one() {
                    return Err(ScanError::AlphaRange { type_index: j, length: l });
                }
            }
        }
        Ok(Self { per_type })
    }

    /// Builds a vector by evaluating `f(type, length)` over the support of
    /// every type in `spec`.
    pub fn from_fn(spec: &ArrivalSpec, mut f: impl FnMut(usize, u32) -> Rat) -> Self {
        let per_type = spec
            .length_dists
            .iter()
            .enumerate()
            .map(|(j, dist)| {
                dist.support()
                    .into_iter()
                    .map(|l| (l, f(j, l)))
                    .collect::<BTreeMap<_, _>>()
            })
            .collect();
        Self { per_type }
    }

    pub fn j_count(&self) -> usize {
        self.per_type.len()
    }

    pub fn alpha(&self, type_index: usize, length: u32) -> Result<&Rat, ScanError> {
        self.per_type
            .get(type_index)
            .and_then(|t| t.get(&length))
            .ok_or(ScanError::UndefinedAlpha { type_index, length })
    }

    pub fn table(&self, type_index: usize) -> &BTreeMap<u32, Rat> {
        &self.per_type[type_index]
    }

    pub fn is_all_zero(&self) -> bool {
        self.per_type
            .iter()
            .all(|t| t.values().all(Zero::is_zero))
    }

    /// Dense f64 lookup tables (indexed by length) for the simulation
    /// hot path.
    pub(crate) fn dense_f64(&self, max_length: u32) -> Vec<Vec<f64>> {
        self.per_type
            .iter()
            .map(|t| {
                let mut row = vec![0.0; max_length as usize + 1];
                for (&l, a) in t {
                    if (l as usize) < row.len() {
                        row[l as usize] = to_f64(a);
                    }
                }
                row
            })
            .collect()
    }
}

/// Expected arriving weight per type per slot (per server): the expected
/// number of service slots one slot's arrivals will eventually consume,
/// counting each pending scan as one slot plus the genuine share of its
/// processing time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AVector(pub Vec<Rat>);

impl AVector {
    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(to_f64).collect()
    }
}

/// A scanning strategy: a named rule producing a [`ScanVector`] for a given
/// arrival specification.
pub trait ScanStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, spec: &ArrivalSpec) -> Result<ScanVector, ScanError>;
}

/// Never scan anything.
pub struct ScanNone;

/// Scan every job that takes longer to run than to scan (length > 1).
pub struct ScanAll;

/// Scan exactly the lengths for which scanning lowers the expected
/// arriving weight: `L > (lambda_j + kappa_j) / kappa_j`.
pub struct ScanOpt;

/// A fixed user-supplied table.
pub struct ScanCustom(pub ScanVector);

impl ScanStrategy for ScanNone {
    fn name(&self) -> &'static str {
        "none"
    }
    fn build(&self, spec: &ArrivalSpec) -> Result<ScanVector, ScanError> {
        Ok(scan_none(spec))
    }
}

impl ScanStrategy for ScanAll {
    fn name(&self) -> &'static str {
        "all"
    }
    fn build(&self, spec: &ArrivalSpec) -> Result<ScanVector, ScanError> {
        Ok(scan_all(spec))
    }
}

impl ScanStrategy for ScanOpt {
    fn name(&self) -> &'static str {
        "opt"
    }
    fn build(&self, spec: &ArrivalSpec) -> Result<ScanVector, ScanError> {
        Ok(optimal_alpha(spec))
    }
}

impl ScanStrategy for ScanCustom {
    fn name(&self) -> &'static str {
        "custom"
    }
    fn build(&self, _spec: &ArrivalSpec) -> Result<ScanVector, ScanError> {
        Ok(self.0.clone())
    }
}

/// Registry lookup: `"none" | "all" | "opt"`.
pub fn strategy_by_name(name: &str) -> Result<Box<dyn ScanStrategy>, ScanError> {
    match name {
        "none" => Ok(Box::new(ScanNone)),
        "all" => Ok(Box::new(ScanAll)),
        "opt" => Ok(Box::new(ScanOpt)),
        other => Err(ScanError::UnknownStrategy(other.to_string())),
    }
}

pub fn strategy_names() -> &'static [&'static str] {
    &["none", "all", "opt"]
}

/// alpha = 0 everywhere.
pub fn scan_none(spec: &ArrivalSpec) -> ScanVector {
    ScanVector::from_fn(spec, |_, _| Rat::zero())
}

/// alpha = 0 for lengths <= 1 (scanning costs as much as running), 1 above.
pub fn scan_all(spec: &ArrivalSpec) -> ScanVector {
    ScanVector::from_fn(spec, |_, l| if l <= 1 { Rat::zero() } else { Rat::one() })
}

/// The largest length of type `j` that the optimal strategy leaves
/// unscanned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanCutoff {
    /// Scan lengths strictly above this value.
    Above(Rat),
    /// Never scan this type (no malicious traffic, or no traffic at all).
    Never,
}

impl std::fmt::Display for ScanCutoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScanCutoff::Above(r) => write!(f, "scan L > {}", crate::rational::display_rat(r)),
            ScanCutoff::Never => write!(f, "never scan"),
        }
    }
}

/// Per-type optimal cutoffs `(lambda_j + kappa_j) / kappa_j`.
pub fn optimal_cutoffs(spec: &ArrivalSpec) -> Vec<ScanCutoff> {
    (0..spec.j_count())
        .map(|j| {
            let kappa = &spec.malicious_rates[j];
            if kappa.is_zero() {
                ScanCutoff::Never
            } else {
                ScanCutoff::Above(spec.total_rate(j) / kappa.clone())
            }
        })
        .collect()
}

/// The 0/1 scanning vector minimizing the expected arriving weight per type:
/// scan a length exactly when the genuine fraction plus the amortized scan
/// cost beats running the job blind, i.e. `L > (lambda_j+kappa_j)/kappa_j`.
/// Types with no traffic or no malicious traffic are never scanned.
pub fn optimal_alpha(spec: &ArrivalSpec) -> ScanVector {
    let cutoffs = optimal_cutoffs(spec);
    ScanVector::from_fn(spec, |j, l| match &cutoffs[j] {
        ScanCutoff::Never => Rat::zero(),
        ScanCutoff::Above(c) => {
            if rat_u64(u64::from(l)) > *c {
                Rat::one()
            } else {
                Rat::zero()
            }
        }
    })
}

/// Exact expected arriving weight per type per slot (per server) under
/// scanning vector `alpha`.
///
/// Arriving type-`j` work splits across lengths in proportion to
/// `p_L * L / E[L]`; an unscanned job of length `L` contributes `L`, a
/// scanned one contributes its one scan slot plus `L` weighted by the
/// genuine fraction:
///
/// ```text
/// a_j = (lambda_j + kappa_j)/E[L] * sum_L p_L * [ (1-alpha) L + alpha (rho_j L + 1) ]
/// ```
///
/// With `alpha = 0` everywhere this collapses to `lambda_j + kappa_j`.
pub fn a_vector(alpha: &ScanVector, spec: &ArrivalSpec) -> Result<AVector, ScanError> {
    let mut out = Vec::with_capacity(spec.j_count());
    for j in 0..spec.j_count() {
        let total = spec.total_rate(j);
        if total.is_zero() {
            out.push(Rat::zero());
            continue;
        }
        let rho = spec.genuine_fraction(j).expect("non-zero traffic");
        let dist = &spec.length_dists[j];
        let mean = dist.mean_length();
        let mut acc = Rat::zero();
        for l in dist.support() {
            let p = dist.probability_of(l);
            let a = alpha.alpha(j, l)?.clone();
            let ll = rat_u64(u64::from(l));
            let keep = (Rat::one() - a.clone()) * ll.clone();
            let scanned = a * (rho.clone() * ll + Rat::one());
            acc += p * (keep + scanned);
        }
        out.push(total / mean * acc);
    }
    Ok(AVector(out))
}

/// Composes [`a_vector`] with the capacity-region membership test.
///
/// A strictly positive margin predicts that the scheduler with this `alpha`
/// is stable; if even the weight-minimizing vector lands outside, no
/// algorithm is stable for these arrivals.
pub fn classify(
    spec: &ArrivalSpec,
    alpha: &ScanVector,
    fs: &FeasibleSet,
) -> Result<RegionVerdict, ScanError> {
    let a = a_vector(alpha, spec)?;
    Ok(crate::capacity::membership(&a.0, fs)?)
}

/// One observed job in the scan-all warmup: type, length, and the label the
/// scan revealed (`None` when the job was never scanned).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanLogEntry {
    pub type_index: usize,
    pub length: u32,
    pub revealed: Option<Truth>,
}

/// Per-type estimate recovered from a scan log.
#[derive(Debug, Clone)]
pub struct TypeEstimate {
    pub genuine_rate: Rat,
    pub malicious_rate: Rat,
    pub dist: LengthDistribution,
    pub scanned_jobs: u64,
    pub unscanned_jobs: u64,
}

/// Result of [`estimate_rates`]: one entry per type; `None` marks a type
/// with no scanned observations, for which no ratio can be apportioned.
#[derive(Debug, Clone)]
pub struct RateEstimate {
    pub types: Vec<Option<TypeEstimate>>,
    pub elapsed_slots: u64,
    pub n_servers: usize,
}

impl RateEstimate {
    /// Assembles an [`ArrivalSpec`] when every type was estimated.
    pub fn to_spec(&self) -> Option<ArrivalSpec> {
        let mut genuine = Vec::new();
        let mut malicious = Vec::new();
        let mut dists = Vec::new();
        for t in &self.types {
            let t = t.as_ref()?;
            genuine.push(t.genuine_rate.clone());
            malicious.push(t.malicious_rate.clone());
            dists.push(t.dist.clone());
        }
        ArrivalSpec::new(genuine, malicious, dists, self.n_servers).ok()
    }
}

/// Estimates per-server arrival rates and the empirical length distribution
/// from jobs observed during a scan-all warmup.
///
/// Jobs that were never scanned (under scan-all these are the length-1 jobs,
/// plus any still pending when the warmup ended) are apportioned between
/// genuine and malicious by the scanned-job count ratio of their type.
pub fn estimate_rates(
    scan_log: &[ScanLogEntry],
    elapsed_slots: u64,
    n_servers: usize,
    j_count: usize,
) -> Result<RateEstimate, ScanError> {
    if scan_log.is_empty() || elapsed_slots == 0 {
        return Err(ScanError::EmptyLog);
    }
    struct Acc {
        genuine_work: u64,
        malicious_work: u64,
        unscanned_work: u64,
        genuine_jobs: u64,
        scanned_jobs: u64,
        unscanned_jobs: u64,
        length_counts: BTreeMap<u32, u64>,
    }
    let mut accs: Vec<Acc> = (0..j_count)
        .map(|_| Acc {
            genuine_work: 0,
            malicious_work: 0,
            unscanned_work: 0,
            genuine_jobs: 0,
            scanned_jobs: 0,
            unscanned_jobs: 0,
            length_counts: BTreeMap::new(),
        })
        .collect();
    for e in scan_log {
        let acc = &mut accs[e.type_index];
        *acc.length_counts.entry(e.length).or_insert(0) += 1;
        match e.revealed {
            Some(Truth::Genuine) => {
                acc.genuine_work += u64::from(e.length);
                acc.genuine_jobs += 1;
                acc.scanned_jobs += 1;
            }
            Some(Truth::Malicious) => {
                acc.malicious_work += u64::from(e.length);
                acc.scanned_jobs += 1;
            }
            None => {
                acc.unscanned_work += u64::from(e.length);
                acc.unscanned_jobs += 1;
            }
        }
    }

    let divisor = rat_u64(elapsed_slots) * rat_u64(n_servers as u64);
    let types = accs
        .into_iter()
        .map(|acc| {
            let observed = acc.scanned_jobs + acc.unscanned_jobs;
            if observed == 0 {
                return None;
            }
            let (genuine_share, malicious_share) = if acc.scanned_jobs == 0 {
                // Arrivals seen but none scanned: no basis for apportioning.
                return None;
            } else {
                let r = Rat::new(acc.genuine_jobs.into(), acc.scanned_jobs.into());
                (r.clone(), Rat::one() - r)
            };
            let unscanned = rat_u64(acc.unscanned_work);
            let genuine_rate =
                (rat_u64(acc.genuine_work) + genuine_share * unscanned.clone()) / divisor.clone();
            let malicious_rate =
                (rat_u64(acc.malicious_work) + malicious_share * unscanned) / divisor.clone();
            let total_jobs: u64 = acc.length_counts.values().sum();
            let bands = acc
                .length_counts
                .iter()
                .map(|(&l, &count)| LengthBand {
                    probability: Rat::new(count.into(), total_jobs.into()),
                    lo: l,
                    hi: l,
                })
                .collect();
            let dist = LengthDistribution::new(bands).expect("width-1 count bands are valid");
            Some(TypeEstimate {
                genuine_rate,
                malicious_rate,
                dist,
                scanned_jobs: acc.scanned_jobs,
                unscanned_jobs: acc.unscanned_jobs,
            })
        })
        .collect();

    Ok(RateEstimate {
        types,
        elapsed_slots,
        n_servers,
    })
}
