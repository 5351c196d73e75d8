//! Scenario files: a TOML document with `[servers]`, `[[vm_types]]`,
//! `[arrivals]`, `[lengths]`, `[scan]` and `[run]` sections describing one
//! reproducible experiment.
//!
//! All rates, probabilities and resource amounts are written as strings and
//! parsed as exact rationals (`"17.1"`, `"1/3"`, `"99/100"`), so scenario
//! boundaries survive the trip through the file format. Arrival rates are
//! per-server expected work units per slot.

use crate::domain::{
    ArrivalSpec, DomainError, LengthBand, LengthDistribution, ResourceVector, VmTypeSpec,
};
use crate::rational::{parse_rat, ParseRatError, Rat};
use crate::routing::WorkloadMetric;
use crate::scanning::{ScanVector, ScanError};
use num_traits::{One, Signed, Zero};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Rational(#[from] ParseRatError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Scan(#[from] ScanError),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Scheduling mode of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedMode {
    Centralized,
    Decentralized {
        policy: String,
        metric: WorkloadMetric,
    },
}

/// Scan strategy selection for a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanChoice {
    None,
    All,
    Opt,
    Custom(ScanVector),
    /// Scan-all warmup for the given number of slots, then switch to the
    /// optimum of the estimated rates.
    Adaptive { warmup_slots: u64 },
}

impl ScanChoice {
    pub fn label(&self) -> &'static str {
        match self {
            ScanChoice::None => "none",
            ScanChoice::All => "all",
            ScanChoice::Opt => "opt",
            ScanChoice::Custom(_) => "custom",
            ScanChoice::Adaptive { .. } => "adaptive",
        }
    }
}

/// A fully validated experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub capacity: ResourceVector,
    pub vm_types: Vec<VmTypeSpec>,
    pub arrivals: ArrivalSpec,
    pub mode: SchedMode,
    pub scan: ScanChoice,
    pub total_slots: u64,
    pub sample_every: u64,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Raw serde layer
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    servers: RawServers,
    vm_types: Vec<RawVmType>,
    arrivals: RawArrivals,
    lengths: RawLengths,
    scan: RawScan,
    run: RawRun,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawServers {
    count: u64,
    capacity: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVmType {
    name: Option<String>,
    demand: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArrivals {
    /// Per-server expected genuine work units per slot, one entry per type.
    genuine: Vec<String>,
    /// Per-server expected malicious work units per slot.
    malicious: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLengths {
    bands: Vec<RawBand>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBand {
    probability: String,
    lo: u32,
    hi: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    strategy: String,
    warmup_slots: Option<u64>,
    alpha: Option<Vec<RawAlphaRange>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlphaRange {
    /// 1-based job type.
    r#type: usize,
    lo: u32,
    hi: u32,
    value: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    mode: String,
    routing: Option<String>,
    workload_metric: Option<String>,
    total_slots: u64,
    sample_every: u64,
    seed: u64,
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

fn parse_rats(values: &[String]) -> Result<Vec<Rat>, ScenarioError> {
    values.iter().map(|s| Ok(parse_rat(s)?)).collect()
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text)?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let mut scenario = Self::from_toml_str(&text)?;
        if scenario.name.is_empty() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                scenario.name = stem.to_string();
            }
        }
        Ok(scenario)
    }

    fn from_raw(raw: RawScenario) -> Result<Self, ScenarioError> {
        if raw.servers.count == 0 {
            return Err(invalid("[servers] count must be at least 1"));
        }
        let capacity = ResourceVector::new(parse_rats(&raw.servers.capacity)?)?;

        if raw.vm_types.is_empty() {
            return Err(invalid("at least one [[vm_types]] entry is required"));
        }
        let vm_types = raw
            .vm_types
            .iter()
            .enumerate()
            .map(|(j, vt)| {
                let demand = ResourceVector::new(parse_rats(&vt.demand)?)?;
                if demand.dim() != capacity.dim() {
                    return Err(invalid(format!(
                        "vm type {} demand has {} resource dimensions, capacity has {}",
                        vt.name.clone().unwrap_or_else(|| (j + 1).to_string()),
                        demand.dim(),
                        capacity.dim()
                    )));
                }
                Ok(VmTypeSpec::new(j, demand)?)
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let j_count = vm_types.len();

        let bands = raw
            .lengths
            .bands
            .iter()
            .map(|b| {
                Ok(LengthBand {
                    probability: parse_rat(&b.probability)?,
                    lo: b.lo,
                    hi: b.hi,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let dist = LengthDistribution::new(bands)?;

        let genuine = parse_rats(&raw.arrivals.genuine)?;
        let malicious = parse_rats(&raw.arrivals.malicious)?;
        if genuine.len() != j_count || malicious.len() != j_count {
            return Err(invalid(format!(
                "arrival rate lists must have one entry per vm type ({j_count})"
            )));
        }
        let arrivals = ArrivalSpec::with_shared_dist(
            genuine,
            malicious,
            dist,
            raw.servers.count as usize,
        )?;

        let scan = match raw.scan.strategy.as_str() {
            "none" => ScanChoice::None,
            "all" => ScanChoice::All,
            "opt" => ScanChoice::Opt,
            "custom" => {
                let ranges = raw
                    .scan
                    .alpha
                    .as_deref()
                    .ok_or_else(|| invalid("scan strategy `custom` requires [[scan.alpha]] entries"))?;
                ScanChoice::Custom(build_custom_alpha(ranges, &arrivals)?)
            }
            "adaptive" => {
                let warmup_slots = raw
                    .scan
                    .warmup_slots
                    .ok_or_else(|| invalid("scan strategy `adaptive` requires warmup_slots"))?;
                if warmup_slots == 0 || warmup_slots >= raw.run.total_slots {
                    return Err(invalid(
                        "warmup_slots must be positive and smaller than total_slots",
                    ));
                }
                ScanChoice::Adaptive { warmup_slots }
            }
            other => {
                return Err(invalid(format!(
                    "unknown scan strategy `{other}` (expected none|all|opt|custom|adaptive)"
                )))
            }
        };

        let metric = match raw.run.workload_metric.as_deref() {
            None | Some("z-weight") => WorkloadMetric::ZWeight,
            Some("queue-length") => WorkloadMetric::QueueLength,
            Some(other) => {
                return Err(invalid(format!(
                    "unknown workload_metric `{other}` (expected z-weight|queue-length)"
                )))
            }
        };
        let mode = match raw.run.mode.as_str() {
            "centralized" => {
                if raw.run.routing.is_some() {
                    return Err(invalid("routing is only valid in decentralized mode"));
                }
                SchedMode::Centralized
            }
            "decentralized" => {
                let policy = raw
                    .run
                    .routing
                    .clone()
                    .ok_or_else(|| invalid("decentralized mode requires a routing policy"))?;
                if !crate::routing::policy_names().contains(&policy.as_str()) {
                    return Err(invalid(format!("unknown routing policy `{policy}`")));
                }
                SchedMode::Decentralized { policy, metric }
            }
            other => {
                return Err(invalid(format!(
                    "unknown mode `{other}` (expected centralized|decentralized)"
                )))
            }
        };

        if raw.run.total_slots == 0 {
            return Err(invalid("total_slots must be positive"));
        }
        if raw.run.sample_every == 0 {
            return Err(invalid("sample_every must be positive"));
        }

        Ok(Scenario {
            name: raw.name.unwrap_or_default(),
            capacity,
            vm_types,
            arrivals,
            mode,
            scan,
            total_slots: raw.run.total_slots,
            sample_every: raw.run.sample_every,
            seed: raw.run.seed,
        })
    }

    /// Returns a copy with another seed (used by multi-run orchestration).
    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.seed = seed;
        s
    }
}

/// Expands `[[scan.alpha]]` range entries into a per-length table over each
/// type's support; lengths not covered default to 0.
fn build_custom_alpha(
    ranges: &[RawAlphaRange],
    arrivals: &ArrivalSpec,
) -> Result<ScanVector, ScenarioError> {
    let j_count = arrivals.j_count();
    let mut tables: Vec<BTreeMap<u32, Rat>> = arrivals
        .length_dists
        .iter()
        .map(|d| d.support().into_iter().map(|l| (l, Rat::zero())).collect())
        .collect();
    for r in ranges {
        if r.r#type == 0 || r.r#type > j_count {
            return Err(invalid(format!(
                "scan.alpha type {} out of range 1..={j_count}",
                r.r#type
            )));
        }
        if r.lo > r.hi {
            return Err(invalid(format!("scan.alpha range {}..{} is empty", r.lo, r.hi)));
        }
        let value = parse_rat(&r.value)?;
        if value.is_negative() || value > Rat::one() {
            return Err(invalid(format!("scan.alpha value {} outside [0,1]", r.value)));
        }
        let table = &mut tables[r.r#type - 1];
        for l in r.lo..=r.hi {
            if let Some(slot) = table.get_mut(&l) {
                *slot = value.clone();
            }
        }
    }
    Ok(ScanVector::new(tables)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn reference_toml(scan: &str, run: &str) -> String {
        format!(
            r#"
name = "test"

[servers]
count = 100
capacity = ["30", "30", "4000"]

[[vm_types]]
name = "standard"
demand = ["15", "8", "1690"]

[[vm_types]]
name = "high-memory"
demand = ["17.1", "6.5", "420"]

[[vm_types]]
name = "high-cpu"
demand = ["7", "20", "1690"]

[arrivals]
genuine = ["99/100", "33/100", "33/50"]
malicious = ["7/10", "1/100", "1/100"]

[lengths]
bands = [
  {{ probability = "7/10", lo = 1, hi = 50 }},
  {{ probability = "3/20", lo = 251, hi = 300 }},
  {{ probability = "3/20", lo = 451, hi = 500 }},
]

{scan}

{run}
"#
        )
    }

    fn opt_centralized() -> String {
        reference_toml(
            "[scan]\nstrategy = \"opt\"",
            "[run]\nmode = \"centralized\"\ntotal_slots = 1000\nsample_every = 100\nseed = 42",
        )
    }

    #[test]
    fn parses_reference_scenario() {
        let s = Scenario::from_toml_str(&opt_centralized()).unwrap();
        assert_eq!(s.name, "test");
        assert_eq!(s.arrivals.n_servers, 100);
        assert_eq!(s.arrivals.genuine_rates[0], rat(99, 100));
        assert_eq!(s.vm_types.len(), 3);
        assert_eq!(s.scan, ScanChoice::Opt);
        assert_eq!(s.mode, SchedMode::Centralized);
        assert_eq!(s.arrivals.length_dists[0].mean_length(), rat(261, 2));
    }

    #[test]
    fn decentralized_requires_known_policy() {
        let good = reference_toml(
            "[scan]\nstrategy = \"opt\"",
            "[run]\nmode = \"decentralized\"\nrouting = \"jsw\"\ntotal_slots = 10\nsample_every = 2\nseed = 1",
        );
        let s = Scenario::from_toml_str(&good).unwrap();
        assert_eq!(
            s.mode,
            SchedMode::Decentralized { policy: "jsw".into(), metric: WorkloadMetric::ZWeight }
        );

        let bad = reference_toml(
            "[scan]\nstrategy = \"opt\"",
            "[run]\nmode = \"decentralized\"\nrouting = \"zigzag\"\ntotal_slots = 10\nsample_every = 2\nseed = 1",
        );
        assert!(matches!(Scenario::from_toml_str(&bad), Err(ScenarioError::Invalid(_))));

        let missing = reference_toml(
            "[scan]\nstrategy = \"opt\"",
            "[run]\nmode = \"decentralized\"\ntotal_slots = 10\nsample_every = 2\nseed = 1",
        );
        assert!(Scenario::from_toml_str(&missing).is_err());
    }

    #[test]
    fn custom_alpha_ranges_expand_over_support() {
        let toml = reference_toml(
            r#"[scan]
strategy = "custom"
alpha = [
  { type = 1, lo = 3, hi = 500, value = "1" },
  { type = 2, lo = 35, hi = 500, value = "1/2" },
]"#,
            "[run]\nmode = \"centralized\"\ntotal_slots = 10\nsample_every = 2\nseed = 1",
        );
        let s = Scenario::from_toml_str(&toml).unwrap();
        let ScanChoice::Custom(alpha) = &s.scan else {
            panic!("expected custom scan choice")
        };
        assert_eq!(*alpha.alpha(0, 2).unwrap(), rat(0, 1));
        assert_eq!(*alpha.alpha(0, 3).unwrap(), rat(1, 1));
        assert_eq!(*alpha.alpha(1, 40).unwrap(), rat(1, 2));
        assert_eq!(*alpha.alpha(2, 499).unwrap(), rat(0, 1));
    }

    #[test]
    fn adaptive_requires_sane_warmup() {
        let good = reference_toml(
            "[scan]\nstrategy = \"adaptive\"\nwarmup_slots = 500",
            "[run]\nmode = \"centralized\"\ntotal_slots = 1000\nsample_every = 100\nseed = 1",
        );
        assert!(Scenario::from_toml_str(&good).is_ok());

        let too_long = reference_toml(
            "[scan]\nstrategy = \"adaptive\"\nwarmup_slots = 1000",
            "[run]\nmode = \"centralized\"\ntotal_slots = 1000\nsample_every = 100\nseed = 1",
        );
        assert!(Scenario::from_toml_str(&too_long).is_err());
    }

    #[test]
    fn bad_probability_sum_is_rejected() {
        let toml = opt_centralized().replace("\"7/10\"", "\"6/10\"");
        let err = Scenario::from_toml_str(&toml).unwrap_err();
        assert!(matches!(err, ScenarioError::Domain(DomainError::BadProbabilitySum(_))));
    }

    #[test]
    fn alpha_value_out_of_range_is_rejected() {
        let toml = reference_toml(
            r#"[scan]
strategy = "custom"
alpha = [ { type = 1, lo = 1, hi = 2, value = "3/2" } ]"#,
            "[run]\nmode = \"centralized\"\ntotal_slots = 10\nsample_every = 2\nseed = 1",
        );
        assert!(Scenario::from_toml_str(&toml).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let toml = opt_centralized().replace("seed = 42", "seed = 42\nbanana = 1");
        assert!(Scenario::from_toml_str(&toml).is_err());
    }
}
