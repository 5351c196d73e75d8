//! Run orchestration: wiring scenario, workload, scheduler and metrics into
//! deterministic runs, plus the no-simulation analysis entry points.

use crate::capacity::{enumerate_maximal_configs, membership, CapacityError, FeasibleSet, RegionVerdict};
use crate::dist::Cluster;
use crate::domain::{ArrivalSpec, Configuration, Truth};
use crate::metrics::{MetricsCollector, MetricsSample};
use crate::rational::{to_f64, Rat};
use crate::routing::{policy_by_name, RoutingError};
use crate::scanning::{
    a_vector, estimate_rates, optimal_alpha, optimal_cutoffs, scan_all, scan_none, ScanCutoff,
    ScanError, ScanLogEntry, ScanVector,
};
use crate::sched::{SchedError, Scheduler, SlotReport};
use crate::scenario::{ScanChoice, Scenario, ScenarioError, SchedMode};
use crate::workload::{WorkloadError, WorkloadGenerator};
use num_traits::{Signed, Zero};
use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Mismatch(String),
}

impl EngineError {
    /// Configuration errors (bad scenario) versus runtime errors (I/O).
    pub fn is_config(&self) -> bool {
        !matches!(self, EngineError::Io(_))
    }
}

enum Driver {
    Central(Scheduler),
    Dist(Cluster),
}

impl Driver {
    fn step(&mut self, slot: u64, arrivals: Vec<crate::domain::Job>) -> SlotReport {
        match self {
            Driver::Central(s) => s.step(slot, arrivals),
            Driver::Dist(c) => c.step(slot, arrivals),
        }
    }

    fn set_alpha(&mut self, spec: &ArrivalSpec, alpha: &ScanVector) -> Result<(), SchedError> {
        match self {
            Driver::Central(s) => s.set_alpha(spec, alpha),
            Driver::Dist(c) => c.set_alpha(spec, alpha),
        }
    }
}

/// Scan-all warmup bookkeeping for adaptive runs.
struct Warmup {
    until: u64,
    arrived: HashMap<(usize, u32), u64>,
    scanned_genuine: HashMap<(usize, u32), u64>,
    scanned_malicious: HashMap<(usize, u32), u64>,
}

/// Estimated-versus-true outcome of an adaptive warmup.
#[derive(Debug, Clone)]
pub struct AdaptiveSummary {
    pub warmup_slots: u64,
    /// Estimated per-server (genuine, malicious) work rates per type; `None`
    /// for types that fell back to scan-all.
    pub estimated_rates: Vec<Option<(f64, f64)>>,
    /// True per-server rates from the scenario, for side-by-side reporting.
    pub true_rates: Vec<(f64, f64)>,
    pub fallback_types: Vec<usize>,
    /// Whether the recovered vector equals the true-rate optimum on the
    /// whole support.
    pub alpha_matches_true_opt: bool,
}

/// End-of-run summary.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scenario_name: String,
    pub mode_label: String,
    pub scan_label: String,
    pub total_slots: u64,
    pub seed: u64,
    pub genuine_completions: u64,
    pub detections: u64,
    /// Malicious jobs that were never scanned and ran to completion.
    pub executed_malicious: u64,
    pub final_queue_work: u64,
    pub warnings: Vec<String>,
    pub adaptive: Option<AdaptiveSummary>,
}

/// Everything a run produces: the sampled series, the analytical verdict
/// for the scanning vector the run ended on, and a summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: Vec<MetricsSample>,
    pub verdict: RegionVerdict,
    pub summary: RunSummary,
    pub j_count: usize,
}

/// A scenario wired up and ready to step slot by slot.
///
/// [`run`] drives it to completion; tests and tools can instead call
/// [`Simulation::step`] to observe every slot.
pub struct Simulation {
    scenario: Scenario,
    fs: FeasibleSet,
    gen: WorkloadGenerator,
    driver: Driver,
    alpha: ScanVector,
    slot: u64,
    warmup: Option<Warmup>,
    warnings: Vec<String>,
    adaptive: Option<AdaptiveSummary>,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, EngineError> {
        let fs = enumerate_maximal_configs(&scenario.capacity, &scenario.vm_types)?;
        let spec = &scenario.arrivals;
        let alpha = match &scenario.scan {
            ScanChoice::None => scan_none(spec),
            ScanChoice::All => scan_all(spec),
            ScanChoice::Opt => optimal_alpha(spec),
            ScanChoice::Custom(v) => v.clone(),
            // Adaptive runs start under scan-all and learn from the scans.
            ScanChoice::Adaptive { .. } => scan_all(spec),
        };
        let gen = WorkloadGenerator::new(spec.clone(), scenario.seed)?;
        let driver = match &scenario.mode {
            SchedMode::Centralized => {
                Driver::Central(Scheduler::new(spec, &alpha, &fs, scenario.seed)?)
            }
            SchedMode::Decentralized { policy, metric } => {
                let router = policy_by_name(policy, spec.j_count(), spec.n_servers, *metric)?;
                Driver::Dist(Cluster::new(spec, &alpha, &fs, router, scenario.seed)?)
            }
        };
        let warmup = match scenario.scan {
            ScanChoice::Adaptive { warmup_slots } => Some(Warmup {
                until: warmup_slots,
                arrived: HashMap::new(),
                scanned_genuine: HashMap::new(),
                scanned_malicious: HashMap::new(),
            }),
            _ => None,
        };
        Ok(Self {
            scenario: scenario.clone(),
            fs,
            gen,
            driver,
            alpha,
            slot: 0,
            warmup,
            warnings: Vec::new(),
            adaptive: None,
        })
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn feasible_set(&self) -> &FeasibleSet {
        &self.fs
    }

    /// The scanning vector currently applied at admission.
    pub fn current_alpha(&self) -> &ScanVector {
        &self.alpha
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn adaptive_summary(&self) -> Option<&AdaptiveSummary> {
        self.adaptive.as_ref()
    }

    /// Advances the simulation one slot.
    pub fn step(&mut self) -> SlotReport {
        let t = self.slot + 1;
        self.slot = t;
        let arrivals = self.gen.slot_arrivals(t);
        if let Some(w) = &mut self.warmup {
            for job in &arrivals {
                *w.arrived.entry((job.type_index, job.length)).or_insert(0) += 1;
            }
        }
        let report = self.driver.step(t, arrivals);
        if let Some(w) = &mut self.warmup {
            for s in &report.scans {
                let key = (s.type_index, s.length);
                match s.truth {
                    Truth::Genuine => *w.scanned_genuine.entry(key).or_insert(0) += 1,
                    Truth::Malicious => *w.scanned_malicious.entry(key).or_insert(0) += 1,
                }
            }
            if t == w.until {
                self.finish_warmup();
            }
        }
        report
    }

    /// Ends the scan-all warmup: estimate rates from the logged scans, build
    /// the optimal vector for the estimates, and switch admission to it.
    /// Types without a single scanned observation keep the scan-all rule.
    fn finish_warmup(&mut self) {
        let w = self.warmup.take().expect("finish_warmup requires a warmup");
        let spec = &self.scenario.arrivals;
        let j_count = spec.j_count();

        let mut log = Vec::new();
        for (&(j, l), &count) in &w.arrived {
            let g = w.scanned_genuine.get(&(j, l)).copied().unwrap_or(0);
            let m = w.scanned_malicious.get(&(j, l)).copied().unwrap_or(0);
            let unscanned = count.saturating_sub(g + m);
            for _ in 0..g {
                log.push(ScanLogEntry { type_index: j, length: l, revealed: Some(Truth::Genuine) });
            }
            for _ in 0..m {
                log.push(ScanLogEntry { type_index: j, length: l, revealed: Some(Truth::Malicious) });
            }
            for _ in 0..unscanned {
                log.push(ScanLogEntry { type_index: j, length: l, revealed: None });
            }
        }

        let estimate = estimate_rates(&log, w.until, spec.n_servers, j_count).ok();

        let mut estimated_rates: Vec<Option<(f64, f64)>> = vec![None; j_count];
        let mut cutoffs: Vec<Option<ScanCutoff>> = vec![None; j_count];
        let mut fallback_types = Vec::new();
        for j in 0..j_count {
            let est = estimate.as_ref().and_then(|e| e.types[j].as_ref());
            match est {
                Some(t) => {
                    estimated_rates[j] =
                        Some((to_f64(&t.genuine_rate), to_f64(&t.malicious_rate)));
                    cutoffs[j] = Some(if t.malicious_rate.is_zero() {
                        ScanCutoff::Never
                    } else {
                        ScanCutoff::Above(
                            (t.genuine_rate.clone() + t.malicious_rate.clone())
                                / t.malicious_rate.clone(),
                        )
                    });
                }
                None => {
                    fallback_types.push(j);
                    self.warnings.push(format!(
                        "type {}: no scanned observations in {} warmup slots; keeping scan-all",
                        j + 1,
                        w.until
                    ));
                }
            }
        }

        // Apply the estimated cutoffs over the true support; fallback types
        // keep the scan-all rule (scan everything longer than one slot).
        let new_alpha = ScanVector::from_fn(spec, |j, l| match &cutoffs[j] {
            Some(ScanCutoff::Never) => Rat::zero(),
            Some(ScanCutoff::Above(c)) => {
                if crate::rational::rat_u64(u64::from(l)) > *c {
                    Rat::from_integer(1.into())
                } else {
                    Rat::zero()
                }
            }
            None => {
                if l <= 1 {
                    Rat::zero()
                } else {
                    Rat::from_integer(1.into())
                }
            }
        });
        self.driver
            .set_alpha(spec, &new_alpha)
            .expect("vector built over the support is always admissible");
        let alpha_matches_true_opt = new_alpha == optimal_alpha(spec);
        self.alpha = new_alpha;

        self.adaptive = Some(AdaptiveSummary {
            warmup_slots: w.until,
            estimated_rates,
            true_rates: (0..j_count)
                .map(|j| {
                    (
                        to_f64(&spec.genuine_rates[j]),
                        to_f64(&spec.malicious_rates[j]),
                    )
                })
                .collect(),
            fallback_types,
            alpha_matches_true_opt,
        });
    }

    /// Analytical verdict for the vector currently in force.
    pub fn verdict(&self) -> Result<RegionVerdict, EngineError> {
        let a = a_vector(&self.alpha, &self.scenario.arrivals)?;
        Ok(membership(&a.0, &self.fs)?)
    }
}

/// Executes a scenario end to end.
pub fn run(scenario: &Scenario) -> Result<RunOutput, EngineError> {
    let mut sim = Simulation::new(scenario)?;
    let mut metrics = MetricsCollector::new(scenario.sample_every);
    let mut final_queue_work = 0u64;
    for _ in 0..scenario.total_slots {
        let report = sim.step();
        metrics.observe(&report);
        final_queue_work = report.queue_work.iter().sum();
    }
    let verdict = sim.verdict()?;
    let summary = RunSummary {
        scenario_name: scenario.name.clone(),
        mode_label: match &scenario.mode {
            SchedMode::Centralized => "centralized".to_string(),
            SchedMode::Decentralized { policy, .. } => format!("decentralized/{policy}"),
        },
        scan_label: scenario.scan.label().to_string(),
        total_slots: scenario.total_slots,
        seed: scenario.seed,
        genuine_completions: metrics.genuine_completions(),
        detections: metrics.detections(),
        executed_malicious: metrics.executed_malicious(),
        final_queue_work,
        warnings: sim.warnings().to_vec(),
        adaptive: sim.adaptive.clone(),
    };
    Ok(RunOutput {
        samples: metrics.into_samples(),
        verdict,
        summary,
        j_count: scenario.arrivals.j_count(),
    })
}

/// Executes an adaptive scenario (scan-all warmup, then the learned vector).
/// Identical to [`run`]; the separate entry point exists so callers can
/// insist on adaptive semantics.
pub fn run_adaptive(scenario: &Scenario) -> Result<RunOutput, EngineError> {
    if !matches!(scenario.scan, ScanChoice::Adaptive { .. }) {
        return Err(EngineError::Mismatch(
            "run_adaptive requires scan strategy `adaptive`".into(),
        ));
    }
    run(scenario)
}

// ---------------------------------------------------------------------------
// Analysis (no simulation)
// ---------------------------------------------------------------------------

/// One scanning strategy's analytical footprint.
#[derive(Debug, Clone)]
pub struct StrategyAnalysis {
    pub name: String,
    /// Expected arriving weight per type, per server.
    pub a_per_server: Vec<Rat>,
    pub verdict: RegionVerdict,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub scenario_name: String,
    pub maximal_configs: Vec<Configuration>,
    pub cutoffs: Vec<ScanCutoff>,
    pub strategies: Vec<StrategyAnalysis>,
}

/// Computes maximal configurations, optimal cutoffs and the verdicts of the
/// bundled strategies (plus the scenario's custom table when present).
pub fn analyze(scenario: &Scenario) -> Result<AnalysisReport, EngineError> {
    let fs = enumerate_maximal_configs(&scenario.capacity, &scenario.vm_types)?;
    let spec = &scenario.arrivals;
    let mut entries: Vec<(String, ScanVector)> = vec![
        ("none".into(), scan_none(spec)),
        ("all".into(), scan_all(spec)),
        ("opt".into(), optimal_alpha(spec)),
    ];
    if let ScanChoice::Custom(v) = &scenario.scan {
        entries.push(("custom".into(), v.clone()));
    }
    let strategies = entries
        .into_iter()
        .map(|(name, alpha)| {
            let a = a_vector(&alpha, spec)?;
            let verdict = membership(&a.0, &fs)?;
            Ok(StrategyAnalysis {
                name,
                a_per_server: a.0,
                verdict,
            })
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    Ok(AnalysisReport {
        scenario_name: scenario.name.clone(),
        maximal_configs: fs.maximal_configs().to_vec(),
        cutoffs: optimal_cutoffs(spec),
        strategies,
    })
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.scenario_name)?;
        write!(f, "maximal per-server configurations:")?;
        for c in &self.maximal_configs {
            write!(f, " {c}")?;
        }
        writeln!(f)?;
        writeln!(f, "optimal scan cutoffs (largest unscanned length per type):")?;
        for (j, c) in self.cutoffs.iter().enumerate() {
            match c {
                ScanCutoff::Never => writeln!(f, "  type {}: never scan", j + 1)?,
                ScanCutoff::Above(r) => {
                    writeln!(f, "  type {}: {} (cutoff at {})", j + 1, c, r.floor().numer())?
                }
            }
        }
        writeln!(f, "strategies:")?;
        for s in &self.strategies {
            let a: Vec<String> = s
                .a_per_server
                .iter()
                .map(|x| format!("{:.6}", to_f64(x)))
                .collect();
            writeln!(
                f,
                "  {:<7} a = ({})  margin = {}  -> {}",
                s.name,
                a.join(", "),
                s.verdict.margin,
                s.verdict.stability()
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Compare
// ---------------------------------------------------------------------------

/// Paired samples of two runs on the same cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub slot: u64,
    pub latency_a: Option<f64>,
    pub latency_b: Option<f64>,
    pub latency_ratio: Option<f64>,
    pub latency_diff: Option<f64>,
    pub queue_a: f64,
    pub queue_b: f64,
    pub queue_ratio: Option<f64>,
    pub queue_diff: f64,
}

/// Aligns two outputs sample by sample and emits ratio/difference series
/// (first argument is the numerator).
pub fn compare(a: &RunOutput, b: &RunOutput) -> Result<Vec<CompareRow>, EngineError> {
    if a.samples.len() != b.samples.len() {
        return Err(EngineError::Mismatch(format!(
            "sample counts differ: {} vs {}",
            a.samples.len(),
            b.samples.len()
        )));
    }
    a.samples
        .iter()
        .zip(&b.samples)
        .map(|(sa, sb)| {
            if sa.slot != sb.slot {
                return Err(EngineError::Mismatch(format!(
                    "sample slots differ: {} vs {}",
                    sa.slot, sb.slot
                )));
            }
            let latency_ratio = match (sa.avg_latency, sb.avg_latency) {
                (Some(x), Some(y)) if y > 0.0 => Some(x / y),
                _ => None,
            };
            let latency_diff = match (sa.avg_latency, sb.avg_latency) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            };
            Ok(CompareRow {
                slot: sa.slot,
                latency_a: sa.avg_latency,
                latency_b: sb.avg_latency,
                latency_ratio,
                latency_diff,
                queue_a: sa.avg_queue_work,
                queue_b: sb.avg_queue_work,
                queue_ratio: (sb.avg_queue_work > 0.0)
                    .then(|| sa.avg_queue_work / sb.avg_queue_work),
                queue_diff: sa.avg_queue_work - sb.avg_queue_work,
            })
        })
        .collect()
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "slot,avg_latency_a,avg_latency_b,latency_ratio,latency_diff,avg_queue_a,avg_queue_b,queue_ratio,queue_diff"
    )?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.slot,
            opt(r.latency_a),
            opt(r.latency_b),
            opt(r.latency_ratio),
            opt(r.latency_diff),
            r.queue_a,
            r.queue_b,
            opt(r.queue_ratio),
            r.queue_diff,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

/// Stability margins of the bundled strategies under one malicious-rate
/// scaling factor.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scale: Rat,
    pub margin_none: crate::capacity::Margin,
    pub margin_all: crate::capacity::Margin,
    pub margin_opt: crate::capacity::Margin,
}

/// Scales every malicious rate by each factor and reports the margins: a
/// cheap map of where the stability boundary sits.
pub fn sweep(scenario: &Scenario, scales: &[Rat]) -> Result<Vec<SweepRow>, EngineError> {
    let fs = enumerate_maximal_configs(&scenario.capacity, &scenario.vm_types)?;
    scales
        .iter()
        .map(|scale| {
            if scale.is_negative() {
                return Err(EngineError::Mismatch(format!(
                    "kappa scale {scale} must be non-negative"
                )));
            }
            let mut spec = scenario.arrivals.clone();
            for k in &mut spec.malicious_rates {
                *k = k.clone() * scale.clone();
            }
            let margin_of = |alpha: &ScanVector| -> Result<crate::capacity::Margin, EngineError> {
                let a = a_vector(alpha, &spec)?;
                Ok(membership(&a.0, &fs)?.margin)
            };
            Ok(SweepRow {
                scale: scale.clone(),
                margin_none: margin_of(&scan_none(&spec))?,
                margin_all: margin_of(&scan_all(&spec))?,
                margin_opt: margin_of(&optimal_alpha(&spec))?,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "kappa_scale,margin_none,margin_all,margin_opt")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            to_f64(&r.scale),
            r.margin_none.as_f64(),
            r.margin_all.as_f64(),
            r.margin_opt.as_f64(),
        )?;
    }
    Ok(())
}
