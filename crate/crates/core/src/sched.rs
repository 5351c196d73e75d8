//! The centralized work-weighted scheduler.
//!
//! Each slot: admit arrivals (scan coin per job), compute the per-type
//! weights `Z_j = X_j + Y_j * (rho_j + E[1/L_j])`, pick the per-server
//! maximal configuration maximizing `sum_j N_j Z_j` (applied on all `n`
//! identical servers), then hand out one unit of service per configuration
//! slot: a unit of processing for a no-scan job or the single scan slot of a
//! pending job, chosen with probability proportional to the residual
//! unscheduled totals.
//!
//! Analysis-facing weights are exact rationals ([`Scheduler::compute_z`],
//! [`argmax_config`]); the slot loop runs on their f64 images with integer
//! queue totals, which keeps runs deterministic without dragging bignum
//! arithmetic through the hot path.

use crate::capacity::FeasibleSet;
use crate::domain::{ArrivalSpec, Configuration, Job, ScanStatus, Truth};
use crate::rational::{rat_u64, to_f64, Rat};
use crate::rng::{stream_rng, PROCESS, SCAN_COINS};
use crate::scanning::ScanVector;
use crate::workload::scan_coin;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedError {
    #[error("type {0} has pending scans but no arrival traffic; Z is undefined")]
    UndefinedRatio(usize),
    #[error("scan vector does not cover type {type_index} length {length}")]
    UndefinedAlpha { type_index: usize, length: u32 },
    #[error("feasible set has {fs} types but the arrival spec has {spec}")]
    TypeCountMismatch { fs: usize, spec: usize },
}

/// Per-type bookkeeping: the no-scan pool (jobs that run blind or were
/// already cleared by a scan) and the pending-scan pool.
#[derive(Debug, Default)]
pub struct TypeQueue {
    noscan: VecDeque<Job>,
    pending: VecDeque<Job>,
    /// Total remaining work in the no-scan pool.
    x_total: u64,
    /// Total length queued in the pending pool.
    y_total: u64,
    pending_jobs: u64,
}

impl TypeQueue {
    pub fn x_total(&self) -> u64 {
        self.x_total
    }

    pub fn y_total(&self) -> u64 {
        self.y_total
    }

    pub fn queue_work(&self) -> u64 {
        self.x_total + self.y_total
    }

    pub fn job_count(&self) -> u64 {
        (self.noscan.len() + self.pending.len()) as u64
    }

    pub fn pending_jobs(&self) -> u64 {
        self.pending_jobs
    }

    pub fn is_empty(&self) -> bool {
        self.noscan.is_empty() && self.pending.is_empty()
    }

    fn admit_noscan(&mut self, job: Job) {
        self.x_total += u64::from(job.remaining);
        self.noscan.push_back(job);
    }

    fn admit_pending(&mut self, job: Job) {
        self.y_total += u64::from(job.length);
        self.pending_jobs += 1;
        self.pending.push_back(job);
    }

    /// Re-inserts a scanned-genuine job into the no-scan pool at its
    /// arrival-order position (service stays oldest-arrival-first).
    fn insert_noscan_by_arrival(&mut self, job: Job) -> usize {
        let key = (job.arrival_slot, job.id);
        let pos = self
            .noscan
            .partition_point(|j| (j.arrival_slot, j.id) < key);
        self.x_total += u64::from(job.remaining);
        self.noscan.insert(pos, job);
        pos
    }

    /// Test-only consistency walk: recompute the cached totals from scratch.
    #[cfg(test)]
    pub(crate) fn recomputed_totals(&self) -> (u64, u64) {
        let x = self.noscan.iter().map(|j| u64::from(j.remaining)).sum();
        let y = self.pending.iter().map(|j| u64::from(j.length)).sum();
        (x, y)
    }
}

/// Arriving job as seen by reports: no truth label attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrivalStub {
    pub id: u64,
    pub type_index: usize,
    pub length: u32,
}

/// A job leaving the system: a genuine completion or a malicious detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub type_index: usize,
    pub length: u32,
    /// Slots in the system, inclusive of arrival and completion slots.
    pub latency: u64,
    pub was_scanned: bool,
    pub malicious: bool,
}

/// One scan outcome (consumed by metrics and the adaptive estimator).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanEvent {
    pub type_index: usize,
    pub length: u32,
    pub truth: Truth,
}

/// Everything observable about one slot.
#[derive(Debug, Clone)]
pub struct SlotReport {
    pub slot: u64,
    pub arrivals: Vec<ArrivalStub>,
    pub completions: Vec<Completion>,
    pub scans: Vec<ScanEvent>,
    /// Weights used for the configuration choice (post-admission).
    pub z_after_admit: Vec<f64>,
    pub z_end: Vec<f64>,
    /// Weights under per-job scan accounting (X + rho*Y + pending count):
    /// the measure in which one unit of service drains exactly 1 on average.
    pub z_perjob_after_admit: Vec<f64>,
    pub z_perjob_end: Vec<f64>,
    /// System-wide chosen configuration (n copies of the per-server argmax
    /// for the centralized scheduler; per-server sum for the cluster).
    pub config: Configuration,
    /// Service units granted per type this slot (processing units + scans).
    pub service_units: Vec<u64>,
    /// Per-type queued work at the end of the slot.
    pub queue_work: Vec<u64>,
    pub jobs_in_system: u64,
}

/// Shared immutable parameters of one scheduling run.
#[derive(Debug, Clone)]
pub(crate) struct SchedParams {
    pub j_count: usize,
    pub n_servers: usize,
    /// Dense alpha lookup per type, indexed by length.
    pub alpha_dense: Vec<Vec<f64>>,
    /// rho_j + E[1/L_j] (0 for dead types).
    pub w: Vec<f64>,
    /// Genuine work fraction rho_j (0 for dead types).
    pub rho: Vec<f64>,
    /// Exact weights for the analysis-facing Z; None marks a dead type.
    pub w_exact: Vec<Option<Rat>>,
    pub per_server_configs: Vec<Configuration>,
    /// Schedule on per-job scan accounting instead of the distribution
    /// constant E[1/L].
    pub per_job_scan_weight: bool,
}

impl SchedParams {
    pub fn new(
        spec: &ArrivalSpec,
        alpha: &ScanVector,
        fs: &FeasibleSet,
        per_job_scan_weight: bool,
    ) -> Result<Self, SchedError> {
        let j_count = spec.j_count();
        if fs.j_count() != j_count {
            return Err(SchedError::TypeCountMismatch {
                fs: fs.j_count(),
                spec: j_count,
            });
        }
        let mut max_len = 0;
        for dist in &spec.length_dists {
            max_len = max_len.max(dist.max_length());
        }
        // Every supported length must have a defined alpha before any job
        // arrives; the dense table would otherwise silently default to 0.
        for (j, dist) in spec.length_dists.iter().enumerate() {
            for l in dist.support() {
                alpha
                    .alpha(j, l)
                    .map_err(|_| SchedError::UndefinedAlpha { type_index: j, length: l })?;
            }
        }
        let alpha_dense = alpha.dense_f64(max_len);
        let mut w = Vec::with_capacity(j_count);
        let mut rho = Vec::with_capacity(j_count);
        let mut w_exact = Vec::with_capacity(j_count);
        for j in 0..j_count {
            match spec.genuine_fraction(j) {
                Some(r) => {
                    let exact = r.clone() + spec.length_dists[j].mean_reciprocal_length();
                    w.push(to_f64(&exact));
                    rho.push(to_f64(&r));
                    w_exact.push(Some(exact));
                }
                None => {
                    w.push(0.0);
                    rho.push(0.0);
                    w_exact.push(None);
                }
            }
        }
        Ok(Self {
            j_count,
            n_servers: spec.n_servers,
            alpha_dense,
            w,
            rho,
            w_exact,
            per_server_configs: fs.maximal_configs().to_vec(),
            per_job_scan_weight,
        })
    }

    pub fn alpha_of(&self, job: &Job) -> f64 {
        self.alpha_dense[job.type_index][job.length as usize]
    }

    /// Swaps in a new scanning vector after checking it covers the support.
    pub fn replace_alpha(
        &mut self,
        spec: &ArrivalSpec,
        alpha: &ScanVector,
    ) -> Result<(), SchedError> {
        for (j, dist) in spec.length_dists.iter().enumerate() {
            for l in dist.support() {
                alpha
                    .alpha(j, l)
                    .map_err(|_| SchedError::UndefinedAlpha { type_index: j, length: l })?;
            }
        }
        let max_len = spec
            .length_dists
            .iter()
            .map(|d| d.max_length())
            .max()
            .unwrap_or(0);
        self.alpha_dense = alpha.dense_f64(max_len);
        Ok(())
    }

    pub fn z_f64(&self, queues: &[TypeQueue]) -> Vec<f64> {
        if self.per_job_scan_weight {
            return self.z_perjob_f64(queues);
        }
        queues
            .iter()
            .enumerate()
            .map(|(j, q)| q.x_total as f64 + self.w[j] * q.y_total as f64)
            .collect()
    }

    /// Per-job-accounted weights, always available for diagnostics.
    pub fn z_perjob_f64(&self, queues: &[TypeQueue]) -> Vec<f64> {
        queues
            .iter()
            .enumerate()
            .map(|(j, q)| {
                q.x_total as f64 + self.rho[j] * q.y_total as f64 + q.pending_jobs as f64
            })
            .collect()
    }

    /// Per-server argmax over the maximal configurations with deterministic
    /// ties: the lexicographically smallest winner (configs are stored in
    /// lexicographic order, so the first strict maximum wins).
    pub fn argmax_per_server(&self, z: &[f64]) -> &Configuration {
        let mut best: Option<(&Configuration, f64)> = None;
        for cfg in &self.per_server_configs {
            let score: f64 = cfg
                .counts
                .iter()
                .zip(z)
                .map(|(&c, zj)| f64::from(c) * zj)
                .sum();
            match &best {
                Some((_, s)) if score <= *s => {}
                _ => best = Some((cfg, score)),
            }
        }
        best.expect("feasible set is never empty").0
    }
}

/// Exact-arithmetic argmax over per-server maximal configurations, scaled to
/// the `n`-server system. Ties pick the lexicographically smallest
/// configuration.
pub fn argmax_config(z: &[Rat], fs: &FeasibleSet, n_servers: usize) -> Configuration {
    let mut best: Option<(&Configuration, Rat)> = None;
    for cfg in fs.maximal_configs() {
        let score: Rat = cfg
            .counts
            .iter()
            .zip(z)
            .map(|(&c, zj)| rat_u64(u64::from(c)) * zj.clone())
            .sum();
        match &best {
            Some((_, s)) if score <= *s => {}
            _ => best = Some((cfg, score)),
        }
    }
    best.expect("feasible set is never empty")
        .0
        .scaled(n_servers as u32)
}

enum ServiceOutcome {
    Worked,
    Idle,
}

/// Per-slot scratch for one type: cursors into the pools plus the residual
/// totals of not-yet-scheduled jobs, which drive the pool-selection coin.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct SlotCursor {
    noscan_from: usize,
    pending_from: usize,
    x_resid: u64,
    y_resid: u64,
}

pub(crate) fn begin_slot(queues: &[TypeQueue], cursors: &mut [SlotCursor]) {
    for (q, c) in queues.iter().zip(cursors.iter_mut()) {
        *c = SlotCursor {
            noscan_from: 0,
            pending_from: 0,
            x_resid: q.x_total,
            y_resid: q.y_total,
        };
    }
}

/// Service mechanics shared by the centralized scheduler and each cluster
/// node.
pub(crate) struct ServiceCtx<'a> {
    pub queues: &'a mut [TypeQueue],
    pub cursors: &'a mut [SlotCursor],
    pub slot: u64,
    pub completions: &'a mut Vec<Completion>,
    pub scans: &'a mut Vec<ScanEvent>,
    pub service_units: &'a mut [u64],
}

impl ServiceCtx<'_> {
    /// One service opportunity for type `j`: picks the no-scan or pending
    /// pool with probability proportional to the residual unscheduled
    /// totals, falling through to whichever pool still has an unscheduled
    /// job; idles when neither does. Returns false on idle.
    pub(crate) fn process_job(&mut self, j: usize, rng: &mut ChaCha8Rng) -> bool {
        let cur = &self.cursors[j];
        let has_x = cur.x_resid > 0;
        let has_y = cur.y_resid > 0;
        let outcome = match (has_x, has_y) {
            (true, true) => {
                let (x, y) = (cur.x_resid, cur.y_resid);
                let v = rng.gen_range(0..x + y);
                if v < x {
                    self.process_x(j)
                } else {
                    self.process_y(j)
                }
            }
            (true, false) => self.process_x(j),
            (false, true) => self.process_y(j),
            (false, false) => ServiceOutcome::Idle,
        };
        match outcome {
            ServiceOutcome::Worked => {
                self.service_units[j] += 1;
                true
            }
            ServiceOutcome::Idle => false,
        }
    }

    /// Executes one unit of the oldest unscheduled no-scan job.
    fn process_x(&mut self, j: usize) -> ServiceOutcome {
        let slot = self.slot;
        let cur = &mut self.cursors[j];
        let q = &mut self.queues[j];
        let Some(i) =
            (cur.noscan_from..q.noscan.len()).find(|&i| q.noscan[i].scheduled_at != slot)
        else {
            debug_assert_eq!(cur.x_resid, 0);
            return ServiceOutcome::Idle;
        };
        let job = &mut q.noscan[i];
        debug_assert!(job.remaining > 0);
        cur.x_resid -= u64::from(job.remaining);
        job.scheduled_at = slot;
        job.remaining -= 1;
        q.x_total -= 1;
        if job.remaining == 0 {
            let done = q.noscan.remove(i).expect("index in range");
            self.completions.push(Completion {
                type_index: j,
                length: done.length,
                latency: slot - done.arrival_slot + 1,
                was_scanned: done.scan_status == ScanStatus::ScannedGenuine,
                malicious: done.reveal_truth() == Truth::Malicious,
            });
            cur.noscan_from = i;
        } else {
            cur.noscan_from = i + 1;
        }
        ServiceOutcome::Worked
    }

    /// Scans the oldest unscheduled pending job: a malicious job is removed
    /// outright, a genuine one moves to the no-scan pool. The scan was this
    /// job's service for the slot, so it cannot also receive a unit.
    fn process_y(&mut self, j: usize) -> ServiceOutcome {
        let slot = self.slot;
        let cur = &mut self.cursors[j];
        let q = &mut self.queues[j];
        let Some(i) =
            (cur.pending_from..q.pending.len()).find(|&i| q.pending[i].scheduled_at != slot)
        else {
            debug_assert_eq!(cur.y_resid, 0);
            return ServiceOutcome::Idle;
        };
        let mut job = q.pending.remove(i).expect("index in range");
        cur.pending_from = i;
        let len = u64::from(job.length);
        cur.y_resid -= len;
        q.y_total -= len;
        q.pending_jobs -= 1;
        job.scheduled_at = slot;
        let truth = job.reveal_truth();
        self.scans.push(ScanEvent {
            type_index: j,
            length: job.length,
            truth,
        });
        match truth {
            Truth::Malicious => {
                self.completions.push(Completion {
                    type_index: j,
                    length: job.length,
                    latency: slot - job.arrival_slot + 1,
                    was_scanned: true,
                    malicious: true,
                });
            }
            Truth::Genuine => {
                job.scan_status = ScanStatus::ScannedGenuine;
                let pos = q.insert_noscan_by_arrival(job);
                if pos < cur.noscan_from {
                    cur.noscan_from += 1;
                }
            }
        }
        ServiceOutcome::Worked
    }
}

/// Admits one job: scan coin against `alpha(type, length)`, then into the
/// matching pool.
pub(crate) fn admit_job(
    queues: &mut [TypeQueue],
    params: &SchedParams,
    rng: &mut ChaCha8Rng,
    mut job: Job,
) -> ArrivalStub {
    let stub = ArrivalStub {
        id: job.id,
        type_index: job.type_index,
        length: job.length,
    };
    let alpha = params.alpha_of(&job);
    if scan_coin(rng, alpha) {
        job.scan_status = ScanStatus::PendingScan;
        queues[job.type_index].admit_pending(job);
    } else {
        job.scan_status = ScanStatus::NoScan;
        queues[job.type_index].admit_noscan(job);
    }
    stub
}

/// The centralized scheduler: one queue family for the whole system, the
/// chosen per-server configuration replicated across all `n` servers.
pub struct Scheduler {
    params: SchedParams,
    queues: Vec<TypeQueue>,
    cursors: Vec<SlotCursor>,
    slot: u64,
    scan_rng: ChaCha8Rng,
    process_rng: ChaCha8Rng,
}

impl Scheduler {
    pub fn new(
        spec: &ArrivalSpec,
        alpha: &ScanVector,
        fs: &FeasibleSet,
        seed: u64,
    ) -> Result<Self, SchedError> {
        Self::with_options(spec, alpha, fs, seed, false)
    }

    /// `per_job_scan_weight` switches the scheduling weight to per-job scan
    /// accounting (`X + rho Y + pending`) instead of `X + Y (rho + E[1/L])`.
    pub fn with_options(
        spec: &ArrivalSpec,
        alpha: &ScanVector,
        fs: &FeasibleSet,
        seed: u64,
        per_job_scan_weight: bool,
    ) -> Result<Self, SchedError> {
        let params = SchedParams::new(spec, alpha, fs, per_job_scan_weight)?;
        let j = params.j_count;
        Ok(Self {
            params,
            queues: (0..j).map(|_| TypeQueue::default()).collect(),
            cursors: vec![SlotCursor::default(); j],
            slot: 0,
            scan_rng: stream_rng(seed, SCAN_COINS),
            process_rng: stream_rng(seed, PROCESS),
        })
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn queues(&self) -> &[TypeQueue] {
        &self.queues
    }

    /// Replaces the scanning vector mid-run (adaptive mode). Jobs already
    /// queued keep their admission decision.
    pub fn set_alpha(&mut self, spec: &ArrivalSpec, alpha: &ScanVector) -> Result<(), SchedError> {
        self.params.replace_alpha(spec, alpha)
    }

    /// Exact per-type weights `Z_j = X_j + Y_j (rho_j + E[1/L_j])`.
    pub fn compute_z(&self) -> Result<Vec<Rat>, SchedError> {
        self.queues
            .iter()
            .enumerate()
            .map(|(j, q)| match &self.params.w_exact[j] {
                Some(w) => Ok(rat_u64(q.x_total) + rat_u64(q.y_total) * w.clone()),
                None if q.y_total == 0 => Ok(rat_u64(q.x_total)),
                None => Err(SchedError::UndefinedRatio(j)),
            })
            .collect()
    }

    /// Admits `arrivals` and runs one full slot. `slot` must advance by one
    /// per call.
    pub fn step(&mut self, slot: u64, arrivals: Vec<Job>) -> SlotReport {
        assert_eq!(slot, self.slot + 1, "slots advance one at a time");
        self.slot = slot;
        let j_count = self.params.j_count;

        let mut stubs = Vec::with_capacity(arrivals.len());
        for job in arrivals {
            debug_assert_eq!(job.arrival_slot, slot);
            stubs.push(admit_job(
                &mut self.queues,
                &self.params,
                &mut self.scan_rng,
                job,
            ));
        }

        let z_after_admit = self.params.z_f64(&self.queues);
        let z_perjob_after_admit = self.params.z_perjob_f64(&self.queues);
        let per_server = self.params.argmax_per_server(&z_after_admit).clone();
        let config = per_server.scaled(self.params.n_servers as u32);

        begin_slot(&self.queues, &mut self.cursors);
        let mut completions = Vec::new();
        let mut scans = Vec::new();
        let mut service_units = vec![0u64; j_count];
        {
            let mut ctx = ServiceCtx {
                queues: &mut self.queues,
                cursors: &mut self.cursors,
                slot,
                completions: &mut completions,
                scans: &mut scans,
                service_units: &mut service_units,
            };
            for j in 0..j_count {
                for _ in 0..config.counts[j] {
                    ctx.process_job(j, &mut self.process_rng);
                }
            }
        }

        let z_end = self.params.z_f64(&self.queues);
        let z_perjob_end = self.params.z_perjob_f64(&self.queues);
        SlotReport {
            slot,
            arrivals: stubs,
            completions,
            scans,
            z_after_admit,
            z_end,
            z_perjob_after_admit,
            z_perjob_end,
            config,
            service_units,
            queue_work: self.queues.iter().map(TypeQueue::queue_work).collect(),
            jobs_in_system: self.queues.iter().map(TypeQueue::job_count).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::enumerate_maximal_configs;
    use crate::domain::test_fixtures::{ec2_capacity, ec2_demands, ec2_spec};
    use crate::domain::{ArrivalSpec, LengthDistribution};
    use crate::rational::{rat, rat_int};
    use crate::scanning::{optimal_alpha, scan_all, scan_none, ScanVector};
    use crate::workload::WorkloadGenerator;

    fn ec2_fs() -> FeasibleSet {
        enumerate_maximal_configs(&ec2_capacity(), &ec2_demands()).unwrap()
    }

    fn unit_fs(j: usize, counts: &[&[u32]]) -> FeasibleSet {
        FeasibleSet::from_parts(
            counts.iter().map(|c| Configuration::new(c.to_vec())).collect(),
            j,
        )
    }

    fn single_type_spec(l: u32, lam: i64, kap: i64, n: usize) -> ArrivalSpec {
        ArrivalSpec::with_shared_dist(
            vec![rat_int(lam)],
            vec![rat_int(kap)],
            LengthDistribution::constant(l),
            n,
        )
        .unwrap()
    }

    #[test]
    fn admit_is_deterministic_for_zero_one_alpha() {
        let spec = single_type_spec(5, 1, 1, 1);
        let fs = unit_fs(1, &[&[1]]);
        // alpha = 0: everything lands in the no-scan pool
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 1).unwrap();
        let jobs: Vec<Job> = (0..100)
            .map(|i| Job::new(i, 0, 5, Truth::Genuine, 1))
            .collect();
        s.step(1, jobs);
        assert_eq!(s.queues()[0].x_total(), 500 - 1); // one unit served
        assert_eq!(s.queues()[0].y_total(), 0);

        // alpha = 1 on every length >= 2: everything queued for scanning
        let mut s = Scheduler::new(&spec, &scan_all(&spec), &fs, 1).unwrap();
        let jobs: Vec<Job> = (0..100)
            .map(|i| Job::new(i, 0, 5, Truth::Genuine, 1))
            .collect();
        s.step(1, jobs);
        // one scan already happened, moving 5 units to the no-scan pool
        assert_eq!(s.queues()[0].y_total(), 495);
        assert_eq!(s.queues()[0].x_total(), 5);
    }

    #[test]
    fn admit_split_concentrates_at_alpha_half() {
        let spec = single_type_spec(2, 1, 1, 1);
        let alpha = ScanVector::from_fn(&spec, |_, _| rat(1, 2));
        let fs = unit_fs(1, &[&[0]]); // no service: admission only
        let mut s = Scheduler::new(&spec, &alpha, &fs, 7).unwrap();
        let n = 100_000u64;
        let jobs: Vec<Job> = (0..n).map(|i| Job::new(i, 0, 2, Truth::Genuine, 1)).collect();
        s.step(1, jobs);
        let pending = s.queues()[0].pending_jobs();
        let frac = pending as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "pending fraction {frac}");
    }

    #[test]
    fn compute_z_matches_hand_example() {
        // X=10, Y=10, rho=1/2, E[1/L]=1/10 -> Z = 10 + 10*(0.6) = 16
        let spec = single_type_spec(10, 1, 1, 1);
        let fs = unit_fs(1, &[&[1]]);
        let alpha = ScanVector::from_fn(&spec, |_, _| rat(1, 2));
        let mut s = Scheduler::new(&spec, &alpha, &fs, 3).unwrap();
        let mut j1 = Job::new(0, 0, 10, Truth::Genuine, 1);
        j1.scan_status = ScanStatus::NoScan;
        s.queues[0].admit_noscan(j1);
        let mut j2 = Job::new(1, 0, 10, Truth::Genuine, 1);
        j2.scan_status = ScanStatus::PendingScan;
        s.queues[0].admit_pending(j2);
        assert_eq!(s.compute_z().unwrap(), vec![rat_int(16)]);
    }

    #[test]
    fn compute_z_y_zero_reduces_to_x() {
        let spec = single_type_spec(10, 1, 0, 1);
        let fs = unit_fs(1, &[&[1]]);
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 3).unwrap();
        let mut j1 = Job::new(0, 0, 7, Truth::Genuine, 1);
        j1.scan_status = ScanStatus::NoScan;
        s.queues[0].admit_noscan(j1);
        assert_eq!(s.compute_z().unwrap(), vec![rat_int(7)]);
    }

    #[test]
    fn compute_z_undefined_ratio_errors() {
        let spec = ArrivalSpec::with_shared_dist(
            vec![rat_int(0)],
            vec![rat_int(0)],
            LengthDistribution::constant(5),
            1,
        )
        .unwrap();
        let fs = unit_fs(1, &[&[1]]);
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 3).unwrap();
        let mut j = Job::new(0, 0, 5, Truth::Malicious, 1);
        j.scan_status = ScanStatus::PendingScan;
        s.queues[0].admit_pending(j);
        assert_eq!(s.compute_z(), Err(SchedError::UndefinedRatio(0)));
    }

    #[test]
    fn argmax_reference_cases() {
        let fs = ec2_fs();
        let pick = |z: &[i64]| {
            let zr: Vec<Rat> = z.iter().map(|&v| rat_int(v)).collect();
            argmax_config(&zr, &fs, 1)
        };
        assert_eq!(pick(&[1, 0, 0]), Configuration::new(vec![2, 0, 0]));
        assert_eq!(pick(&[0, 1, 1]), Configuration::new(vec![0, 1, 1]));
        // tie: all three score 2; lexicographically smallest wins
        assert_eq!(pick(&[1, 1, 1]), Configuration::new(vec![0, 1, 1]));
        // scaling to the system
        let zr: Vec<Rat> = vec![rat_int(1), rat_int(0), rat_int(0)];
        assert_eq!(
            argmax_config(&zr, &fs, 100),
            Configuration::new(vec![200, 0, 0])
        );
    }

    #[test]
    fn f64_argmax_agrees_with_exact_on_random_integer_weights() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let fs = ec2_fs();
        let spec = ec2_spec();
        let params = SchedParams::new(&spec, &scan_none(&spec), &fs, false).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..2000 {
            let z: Vec<i64> = (0..3).map(|_| rng.gen_range(0..50)).collect();
            let zf: Vec<f64> = z.iter().map(|&v| v as f64).collect();
            let zr: Vec<Rat> = z.iter().map(|&v| rat_int(v)).collect();
            let fast = params.argmax_per_server(&zf).clone().scaled(1);
            let exact = argmax_config(&zr, &fs, 1);
            assert_eq!(fast, exact, "z = {z:?}");
        }
    }

    #[test]
    fn process_x_unit_trace() {
        // A single length-5 job processed under a width-1 configuration
        // completes at slot 5 with latency 5.
        let spec = single_type_spec(5, 1, 0, 1);
        let fs = unit_fs(1, &[&[1]]);
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 3).unwrap();
        let r = s.step(1, vec![Job::new(0, 0, 5, Truth::Genuine, 1)]);
        assert_eq!(r.service_units, vec![1]);
        assert!(r.completions.is_empty());
        for t in 2..=4 {
            let r = s.step(t, vec![]);
            assert!(r.completions.is_empty());
        }
        let r = s.step(5, vec![]);
        assert_eq!(r.completions.len(), 1);
        let c = r.completions[0];
        assert_eq!(c.latency, 5);
        assert!(!c.was_scanned && !c.malicious);
        assert!(s.queues()[0].is_empty());
    }

    #[test]
    fn length_one_job_completes_same_slot() {
        let spec = single_type_spec(1, 1, 0, 1);
        let fs = unit_fs(1, &[&[1]]);
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 3).unwrap();
        let r = s.step(1, vec![Job::new(0, 0, 1, Truth::Genuine, 1)]);
        assert_eq!(r.completions.len(), 1);
        assert_eq!(r.completions[0].latency, 1);
    }

    #[test]
    fn process_y_malicious_drops_whole_length() {
        let spec = single_type_spec(300, 1, 1, 1);
        let fs = unit_fs(1, &[&[1]]);
        let mut s = Scheduler::new(&spec, &scan_all(&spec), &fs, 3).unwrap();
        let r = s.step(1, vec![Job::new(0, 0, 300, Truth::Malicious, 1)]);
        // scanned and removed in one slot: Q drops by 300
        assert_eq!(r.completions.len(), 1);
        assert!(r.completions[0].malicious);
        assert_eq!(r.queue_work, vec![0]);
        assert_eq!(r.scans.len(), 1);
        assert_eq!(r.scans[0].truth, Truth::Malicious);
    }

    #[test]
    fn process_y_genuine_moves_to_noscan_and_waits_a_slot() {
        let spec = single_type_spec(300, 1, 1, 1);
        let fs = unit_fs(1, &[&[1]]);
        let mut s = Scheduler::new(&spec, &scan_all(&spec), &fs, 3).unwrap();
        let r = s.step(1, vec![Job::new(0, 0, 300, Truth::Genuine, 1)]);
        // scan consumed the slot: X += 300, Q unchanged, no unit processed
        assert_eq!(r.queue_work, vec![300]);
        assert_eq!(s.queues()[0].x_total(), 300);
        assert_eq!(s.queues()[0].y_total(), 0);
        assert!(r.completions.is_empty());
        // the next slot gives it its first processing unit
        let r = s.step(2, vec![]);
        assert_eq!(s.queues()[0].x_total(), 299);
        assert_eq!(r.service_units, vec![1]);
    }

    #[test]
    fn process_job_fallthrough_prefers_nonempty_pool() {
        let spec = single_type_spec(4, 1, 1, 1);
        let fs = unit_fs(1, &[&[4]]);
        // Only no-scan jobs: every opportunity must process X.
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 3).unwrap();
        let jobs: Vec<Job> = (0..2)
            .map(|i| Job::new(i, 0, 4, Truth::Genuine, 1))
            .collect();
        let r = s.step(1, jobs);
        // 4 opportunities, 2 distinct jobs, one unit each
        assert_eq!(r.service_units, vec![2]);
        assert_eq!(s.queues()[0].x_total(), 8 - 2);
    }

    #[test]
    fn no_job_receives_two_units_in_one_slot() {
        let spec = single_type_spec(4, 1, 1, 1);
        // width-3 configuration vs a single job: 2 opportunities idle
        let fs = unit_fs(1, &[&[3]]);
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 3).unwrap();
        let r = s.step(1, vec![Job::new(0, 0, 4, Truth::Genuine, 1)]);
        assert_eq!(r.service_units, vec![1]);
        assert_eq!(s.queues()[0].x_total(), 3);
    }

    #[test]
    fn process_split_concentrates_on_residual_ratio() {
        // Equal residual totals: the X/Y pick is a fair coin.
        let spec = single_type_spec(10, 1, 1, 1);
        let alpha = ScanVector::from_fn(&spec, |_, _| rat(1, 2));
        let fs = unit_fs(1, &[&[1]]);
        let mut s = Scheduler::new(&spec, &alpha, &fs, 11).unwrap();
        let mut x_picks = 0u64;
        let mut total = 0u64;
        // Rebuild a fresh 1X/1Y state every slot and watch the pick.
        for t in 1..=20_000u64 {
            s.queues[0] = TypeQueue::default();
            let mut a = Job::new(2 * t, 0, 10, Truth::Genuine, t);
            a.scan_status = ScanStatus::NoScan;
            s.queues[0].admit_noscan(a);
            let mut b = Job::new(2 * t + 1, 0, 10, Truth::Genuine, t);
            b.scan_status = ScanStatus::PendingScan;
            s.queues[0].admit_pending(b);
            s.slot = t - 1;
            let r = s.step(t, vec![]);
            total += 1;
            if r.scans.is_empty() {
                x_picks += 1;
            }
        }
        let frac = x_picks as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.02, "X fraction {frac}");
    }

    #[test]
    fn conservation_invariants_hold_through_a_run() {
        let spec = ec2_spec();
        let fs = ec2_fs();
        let alpha = optimal_alpha(&spec);
        let mut gen = WorkloadGenerator::new(spec.clone(), 5).unwrap();
        let mut s = Scheduler::new(&spec, &alpha, &fs, 5).unwrap();
        for t in 1..=3_000 {
            let report = s.step(t, gen.slot_arrivals(t));
            let mut service_total = 0;
            for (j, q) in s.queues().iter().enumerate() {
                let (x, y) = q.recomputed_totals();
                assert_eq!(q.x_total(), x, "slot {t} type {j} X total");
                assert_eq!(q.y_total(), y, "slot {t} type {j} Y total");
                assert_eq!(q.queue_work(), x + y);
                assert_eq!(report.queue_work[j], x + y);
                service_total += report.service_units[j];
            }
            let capacity: u64 = report.config.counts.iter().map(|&c| u64::from(c)).sum();
            assert!(service_total <= capacity, "slot {t} overserved");
        }
    }

    #[test]
    fn x_total_drops_by_exactly_the_number_of_x_services() {
        let spec = single_type_spec(50, 2, 0, 1);
        let fs = unit_fs(1, &[&[3]]);
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 9).unwrap();
        let jobs: Vec<Job> = (0..5).map(|i| Job::new(i, 0, 50, Truth::Genuine, 1)).collect();
        let before = 250;
        let r = s.step(1, jobs);
        assert_eq!(
            s.queues()[0].x_total(),
            before - r.service_units[0],
            "X decreases by the number of X services"
        );
    }

    #[test]
    fn empty_system_stays_empty_but_still_picks_a_config() {
        let spec = ec2_spec();
        let fs = ec2_fs();
        let mut s = Scheduler::new(&spec, &scan_none(&spec), &fs, 1).unwrap();
        let r = s.step(1, vec![]);
        // all-zero Z: tie-break still picks the lexicographically smallest
        assert_eq!(r.config, Configuration::new(vec![0, 100, 100]));
        assert_eq!(r.service_units, vec![0, 0, 0]);
        assert_eq!(r.jobs_in_system, 0);
    }

    #[test]
    fn blind_scheduling_label_flip_leaves_decisions_unchanged_without_scans() {
        // With alpha = 0 the truth labels can never influence anything.
        let spec = ec2_spec();
        let fs = ec2_fs();
        let alpha = scan_none(&spec);
        let run = |flip: bool| {
            let mut gen = WorkloadGenerator::new(spec.clone(), 21).unwrap();
            let mut s = Scheduler::new(&spec, &alpha, &fs, 21).unwrap();
            let mut trace = Vec::new();
            for t in 1..=500 {
                let mut jobs = gen.slot_arrivals(t);
                if flip {
                    jobs = jobs
                        .into_iter()
                        .map(|j| {
                            let flipped = match j.reveal_truth() {
                                Truth::Genuine => Truth::Malicious,
                                Truth::Malicious => Truth::Genuine,
                            };
                            Job::new(j.id, j.type_index, j.length, flipped, j.arrival_slot)
                        })
                        .collect();
                }
                let r = s.step(t, jobs);
                trace.push((r.config, r.service_units, r.queue_work, r.z_after_admit));
            }
            trace
        };
        assert_eq!(run(false), run(true));
    }

    #[test]
    fn blind_scheduling_same_slot_scan_pair_label_swap() {
        // Two same-type same-length pending jobs scanned in the same slot:
        // swapping their labels leaves every scheduler decision identical.
        let spec = single_type_spec(10, 1, 1, 1);
        let alpha = scan_all(&spec);
        let fs = unit_fs(1, &[&[2]]);
        let run = |labels: [Truth; 2]| {
            let mut s = Scheduler::new(&spec, &alpha, &fs, 13).unwrap();
            let jobs = vec![
                Job::new(0, 0, 10, labels[0], 1),
                Job::new(1, 0, 10, labels[1], 1),
            ];
            let mut trace = Vec::new();
            // slot 1 scans both (config width 2); afterwards evolve alone
            let r1 = s.step(1, jobs);
            trace.push((r1.config, r1.service_units, r1.queue_work));
            for t in 2..=15 {
                let r = s.step(t, vec![]);
                trace.push((r.config, r.service_units, r.queue_work));
            }
            trace
        };
        let a = run([Truth::Genuine, Truth::Malicious]);
        let b = run([Truth::Malicious, Truth::Genuine]);
        assert_eq!(a, b);
    }

    #[test]
    fn mean_drain_per_service_unit_is_one() {
        // Mean decrease of the per-job-accounted Z per unit of service is 1:
        // exact for processing units, and in expectation for scans because
        // the pool's genuine fraction matches rho.
        let spec = ec2_spec();
        let fs = ec2_fs();
        let alpha = optimal_alpha(&spec);
        let mut gen = WorkloadGenerator::new(spec.clone(), 17).unwrap();
        let mut s = Scheduler::new(&spec, &alpha, &fs, 17).unwrap();
        let mut drained = [0.0f64; 3];
        let mut units = [0u64; 3];
        let slots = 4_000u64; // roughly 200 service units per slot
        for t in 1..=slots {
            let r = s.step(t, gen.slot_arrivals(t));
            for j in 0..3 {
                drained[j] += r.z_perjob_after_admit[j] - r.z_perjob_end[j];
                units[j] += r.service_units[j];
            }
        }
        for j in 0..3 {
            assert!(units[j] > 50_000, "need enough service events for type {j}");
            let mean = drained[j] / units[j] as f64;
            assert!(
                (mean - 1.0).abs() < 0.05,
                "type {j}: mean drain {mean} over {} units",
                units[j]
            );
        }
    }

    #[test]
    fn genuine_latency_bounded_below_by_length() {
        // A genuine job needs at least L slots of service, plus one slot for
        // its scan when it was queued for scanning.
        let spec = ec2_spec();
        let fs = ec2_fs();
        let alpha = optimal_alpha(&spec);
        let mut gen = WorkloadGenerator::new(spec.clone(), 23).unwrap();
        let mut s = Scheduler::new(&spec, &alpha, &fs, 23).unwrap();
        let mut genuine = 0u64;
        let mut scanned_genuine = 0u64;
        for t in 1..=5_000 {
            for c in s.step(t, gen.slot_arrivals(t)).completions {
                if c.malicious {
                    continue;
                }
                genuine += 1;
                let floor = u64::from(c.length) + u64::from(c.was_scanned);
                assert!(
                    c.latency >= floor,
                    "latency {} below bound {floor} for length {}",
                    c.latency,
                    c.length
                );
                scanned_genuine += u64::from(c.was_scanned);
            }
        }
        assert!(genuine > 1_000 && scanned_genuine > 100, "exercise both paths");
    }

    #[test]
    fn undefined_alpha_on_support_is_rejected() {
        let spec = single_type_spec(5, 1, 1, 1);
        let fs = unit_fs(1, &[&[1]]);
        let empty = ScanVector::new(vec![std::collections::BTreeMap::new()]).unwrap();
        assert!(matches!(
            Scheduler::new(&spec, &empty, &fs, 1),
            Err(SchedError::UndefinedAlpha { .. })
        ));
    }
}
