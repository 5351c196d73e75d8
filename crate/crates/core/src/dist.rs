//! Decentralized scheduling: per-server queues, local configuration choice
//! with refresh-time reconfiguration, and pluggable routing.
//!
//! Arrivals are routed job by job (the router observes current queue
//! states); the admission scan coin is flipped at the routed server, drawn
//! from the run's single scan stream in arrival order. Every server then
//! runs one local slot. A server recomputes its configuration at the start
//! of any slot when it has none, or when some slot of its configuration
//! found no eligible job in the previous slot; with all queues empty it
//! parks idle until work arrives.

use crate::capacity::FeasibleSet;
use crate::domain::{ArrivalSpec, Configuration, Job};
use crate::rng::{stream_rng, PROCESS_SERVER_BASE, ROUTING, SCAN_COINS};
use crate::routing::{QueueStats, RoutingPolicy, WorkloadMetric};
use crate::scanning::ScanVector;
use crate::sched::{
    admit_job, begin_slot, ArrivalStub, SchedError, SchedParams, ServiceCtx, SlotCursor,
    SlotReport, TypeQueue,
};
use rand_chacha::ChaCha8Rng;

/// One server: local queues, its committed configuration, and the starvation
/// flag that triggers the next refresh.
pub struct ServerNode {
    queues: Vec<TypeQueue>,
    cursors: Vec<SlotCursor>,
    config: Option<Configuration>,
    starved: bool,
    process_rng: ChaCha8Rng,
}

impl ServerNode {
    fn new(j_count: usize, seed: u64, index: usize) -> Self {
        Self {
            queues: (0..j_count).map(|_| TypeQueue::default()).collect(),
            cursors: vec![SlotCursor::default(); j_count],
            config: None,
            starved: false,
            process_rng: stream_rng(seed, PROCESS_SERVER_BASE + index as u64),
        }
    }

    pub fn queues(&self) -> &[TypeQueue] {
        &self.queues
    }

    pub fn current_config(&self) -> Option<&Configuration> {
        self.config.as_ref()
    }

    fn all_empty(&self) -> bool {
        self.queues.iter().all(TypeQueue::is_empty)
    }
}

/// Router-facing view of the fleet.
struct NodeStats<'a> {
    nodes: &'a [ServerNode],
    w: &'a [f64],
}

impl QueueStats for NodeStats<'_> {
    fn n_servers(&self) -> usize {
        self.nodes.len()
    }

    fn job_count(&self, v: usize, j: usize) -> u64 {
        self.nodes[v].queues[j].job_count()
    }

    fn workload(&self, v: usize, j: usize, metric: WorkloadMetric) -> f64 {
        let q = &self.nodes[v].queues[j];
        match metric {
            WorkloadMetric::QueueLength => q.queue_work() as f64,
            WorkloadMetric::ZWeight => q.x_total() as f64 + self.w[j] * q.y_total() as f64,
        }
    }
}

/// The decentralized system: `n` servers plus a router.
pub struct Cluster {
    params: SchedParams,
    nodes: Vec<ServerNode>,
    router: Box<dyn RoutingPolicy>,
    routing_rng: ChaCha8Rng,
    scan_rng: ChaCha8Rng,
    slot: u64,
}

impl Cluster {
    pub fn new(
        spec: &ArrivalSpec,
        alpha: &ScanVector,
        fs: &FeasibleSet,
        router: Box<dyn RoutingPolicy>,
        seed: u64,
    ) -> Result<Self, SchedError> {
        let params = SchedParams::new(spec, alpha, fs, false)?;
        let nodes = (0..spec.n_servers)
            .map(|v| ServerNode::new(params.j_count, seed, v))
            .collect();
        Ok(Self {
            params,
            nodes,
            router,
            routing_rng: stream_rng(seed, ROUTING),
            scan_rng: stream_rng(seed, SCAN_COINS),
            slot: 0,
        })
    }

    pub fn nodes(&self) -> &[ServerNode] {
        &self.nodes
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn router_name(&self) -> &'static str {
        self.router.name()
    }

    /// Replaces the scanning vector mid-run (adaptive mode).
    pub fn set_alpha(&mut self, spec: &ArrivalSpec, alpha: &ScanVector) -> Result<(), SchedError> {
        self.params.replace_alpha(spec, alpha)
    }

    /// Routes one job and admits it at the chosen server. Exposed for tests
    /// that need to observe routing decisions directly.
    pub fn route_and_admit(&mut self, job: Job) -> (usize, ArrivalStub) {
        let j = job.type_index;
        let view = NodeStats {
            nodes: &self.nodes,
            w: &self.params.w,
        };
        let v = self.router.route(j, &view, &mut self.routing_rng);
        debug_assert!(v < self.nodes.len());
        let stub = admit_job(
            &mut self.nodes[v].queues,
            &self.params,
            &mut self.scan_rng,
            job,
        );
        (v, stub)
    }

    /// Routes all arrivals, then runs one local slot on every server.
    pub fn step(&mut self, slot: u64, arrivals: Vec<Job>) -> SlotReport {
        assert_eq!(slot, self.slot + 1, "slots advance one at a time");
        self.slot = slot;
        let j_count = self.params.j_count;

        let mut stubs = Vec::with_capacity(arrivals.len());
        for job in arrivals {
            debug_assert_eq!(job.arrival_slot, slot);
            let (_, stub) = self.route_and_admit(job);
            stubs.push(stub);
        }

        let z_after_admit = self.global_z();
        let z_perjob_after_admit = self.global_z_perjob();

        let mut completions = Vec::new();
        let mut scans = Vec::new();
        let mut service_units = vec![0u64; j_count];
        let mut config_total = vec![0u32; j_count];

        for node in &mut self.nodes {
            // Local refresh: recompute when unset or starved last slot.
            if node.config.is_none() || node.starved {
                node.starved = false;
                if node.all_empty() {
                    node.config = None;
                } else {
                    let z = self.params.z_f64(&node.queues);
                    node.config = Some(self.params.argmax_per_server(&z).clone());
                }
            }
            let Some(cfg) = node.config.clone() else {
                continue;
            };
            for (j, &c) in cfg.counts.iter().enumerate() {
                config_total[j] += c;
            }
            begin_slot(&node.queues, &mut node.cursors);
            let mut ctx = ServiceCtx {
                queues: &mut node.queues,
                cursors: &mut node.cursors,
                slot,
                completions: &mut completions,
                scans: &mut scans,
                service_units: &mut service_units,
            };
            let mut starved = false;
            for (j, &c) in cfg.counts.iter().enumerate() {
                for _ in 0..c {
                    if !ctx.process_job(j, &mut node.process_rng) {
                        starved = true;
                    }
                }
            }
            node.starved = starved;
        }

        let z_end = self.global_z();
        let z_perjob_end = self.global_z_perjob();
        let queue_work: Vec<u64> = (0..j_count)
            .map(|j| self.nodes.iter().map(|n| n.queues[j].queue_work()).sum())
            .collect();
        let jobs_in_system = self
            .nodes
            .iter()
            .map(|n| n.queues.iter().map(TypeQueue::job_count).sum::<u64>())
            .sum();

        SlotReport {
            slot,
            arrivals: stubs,
            completions,
            scans,
            z_after_admit,
            z_end,
            z_perjob_after_admit,
            z_perjob_end,
            config: Configuration::new(config_total),
            service_units,
            queue_work,
            jobs_in_system,
        }
    }

    /// System-wide weights from pooled totals (diagnostic only; scheduling
    /// decisions are local).
    fn global_z(&self) -> Vec<f64> {
        (0..self.params.j_count)
            .map(|j| {
                let x: u64 = self.nodes.iter().map(|n| n.queues[j].x_total()).sum();
                let y: u64 = self.nodes.iter().map(|n| n.queues[j].y_total()).sum();
                x as f64 + self.params.w[j] * y as f64
            })
            .collect()
    }

    fn global_z_perjob(&self) -> Vec<f64> {
        (0..self.params.j_count)
            .map(|j| {
                let x: u64 = self.nodes.iter().map(|n| n.queues[j].x_total()).sum();
                let y: u64 = self.nodes.iter().map(|n| n.queues[j].y_total()).sum();
                let p: u64 = self.nodes.iter().map(|n| n.queues[j].pending_jobs()).sum();
                x as f64 + self.params.rho[j] * y as f64 + p as f64
            })
            .collect()
    }
}
