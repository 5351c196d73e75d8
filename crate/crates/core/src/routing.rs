//! Routing policies for the decentralized scheduler.
//!
//! Each policy lives behind the [`RoutingPolicy`] trait and is selected by
//! name at runtime:
//!
//! - `jsq`: fewest type-j jobs across all servers
//! - `jsw`: smallest type-j workload across all servers
//! - `ur`: uniform random server
//! - `rr`: per-type round-robin pointer
//! - `p2q`: sample two distinct servers, fewer type-j jobs wins
//! - `p2w`: sample two distinct servers, smaller type-j workload wins
//!
//! The workload metric for `jsw`/`p2w` is either the local scheduling weight
//! `Z_j` (default) or the raw queued length, selectable per scenario.
//! Metric ties always go to the lower server index.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingError {
    #[error("unknown routing policy `{0}`")]
    UnknownPolicy(String),
}

/// Workload measure used by the work-based policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadMetric {
    /// Local scheduling weight `Z_j = X_j + Y_j (rho_j + E[1/L_j])`.
    ZWeight,
    /// Raw queued length `Q_j = X_j + Y_j`.
    QueueLength,
}

/// What a router may observe about the servers at decision time.
pub trait QueueStats {
    fn n_servers(&self) -> usize;
    /// Number of type-`j` jobs queued at server `v`.
    fn job_count(&self, v: usize, j: usize) -> u64;
    /// Type-`j` workload of server `v` under `metric`.
    fn workload(&self, v: usize, j: usize, metric: WorkloadMetric) -> f64;
}

/// A routing policy assigns every arriving job to one server.
pub trait RoutingPolicy: Send {
    fn name(&self) -> &'static str;
    fn route(&mut self, type_index: usize, view: &dyn QueueStats, rng: &mut ChaCha8Rng) -> usize;
}

pub struct Jsq;

pub struct Jsw {
    pub metric: WorkloadMetric,
}

pub struct UniformRandom;

pub struct RoundRobin {
    /// Last server each type routed to; next arrival goes to pointer+1 mod n.
    pointers: Vec<usize>,
}

impl RoundRobin {
    pub fn new(j_count: usize, n_servers: usize) -> Self {
        // Start at n-1 so the first arrival of each type lands on server 0.
        Self {
            pointers: vec![n_servers.saturating_sub(1); j_count],
        }
    }
}

pub struct PowerOfTwoQueue;

pub struct PowerOfTwoWork {
    pub metric: WorkloadMetric,
}

impl RoutingPolicy for Jsq {
    fn name(&self) -> &'static str {
        "jsq"
    }
    fn route(&mut self, j: usize, view: &dyn QueueStats, _rng: &mut ChaCha8Rng) -> usize {
        let mut best = 0usize;
        let mut best_c = view.job_count(0, j);
        for v in 1..view.n_servers() {
            let c = view.job_count(v, j);
            if c < best_c {
                best = v;
                best_c = c;
            }
        }
        best
    }
}

impl RoutingPolicy for Jsw {
    fn name(&self) -> &'static str {
        "jsw"
    }
    fn route(&mut self, j: usize, view: &dyn QueueStats, _rng: &mut ChaCha8Rng) -> usize {
        let mut best = 0usize;
        let mut best_w = view.workload(0, j, self.metric);
        for v in 1..view.n_servers() {
            let w = view.workload(v, j, self.metric);
            if w < best_w {
                best = v;
                best_w = w;
            }
        }
        best
    }
}

impl RoutingPolicy for UniformRandom {
    fn name(&self) -> &'static str {
        "ur"
    }
    fn route(&mut self, _j: usize, view: &dyn QueueStats, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..view.n_servers())
    }
}

impl RoutingPolicy for RoundRobin {
    fn name(&self) -> &'static str {
        "rr"
    }
    fn route(&mut self, j: usize, view: &dyn QueueStats, _rng: &mut ChaCha8Rng) -> usize {
        let next = (self.pointers[j] + 1) % view.n_servers();
        self.pointers[j] = next;
        next
    }
}

/// Samples an unordered pair of distinct servers uniformly.
fn sample_pair(n: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    debug_assert!(n >= 2);
    let a = rng.gen_range(0..n);
    let b_raw = rng.gen_range(0..n - 1);
    let b = if b_raw >= a { b_raw + 1 } else { b_raw };
    (a, b)
}

impl RoutingPolicy for PowerOfTwoQueue {
    fn name(&self) -> &'static str {
        "p2q"
    }
    fn route(&mut self, j: usize, view: &dyn QueueStats, rng: &mut ChaCha8Rng) -> usize {
        let n = view.n_servers();
        if n == 1 {
            return 0;
        }
        let (a, b) = sample_pair(n, rng);
        let (lo, hi) = (a.min(b), a.max(b));
        if view.job_count(hi, j) < view.job_count(lo, j) {
            hi
        } else {
            lo
        }
    }
}

impl RoutingPolicy for PowerOfTwoWork {
    fn name(&self) -> &'static str {
        "p2w"
    }
    fn route(&mut self, j: usize, view: &dyn QueueStats, rng: &mut ChaCha8Rng) -> usize {
        let n = view.n_servers();
        if n == 1 {
            return 0;
        }
        let (a, b) = sample_pair(n, rng);
        let (lo, hi) = (a.min(b), a.max(b));
        if view.workload(hi, j, self.metric) < view.workload(lo, j, self.metric) {
            hi
        } else {
            lo
        }
    }
}

/// Registry lookup by policy name.
pub fn policy_by_name(
    name: &str,
    j_count: usize,
    n_servers: usize,
    metric: WorkloadMetric,
) -> Result<Box<dyn RoutingPolicy>, RoutingError> {
    match name {
        "jsq" => Ok(Box::new(Jsq)),
        "jsw" => Ok(Box::new(Jsw { metric })),
        "ur" => Ok(Box::new(UniformRandom)),
        "rr" => Ok(Box::new(RoundRobin::new(j_count, n_servers))),
        "p2q" => Ok(Box::new(PowerOfTwoQueue)),
        "p2w" => Ok(Box::new(PowerOfTwoWork { metric })),
        other => Err(RoutingError::UnknownPolicy(other.to_string())),
    }
}

pub fn policy_names() -> &'static [&'static str] {
    &["jsq", "jsw", "ur", "rr", "p2q", "p2w"]
}
