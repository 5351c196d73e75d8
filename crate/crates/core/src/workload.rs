//! Stochastic job generation: per-slot arrivals per (type, class) across the
//! server fleet, with lengths drawn from the type's distribution. Fully
//! deterministic under a seed.

use crate::domain::{ArrivalSpec, Job, Truth};
use crate::rational::{to_f64, Rat};
use crate::rng::{stream_rng, ARRIVALS};
use num_traits::One;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkloadError {
    #[error("type {type_index} {class}: per-server job probability {prob} exceeds 1")]
    ProbabilityOverflow {
        type_index: usize,
        class: &'static str,
        prob: String,
    },
}

/// Seeded generator of one slot's arrivals.
///
/// Each of the `n` servers independently spawns, per type and class, one job
/// with probability `rate / E[L]`; equivalently the per-slot job count is
/// binomial in `n`. Two generators with equal seed and spec produce
/// identical job sequences.
pub struct WorkloadGenerator {
    spec: ArrivalSpec,
    rng: ChaCha8Rng,
    next_job_id: u64,
    /// Per type: (genuine probability, malicious probability) per server.
    job_probs: Vec<(f64, f64)>,
}

impl WorkloadGenerator {
    pub fn new(spec: ArrivalSpec, seed: u64) -> Result<Self, WorkloadError> {
        let mut job_probs = Vec::with_capacity(spec.j_count());
        for j in 0..spec.j_count() {
            let mean = spec.length_dists[j].mean_length();
            let pg = check_prob(&spec.genuine_rates[j], &mean, j, "genuine")?;
            let pm = check_prob(&spec.malicious_rates[j], &mean, j, "malicious")?;
            job_probs.push((pg, pm));
        }
        Ok(Self {
            spec,
            rng: stream_rng(seed, ARRIVALS),
            next_job_id: 0,
            job_probs,
        })
    }

    pub fn spec(&self) -> &ArrivalSpec {
        &self.spec
    }

    /// Generates the arrivals of `slot`. Callers advance `slot`
    /// monotonically; the RNG stream is consumed in call order.
    pub fn slot_arrivals(&mut self, slot: u64) -> Vec<Job> {
        let mut out = Vec::new();
        let n = self.spec.n_servers as u64;
        for j in 0..self.spec.j_count() {
            let (pg, pm) = self.job_probs[j];
            for (prob, truth) in [(pg, Truth::Genuine), (pm, Truth::Malicious)] {
                if prob == 0.0 {
                    continue;
                }
                let count = Binomial::new(n, prob)
                    .expect("probability validated at construction")
                    .sample(&mut self.rng);
                for _ in 0..count {
                    let length = self.spec.length_dists[j].sample(&mut self.rng);
                    let id = self.next_job_id;
                    self.next_job_id += 1;
                    out.push(Job::new(id, j, length, truth, slot));
                }
            }
        }
        out
    }
}

fn check_prob(
    rate: &Rat,
    mean: &Rat,
    type_index: usize,
    class: &'static str,
) -> Result<f64, WorkloadError> {
    let prob = rate.clone() / mean.clone();
    if prob > Rat::one() {
        return Err(WorkloadError::ProbabilityOverflow {
            type_index,
            class,
            prob: prob.to_string(),
        });
    }
    Ok(to_f64(&prob))
}

/// Admission coin for one arriving job: scan with probability `alpha`.
/// Exact for the 0/1 vectors every shipped strategy produces.
pub(crate) fn scan_coin<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> bool {
    let u: f64 = rng.gen();
    u < alpha
}
