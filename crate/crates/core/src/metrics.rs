//! Metrics collection on a fixed sampling cadence plus CSV export.
//!
//! Latency statistics keep genuine completions and malicious detections in
//! separate columns: detection time is not comparable to service latency
//! and mixing them would distort the genuine-latency comparison between
//! strategies. Queue size is measured in work units (total remaining
//! length); a job count column is emitted alongside.

use crate::sched::{Completion, SlotReport};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One sampled row of the monitored quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSample {
    pub slot: u64,
    /// Time-average of total queued work up to this slot.
    pub avg_queue_work: f64,
    /// Running maximum of total queued work.
    pub max_queue_work: u64,
    /// Cumulative mean latency of completed genuine jobs; absent until the
    /// first completion.
    pub avg_latency: Option<f64>,
    pub max_latency: Option<u64>,
    /// Cumulative mean detection time of removed malicious jobs.
    pub avg_latency_detected: Option<f64>,
    /// Diagnostic quadratic potential: sum of squared per-type weights.
    pub lyapunov_v: f64,
    pub per_type_queue: Vec<u64>,
    pub jobs_in_system: u64,
}

/// Accumulates per-slot reports and snapshots a [`MetricsSample`] every
/// `sample_every` slots.
#[derive(Debug)]
pub struct MetricsCollector {
    sample_every: u64,
    slots_seen: u64,
    queue_work_sum: u128,
    queue_work_max: u64,
    genuine_sum: u128,
    genuine_count: u64,
    genuine_max: u64,
    detected_sum: u128,
    detected_count: u64,
    /// Malicious jobs that were never scanned and ran to completion.
    executed_malicious: u64,
    samples: Vec<MetricsSample>,
}

impl MetricsCollector {
    pub fn new(sample_every: u64) -> Self {
        assert!(sample_every > 0, "sampling cadence must be positive");
        Self {
            sample_every,
            slots_seen: 0,
            queue_work_sum: 0,
            queue_work_max: 0,
            genuine_sum: 0,
            genuine_count: 0,
            genuine_max: 0,
            detected_sum: 0,
            detected_count: 0,
            executed_malicious: 0,
            samples: Vec::new(),
        }
    }

    /// Folds one leaving job into the latency accumulators. Genuine
    /// completions feed the latency columns; scan detections feed their own
    /// column; a malicious job that ran blind to completion has no defined
    /// latency and is only counted.
    pub fn record_completion(&mut self, c: &Completion) {
        if c.malicious {
            if c.was_scanned {
                self.detected_sum += u128::from(c.latency);
                self.detected_count += 1;
            } else {
                self.executed_malicious += 1;
            }
        } else {
            self.genuine_sum += u128::from(c.latency);
            self.genuine_count += 1;
            self.genuine_max = self.genuine_max.max(c.latency);
        }
    }

    /// Ingests one slot and samples when the cadence divides the slot index.
    pub fn observe(&mut self, report: &SlotReport) {
        self.slots_seen += 1;
        debug_assert_eq!(self.slots_seen, report.slot);
        let total: u64 = report.queue_work.iter().sum();
        self.queue_work_sum += u128::from(total);
        self.queue_work_max = self.queue_work_max.max(total);
        for c in &report.completions {
            self.record_completion(c);
        }
        if report.slot.is_multiple_of(self.sample_every) {
            let sample = self.snapshot(report);
            self.samples.push(sample);
        }
    }

    fn snapshot(&self, report: &SlotReport) -> MetricsSample {
        let lyapunov_v = report.z_end.iter().map(|z| z * z).sum();
        MetricsSample {
            slot: report.slot,
            avg_queue_work: self.queue_work_sum as f64 / self.slots_seen as f64,
            max_queue_work: self.queue_work_max,
            avg_latency: (self.genuine_count > 0)
                .then(|| self.genuine_sum as f64 / self.genuine_count as f64),
            max_latency: (self.genuine_count > 0).then_some(self.genuine_max),
            avg_latency_detected: (self.detected_count > 0)
                .then(|| self.detected_sum as f64 / self.detected_count as f64),
            lyapunov_v,
            per_type_queue: report.queue_work.clone(),
            jobs_in_system: report.jobs_in_system,
        }
    }

    pub fn samples(&self) -> &[MetricsSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<MetricsSample> {
        self.samples
    }

    pub fn genuine_completions(&self) -> u64 {
        self.genuine_count
    }

    pub fn detections(&self) -> u64 {
        self.detected_count
    }

    pub fn executed_malicious(&self) -> u64 {
        self.executed_malicious
    }
}

/// CSV header for `j` job types.
pub fn csv_header(j_count: usize) -> String {
    let mut h = String::from(
        "slot,avg_queue_work,max_queue_work,avg_latency,max_latency,avg_latency_detected,lyapunov_v",
    );
    for j in 1..=j_count {
        let _ = write!(h, ",q{j}");
    }
    h.push_str(",jobs_in_system");
    h
}

fn opt_f64(v: &Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_u64(v: &Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes header plus one row per sample. Absent averages serialize as
/// empty fields.
pub fn write_csv<W: Write>(samples: &[MetricsSample], j_count: usize, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", csv_header(j_count))?;
    for s in samples {
        debug_assert_eq!(s.per_type_queue.len(), j_count);
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            s.slot,
            s.avg_queue_work,
            s.max_queue_work,
            opt_f64(&s.avg_latency),
            opt_u64(&s.max_latency),
            opt_f64(&s.avg_latency_detected),
            s.lyapunov_v,
        );
        for q in &s.per_type_queue {
            let _ = write!(row, ",{q}");
        }
        let _ = write!(row, ",{}", s.jobs_in_system);
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn export_csv(samples: &[MetricsSample], j_count: usize, path: &Path) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = io::BufWriter::new(file);
    write_csv(samples, j_count, &mut buf)?;
    buf.flush()
}

/// Renders the CSV to a byte buffer (used for determinism checks).
pub fn csv_bytes(samples: &[MetricsSample], j_count: usize) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(samples, j_count, &mut out).expect("in-memory write cannot fail");
    out
}

/// Parses a CSV produced by [`write_csv`].
pub fn parse_csv<R: io::Read>(reader: R) -> Result<Vec<MetricsSample>, MetricsError> {
    let mut lines = io::BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or(MetricsError::Parse { line: 1, reason: "empty file".into() })??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 9 || cols[0] != "slot" || cols.last() != Some(&"jobs_in_system") {
        return Err(MetricsError::Parse { line: 1, reason: "unrecognized header".into() });
    }
    let j_count = cols.len() - 8;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(MetricsError::Parse {
                line: lineno,
                reason: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let parse_u64 = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| MetricsError::Parse {
                line: lineno,
                reason: format!("bad {what}: {s:?}"),
            })
        };
        let parse_f64 = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| MetricsError::Parse {
                line: lineno,
                reason: format!("bad {what}: {s:?}"),
            })
        };
        let opt_field_f64 = |s: &str, what: &str| -> Result<Option<f64>, MetricsError> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s, what).map(Some)
            }
        };
        let per_type_queue = fields[7..7 + j_count]
            .iter()
            .map(|s| parse_u64(s, "queue"))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(MetricsSample {
            slot: parse_u64(fields[0], "slot")?,
            avg_queue_work: parse_f64(fields[1], "avg_queue_work")?,
            max_queue_work: parse_u64(fields[2], "max_queue_work")?,
            avg_latency: opt_field_f64(fields[3], "avg_latency")?,
            max_latency: if fields[4].is_empty() {
                None
            } else {
                Some(parse_u64(fields[4], "max_latency")?)
            },
            avg_latency_detected: opt_field_f64(fields[5], "avg_latency_detected")?,
            lyapunov_v: parse_f64(fields[6], "lyapunov_v")?,
            per_type_queue,
            jobs_in_system: parse_u64(fields[7 + j_count], "jobs_in_system")?,
        });
    }
    Ok(out)
}
