//! Workload sources: a seeded synthetic generator and a column-mapped trace
//! ingester, plus the line-oriented workload file format.
//!
//! Workload files carry one job per line:
//!
//! ```text
//! # id arrival deadline demands dop_cap values
//! 1 2 5 10,5,3,2 8 100,80,50,30
//! ```
//!
//! Fields are whitespace-separated; `demands` (one entry per catalog type)
//! and `values` (one entry per admissible execution time) are comma-joined
//! ASCII decimals.  Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{parse_field, InstanceCatalog, Job, TypeSpec};
use crate::{Error, Result};

/// Shape of the per-slot arrival counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalKind {
    /// Rounded normal with mean `users_per_slot` and sigma `mean / 3`,
    /// clamped at zero.
    Normal,
    /// Integer uniform on `[0, 2 * users_per_slot]`.
    Uniform,
    /// Exactly `users_per_slot` (rounded) jobs every slot.
    Constant,
}

impl ArrivalKind {
    pub fn name(&self) -> &'static str {
        match self {
            ArrivalKind::Normal => "normal",
            ArrivalKind::Uniform => "uniform",
            ArrivalKind::Constant => "constant",
        }
    }
}

/// How job values are synthesized from demands.
///
/// The top value is `mult * anchor` where `anchor` is the cheapest list-price
/// cost of the job's demand (`min_j price_j * D_j / tau`) and `mult` is drawn
/// uniformly from `mult_range`; values then fall linearly in the execution
/// time with slope `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    pub mult_range: [f64; 2],
    pub beta: f64,
}

impl Default for ValueModel {
    fn default() -> Self {
        ValueModel { mult_range: [4.0, 8.0], beta: 0.5 }
    }
}

impl ValueModel {
    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.mult_range;
        if !(lo > 0.0) || hi < lo {
            return Err(Error::Validation(format!("bad value multiplier range [{lo}, {hi}]")));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Validation(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    /// Value table for a job with the given demands and span.
    fn values(&self, rng: &mut ChaCha8Rng, catalog: &InstanceCatalog, demands: &[u64], tau: usize, span: usize) -> Vec<f64> {
        let anchor = demands
            .iter()
            .enumerate()
            .map(|(j, &d)| catalog.get(j).price * d as f64 / tau as f64)
            .fold(f64::INFINITY, f64::min);
        let mult = rng.gen_range(self.mult_range[0]..=self.mult_range[1]);
        let vmax = mult * anchor;
        (1..=span)
            .map(|e| (vmax * (1.0 - self.beta * (e - 1) as f64 / span as f64)).max(0.0))
            .collect()
    }
}

/// Parameters of one synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub arrival: ArrivalKind,
    /// Mean number of arrivals per slot.
    pub users_per_slot: f64,
    /// Arrival horizon in slots; jobs arrive in `1..=T`.  Deadlines may run
    /// up to `T + e_max`, so simulate with at least [`GenSpec::horizon`] slots.
    #[serde(rename = "T")]
    pub t_slots: usize,
    /// Base demand range; a job's type-`j` demand is
    /// `ceil(base / performance_j)` for one uniform draw of `base`.
    pub demand_range: [u64; 2],
    /// Degree-of-parallelism cap range.
    pub dop_range: [u64; 2],
    /// Maximum number of admissible execution times per job.
    pub e_max: usize,
    /// Instance lifetime used to anchor values to list-price cost.
    #[serde(default = "default_tau")]
    pub tau: usize,
    #[serde(default)]
    pub value_model: ValueModel,
    pub seed: u64,
    /// Catalog the demands are scaled against; `None` means the default
    /// four-type catalog.
    #[serde(default)]
    pub catalog: Option<Vec<TypeSpec>>,
}

fn default_tau() -> usize {
    6
}

impl GenSpec {
    /// A spec with the customary defaults: normal arrivals, demands in
    /// `[1, 30]`, parallelism caps in `[5, 30]`, six execution times.
    pub fn new(users_per_slot: f64, t_slots: usize, seed: u64) -> Self {
        GenSpec {
            arrival: ArrivalKind::Normal,
            users_per_slot,
            t_slots,
            demand_range: [1, 30],
            dop_range: [5, 30],
            e_max: 6,
            tau: 6,
            value_model: ValueModel::default(),
            seed,
            catalog: None,
        }
    }

    pub fn catalog(&self) -> Result<InstanceCatalog> {
        match &self.catalog {
            Some(specs) => InstanceCatalog::new(specs),
            None => Ok(InstanceCatalog::default_four()),
        }
    }

    /// Smallest simulation period that contains every generated deadline.
    pub fn horizon(&self) -> usize {
        self.t_slots + self.e_max
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_slots == 0 {
            return Err(Error::Validation("T must be at least 1".into()));
        }
        if !(self.users_per_slot > 0.0) {
            return Err(Error::Validation(format!(
                "users_per_slot must be positive, got {}",
                self.users_per_slot
            )));
        }
        if self.demand_range[0] == 0 || self.demand_range[1] < self.demand_range[0] {
            return Err(Error::Validation(format!(
                "bad demand range [{}, {}]",
                self.demand_range[0], self.demand_range[1]
            )));
        }
        if self.dop_range[0] == 0 || self.dop_range[1] < self.dop_range[0] {
            return Err(Error::Validation(format!(
                "bad dop range [{}, {}]",
                self.dop_range[0], self.dop_range[1]
            )));
        }
        if self.e_max == 0 {
            return Err(Error::Validation("e_max must be at least 1".into()));
        }
        if self.tau == 0 {
            return Err(Error::Validation("tau must be at least 1".into()));
        }
        self.value_model.validate()?;
        self.catalog()?;
        Ok(())
    }
}

/// Generates the workload described by `spec`, sorted by arrival with ids
/// assigned in arrival order.  The same spec always yields the same jobs.
pub fn gen_synthetic(spec: &GenSpec) -> Result<Vec<Job>> {
    spec.validate()?;
    let catalog = spec.catalog()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(spec.users_per_slot, spec.users_per_slot / 3.0)
        .map_err(|e| Error::Validation(format!("bad arrival distribution: {e}")))?;
    let mut jobs = Vec::new();
    for slot in 1..=spec.t_slots {
        let count = match spec.arrival {
            ArrivalKind::Constant => spec.users_per_slot.round() as u64,
            ArrivalKind::Uniform => {
                let hi = (2.0 * spec.users_per_slot).round() as u64;
                rng.gen_range(0..=hi)
            }
            ArrivalKind::Normal => normal.sample(&mut rng).round().max(0.0) as u64,
        };
        for _ in 0..count {
            let id = jobs.len() as u64 + 1;
            jobs.push(gen_job(&mut rng, spec, &catalog, id, slot));
        }
    }
    let horizon = spec.horizon();
    for job in &jobs {
        job.validate(catalog.m(), horizon)?;
    }
    Ok(jobs)
}

fn gen_job(rng: &mut ChaCha8Rng, spec: &GenSpec, catalog: &InstanceCatalog, id: u64, arrival: usize) -> Job {
    let base = rng.gen_range(spec.demand_range[0]..=spec.demand_range[1]);
    let demands: Vec<u64> = (0..catalog.m())
        .map(|j| ((base as f64 / catalog.get(j).performance).ceil() as u64).max(1))
        .collect();
    let dop_cap = rng.gen_range(spec.dop_range[0]..=spec.dop_range[1]);
    let span = rng.gen_range(1..=spec.e_max);
    let values = spec.value_model.values(rng, catalog, &demands, spec.tau, span);
    Job { id, arrival, deadline: arrival + span, demands, dop_cap, values }
}

/// Column mapping and synthesis rules for ingesting a delimited trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMapping {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub has_header: bool,
    /// 0-based column of the submission timestamp.
    pub submit_col: usize,
    /// 0-based column of the per-job task count (becomes the DoP cap).
    pub task_count_col: usize,
    /// 0-based column of the resource request (becomes the base demand).
    pub resource_col: usize,
    /// Seconds (or trace time units) per slot.
    pub slot_width: f64,
    /// Multiplier taking resource requests to base demand units.
    pub demand_scale: f64,
    /// Arrival horizon; rows arriving after it are dropped.
    #[serde(rename = "T")]
    pub t_slots: usize,
    /// Deadlines are synthesized as `arrival + draw(1..=e_max)`.
    pub e_max: usize,
    #[serde(default = "default_tau")]
    pub tau: usize,
    #[serde(default)]
    pub value_model: ValueModel,
    pub seed: u64,
    #[serde(default)]
    pub catalog: Option<Vec<TypeSpec>>,
}

fn default_delimiter() -> char {
    ','
}

impl TraceMapping {
    pub fn catalog(&self) -> Result<InstanceCatalog> {
        match &self.catalog {
            Some(specs) => InstanceCatalog::new(specs),
            None => Ok(InstanceCatalog::default_four()),
        }
    }

    pub fn horizon(&self) -> usize {
        self.t_slots + self.e_max
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slot_width > 0.0) {
            return Err(Error::Validation("slot_width must be positive".into()));
        }
        if !(self.demand_scale > 0.0) {
            return Err(Error::Validation("demand_scale must be positive".into()));
        }
        if self.t_slots == 0 || self.e_max == 0 || self.tau == 0 {
            return Err(Error::Validation("T, e_max and tau must be at least 1".into()));
        }
        self.value_model.validate()?;
        self.catalog()?;
        Ok(())
    }
}

/// Jobs recovered from a trace plus the number of rows past the horizon.
#[derive(Debug, Clone)]
pub struct IngestResult {
    pub jobs: Vec<Job>,
    pub dropped: usize,
}

/// Ingests a delimited trace from text.  One row becomes one job; deadlines
/// and values are synthesized deterministically from the mapping's seed.
pub fn ingest_trace_text(text: &str, mapping: &TraceMapping) -> Result<IngestResult> {
    mapping.validate()?;
    let catalog = mapping.catalog()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mapping.seed);
    let needed = mapping.submit_col.max(mapping.task_count_col).max(mapping.resource_col);
    let mut dropped = 0usize;
    let mut jobs: Vec<Job> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        if mapping.has_header && no == 0 {
            continue;
        }
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(mapping.delimiter).map(str::trim).collect();
        if cols.len() <= needed {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("row has {} columns, need at least {}", cols.len(), needed + 1),
            });
        }
        let submit: f64 = parse_field(cols[mapping.submit_col], line_no, "submit time")?;
        let task_count: u64 = parse_field(cols[mapping.task_count_col], line_no, "task count")?;
        let resource: f64 = parse_field(cols[mapping.resource_col], line_no, "resource request")?;
        if submit < 0.0 {
            return Err(Error::Parse { line: line_no, msg: "negative submit time".into() });
        }
        if task_count == 0 {
            return Err(Error::Parse { line: line_no, msg: "task count must be at least 1".into() });
        }
        if !(resource > 0.0) {
            return Err(Error::Parse { line: line_no, msg: "resource request must be positive".into() });
        }
        let arrival = (submit / mapping.slot_width).floor() as usize + 1;
        if arrival > mapping.t_slots {
            dropped += 1;
            continue;
        }
        let base = (resource * mapping.demand_scale).ceil().max(1.0);
        let demands: Vec<u64> = (0..catalog.m())
            .map(|j| ((base / catalog.get(j).performance).ceil() as u64).max(1))
            .collect();
        let span = rng.gen_range(1..=mapping.e_max);
        let values = mapping.value_model.values(&mut rng, &catalog, &demands, mapping.tau, span);
        jobs.push(Job {
            id: 0,
            arrival,
            deadline: arrival + span,
            demands,
            dop_cap: task_count,
            values,
        });
    }
    if jobs.is_empty() {
        return Err(Error::Validation("trace produced no jobs inside the horizon".into()));
    }
    jobs.sort_by_key(|j| j.arrival);
    for (i, job) in jobs.iter_mut().enumerate() {
        job.id = i as u64 + 1;
    }
    let horizon = mapping.horizon();
    for job in &jobs {
        job.validate(catalog.m(), horizon)?;
    }
    Ok(IngestResult { jobs, dropped })
}

/// File-based wrapper around [`ingest_trace_text`].
pub fn ingest_trace(path: &Path, mapping: &TraceMapping) -> Result<IngestResult> {
    let text = std::fs::read_to_string(path)?;
    ingest_trace_text(&text, mapping)
}

/// Serializes jobs to the workload file format.
pub fn write_workload(jobs: &[Job]) -> String {
    let mut out = String::from("# id arrival deadline demands dop_cap values\n");
    for job in jobs {
        let demands: Vec<String> = job.demands.iter().map(u64::to_string).collect();
        let values: Vec<String> = job.values.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            job.id,
            job.arrival,
            job.deadline,
            demands.join(","),
            job.dop_cap,
            values.join(",")
        );
    }
    out
}

/// Parses the workload file format; inverse of [`write_workload`].
pub fn read_workload(text: &str) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 6 fields, found {}", f.len()),
            });
        }
        let id: u64 = parse_field(f[0], line_no, "id")?;
        let arrival: usize = parse_field(f[1], line_no, "arrival")?;
        let deadline: usize = parse_field(f[2], line_no, "deadline")?;
        let demands = f[3]
            .split(',')
            .map(|s| parse_field::<u64>(s, line_no, "demand"))
            .collect::<Result<Vec<u64>>>()?;
        let dop_cap: u64 = parse_field(f[4], line_no, "dop_cap")?;
        let values = f[5]
            .split(',')
            .map(|s| parse_field::<f64>(s, line_no, "value"))
            .collect::<Result<Vec<f64>>>()?;
        let job = Job { id, arrival, deadline, demands, dop_cap, values };
        job.validate(job.demands.len(), job.deadline)
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        jobs.push(job);
    }
    Ok(jobs)
}

pub fn read_workload_file(path: &Path) -> Result<Vec<Job>> {
    read_workload(&std::fs::read_to_string(path)?)
}
