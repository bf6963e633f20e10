//! Core domain types: simulation period, instance catalog, jobs, the
//! capacity ledger and the schedule/outcome records all algorithms share.
//!
//! Conventions used throughout the crate:
//!
//! * slots are 1-based; slot 0 never carries purchases or allocations,
//! * a job arriving at slot `a` may first run at slot `a + 1`,
//! * a purchase at slot `t` is usable during `[t, t + tau - 1]`,
//! * instance-type indices are 0-based in memory, 1-based in files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Global simulation parameters for one accounting period.
///
/// `rev_star`, `n_est` and `f_total_est` are the provider's estimates of the
/// optimal revenue, the number of arrivals and the total execution cost for
/// the period; the harness can fill them in from a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of slots in the accounting period.
    #[serde(rename = "T")]
    pub t_slots: usize,
    /// Purchased-instance lifetime in slots.
    pub tau: usize,
    /// Revenue weight in the aggregated objective, in `[0, 1]`.
    pub theta: f64,
    /// Demand weight in the cost-sharing weight, in `[0, 1]`.
    pub alpha: f64,
    /// Estimated optimal revenue for the period (normalizes the objective).
    pub rev_star: f64,
    /// Estimated number of arrivals in the period.
    pub n_est: u64,
    /// Estimated total execution cost for the period.
    pub f_total_est: f64,
    /// Master seed for anything stochastic tied to this run.
    pub seed: u64,
}

impl SimConfig {
    /// A config with the customary defaults (`tau = 6`, `theta = alpha = 0.5`)
    /// and placeholder estimates; callers overwrite fields as needed.
    pub fn new(t_slots: usize) -> Self {
        SimConfig {
            t_slots,
            tau: 6,
            theta: 0.5,
            alpha: 0.5,
            rev_star: 1.0,
            n_est: 1,
            f_total_est: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_slots == 0 {
            return Err(Error::Validation("T must be at least 1".into()));
        }
        if self.tau == 0 {
            return Err(Error::Validation("tau must be at least 1".into()));
        }
        for (name, v) in [("theta", self.theta), ("alpha", self.alpha)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.rev_star > 0.0) {
            return Err(Error::Validation(format!(
                "rev_star must be positive, got {}",
                self.rev_star
            )));
        }
        if self.n_est == 0 {
            return Err(Error::Validation("n_est must be at least 1".into()));
        }
        if !(self.f_total_est >= 0.0) {
            return Err(Error::Validation(format!(
                "f_total_est must be nonnegative, got {}",
                self.f_total_est
            )));
        }
        Ok(())
    }
}

/// One rentable instance type from the IaaS catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceType {
    /// 1-based catalog id, stable across runs.
    pub id: usize,
    /// Price of one purchase (one instance for `tau` slots).
    pub price: f64,
    /// Relative processing speed; demands scale inversely with it.
    pub performance: f64,
}

/// Price/performance pair as written in catalog files; ids come from order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub price: f64,
    pub performance: f64,
}

/// The fixed menu of instance types offered during the period.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCatalog {
    types: Vec<InstanceType>,
}

impl InstanceCatalog {
    pub fn new(specs: &[TypeSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Validation("catalog must contain at least one type".into()));
        }
        let mut types = Vec::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            if !(s.price > 0.0) {
                return Err(Error::Validation(format!(
                    "type {} price must be positive, got {}",
                    i + 1,
                    s.price
                )));
            }
            if !(s.performance > 0.0) {
                return Err(Error::Validation(format!(
                    "type {} performance must be positive, got {}",
                    i + 1,
                    s.performance
                )));
            }
            types.push(InstanceType { id: i + 1, price: s.price, performance: s.performance });
        }
        Ok(InstanceCatalog { types })
    }

    /// Four EC2-like types; doubling price buys slightly less than doubling
    /// speed, so the smallest type has the best performance/price ratio.
    pub fn default_four() -> Self {
        let specs = [
            TypeSpec { price: 1.0, performance: 1.0 },
            TypeSpec { price: 2.0, performance: 1.9 },
            TypeSpec { price: 4.0, performance: 3.8 },
            TypeSpec { price: 8.0, performance: 7.4 },
        ];
        InstanceCatalog::new(&specs).expect("default catalog is valid")
    }

    pub fn m(&self) -> usize {
        self.types.len()
    }

    pub fn types(&self) -> &[InstanceType] {
        &self.types
    }

    pub fn get(&self, idx: usize) -> &InstanceType {
        &self.types[idx]
    }

    pub fn specs(&self) -> Vec<TypeSpec> {
        self.types
            .iter()
            .map(|t| TypeSpec { price: t.price, performance: t.performance })
            .collect()
    }

    fn ratio(&self, idx: usize) -> f64 {
        self.types[idx].performance / self.types[idx].price
    }

    /// Index of the type with the best performance/price ratio (ties go to
    /// the smaller index).  Per-slot shares are quoted in this type's units.
    pub fn reference_type(&self) -> usize {
        let mut best = 0;
        for i in 1..self.types.len() {
            if self.ratio(i) > self.ratio(best) {
                best = i;
            }
        }
        best
    }

    /// Type indices sorted by descending performance/price ratio.
    pub fn ratio_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.types.len()).collect();
        idx.sort_by(|&a, &b| self.ratio(b).partial_cmp(&self.ratio(a)).unwrap().then(a.cmp(&b)));
        idx
    }

    /// Type indices sorted by descending raw performance.
    pub fn perf_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.types.len()).collect();
        idx.sort_by(|&a, &b| {
            self.types[b]
                .performance
                .partial_cmp(&self.types[a].performance)
                .unwrap()
                .then(a.cmp(&b))
        });
        idx
    }
}

/// One submitted job: a pleasingly parallel bag of work with a deadline,
/// a degree-of-parallelism cap and a value for each possible finish speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    /// 1-based arrival index.
    pub id: u64,
    /// Slot the job arrives in; execution may start at `arrival + 1`.
    pub arrival: usize,
    /// Last slot the job may occupy.
    pub deadline: usize,
    /// `demands[j]` is the number of type-`j` instance-slots that alone
    /// would complete the job.
    pub demands: Vec<u64>,
    /// Upper bound on total allocated instance-slots (degree of parallelism).
    pub dop_cap: u64,
    /// `values[e - 1]` is the price the user pays for finishing within `e`
    /// slots; nonincreasing in `e`.
    pub values: Vec<f64>,
}

impl Job {
    /// Number of admissible execution times: `e` ranges over `1..=span`.
    pub fn span(&self) -> usize {
        self.deadline - self.arrival
    }

    /// Value charged when the job runs with execution time `e`.
    pub fn value(&self, e: usize) -> Result<f64> {
        if e == 0 || e > self.span() {
            return Err(Error::Range(format!(
                "job {}: execution time {} outside 1..={}",
                self.id,
                e,
                self.span()
            )));
        }
        Ok(self.values[e - 1])
    }

    pub fn value_max(&self) -> f64 {
        self.values[0]
    }

    pub fn value_min(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Slots occupied when running with execution time `e`.
    pub fn window(&self, e: usize) -> RangeInclusive<usize> {
        self.arrival + 1..=self.arrival + e
    }

    pub fn validate(&self, m: usize, horizon: usize) -> Result<()> {
        let ctx = format!("job {}", self.id);
        if self.id == 0 {
            return Err(Error::Validation("job id must be at least 1".into()));
        }
        if self.arrival == 0 {
            return Err(Error::Validation(format!("{ctx}: arrival must be at least 1")));
        }
        if self.deadline < self.arrival + 1 || self.deadline > horizon {
            return Err(Error::Validation(format!(
                "{ctx}: deadline {} outside [{}, {}]",
                self.deadline,
                self.arrival + 1,
                horizon
            )));
        }
        if self.demands.len() != m {
            return Err(Error::Validation(format!(
                "{ctx}: {} demands for {} instance types",
                self.demands.len(),
                m
            )));
        }
        if self.demands.iter().any(|&d| d == 0) {
            return Err(Error::Validation(format!("{ctx}: demands must be at least 1")));
        }
        if self.dop_cap == 0 {
            return Err(Error::Validation(format!("{ctx}: dop_cap must be at least 1")));
        }
        if self.values.len() != self.span() {
            return Err(Error::Validation(format!(
                "{ctx}: {} values for {} execution times",
                self.values.len(),
                self.span()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!("{ctx}: values must be finite and >= 0")));
        }
        if self.values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Validation(format!("{ctx}: values must be nonincreasing")));
        }
        Ok(())
    }
}

/// Splits `total` units over `e` slots as evenly as possible; the remainder
/// goes one unit each to the earliest slots.
pub fn split_evenly(total: u64, e: usize) -> Vec<u64> {
    let base = total / e as u64;
    let rem = (total % e as u64) as usize;
    (0..e).map(|s| base + u64::from(s < rem)).collect()
}

/// Exact rational with a small denominator; keeps per-slot completion
/// fractions free of float rounding in the planners and the auditor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Frac {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

impl Frac {
    pub(crate) fn new(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den).max(1);
        Frac { num: sign * num / g, den: sign * den / g }
    }

    pub(crate) fn zero() -> Self {
        Frac { num: 0, den: 1 }
    }

    pub(crate) fn ratio(num: u64, den: u64) -> Self {
        Frac::new(num as i128, den as i128)
    }

    pub(crate) fn is_positive(&self) -> bool {
        self.num > 0
    }

    pub(crate) fn add(self, other: Frac) -> Frac {
        Frac::new(self.num * other.den + other.num * self.den, self.den * other.den)
    }

    pub(crate) fn sub_ratio(self, num: u64, den: u64) -> Frac {
        self.add(Frac::new(-(num as i128), den as i128))
    }

    pub(crate) fn sub(self, other: Frac) -> Frac {
        self.add(Frac { num: -other.num, den: other.den })
    }

    /// `ceil(self * mult)` clamped at zero.
    pub(crate) fn ceil_mul(&self, mult: u64) -> u64 {
        if self.num <= 0 {
            return 0;
        }
        let n = self.num * mult as i128;
        ((n + self.den - 1) / self.den) as u64
    }

    pub(crate) fn ge_one(&self) -> bool {
        self.num >= self.den
    }
}

/// How per-slot capacity is determined while allocating.
#[derive(Debug, Clone, PartialEq)]
pub enum CapacityMode {
    /// Capacity at `t` is the sum of purchases in `(t - tau, t]`.
    Dynamic { tau: usize },
    /// Capacity is a constant per-type vector for the whole period.
    Fixed { caps: Vec<u64> },
}

impl CapacityMode {
    /// Slots a purchased instance stays usable; `None` when purchasing is
    /// not part of the mode.
    pub fn lifetime(&self) -> Option<usize> {
        match self {
            CapacityMode::Dynamic { tau } => Some(*tau),
            CapacityMode::Fixed { .. } => None,
        }
    }
}

/// Running account of purchases and committed allocations per type and slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityLedger {
    mode: CapacityMode,
    t_slots: usize,
    purchases: Vec<Vec<u64>>,
    committed: Vec<Vec<u64>>,
}

impl CapacityLedger {
    pub fn new_dynamic(m: usize, t_slots: usize, tau: usize) -> Self {
        CapacityLedger {
            mode: CapacityMode::Dynamic { tau },
            t_slots,
            purchases: vec![vec![0; t_slots + 1]; m],
            committed: vec![vec![0; t_slots + 1]; m],
        }
    }

    pub fn new_fixed(caps: Vec<u64>, t_slots: usize) -> Self {
        let m = caps.len();
        CapacityLedger {
            mode: CapacityMode::Fixed { caps },
            t_slots,
            purchases: vec![vec![0; t_slots + 1]; m],
            committed: vec![vec![0; t_slots + 1]; m],
        }
    }

    pub fn m(&self) -> usize {
        self.purchases.len()
    }

    pub fn t_slots(&self) -> usize {
        self.t_slots
    }

    pub fn mode(&self) -> &CapacityMode {
        &self.mode
    }

    fn check(&self, type_idx: usize, slot: usize) -> Result<()> {
        if type_idx >= self.m() {
            return Err(Error::Range(format!("type index {} for m={}", type_idx, self.m())));
        }
        if slot == 0 || slot > self.t_slots {
            return Err(Error::Range(format!("slot {} outside 1..={}", slot, self.t_slots)));
        }
        Ok(())
    }

    /// Total usable instances of a type at a slot.
    pub fn capacity(&self, type_idx: usize, slot: usize) -> u64 {
        match &self.mode {
            CapacityMode::Fixed { caps } => caps[type_idx],
            CapacityMode::Dynamic { tau } => {
                let lo = slot.saturating_sub(tau - 1).max(1);
                (lo..=slot).map(|t| self.purchases[type_idx][t]).sum()
            }
        }
    }

    pub fn committed(&self, type_idx: usize, slot: usize) -> u64 {
        self.committed[type_idx][slot]
    }

    /// Instances of a type still free at a slot.
    pub fn available(&self, type_idx: usize, slot: usize) -> u64 {
        self.capacity(type_idx, slot) - self.committed[type_idx][slot]
    }

    /// Records `count` new purchases of a type at a slot.
    pub fn add_purchases(&mut self, type_idx: usize, slot: usize, count: u64) -> Result<()> {
        self.check(type_idx, slot)?;
        if matches!(self.mode, CapacityMode::Fixed { .. }) {
            return Err(Error::Validation("cannot purchase into a fixed-capacity ledger".into()));
        }
        self.purchases[type_idx][slot] += count;
        Ok(())
    }

    /// Reverses `add_purchases`; fails if the instances are already in use.
    pub fn remove_purchases(&mut self, type_idx: usize, slot: usize, count: u64) -> Result<()> {
        self.check(type_idx, slot)?;
        if self.purchases[type_idx][slot] < count {
            return Err(Error::Validation(format!(
                "removing {} purchases of type {} at slot {} but only {} recorded",
                count,
                type_idx + 1,
                slot,
                self.purchases[type_idx][slot]
            )));
        }
        self.purchases[type_idx][slot] -= count;
        let lifetime = match self.mode {
            CapacityMode::Dynamic { tau } => tau,
            CapacityMode::Fixed { .. } => unreachable!(),
        };
        for t in slot..=(slot + lifetime - 1).min(self.t_slots) {
            if self.committed[type_idx][t] > self.capacity(type_idx, t) {
                self.purchases[type_idx][slot] += count;
                return Err(Error::Validation(
                    "removing purchases would leave committed allocations uncovered".into(),
                ));
            }
        }
        Ok(())
    }

    /// Reserves `count` instances of a type at a slot for some job.
    pub fn commit(&mut self, type_idx: usize, slot: usize, count: u64) -> Result<()> {
        self.check(type_idx, slot)?;
        if count > self.available(type_idx, slot) {
            return Err(Error::Validation(format!(
                "committing {} of type {} at slot {} but only {} available",
                count,
                type_idx + 1,
                slot,
                self.available(type_idx, slot)
            )));
        }
        self.committed[type_idx][slot] += count;
        Ok(())
    }

    /// Releases a previous commitment.
    pub fn uncommit(&mut self, type_idx: usize, slot: usize, count: u64) -> Result<()> {
        self.check(type_idx, slot)?;
        if self.committed[type_idx][slot] < count {
            return Err(Error::Validation(format!(
                "releasing {} of type {} at slot {} but only {} committed",
                count,
                type_idx + 1,
                slot,
                self.committed[type_idx][slot]
            )));
        }
        self.committed[type_idx][slot] -= count;
        Ok(())
    }

    /// Money spent on the purchases recorded in this ledger.
    pub fn purchase_cost(&self, catalog: &InstanceCatalog) -> f64 {
        let mut total = 0.0;
        for (j, row) in self.purchases.iter().enumerate() {
            let units: u64 = row.iter().sum();
            total += catalog.get(j).price * units as f64;
        }
        total
    }

    pub fn purchase_matrix(&self) -> &Vec<Vec<u64>> {
        &self.purchases
    }
}

/// Allocation detail for one accepted job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSchedule {
    /// Chosen execution time `e`.
    pub execution_time: usize,
    /// Price charged to the user (the value at `e`).
    pub payment: f64,
    /// `(type index, slot) -> instances` granted to this job.
    pub alloc: BTreeMap<(usize, usize), u64>,
}

/// A complete, auditable answer: purchases per type/slot plus one
/// `JobSchedule` per accepted job.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub m: usize,
    pub t_slots: usize,
    /// `purchases[j][t]`, slot 0 unused.
    pub purchases: Vec<Vec<u64>>,
    pub jobs: BTreeMap<u64, JobSchedule>,
}

impl Schedule {
    pub fn empty(m: usize, t_slots: usize) -> Self {
        Schedule { m, t_slots, purchases: vec![vec![0; t_slots + 1]; m], jobs: BTreeMap::new() }
    }

    pub fn purchase_cost(&self, catalog: &InstanceCatalog) -> f64 {
        let mut total = 0.0;
        for (j, row) in self.purchases.iter().enumerate() {
            let units: u64 = row.iter().sum();
            total += catalog.get(j).price * units as f64;
        }
        total
    }

    pub fn total_payment(&self) -> f64 {
        self.jobs.values().map(|s| s.payment).sum()
    }

    /// Serializes to the line-oriented schedule format (see module docs of
    /// [`crate::workload`] for the matching workload format).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "schedule {} {}", self.m, self.t_slots);
        for (j, row) in self.purchases.iter().enumerate() {
            for (t, &count) in row.iter().enumerate().skip(1) {
                if count > 0 {
                    let _ = writeln!(out, "purchase {} {} {}", j + 1, t, count);
                }
            }
        }
        for (&id, js) in &self.jobs {
            let _ = writeln!(out, "accept {} {} {}", id, js.execution_time, js.payment);
            for (&(j, t), &count) in &js.alloc {
                let _ = writeln!(out, "alloc {} {} {} {}", id, j + 1, t, count);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((no, line)) => {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    break (no + 1, line);
                }
                None => return Err(Error::Parse { line: 0, msg: "empty schedule file".into() }),
            }
        };
        let parts: Vec<&str> = header.1.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "schedule" {
            return Err(Error::Parse {
                line: header.0,
                msg: "expected header `schedule <m> <T>`".into(),
            });
        }
        let m: usize = parse_field(parts[1], header.0, "m")?;
        let t_slots: usize = parse_field(parts[2], header.0, "T")?;
        let mut sched = Schedule::empty(m, t_slots);
        for (no, raw) in lines {
            let line_no = no + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            match f[0] {
                "purchase" if f.len() == 4 => {
                    let j: usize = parse_field(f[1], line_no, "type id")?;
                    let t: usize = parse_field(f[2], line_no, "slot")?;
                    let c: u64 = parse_field(f[3], line_no, "count")?;
                    if j == 0 || j > m || t == 0 || t > t_slots {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("purchase outside catalog/period: type {j} slot {t}"),
                        });
                    }
                    sched.purchases[j - 1][t] += c;
                }
                "accept" if f.len() == 4 => {
                    let id: u64 = parse_field(f[1], line_no, "job id")?;
                    let e: usize = parse_field(f[2], line_no, "execution time")?;
                    let payment: f64 = parse_field(f[3], line_no, "payment")?;
                    if sched.jobs.contains_key(&id) {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("job {id} accepted twice"),
                        });
                    }
                    sched.jobs.insert(
                        id,
                        JobSchedule { execution_time: e, payment, alloc: BTreeMap::new() },
                    );
                }
                "alloc" if f.len() == 5 => {
                    let id: u64 = parse_field(f[1], line_no, "job id")?;
                    let j: usize = parse_field(f[2], line_no, "type id")?;
                    let t: usize = parse_field(f[3], line_no, "slot")?;
                    let c: u64 = parse_field(f[4], line_no, "count")?;
                    if j == 0 || j > m || t == 0 || t > t_slots {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("alloc outside catalog/period: type {j} slot {t}"),
                        });
                    }
                    let js = sched.jobs.get_mut(&id).ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: format!("alloc for job {id} before its accept line"),
                    })?;
                    *js.alloc.entry((j - 1, t)).or_insert(0) += c;
                }
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unrecognized record `{}`", f[0]),
                    })
                }
            }
        }
        Ok(sched)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("bad {what}: `{s}`") })
}

/// Outcome of deciding one job.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accepted { execution_time: usize, payment: f64 },
    Rejected,
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted { .. })
    }
}

/// Per-job line of the decision log.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub job_id: u64,
    pub arrival: usize,
    pub verdict: Verdict,
    /// Estimated shared cost at the chosen execution time (online only).
    pub est_cost: Option<f64>,
    /// Gain increment that drove the decision (online only).
    pub gain: Option<f64>,
}

/// Aggregate result of one algorithm run over one workload.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub revenue: f64,
    pub satisfaction: f64,
    pub objective: f64,
    pub total_payment: f64,
    pub total_cost: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub wall_time_s: f64,
    pub records: Vec<JobRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_job() -> Job {
        // One job, four admissible speeds, values falling with execution time.
        Job {
            id: 1,
            arrival: 1,
            deadline: 5,
            demands: vec![4, 2],
            dop_cap: 5,
            values: vec![100.0, 80.0, 50.0, 30.0],
        }
    }

    #[test]
    fn value_lookup_follows_the_table() {
        let job = sample_job();
        assert_eq!(job.value(1).unwrap(), 100.0);
        assert_eq!(job.value(2).unwrap(), 80.0);
        assert_eq!(job.value(4).unwrap(), 30.0);
        assert!(matches!(job.value(5), Err(Error::Range(_))));
        assert!(matches!(job.value(0), Err(Error::Range(_))));
    }

    #[test]
    fn job_validation_catches_bad_tables() {
        let mut job = sample_job();
        job.validate(2, 10).unwrap();
        job.values = vec![100.0, 80.0, 90.0, 30.0];
        assert!(job.validate(2, 10).is_err());
        job.values = vec![100.0, 80.0];
        assert!(job.validate(2, 10).is_err());
        let mut job = sample_job();
        job.deadline = 11;
        assert!(job.validate(2, 10).is_err());
        let mut job = sample_job();
        job.demands = vec![4];
        assert!(job.validate(2, 10).is_err());
    }

    #[test]
    fn purchase_covers_its_lifetime_window() {
        let mut ledger = CapacityLedger::new_dynamic(1, 12, 6);
        ledger.add_purchases(0, 3, 1).unwrap();
        assert_eq!(ledger.available(0, 2), 0);
        for t in 3..=8 {
            assert_eq!(ledger.available(0, t), 1, "slot {t}");
        }
        assert_eq!(ledger.available(0, 9), 0);
    }

    #[test]
    fn committing_consumes_only_that_slot() {
        let mut ledger = CapacityLedger::new_dynamic(1, 12, 6);
        ledger.add_purchases(0, 3, 1).unwrap();
        ledger.commit(0, 4, 1).unwrap();
        assert_eq!(ledger.available(0, 4), 0);
        assert_eq!(ledger.available(0, 5), 1);
        assert!(ledger.commit(0, 4, 1).is_err());
    }

    #[test]
    fn commit_without_capacity_is_an_error() {
        let mut ledger = CapacityLedger::new_dynamic(2, 8, 4);
        assert!(ledger.commit(0, 1, 1).is_err());
    }

    #[test]
    fn rollback_restores_availability_exactly() {
        let mut ledger = CapacityLedger::new_dynamic(2, 10, 4);
        ledger.add_purchases(0, 2, 3).unwrap();
        ledger.commit(0, 2, 2).unwrap();
        let snapshot: Vec<Vec<u64>> = (0..2)
            .map(|j| (1..=10).map(|t| ledger.available(j, t)).collect())
            .collect();
        ledger.add_purchases(1, 4, 2).unwrap();
        ledger.commit(1, 5, 2).unwrap();
        ledger.commit(0, 3, 1).unwrap();
        ledger.uncommit(0, 3, 1).unwrap();
        ledger.uncommit(1, 5, 2).unwrap();
        ledger.remove_purchases(1, 4, 2).unwrap();
        let restored: Vec<Vec<u64>> = (0..2)
            .map(|j| (1..=10).map(|t| ledger.available(j, t)).collect())
            .collect();
        assert_eq!(snapshot, restored);
    }

    #[test]
    fn removing_purchases_under_commitments_fails() {
        let mut ledger = CapacityLedger::new_dynamic(1, 10, 4);
        ledger.add_purchases(0, 2, 1).unwrap();
        ledger.commit(0, 3, 1).unwrap();
        assert!(ledger.remove_purchases(0, 2, 1).is_err());
        ledger.uncommit(0, 3, 1).unwrap();
        ledger.remove_purchases(0, 2, 1).unwrap();
    }

    #[test]
    fn fixed_ledger_has_constant_capacity_and_no_purchasing() {
        let mut ledger = CapacityLedger::new_fixed(vec![3, 1], 10);
        assert_eq!(ledger.capacity(0, 1), 3);
        assert_eq!(ledger.capacity(0, 10), 3);
        assert_eq!(ledger.capacity(1, 7), 1);
        assert!(ledger.add_purchases(0, 1, 1).is_err());
        ledger.commit(0, 4, 3).unwrap();
        assert!(ledger.commit(0, 4, 1).is_err());
    }

    #[test]
    fn even_split_sends_remainder_to_earliest_slots() {
        assert_eq!(split_evenly(6, 3), vec![2, 2, 2]);
        assert_eq!(split_evenly(5, 2), vec![3, 2]);
        assert_eq!(split_evenly(1, 2), vec![1, 0]);
        assert_eq!(split_evenly(7, 3), vec![3, 2, 2]);
    }

    #[test]
    fn frac_arithmetic_is_exact() {
        let f = Frac::ratio(3, 5); // 3/5
        let g = f.sub_ratio(1, 2); // 1/10
        assert!(g.is_positive());
        assert_eq!(g.ceil_mul(10), 1);
        assert_eq!(g.ceil_mul(3), 1);
        let h = g.sub_ratio(1, 10);
        assert!(!h.is_positive());
        assert!(Frac::ratio(5, 5).ge_one());
        assert!(!Frac::ratio(4, 5).ge_one());
    }

    #[test]
    fn default_catalog_prefers_the_small_type() {
        let catalog = InstanceCatalog::default_four();
        assert_eq!(catalog.m(), 4);
        assert_eq!(catalog.reference_type(), 0);
        assert_eq!(catalog.ratio_desc()[0], 0);
        assert_eq!(catalog.perf_desc()[0], 3);
    }

    #[test]
    fn schedule_round_trips_through_text() {
        let mut sched = Schedule::empty(2, 8);
        sched.purchases[0][2] = 3;
        sched.purchases[1][5] = 1;
        let mut alloc = BTreeMap::new();
        alloc.insert((0, 2), 2u64);
        alloc.insert((1, 5), 1u64);
        sched.jobs.insert(4, JobSchedule { execution_time: 2, payment: 12.5, alloc });
        let text = sched.to_text();
        let back = Schedule::from_text(&text).unwrap();
        assert_eq!(sched, back);
    }

    #[test]
    fn schedule_parse_reports_offending_line() {
        let text = "schedule 1 5\npurchase 1 2 1\nalloc 9 1 2 1\n";
        match Schedule::from_text(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_weights() {
        let mut cfg = SimConfig::new(10);
        cfg.validate().unwrap();
        cfg.theta = 1.2;
        assert!(cfg.validate().is_err());
        cfg.theta = 0.5;
        cfg.rev_star = 0.0;
        assert!(cfg.validate().is_err());
    }
}
