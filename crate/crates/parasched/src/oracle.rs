//! Offline oracle: the IP constraint auditor, an exact branch-and-bound
//! solver for desk-scale instances, and an LP upper bound from the
//! continuous relaxation, all self-contained.
//!
//! The exact solver enumerates, per job, rejection or each admissible
//! execution time, and prices every acceptance profile with a minimum-cost
//! purchase search.  Allocations follow the same per-slot completion quota
//! the online planner uses (slot `s` of a window brings the delivered
//! fraction up to `s/e`), purchases appear only at slots that would
//! otherwise fall short, and the per-slot split between the (at most two)
//! instance types is searched over the minimal covering candidates.  Every
//! answer is therefore a feasible schedule: the reported objective is a
//! lower bound on the unrestricted integer optimum and never below what the
//! online scheduler achieves on the same instance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use crate::harness::build_outcome;
use crate::model::{
    CapacityLedger, Frac, InstanceCatalog, Job, JobRecord, JobSchedule, Outcome, Schedule,
    SimConfig, Verdict,
};
use crate::online::{plan_with, PlanOptions};
use crate::{Error, Result};

const EPS: f64 = 1e-9;

/// Constraints of the scheduling IP, numbered as in the formulation, plus
/// the payment bookkeeping check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Constraint {
    /// (5): allocations inside the window complete the job.
    Completion5,
    /// (6): each job runs at most once.
    SingleChoice6,
    /// (7): total allocated instances stay within the job's parallelism cap.
    Parallelism7,
    /// (8): capacity follows from purchases and their lifetime.
    CapacityDefinition8,
    /// (9): per-slot usage stays within capacity.
    CapacityLimit9,
    /// (10)-(12): integrality of allocations, purchases, and choices.
    Integrality,
    /// Charged payments match the job's value table.
    Payment,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::Completion5 => "(5) completion",
            Constraint::SingleChoice6 => "(6) single choice",
            Constraint::Parallelism7 => "(7) parallelism cap",
            Constraint::CapacityDefinition8 => "(8) capacity definition",
            Constraint::CapacityLimit9 => "(9) capacity limit",
            Constraint::Integrality => "(10)-(12) integrality",
            Constraint::Payment => "payment consistency",
        };
        f.write_str(s)
    }
}

/// One audit finding.
#[derive(Debug, Clone)]
pub struct Violation {
    pub constraint: Constraint,
    pub job_id: Option<u64>,
    pub type_idx: Option<usize>,
    pub slot: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constraint)?;
        if let Some(id) = self.job_id {
            write!(f, " job {id}")?;
        }
        if let Some(j) = self.type_idx {
            write!(f, " type {}", j + 1)?;
        }
        if let Some(t) = self.slot {
            write!(f, " slot {t}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Outcome of auditing one schedule.
#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pass() {
            return write!(f, "audit: pass");
        }
        writeln!(f, "audit: {} violation(s)", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Capacity regime the schedule is audited under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditMode {
    /// Purchases create capacity for `tau` slots (from the config).
    Dynamic,
    /// Constant per-type capacity; purchases are the single up-front batch
    /// recorded at slot 1.
    FixedCapacity(Vec<u64>),
}

/// Checks a schedule against every IP constraint, exactly.
pub fn audit_schedule(
    schedule: &Schedule,
    jobs: &[Job],
    config: &SimConfig,
    mode: &AuditMode,
) -> Result<AuditReport> {
    let m = schedule.m;
    let t_slots = schedule.t_slots;
    if t_slots != config.t_slots {
        return Err(Error::Validation(format!(
            "schedule spans {} slots but the config says {}",
            t_slots, config.t_slots
        )));
    }
    if schedule.purchases.len() != m || schedule.purchases.iter().any(|r| r.len() != t_slots + 1) {
        return Err(Error::Validation("purchase matrix has wrong dimensions".into()));
    }
    if let AuditMode::FixedCapacity(caps) = mode {
        if caps.len() != m {
            return Err(Error::Validation(format!(
                "{} capacities supplied for {} types",
                caps.len(),
                m
            )));
        }
    }
    let by_id: BTreeMap<u64, &Job> = jobs.iter().map(|j| (j.id, j)).collect();
    let mut report = AuditReport::default();
    let mut usage = vec![vec![0u64; t_slots + 1]; m];

    for (&id, js) in &schedule.jobs {
        let Some(job) = by_id.get(&id) else {
            return Err(Error::Validation(format!("schedule references unknown job {id}")));
        };
        if job.demands.len() != m {
            return Err(Error::Validation(format!("job {id} has demands for the wrong type count")));
        }
        let e = js.execution_time;
        if e < 1 || e > job.span() {
            report.violations.push(Violation {
                constraint: Constraint::SingleChoice6,
                job_id: Some(id),
                type_idx: None,
                slot: None,
                detail: format!("execution time {e} outside 1..={}", job.span()),
            });
            continue;
        }
        let window = job.window(e);
        let mut fraction = Frac::zero();
        let mut units = 0u64;
        for (&(j, t), &count) in &js.alloc {
            if j >= m || t < 1 || t > t_slots {
                return Err(Error::Validation(format!(
                    "job {id} allocation at type {} slot {t} is out of range",
                    j + 1
                )));
            }
            if count == 0 {
                continue;
            }
            usage[j][t] += count;
            units += count;
            if window.contains(&t) {
                fraction = fraction.add(Frac::ratio(count, job.demands[j]));
            } else {
                report.violations.push(Violation {
                    constraint: Constraint::Completion5,
                    job_id: Some(id),
                    type_idx: Some(j),
                    slot: Some(t),
                    detail: format!("allocation outside the window {:?}", window.clone()),
                });
            }
        }
        if !fraction.ge_one() {
            report.violations.push(Violation {
                constraint: Constraint::Completion5,
                job_id: Some(id),
                type_idx: None,
                slot: None,
                detail: "window allocations do not complete the job".into(),
            });
        }
        if units > job.dop_cap {
            report.violations.push(Violation {
                constraint: Constraint::Parallelism7,
                job_id: Some(id),
                type_idx: None,
                slot: None,
                detail: format!("{units} instances exceed the cap {}", job.dop_cap),
            });
        }
        let expected = job.values[e - 1];
        if (js.payment - expected).abs() > EPS {
            report.violations.push(Violation {
                constraint: Constraint::Payment,
                job_id: Some(id),
                type_idx: None,
                slot: None,
                detail: format!("payment {} but the value at e={e} is {expected}", js.payment),
            });
        }
    }

    match mode {
        AuditMode::Dynamic => {
            for j in 0..m {
                for t in 1..=t_slots {
                    let from = t.saturating_sub(config.tau - 1).max(1);
                    let cap: u64 = (from..=t).map(|t2| schedule.purchases[j][t2]).sum();
                    if usage[j][t] > cap {
                        report.violations.push(Violation {
                            constraint: Constraint::CapacityLimit9,
                            job_id: None,
                            type_idx: Some(j),
                            slot: Some(t),
                            detail: format!("usage {} over capacity {cap}", usage[j][t]),
                        });
                    }
                }
            }
        }
        AuditMode::FixedCapacity(caps) => {
            let renewals = t_slots.div_ceil(config.tau) as u64;
            for j in 0..m {
                let expected = caps[j] * renewals;
                if schedule.purchases[j][1] != expected {
                    report.violations.push(Violation {
                        constraint: Constraint::CapacityDefinition8,
                        job_id: None,
                        type_idx: Some(j),
                        slot: Some(1),
                        detail: format!(
                            "up-front batch {} but {} capacity over {} renewals needs {expected}",
                            schedule.purchases[j][1], caps[j], renewals
                        ),
                    });
                }
                for t in 2..=t_slots {
                    if schedule.purchases[j][t] != 0 {
                        report.violations.push(Violation {
                            constraint: Constraint::CapacityDefinition8,
                            job_id: None,
                            type_idx: Some(j),
                            slot: Some(t),
                            detail: "fixed-capacity runs purchase only up front".into(),
                        });
                    }
                }
                for t in 1..=t_slots {
                    if usage[j][t] > caps[j] {
                        report.violations.push(Violation {
                            constraint: Constraint::CapacityLimit9,
                            job_id: None,
                            type_idx: Some(j),
                            slot: Some(t),
                            detail: format!("usage {} over capacity {}", usage[j][t], caps[j]),
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Instance-size guard for the exact solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_jobs: usize,
    pub max_slots: usize,
    pub max_types: usize,
    pub max_e: usize,
    pub max_dop: u64,
    /// Cap on split-search nodes across the whole solve; past it the solver
    /// keeps the best schedule found and reports it as unproven.
    pub node_budget: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_jobs: 6,
            max_slots: 12,
            max_types: 2,
            max_e: 4,
            max_dop: 64,
            node_budget: 2_000_000,
        }
    }
}

impl OracleLimits {
    /// Whether an instance is small enough for [`solve_exact`].
    pub fn admits(&self, jobs: &[Job], config: &SimConfig, catalog: &InstanceCatalog) -> bool {
        jobs.len() <= self.max_jobs
            && config.t_slots <= self.max_slots
            && catalog.m() <= self.max_types.min(2)
            && jobs
                .iter()
                .all(|job| job.span() <= self.max_e && job.dop_cap <= self.max_dop)
    }
}

/// Whether the acceptance-profile search may skip provably dominated
/// branches.  Both settings return the same answer; `Off` exists to prove it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pruning {
    On,
    Off,
}

/// Result of the exact solver.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub schedule: Schedule,
    pub outcome: Outcome,
    /// `false` when the node budget ran out and the answer is only the best
    /// schedule found (still feasible, still at least the greedy cover).
    pub proved_optimal: bool,
}

struct CoverJob {
    e: usize,
    demands: Vec<u64>,
}

#[derive(Clone)]
struct CoverBest {
    cost: f64,
    buys: Vec<Vec<u64>>,
    allocs: Vec<BTreeMap<(usize, usize), u64>>,
}

struct CoverSearch<'a> {
    m: usize,
    t_slots: usize,
    tau: usize,
    prices: Vec<f64>,
    jobs: Vec<CoverJob>,
    active: Vec<Vec<(usize, usize)>>,
    delivered: Vec<Frac>,
    budget: Vec<u64>,
    usage: Vec<Vec<u64>>,
    buys: Vec<Vec<u64>>,
    allocs: Vec<BTreeMap<(usize, usize), u64>>,
    cost: f64,
    best: Option<CoverBest>,
    nodes: &'a mut u64,
    exhausted: &'a mut bool,
}

impl CoverSearch<'_> {
    /// Minimal covering splits for job `q` at window position `s`, as
    /// `(type-1 units, type-2 units)` pairs within the remaining budget.
    fn splits(&self, q: usize, s: usize) -> Vec<(u64, u64)> {
        let job = &self.jobs[q];
        let deficit = Frac::ratio(s as u64, job.e as u64).sub(self.delivered[q]);
        if !deficit.is_positive() {
            return vec![(0, 0)];
        }
        let budget = self.budget[q];
        if self.m == 1 {
            let a = deficit.ceil_mul(job.demands[0]);
            return if a <= budget { vec![(a, 0)] } else { Vec::new() };
        }
        let (d0, d1) = (job.demands[0], job.demands[1]);
        let mut set = BTreeSet::new();
        for a in 0..=deficit.ceil_mul(d0) {
            set.insert((a, deficit.sub_ratio(a, d0).ceil_mul(d1)));
        }
        for b in 0..=deficit.ceil_mul(d1) {
            set.insert((deficit.sub_ratio(b, d1).ceil_mul(d0), b));
        }
        set.into_iter().filter(|&(a, b)| a + b <= budget).collect()
    }

    fn capacity(&self, j: usize, t: usize) -> u64 {
        let from = t.saturating_sub(self.tau - 1).max(1);
        (from..=t).map(|t2| self.buys[j][t2]).sum()
    }

    fn recurse(&mut self, t: usize, k: usize) {
        if *self.exhausted {
            return;
        }
        if let Some(best) = &self.best {
            if self.cost >= best.cost {
                return;
            }
        }
        if t > self.t_slots {
            self.best = Some(CoverBest {
                cost: self.cost,
                buys: self.buys.clone(),
                allocs: self.allocs.clone(),
            });
            return;
        }
        if k == self.active[t].len() {
            let mut bought = vec![0u64; self.m];
            for j in 0..self.m {
                let short = self.usage[j][t].saturating_sub(self.capacity(j, t));
                if short > 0 {
                    self.buys[j][t] += short;
                    self.cost += self.prices[j] * short as f64;
                    bought[j] = short;
                }
            }
            self.recurse(t + 1, 0);
            for j in 0..self.m {
                if bought[j] > 0 {
                    self.buys[j][t] -= bought[j];
                    self.cost -= self.prices[j] * bought[j] as f64;
                }
            }
            return;
        }
        let (q, s) = self.active[t][k];
        for (a, b) in self.splits(q, s) {
            if *self.nodes == 0 {
                *self.exhausted = true;
                return;
            }
            *self.nodes -= 1;
            let saved = self.delivered[q];
            let mut applied = [(0usize, 0u64); 2];
            let mut n_applied = 0;
            for (j, units) in [(0usize, a), (1usize, b)] {
                if units == 0 {
                    continue;
                }
                self.usage[j][t] += units;
                self.budget[q] -= units;
                *self.allocs[q].entry((j, t)).or_default() += units;
                self.delivered[q] = self.delivered[q].add(Frac::ratio(units, self.jobs[q].demands[j]));
                applied[n_applied] = (j, units);
                n_applied += 1;
            }
            self.recurse(t, k + 1);
            for &(j, units) in applied.iter().take(n_applied) {
                self.usage[j][t] -= units;
                self.budget[q] += units;
                let slot = self.allocs[q].get_mut(&(j, t)).unwrap();
                *slot -= units;
                if *slot == 0 {
                    self.allocs[q].remove(&(j, t));
                }
            }
            self.delivered[q] = saved;
        }
    }
}

struct ExactSearch<'a> {
    jobs: &'a [Job],
    config: &'a SimConfig,
    catalog: &'a InstanceCatalog,
    pruning: Pruning,
    v_max_suffix: Vec<f64>,
    profile: Vec<Option<usize>>,
    best: Option<(f64, Vec<Option<usize>>, CoverBest)>,
    nodes: u64,
    exhausted: bool,
}

impl ExactSearch<'_> {
    /// Minimum purchase cost of running the current profile, with the greedy
    /// replay as the incumbent the split search has to beat.
    fn price_profile(&mut self) -> Option<CoverBest> {
        let accepted: Vec<(usize, usize)> = self
            .profile
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|e| (i, e)))
            .collect();
        let m = self.catalog.m();
        let t_slots = self.config.t_slots;
        if accepted.is_empty() {
            return Some(CoverBest {
                cost: 0.0,
                buys: vec![vec![0; t_slots + 1]; m],
                allocs: Vec::new(),
            });
        }
        let mut ledger = CapacityLedger::new_dynamic(m, t_slots, self.config.tau);
        let mut replay: Option<Vec<BTreeMap<(usize, usize), u64>>> = Some(Vec::new());
        for &(i, e) in &accepted {
            let Some(plan) =
                plan_with(&self.jobs[i], e, &ledger, self.catalog, PlanOptions::purchasing())
            else {
                replay = None;
                break;
            };
            for &(j, t, n) in &plan.purchases {
                ledger.add_purchases(j, t, n).expect("fresh ledger accepts plan purchases");
            }
            for (&(j, t), &n) in &plan.alloc {
                ledger.commit(j, t, n).expect("plan fits the ledger it was built against");
            }
            if let Some(list) = replay.as_mut() {
                list.push(plan.alloc);
            }
        }
        let incumbent = replay.map(|allocs| CoverBest {
            cost: ledger.purchase_cost(self.catalog),
            buys: ledger.purchase_matrix().clone(),
            allocs,
        });

        let mut active = vec![Vec::new(); t_slots + 1];
        let cover_jobs: Vec<CoverJob> = accepted
            .iter()
            .enumerate()
            .map(|(q, &(i, e))| {
                let job = &self.jobs[i];
                for (pos, t) in job.window(e).enumerate() {
                    active[t].push((q, pos + 1));
                }
                CoverJob { e, demands: job.demands.clone() }
            })
            .collect();
        let n_acc = cover_jobs.len();
        let mut search = CoverSearch {
            m,
            t_slots,
            tau: self.config.tau,
            prices: (0..m).map(|j| self.catalog.get(j).price).collect(),
            jobs: cover_jobs,
            active,
            delivered: vec![Frac::zero(); n_acc],
            budget: (0..n_acc).map(|q| accepted[q].0).map(|i| self.jobs[i].dop_cap).collect(),
            usage: vec![vec![0; t_slots + 1]; m],
            buys: vec![vec![0; t_slots + 1]; m],
            allocs: vec![BTreeMap::new(); n_acc],
            cost: 0.0,
            best: incumbent,
            nodes: &mut self.nodes,
            exhausted: &mut self.exhausted,
        };
        if !*search.exhausted {
            search.recurse(1, 0);
        }
        search.best
    }

    fn dfs(&mut self, idx: usize, v_sum: f64, accepted: usize) {
        let n = self.jobs.len();
        if self.pruning == Pruning::On {
            if let Some((best_obj, ..)) = &self.best {
                let bound = self.config.theta * (v_sum + self.v_max_suffix[idx])
                    / self.config.rev_star
                    + (1.0 - self.config.theta) * (accepted + (n - idx)) as f64 / n as f64;
                if bound <= *best_obj + 1e-12 {
                    return;
                }
            }
        }
        if idx == n {
            let Some(cover) = self.price_profile() else { return };
            let obj = self.config.theta * (v_sum - cover.cost) / self.config.rev_star
                + (1.0 - self.config.theta) * accepted as f64 / n as f64;
            if self.best.as_ref().is_none_or(|(b, ..)| obj > *b) {
                self.best = Some((obj, self.profile.clone(), cover));
            }
            return;
        }
        for e in 1..=self.jobs[idx].span() {
            self.profile[idx] = Some(e);
            self.dfs(idx + 1, v_sum + self.jobs[idx].values[e - 1], accepted + 1);
        }
        self.profile[idx] = None;
        self.dfs(idx + 1, v_sum, accepted);
    }
}

/// Exhaustively optimal schedule for a desk-scale instance.
pub fn solve_exact(
    jobs: &[Job],
    config: &SimConfig,
    catalog: &InstanceCatalog,
    limits: &OracleLimits,
    pruning: Pruning,
) -> Result<ExactSolution> {
    let start = Instant::now();
    config.validate()?;
    let n = jobs.len();
    if n > limits.max_jobs {
        return Err(Error::LimitsExceeded(format!("{n} jobs exceed {}", limits.max_jobs)));
    }
    if config.t_slots > limits.max_slots {
        return Err(Error::LimitsExceeded(format!(
            "{} slots exceed {}",
            config.t_slots, limits.max_slots
        )));
    }
    if catalog.m() > limits.max_types.min(2) {
        return Err(Error::LimitsExceeded(format!(
            "{} instance types exceed {} (the exact solver handles at most 2)",
            catalog.m(),
            limits.max_types.min(2)
        )));
    }
    for job in jobs {
        job.validate(catalog.m(), config.t_slots)?;
        if job.span() > limits.max_e {
            return Err(Error::LimitsExceeded(format!(
                "job {} has {} execution times, limit {}",
                job.id,
                job.span(),
                limits.max_e
            )));
        }
        if job.dop_cap > limits.max_dop {
            return Err(Error::LimitsExceeded(format!(
                "job {} parallelism cap {} exceeds {}",
                job.id, job.dop_cap, limits.max_dop
            )));
        }
    }
    if n == 0 {
        let schedule = Schedule::empty(catalog.m(), config.t_slots);
        let outcome = build_outcome(&schedule, catalog, config, 0, Vec::new(), 0.0);
        return Ok(ExactSolution { schedule, outcome, proved_optimal: true });
    }

    let mut v_max_suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        v_max_suffix[i] = v_max_suffix[i + 1] + jobs[i].value_max();
    }
    let mut search = ExactSearch {
        jobs,
        config,
        catalog,
        pruning,
        v_max_suffix,
        profile: vec![None; n],
        best: None,
        nodes: limits.node_budget,
        exhausted: false,
    };
    search.dfs(0, 0.0, 0);
    let (_, profile, cover) = search.best.expect("the all-reject profile is always feasible");

    let mut schedule = Schedule {
        m: catalog.m(),
        t_slots: config.t_slots,
        purchases: cover.buys,
        jobs: BTreeMap::new(),
    };
    let mut records = Vec::with_capacity(n);
    let mut q = 0;
    for (i, choice) in profile.iter().enumerate() {
        let job = &jobs[i];
        match choice {
            Some(e) => {
                let payment = job.values[e - 1];
                schedule.jobs.insert(
                    job.id,
                    JobSchedule { execution_time: *e, payment, alloc: cover.allocs[q].clone() },
                );
                q += 1;
                records.push(JobRecord {
                    job_id: job.id,
                    arrival: job.arrival,
                    verdict: Verdict::Accepted { execution_time: *e, payment },
                    est_cost: None,
                    gain: None,
                });
            }
            None => records.push(JobRecord {
                job_id: job.id,
                arrival: job.arrival,
                verdict: Verdict::Rejected,
                est_cost: None,
                gain: None,
            }),
        }
    }
    let outcome =
        build_outcome(&schedule, catalog, config, n, records, start.elapsed().as_secs_f64());
    Ok(ExactSolution { schedule, outcome, proved_optimal: !search.exhausted })
}

/// Optimum of the LP relaxation: continuous allocations and purchases,
/// acceptance variables in `[0, 1]`.  An upper bound on every feasible
/// schedule's objective.
pub fn lp_upper_bound(
    jobs: &[Job],
    config: &SimConfig,
    catalog: &InstanceCatalog,
    max_vars: usize,
) -> Result<f64> {
    config.validate()?;
    if jobs.is_empty() {
        return Ok(0.0);
    }
    let n = jobs.len();
    let m = catalog.m();
    let t_slots = config.t_slots;
    for job in jobs {
        job.validate(m, t_slots)?;
    }

    // Variable layout: x_{i,e}, then y_{i,e,j,t} over each window, then r_{j,t}.
    let mut x_idx = Vec::with_capacity(n);
    let mut y_idx = Vec::with_capacity(n);
    let mut nv = 0usize;
    for job in jobs {
        let mut xs = Vec::with_capacity(job.span());
        let mut ys = Vec::with_capacity(job.span());
        for e in 1..=job.span() {
            xs.push(nv);
            nv += 1;
            ys.push(nv);
            nv += m * e;
        }
        x_idx.push(xs);
        y_idx.push(ys);
    }
    let r_base = nv;
    nv += m * t_slots;
    if nv > max_vars {
        return Err(Error::LimitsExceeded(format!(
            "relaxation needs {nv} variables, cap is {max_vars}"
        )));
    }
    let y_at = |i: usize, e: usize, j: usize, t: usize, jobs: &[Job]| -> usize {
        let offset = j * e + (t - (jobs[i].arrival + 1));
        y_idx[i][e - 1] + offset
    };
    let r_at = |j: usize, t: usize| -> usize { r_base + j * t_slots + (t - 1) };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (i, job) in jobs.iter().enumerate() {
        for e in 1..=job.span() {
            // Completion: x - sum y/D <= 0.
            let mut row = vec![0.0; nv];
            row[x_idx[i][e - 1]] = 1.0;
            for j in 0..m {
                for t in job.window(e) {
                    row[y_at(i, e, j, t, jobs)] -= 1.0 / job.demands[j] as f64;
                }
            }
            rows.push(row);
            rhs.push(0.0);
            // Parallelism: sum y <= k_i.
            let mut row = vec![0.0; nv];
            for j in 0..m {
                for t in job.window(e) {
                    row[y_at(i, e, j, t, jobs)] = 1.0;
                }
            }
            rows.push(row);
            rhs.push(job.dop_cap as f64);
            // x <= 1.
            let mut row = vec![0.0; nv];
            row[x_idx[i][e - 1]] = 1.0;
            rows.push(row);
            rhs.push(1.0);
        }
        // Single choice: sum_e x <= 1.
        let mut row = vec![0.0; nv];
        for e in 1..=job.span() {
            row[x_idx[i][e - 1]] = 1.0;
        }
        rows.push(row);
        rhs.push(1.0);
    }
    for j in 0..m {
        for t in 1..=t_slots {
            // Capacity: sum usage - purchases alive at t <= 0.
            let mut row = vec![0.0; nv];
            let mut any = false;
            for (i, job) in jobs.iter().enumerate() {
                for e in 1..=job.span() {
                    if job.window(e).contains(&t) {
                        row[y_at(i, e, j, t, jobs)] = 1.0;
                        any = true;
                    }
                }
            }
            if !any {
                continue;
            }
            let from = t.saturating_sub(config.tau - 1).max(1);
            for t2 in from..=t {
                row[r_at(j, t2)] = -1.0;
            }
            rows.push(row);
            rhs.push(0.0);
        }
    }

    let mut objective = vec![0.0; nv];
    for (i, job) in jobs.iter().enumerate() {
        for e in 1..=job.span() {
            objective[x_idx[i][e - 1]] = config.theta * job.values[e - 1] / config.rev_star
                + (1.0 - config.theta) / n as f64;
        }
    }
    for j in 0..m {
        for t in 1..=t_slots {
            objective[r_at(j, t)] = -config.theta * catalog.get(j).price / config.rev_star;
        }
    }
    simplex_max(&rows, &rhs, &objective)
}

/// Maximizes `c·z` over `A z <= b, z >= 0` with a dense tableau and Bland's
/// rule.  Requires `b >= 0`, which every relaxation row satisfies.
fn simplex_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<f64> {
    const TOL: f64 = 1e-9;
    let mr = a.len();
    let nv = c.len();
    let width = nv + mr + 1;
    let mut tab = vec![vec![0.0; width]; mr + 1];
    for (j, &cj) in c.iter().enumerate() {
        tab[0][j] = -cj;
    }
    for i in 0..mr {
        if b[i] < 0.0 {
            return Err(Error::Lp(format!("negative right-hand side in row {i}")));
        }
        tab[i + 1][..nv].copy_from_slice(&a[i]);
        tab[i + 1][nv + i] = 1.0;
        tab[i + 1][width - 1] = b[i];
    }
    let mut basis: Vec<usize> = (nv..nv + mr).collect();
    for _ in 0..200_000 {
        let Some(enter) = (0..nv + mr).find(|&j| tab[0][j] < -TOL) else {
            return Ok(tab[0][width - 1]);
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 1..=mr {
            let coef = tab[i][enter];
            if coef > TOL {
                let ratio = tab[i][width - 1] / coef;
                let better = ratio < best_ratio - TOL
                    || (ratio < best_ratio + TOL
                        && leave.is_some_and(|l| basis[i - 1] < basis[l - 1]));
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(Error::Lp("relaxation is unbounded".into()));
        };
        let pivot = tab[leave][enter];
        for v in tab[leave].iter_mut() {
            *v /= pivot;
        }
        for i in 0..=mr {
            if i == leave {
                continue;
            }
            let factor = tab[i][enter];
            if factor == 0.0 {
                continue;
            }
            let (src, dst) = if i < leave {
                let (a, b) = tab.split_at_mut(leave);
                (&b[0], &mut a[i])
            } else {
                let (a, b) = tab.split_at_mut(i);
                (&a[leave], &mut b[0])
            };
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d -= factor * s;
            }
        }
        basis[leave - 1] = enter;
    }
    Err(Error::Lp("simplex iteration limit reached".into()))
}
