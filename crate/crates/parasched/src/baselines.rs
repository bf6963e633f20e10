//! Comparison schedulers: two posted-price primal-dual variants on fixed
//! fleets, earliest-deadline-first, random-execution-time admission,
//! shortest-job-first onto the fastest instances, and an even-spread
//! scheduler with on-demand purchasing.
//!
//! All six run against the same jobs, ledger, and metrics as the online
//! scheduler and produce auditable schedules.  The fixed-fleet kinds record
//! their up-front batch (capacity times the number of lifetime renewals the
//! horizon needs) as a slot-1 purchase so fleet cost enters revenue the same
//! way on-demand purchases do.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::harness::build_outcome;
use crate::model::{
    CapacityLedger, InstanceCatalog, Job, JobRecord, JobSchedule, Outcome, Schedule, SimConfig,
    Verdict,
};
use crate::online::{plan_with, Plan, PlanOptions, PurchasePreference, ReuseOrder};
use crate::{Error, Result};

/// The six comparison schedulers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    PdSmall,
    PdLarge,
    Edf,
    EqualOpp,
    Ontapra,
    Dynalloc,
}

impl BaselineKind {
    pub fn all() -> [BaselineKind; 6] {
        [
            BaselineKind::PdSmall,
            BaselineKind::PdLarge,
            BaselineKind::Edf,
            BaselineKind::EqualOpp,
            BaselineKind::Ontapra,
            BaselineKind::Dynalloc,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::PdSmall => "pd_small",
            BaselineKind::PdLarge => "pd_large",
            BaselineKind::Edf => "edf",
            BaselineKind::EqualOpp => "equal_opp",
            BaselineKind::Ontapra => "ontapra",
            BaselineKind::Dynalloc => "dynalloc",
        }
    }

    /// Multiple of the demand-matched capacity rule this kind runs with, or
    /// `None` for the kinds that purchase on demand.
    pub fn capacity_scale(&self) -> Option<f64> {
        match self {
            BaselineKind::PdSmall => Some(0.5),
            BaselineKind::PdLarge => Some(2.0),
            BaselineKind::Edf | BaselineKind::Ontapra => Some(1.0),
            BaselineKind::EqualOpp | BaselineKind::Dynalloc => None,
        }
    }
}

/// Marginal price curve for the posted-price kinds: a unit of type `j` at
/// utilization `u` is offered at `price_j (gamma^u - 1) / (gamma - 1)`,
/// rising from free to the full unit price as the fleet fills.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PdCurve {
    pub gamma: f64,
}

impl Default for PdCurve {
    fn default() -> Self {
        PdCurve { gamma: 4.0 }
    }
}

impl PdCurve {
    pub fn posted(&self, base_price: f64, utilization: f64) -> f64 {
        base_price * (self.gamma.powf(utilization) - 1.0) / (self.gamma - 1.0)
    }
}

/// One baseline run's configuration.
#[derive(Debug, Clone)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// Per-type fleet size; required by the fixed-fleet kinds.
    pub fixed_capacity: Option<Vec<u64>>,
    pub pd_curve: PdCurve,
    /// Seed for the one randomized kind (`equal_opp`).
    pub seed: u64,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        BaselineSpec { kind, fixed_capacity: None, pd_curve: PdCurve::default(), seed: 0 }
    }

    /// Fills in the kind's fixed capacity from the demand-matched rule.
    pub fn with_demand_capacity(
        kind: BaselineKind,
        jobs: &[Job],
        catalog: &InstanceCatalog,
        t_slots: usize,
    ) -> Self {
        let fixed_capacity = kind
            .capacity_scale()
            .map(|scale| demand_capacity(jobs, catalog, t_slots, scale));
        BaselineSpec { kind, fixed_capacity, pd_curve: PdCurve::default(), seed: 0 }
    }
}

/// Per-type fleet size matched to aggregate demand: 1.2 headroom over the
/// per-slot instance need if total demand were spread evenly over the
/// horizon and the catalog, scaled by `scale`, at least one instance.
pub fn demand_capacity(
    jobs: &[Job],
    catalog: &InstanceCatalog,
    t_slots: usize,
    scale: f64,
) -> Vec<u64> {
    let m = catalog.m();
    (0..m)
        .map(|j| {
            let total: u64 = jobs.iter().map(|job| job.demands[j]).sum();
            let per_slot = 1.2 * scale * total as f64 / (m * t_slots) as f64;
            (per_slot.ceil() as u64).max(1)
        })
        .collect()
}

struct RunState<'a> {
    config: &'a SimConfig,
    catalog: &'a InstanceCatalog,
    ledger: CapacityLedger,
    jobs_out: BTreeMap<u64, JobSchedule>,
    records: Vec<JobRecord>,
}

impl RunState<'_> {
    fn accept(&mut self, job: &Job, e: usize, plan: Plan, est_cost: Option<f64>, gain: Option<f64>) {
        for &(j, t, count) in &plan.purchases {
            self.ledger.add_purchases(j, t, count).expect("plan purchases fit the ledger");
        }
        for (&(j, t), &count) in &plan.alloc {
            self.ledger.commit(j, t, count).expect("plan allocations fit the ledger");
        }
        let payment = job.values[e - 1];
        self.jobs_out.insert(
            job.id,
            JobSchedule { execution_time: e, payment, alloc: plan.alloc },
        );
        self.records.push(JobRecord {
            job_id: job.id,
            arrival: job.arrival,
            verdict: Verdict::Accepted { execution_time: e, payment },
            est_cost,
            gain,
        });
    }

    fn reject(&mut self, job: &Job, est_cost: Option<f64>, gain: Option<f64>) {
        self.records.push(JobRecord {
            job_id: job.id,
            arrival: job.arrival,
            verdict: Verdict::Rejected,
            est_cost,
            gain,
        });
    }
}

/// Jobs grouped by arrival slot, in slot order.
fn arrival_batches(jobs: &[Job]) -> Vec<Vec<&Job>> {
    let mut batches: BTreeMap<usize, Vec<&Job>> = BTreeMap::new();
    for job in jobs {
        batches.entry(job.arrival).or_default().push(job);
    }
    batches.into_values().collect()
}

/// Runs one comparison scheduler over the whole workload.
pub fn run_baseline(
    spec: &BaselineSpec,
    jobs: &[Job],
    config: &SimConfig,
    catalog: &InstanceCatalog,
) -> Result<(Schedule, Outcome)> {
    let start = Instant::now();
    config.validate()?;
    let m = catalog.m();
    let mut last_arrival = 0;
    for job in jobs {
        job.validate(m, config.t_slots)?;
        if job.arrival < last_arrival {
            return Err(Error::Ordering(format!(
                "job {} arrives at {} after a job at {}",
                job.id, job.arrival, last_arrival
            )));
        }
        last_arrival = job.arrival;
    }
    let caps = match spec.kind.capacity_scale() {
        Some(_) => {
            let caps = spec.fixed_capacity.clone().ok_or_else(|| {
                Error::Validation(format!("{} needs a fixed capacity", spec.kind.name()))
            })?;
            if caps.len() != m {
                return Err(Error::Validation(format!(
                    "{} capacities supplied for {} types",
                    caps.len(),
                    m
                )));
            }
            Some(caps)
        }
        None => None,
    };
    let ledger = match &caps {
        Some(caps) => CapacityLedger::new_fixed(caps.clone(), config.t_slots),
        None => CapacityLedger::new_dynamic(m, config.t_slots, config.tau),
    };
    let mut state = RunState {
        config,
        catalog,
        ledger,
        jobs_out: BTreeMap::new(),
        records: Vec::new(),
    };

    match spec.kind {
        BaselineKind::PdSmall | BaselineKind::PdLarge => {
            run_posted_price(&mut state, jobs, caps.as_ref().unwrap(), &spec.pd_curve)
        }
        BaselineKind::Edf => run_deadline_first(&mut state, jobs),
        BaselineKind::EqualOpp => run_equal_opportunity(&mut state, jobs, spec.seed),
        BaselineKind::Ontapra => run_fastest_first(&mut state, jobs),
        BaselineKind::Dynalloc => run_even_spread(&mut state, jobs),
    }

    let mut purchases = match &caps {
        Some(caps) => {
            let renewals = config.t_slots.div_ceil(config.tau) as u64;
            let mut p = vec![vec![0u64; config.t_slots + 1]; m];
            for j in 0..m {
                p[j][1] = caps[j] * renewals;
            }
            p
        }
        None => state.ledger.purchase_matrix().clone(),
    };
    for row in purchases.iter_mut() {
        row.truncate(config.t_slots + 1);
    }
    let schedule = Schedule { m, t_slots: config.t_slots, purchases, jobs: state.jobs_out };
    let mut records = state.records;
    records.sort_by_key(|r| (r.arrival, r.job_id));
    let outcome = build_outcome(
        &schedule,
        catalog,
        config,
        jobs.len(),
        records,
        start.elapsed().as_secs_f64(),
    );
    Ok((schedule, outcome))
}

/// Posted-price admission: each job is quoted, per execution time, the sum
/// over its planned units of the current marginal price, takes the execution
/// time with the largest surplus, and is admitted when that surplus is
/// positive.  Charged its full value like every other scheduler here.
fn run_posted_price(state: &mut RunState, jobs: &[Job], caps: &[u64], curve: &PdCurve) {
    let m = state.catalog.m();
    let t_slots = state.config.t_slots;
    let mut committed_units = vec![0u64; m];
    for job in jobs {
        let unit_price: Vec<f64> = (0..m)
            .map(|j| {
                let u = committed_units[j] as f64 / (caps[j] * t_slots as u64).max(1) as f64;
                curve.posted(state.catalog.get(j).price, u)
            })
            .collect();
        let mut best: Option<(f64, f64, usize, Plan)> = None;
        for e in 1..=job.span() {
            let Some(plan) =
                plan_with(job, e, &state.ledger, state.catalog, PlanOptions::reuse_only())
            else {
                continue;
            };
            let mut posted = 0.0;
            for (&(j, _), &count) in &plan.alloc {
                posted += unit_price[j] * count as f64;
            }
            let surplus = job.values[e - 1] - posted;
            if best.as_ref().is_none_or(|(s, ..)| surplus > *s) {
                best = Some((surplus, posted, e, plan));
            }
        }
        match best {
            Some((surplus, posted, e, plan)) if surplus > 0.0 => {
                for (&(j, _), &count) in &plan.alloc {
                    committed_units[j] += count;
                }
                state.accept(job, e, plan, Some(posted), Some(surplus));
            }
            Some((surplus, posted, ..)) => state.reject(job, Some(posted), Some(surplus)),
            None => state.reject(job, None, None),
        }
    }
}

/// Earliest deadline first: each arrival slot's batch is served in
/// increasing deadline order, each job at its smallest completable
/// execution time on the fixed fleet.
fn run_deadline_first(state: &mut RunState, jobs: &[Job]) {
    for batch in arrival_batches(jobs) {
        let mut batch = batch;
        batch.sort_by_key(|job| (job.deadline, job.id));
        for job in batch {
            serve_first_fit(state, job, PlanOptions::reuse_only());
        }
    }
}

/// Admission with a uniformly random execution time among the feasible ones,
/// purchasing on demand.
fn run_equal_opportunity(state: &mut RunState, jobs: &[Job], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for job in jobs {
        let mut feasible: Vec<(usize, Plan)> = (1..=job.span())
            .filter_map(|e| {
                plan_with(job, e, &state.ledger, state.catalog, PlanOptions::purchasing())
                    .map(|plan| (e, plan))
            })
            .collect();
        if feasible.is_empty() {
            state.reject(job, None, None);
            continue;
        }
        let (e, plan) = feasible.swap_remove(rng.gen_range(0..feasible.len()));
        state.accept(job, e, plan, None, None);
    }
}

/// Shortest job first onto the fastest instances, smallest completable
/// execution time, on the fixed fleet.
fn run_fastest_first(state: &mut RunState, jobs: &[Job]) {
    let opts = PlanOptions {
        reuse: ReuseOrder::PerfDesc,
        purchase: PurchasePreference::BestRatio,
        allow_purchase: false,
    };
    for batch in arrival_batches(jobs) {
        let mut batch = batch;
        batch.sort_by_key(|job| (job.demands.iter().sum::<u64>(), job.id));
        for job in batch {
            serve_first_fit(state, job, opts);
        }
    }
}

/// Shortest job first with the workload spread evenly across the whole
/// arrival-to-deadline span, buying the fewest units that cover it.
fn run_even_spread(state: &mut RunState, jobs: &[Job]) {
    let opts = PlanOptions {
        reuse: ReuseOrder::RatioDesc,
        purchase: PurchasePreference::FewestUnits,
        allow_purchase: true,
    };
    for batch in arrival_batches(jobs) {
        let mut batch = batch;
        batch.sort_by_key(|job| (job.demands.iter().sum::<u64>(), job.id));
        for job in batch {
            let e = job.span();
            match plan_with(job, e, &state.ledger, state.catalog, opts) {
                Some(plan) => state.accept(job, e, plan, None, None),
                None => state.reject(job, None, None),
            }
        }
    }
}

fn serve_first_fit(state: &mut RunState, job: &Job, opts: PlanOptions) {
    for e in 1..=job.span() {
        if let Some(plan) = plan_with(job, e, &state.ledger, state.catalog, opts) {
            state.accept(job, e, plan, None, None);
            return;
        }
    }
    state.reject(job, None, None);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TypeSpec;
    use crate::oracle::{audit_schedule, AuditMode};
    use crate::workload::{gen_synthetic, GenSpec};

    fn one_type(price: f64) -> InstanceCatalog {
        InstanceCatalog::new(&[TypeSpec { price, performance: 1.0 }]).unwrap()
    }

    fn config(t_slots: usize) -> SimConfig {
        let mut c = SimConfig::new(t_slots);
        c.theta = 0.5;
        c.rev_star = 100.0;
        c
    }

    fn job(id: u64, arrival: usize, deadline: usize, demand: u64) -> Job {
        let span = deadline - arrival;
        let values = (0..span).map(|i| 10.0 - i as f64).collect();
        Job { id, arrival, deadline, demands: vec![demand], dop_cap: 10, values }
    }

    #[test]
    fn deadline_order_decides_who_fits() {
        let jobs = [job(1, 1, 5, 2), job(2, 1, 3, 4), job(3, 1, 9, 2)];
        let mut spec = BaselineSpec::new(BaselineKind::Edf);
        spec.fixed_capacity = Some(vec![3]);
        let (schedule, outcome) =
            run_baseline(&spec, &jobs, &config(10), &one_type(3.0)).unwrap();
        // The deadline-3 job goes first and takes two of the three
        // instances on slots 2 and 3; the deadline-5 job must stretch to
        // e = 2 where served in id order it would fit at e = 1; the
        // deadline-9 job finds its opening slot full.
        assert_eq!(schedule.jobs[&2].execution_time, 2);
        assert_eq!(schedule.jobs[&1].execution_time, 2);
        assert!(!schedule.jobs.contains_key(&3));
        assert_eq!(outcome.accepted, 2);
        let report =
            audit_schedule(&schedule, &jobs, &config(10), &AuditMode::FixedCapacity(vec![3]))
                .unwrap();
        assert!(report.pass(), "{report}");
    }

    #[test]
    fn equal_opportunity_accepts_everything_feasible() {
        let jobs = [job(1, 1, 4, 3), job(2, 2, 5, 4), job(3, 2, 6, 2), job(4, 3, 7, 5)];
        let mut spec = BaselineSpec::new(BaselineKind::EqualOpp);
        spec.seed = 11;
        let cfg = config(10);
        let cat = one_type(2.0);
        let (_, outcome) = run_baseline(&spec, &jobs, &cfg, &cat).unwrap();
        assert_eq!(outcome.satisfaction, 1.0);
        let (_, again) = run_baseline(&spec, &jobs, &cfg, &cat).unwrap();
        assert_eq!(outcome.total_payment, again.total_payment);
        assert_eq!(outcome.revenue, again.revenue);
    }

    #[test]
    fn even_spread_uses_the_whole_span() {
        let jobs = [job(1, 1, 5, 8)];
        let spec = BaselineSpec::new(BaselineKind::Dynalloc);
        let (schedule, _) = run_baseline(&spec, &jobs, &config(10), &one_type(2.0)).unwrap();
        let js = &schedule.jobs[&1];
        assert_eq!(js.execution_time, 4);
        for t in 2..=5 {
            assert_eq!(js.alloc[&(0, t)], 2, "slot {t}");
        }
    }

    #[test]
    fn posted_prices_start_free_and_rise() {
        let curve = PdCurve::default();
        assert_eq!(curve.posted(8.0, 0.0), 0.0);
        assert!((curve.posted(8.0, 1.0) - 8.0).abs() < 1e-12);
        assert!(curve.posted(8.0, 0.5) < curve.posted(8.0, 0.9));

        let jobs = [job(1, 1, 4, 2)];
        let mut spec = BaselineSpec::new(BaselineKind::PdSmall);
        spec.fixed_capacity = Some(vec![2]);
        let (schedule, outcome) = run_baseline(&spec, &jobs, &config(10), &one_type(3.0)).unwrap();
        // An empty fleet posts a price of zero, so the surplus-maximizing
        // execution time is the one with the highest value.
        assert_eq!(schedule.jobs[&1].execution_time, 1);
        assert_eq!(outcome.records[0].est_cost, Some(0.0));
        assert_eq!(outcome.records[0].gain, Some(10.0));
    }

    #[test]
    fn larger_fleets_never_satisfy_fewer_users() {
        for seed in [3, 7, 19, 40, 77] {
            let spec = GenSpec::new(3.0, 12, seed);
            let workload = gen_synthetic(&spec).unwrap();
            let catalog = spec.catalog().unwrap();
            let mut cfg = config(spec.horizon());
            cfg.tau = spec.tau;
            let small = BaselineSpec {
                fixed_capacity: Some(demand_capacity(&workload, &catalog, cfg.t_slots, 0.5)),
                ..BaselineSpec::new(BaselineKind::PdSmall)
            };
            let large = BaselineSpec {
                fixed_capacity: Some(demand_capacity(&workload, &catalog, cfg.t_slots, 2.0)),
                ..BaselineSpec::new(BaselineKind::PdLarge)
            };
            let (_, small_out) = run_baseline(&small, &workload, &cfg, &catalog).unwrap();
            let (_, large_out) = run_baseline(&large, &workload, &cfg, &catalog).unwrap();
            assert!(
                large_out.satisfaction >= small_out.satisfaction,
                "seed {seed}: {} < {}",
                large_out.satisfaction,
                small_out.satisfaction
            );
        }
    }

    #[test]
    fn fastest_first_fills_high_performance_types() {
        let catalog = InstanceCatalog::new(&[
            TypeSpec { price: 2.0, performance: 1.0 },
            TypeSpec { price: 3.5, performance: 2.0 },
        ])
        .unwrap();
        let jobs = [Job {
            id: 1,
            arrival: 1,
            deadline: 3,
            demands: vec![4, 2],
            dop_cap: 10,
            values: vec![10.0, 8.0],
        }];
        let mut spec = BaselineSpec::new(BaselineKind::Ontapra);
        spec.fixed_capacity = Some(vec![3, 3]);
        let (schedule, _) = run_baseline(&spec, &jobs, &config(10), &catalog).unwrap();
        let js = &schedule.jobs[&1];
        assert_eq!(js.execution_time, 1);
        assert!(js.alloc.keys().all(|&(j, _)| j == 1), "{:?}", js.alloc);
    }

    #[test]
    fn fixed_fleet_kinds_require_a_capacity() {
        let jobs = [job(1, 1, 4, 2)];
        let spec = BaselineSpec::new(BaselineKind::Edf);
        assert!(matches!(
            run_baseline(&spec, &jobs, &config(10), &one_type(3.0)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn demand_capacity_follows_the_headroom_rule() {
        let catalog = InstanceCatalog::new(&[
            TypeSpec { price: 2.0, performance: 1.0 },
            TypeSpec { price: 3.5, performance: 2.0 },
        ])
        .unwrap();
        let jobs = [
            Job { id: 1, arrival: 1, deadline: 3, demands: vec![6, 3], dop_cap: 5, values: vec![5.0, 4.0] },
            Job { id: 2, arrival: 2, deadline: 4, demands: vec![6, 3], dop_cap: 5, values: vec![5.0, 4.0] },
        ];
        assert_eq!(demand_capacity(&jobs, &catalog, 10, 1.0), vec![1, 1]);
        assert_eq!(demand_capacity(&jobs, &catalog, 10, 2.0), vec![2, 1]);
    }

    #[test]
    fn every_baseline_produces_an_auditable_schedule() {
        let spec = GenSpec::new(2.0, 20, 7);
        let workload = gen_synthetic(&spec).unwrap();
        let catalog = spec.catalog().unwrap();
        let mut cfg = config(spec.horizon());
        cfg.tau = spec.tau;
        for kind in BaselineKind::all() {
            let mut bspec =
                BaselineSpec::with_demand_capacity(kind, &workload, &catalog, cfg.t_slots);
            bspec.seed = 5;
            let (schedule, outcome) = run_baseline(&bspec, &workload, &cfg, &catalog).unwrap();
            let mode = match &bspec.fixed_capacity {
                Some(caps) => AuditMode::FixedCapacity(caps.clone()),
                None => AuditMode::Dynamic,
            };
            let report = audit_schedule(&schedule, &workload, &cfg, &mode).unwrap();
            assert!(report.pass(), "{}: {report}", kind.name());
            assert_eq!(outcome.accepted + outcome.rejected, workload.len());
        }
    }
}
