//! The online scheduler: greedy per-slot planning against the live ledger,
//! weighted proportional cost sharing, horizon-scaled cost estimation, and
//! the accept/reject rule that keeps the bi-criteria objective nondecreasing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::harness::build_outcome;
use crate::model::{
    CapacityLedger, Frac, InstanceCatalog, Job, JobRecord, JobSchedule, Outcome, Schedule,
    SimConfig, Verdict,
};
use crate::{Error, Result};

/// Order in which already-purchased free units are consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReuseOrder {
    /// Best performance/price first.
    #[default]
    RatioDesc,
    /// Highest raw performance first.
    PerfDesc,
}

/// How the type of a new purchase is chosen when free units run out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PurchasePreference {
    /// Best performance/price ratio that fits the parallelism budget.
    #[default]
    BestRatio,
    /// Fewest instances that fit the parallelism budget.
    FewestUnits,
}

/// Planner switches; the defaults give the online scheduler's behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlanOptions {
    pub reuse: ReuseOrder,
    pub purchase: PurchasePreference,
    /// `false` restricts the plan to already-available capacity.
    pub allow_purchase: bool,
}

impl PlanOptions {
    pub fn purchasing() -> Self {
        PlanOptions { allow_purchase: true, ..PlanOptions::default() }
    }

    pub fn reuse_only() -> Self {
        PlanOptions { allow_purchase: false, ..PlanOptions::default() }
    }
}

/// A candidate allocation for one job at one execution time.  Nothing is
/// committed until the caller applies it to a ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// New instances to buy: `(type index, slot, count)`.
    pub purchases: Vec<(usize, usize, u64)>,
    /// Units granted to the job: `(type index, slot) -> count`.
    pub alloc: BTreeMap<(usize, usize), u64>,
    /// List-price cost of `purchases`.
    pub marginal_cost: f64,
}

impl Plan {
    /// Total instance-slots the job occupies.
    pub fn units(&self) -> u64 {
        self.alloc.values().sum()
    }
}

/// Plans `job` at execution time `e` against `ledger` without mutating it.
///
/// Each slot of the window `[a+1, a+e]` must bring the delivered fraction of
/// the job up to `s/e`: free units are consumed first (one unit of type `j`
/// covers `1/D_j`), then a single purchase tops the slot up.  Free capacity
/// can exhaust the parallelism budget on slow types that a purchase would
/// cover with fewer units, so a failed pass is retried ignoring free
/// capacity before giving up.  Returns `None` when no pass covers every
/// slot inside the budget.
pub fn plan_with(
    job: &Job,
    e: usize,
    ledger: &CapacityLedger,
    catalog: &InstanceCatalog,
    opts: PlanOptions,
) -> Option<Plan> {
    match plan_pass(job, e, ledger, catalog, opts, true) {
        Some(plan) => Some(plan),
        None if opts.allow_purchase => plan_pass(job, e, ledger, catalog, opts, false),
        None => None,
    }
}

fn plan_pass(
    job: &Job,
    e: usize,
    ledger: &CapacityLedger,
    catalog: &InstanceCatalog,
    opts: PlanOptions,
    reuse_free: bool,
) -> Option<Plan> {
    let t_slots = ledger.t_slots();
    let mut extra = vec![vec![0u64; t_slots + 1]; catalog.m()];
    let mut alloc: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut purchases: Vec<(usize, usize, u64)> = Vec::new();
    let mut marginal_cost = 0.0;
    let mut budget = job.dop_cap;
    let mut deficit = Frac::zero();
    let reuse_order = match opts.reuse {
        ReuseOrder::RatioDesc => catalog.ratio_desc(),
        ReuseOrder::PerfDesc => catalog.perf_desc(),
    };
    for t in job.window(e) {
        deficit = deficit.add(Frac::ratio(1, e as u64));
        for &j in &reuse_order {
            if !deficit.is_positive() || budget == 0 {
                break;
            }
            let held = alloc.get(&(j, t)).copied().unwrap_or(0);
            let pool = if reuse_free { ledger.available(j, t) + extra[j][t] } else { extra[j][t] };
            let free = pool.saturating_sub(held);
            let d_j = job.demands[j];
            let take = free.min(deficit.ceil_mul(d_j)).min(budget);
            if take > 0 {
                *alloc.entry((j, t)).or_default() += take;
                budget -= take;
                deficit = deficit.sub_ratio(take, d_j);
            }
        }
        if deficit.is_positive() {
            if !opts.allow_purchase {
                return None;
            }
            let pick = match opts.purchase {
                PurchasePreference::BestRatio => reuse_order
                    .iter()
                    .copied()
                    .find(|&j| deficit.ceil_mul(job.demands[j]) <= budget),
                PurchasePreference::FewestUnits => reuse_order
                    .iter()
                    .copied()
                    .filter(|&j| deficit.ceil_mul(job.demands[j]) <= budget)
                    .min_by_key(|&j| deficit.ceil_mul(job.demands[j])),
            };
            let Some(j) = pick else { return None };
            let count = deficit.ceil_mul(job.demands[j]);
            let last = match ledger.mode().lifetime() {
                Some(tau) => (t + tau - 1).min(t_slots),
                None => return None,
            };
            for slot in t..=last {
                extra[j][slot] += count;
            }
            purchases.push((j, t, count));
            marginal_cost += catalog.get(j).price * count as f64;
            *alloc.entry((j, t)).or_default() += count;
            budget -= count;
            deficit = deficit.sub_ratio(count, job.demands[j]);
        }
    }
    Some(Plan { purchases, alloc, marginal_cost })
}

/// [`plan_with`] under the online scheduler's default options.
pub fn plan_schedule(
    job: &Job,
    e: usize,
    ledger: &CapacityLedger,
    catalog: &InstanceCatalog,
) -> Option<Plan> {
    plan_with(job, e, ledger, catalog, PlanOptions::purchasing())
}

/// Priority weight of a job at execution time `e`, given the observed demand
/// range `[d_min, d_max]` and the largest observed window `e_obs`.
///
/// Both terms are normalized to `[0, 1]`; a degenerate demand range scores 1
/// and a degenerate window scores 0 on its term.
pub fn weight(d_ref: u64, e: usize, d_min: u64, d_max: u64, e_obs: usize, alpha: f64) -> f64 {
    let demand = if d_max > d_min {
        (d_ref - d_min) as f64 / (d_max - d_min) as f64
    } else {
        1.0
    };
    let time = if e_obs > 1 {
        ((e_obs - e) as f64 - 1.0).max(0.0) / (e_obs - 1) as f64
    } else {
        0.0
    };
    alpha * demand + (1.0 - alpha) * time
}

/// Share of `total_cost` attributed to a job of weight `w` when the accepted
/// jobs' weights sum to `accepted_weights`.
pub fn sharing_cost(total_cost: f64, w: f64, accepted_weights: f64) -> Result<f64> {
    if total_cost == 0.0 {
        return Ok(0.0);
    }
    let denom = accepted_weights + w;
    if denom <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(total_cost * w / denom)
}

/// Projects a sharing cost over the whole accounting period: scales `phi` by
/// the expected period cost relative to cost accrued so far, pro rata to the
/// arrival slot.  With no cost accrued yet the share is used as-is.
pub fn estimate_cost(phi: f64, f_total_est: f64, arrival: usize, prior_cost: f64, t_slots: usize) -> f64 {
    if prior_cost <= 0.0 {
        return phi;
    }
    phi * f_total_est * arrival as f64 / (prior_cost * t_slots as f64)
}

/// Change in the bi-criteria objective if a job of value `value` and
/// estimated cost `est_cost` is accepted.
pub fn gain_increment(value: f64, est_cost: f64, theta: f64, rev_star: f64, n_est: u64) -> f64 {
    theta * (value - est_cost) / rev_star + (1.0 - theta) / n_est as f64
}

/// Which cost total feeds the sharing formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostBase {
    /// Purchases committed for accepted jobs only.
    #[default]
    Committed,
    /// Purchases as if every arrived job had been accepted at its best
    /// execution time, tracked on a shadow ledger.
    AllArrived,
}

/// Sequential decision state over one accounting period.
#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SimConfig,
    catalog: InstanceCatalog,
    cost_base: CostBase,
    ledger: CapacityLedger,
    shadow: CapacityLedger,
    committed_cost: f64,
    shadow_cost: f64,
    weight_sum: f64,
    d_min: u64,
    d_max: u64,
    e_obs: usize,
    last_arrival: usize,
    jobs: BTreeMap<u64, JobSchedule>,
    records: Vec<JobRecord>,
}

impl Scheduler {
    pub fn new(config: SimConfig, catalog: InstanceCatalog) -> Result<Self> {
        config.validate()?;
        let ledger = CapacityLedger::new_dynamic(catalog.m(), config.t_slots, config.tau);
        let shadow = ledger.clone();
        Ok(Scheduler {
            config,
            catalog,
            cost_base: CostBase::Committed,
            ledger,
            shadow,
            committed_cost: 0.0,
            shadow_cost: 0.0,
            weight_sum: 0.0,
            d_min: u64::MAX,
            d_max: 0,
            e_obs: 0,
            last_arrival: 0,
            jobs: BTreeMap::new(),
            records: Vec::new(),
        })
    }

    pub fn with_cost_base(mut self, base: CostBase) -> Self {
        self.cost_base = base;
        self
    }

    pub fn ledger(&self) -> &CapacityLedger {
        &self.ledger
    }

    pub fn committed_cost(&self) -> f64 {
        self.committed_cost
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    /// Decides one arriving job.  Jobs must be fed in arrival order.
    pub fn decide(&mut self, job: &Job) -> Result<JobRecord> {
        job.validate(self.catalog.m(), self.config.t_slots)?;
        if job.arrival < self.last_arrival {
            return Err(Error::Ordering(format!(
                "job {} arrives at {} after a decision at {}",
                job.id, job.arrival, self.last_arrival
            )));
        }
        self.last_arrival = job.arrival;
        let d_ref = job.demands[self.catalog.reference_type()];
        self.d_min = self.d_min.min(d_ref);
        self.d_max = self.d_max.max(d_ref);
        self.e_obs = self.e_obs.max(job.span());

        let mut best: Option<(f64, usize, Plan, f64, f64)> = None;
        for e in 1..=job.span() {
            let Some(plan) = plan_schedule(job, e, &self.ledger, &self.catalog) else {
                continue;
            };
            let w = weight(d_ref, e, self.d_min, self.d_max, self.e_obs, self.config.alpha);
            let (prior, marginal) = match self.cost_base {
                CostBase::Committed => (self.committed_cost, plan.marginal_cost),
                CostBase::AllArrived => {
                    let m = plan_schedule(job, e, &self.shadow, &self.catalog)
                        .map_or(plan.marginal_cost, |p| p.marginal_cost);
                    (self.shadow_cost, m)
                }
            };
            // A zero-weight candidate with no accepted predecessors cannot be
            // priced; it competes like an infeasible plan.
            let Ok(phi) = sharing_cost(prior + marginal, w, self.weight_sum) else {
                continue;
            };
            let phi_hat =
                estimate_cost(phi, self.config.f_total_est, job.arrival, prior, self.config.t_slots);
            let gain = gain_increment(
                job.value(e)?,
                phi_hat,
                self.config.theta,
                self.config.rev_star,
                self.config.n_est,
            );
            if best.as_ref().is_none_or(|(g, ..)| gain > *g) {
                best = Some((gain, e, plan, w, phi_hat));
            }
        }

        let chosen_e = best.as_ref().map(|&(_, e, ..)| e);
        let record = match best {
            Some((gain, e, plan, w, phi_hat)) if gain >= 0.0 => {
                let payment = job.value(e)?;
                self.commit(job, e, &plan, w, payment)?;
                JobRecord {
                    job_id: job.id,
                    arrival: job.arrival,
                    verdict: Verdict::Accepted { execution_time: e, payment },
                    est_cost: Some(phi_hat),
                    gain: Some(gain),
                }
            }
            Some((gain, _, _, _, phi_hat)) => JobRecord {
                job_id: job.id,
                arrival: job.arrival,
                verdict: Verdict::Rejected,
                est_cost: Some(phi_hat),
                gain: Some(gain),
            },
            None => JobRecord {
                job_id: job.id,
                arrival: job.arrival,
                verdict: Verdict::Rejected,
                est_cost: None,
                gain: None,
            },
        };

        if self.cost_base == CostBase::AllArrived {
            if let Some(e) = chosen_e {
                if let Some(plan) = plan_schedule(job, e, &self.shadow, &self.catalog) {
                    for &(j, t, n) in &plan.purchases {
                        self.shadow.add_purchases(j, t, n)?;
                    }
                    for (&(j, t), &n) in &plan.alloc {
                        self.shadow.commit(j, t, n)?;
                    }
                    self.shadow_cost += plan.marginal_cost;
                }
            }
        }

        self.records.push(record.clone());
        Ok(record)
    }

    fn commit(&mut self, job: &Job, e: usize, plan: &Plan, w: f64, payment: f64) -> Result<()> {
        for &(j, t, n) in &plan.purchases {
            self.ledger.add_purchases(j, t, n)?;
        }
        for (&(j, t), &n) in &plan.alloc {
            self.ledger.commit(j, t, n)?;
        }
        self.committed_cost += plan.marginal_cost;
        self.weight_sum += w;
        self.jobs.insert(
            job.id,
            JobSchedule { execution_time: e, payment, alloc: plan.alloc.clone() },
        );
        Ok(())
    }

    /// Freezes the run into an auditable schedule.
    pub fn schedule(&self) -> Schedule {
        Schedule {
            m: self.catalog.m(),
            t_slots: self.config.t_slots,
            purchases: self.ledger.purchase_matrix().clone(),
            jobs: self.jobs.clone(),
        }
    }
}

/// Runs the full online algorithm over an arrival-ordered workload.
pub fn run(
    config: &SimConfig,
    catalog: &InstanceCatalog,
    jobs: &[Job],
) -> Result<(Schedule, Outcome)> {
    run_with(config, catalog, jobs, CostBase::Committed)
}

/// [`run`] with an explicit cost base.
pub fn run_with(
    config: &SimConfig,
    catalog: &InstanceCatalog,
    jobs: &[Job],
    base: CostBase,
) -> Result<(Schedule, Outcome)> {
    let start = std::time::Instant::now();
    let mut sched = Scheduler::new(config.clone(), catalog.clone())?.with_cost_base(base);
    for job in jobs {
        sched.decide(job)?;
    }
    let schedule = sched.schedule();
    let outcome = build_outcome(
        &schedule,
        &sched.catalog,
        &sched.config,
        jobs.len(),
        sched.records,
        start.elapsed().as_secs_f64(),
    );
    Ok((schedule, outcome))
}
