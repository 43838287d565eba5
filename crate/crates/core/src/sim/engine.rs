use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::energy_model::{estimate_eta, HarvestTrace};
use crate::inference::{
    adapt_centroid, classify, forward_layer, install_centroid, propagate_centroids, select_features, AgileModel,
    InferenceError, LayerKind, Tensor, UnitOutcome,
};
use crate::model_io;
use crate::power_sim::{self, CapacitorConfig, PowerState, Transition};
use crate::rng::{stream_rng, Stream};
use crate::scheduler::{drop_victim, pick_next, Policy, Reason, SchedulerContext};
use crate::tasks::{release_job, Fragment, Job, Task};

use super::clock::draw_offset;
use super::config::{EtaConfig, OutcomeSpec, ScriptedJob, SimConfig};
use super::report::{Aggregates, DecisionRecord, DiscardReason, EnergyLedger, JobRecord, SimReport};
use super::source::build_source;
use super::SimError;

/// Runs `cfg` under its configured policy.
pub fn run(cfg: &SimConfig) -> Result<SimReport, SimError> {
    Engine::new(cfg)?.run()
}

/// Runs `cfg` with the policy replaced.
pub fn run_with_policy(cfg: &SimConfig, policy: Policy) -> Result<SimReport, SimError> {
    let mut cfg = cfg.clone();
    cfg.scheduler.policy = policy;
    run(&cfg)
}

/// The η the scheduler would use for `cfg`, estimated from its source if asked.
pub fn resolve_eta(cfg: &SimConfig) -> Result<f64, SimError> {
    cfg.validate()?;
    eta_for(cfg, &run_source(cfg)?)
}

fn run_source(cfg: &SimConfig) -> Result<HarvestTrace, SimError> {
    let horizon = cfg.duration_us + cfg.max_deadline_us() + cfg.clock.max_error_us() + 1;
    build_source(cfg, horizon, &mut stream_rng(cfg.seed, Stream::Source))
}

fn eta_for(cfg: &SimConfig, source: &HarvestTrace) -> Result<f64, SimError> {
    Ok(match cfg.eta {
        EtaConfig::Fixed(v) => v,
        EtaConfig::Estimate { dk_uj, dt_us, n_max } => estimate_eta(source, dk_uj, dt_us, n_max)?.1.eta,
    })
}

enum OutcomeRt {
    Fixed,
    Scripted(Vec<ScriptedJob>),
    Synthetic {
        exit: WeightedIndex<f64>,
        correct_prob: Vec<f64>,
    },
    Dataset {
        model: Box<AgileModel>,
        data: Vec<(u32, Vec<f64>)>,
        adapt_weight: f64,
        adapt: bool,
        propagate: bool,
    },
}

/// Per-job input to the outcome source, fixed at release.
enum Plan {
    Fixed,
    Script(ScriptedJob),
    Synthetic { exit_unit: usize, u: f64 },
    Dataset { activation: Tensor, truth: u32 },
}

struct TaskRt {
    task: Task,
    outcome: OutcomeRt,
    next_release: Option<u64>,
    last_release: Option<u64>,
    released: u64,
}

struct Running {
    key: u64,
    fragment: Fragment,
    end_us: u64,
    delivered_pj: u64,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    cap: CapacitorConfig,
    source: HarvestTrace,
    eta: f64,
    alpha: f64,
    beta: f64,
    tasks: Vec<TaskRt>,
    plans: Vec<Plan>,
    records: Vec<JobRecord>,
    queue: Vec<Job>,
    power: PowerState,
    running: Option<Running>,
    /// Job whose current unit has started; it keeps the processor until the
    /// unit ends.
    pinned: Option<u64>,
    clock_offset: i64,
    clock_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
    outcome_rng: ChaCha8Rng,
    rr_last: Option<u32>,
    ledger: EnergyLedger,
    on_time_us: u64,
    reboots: u64,
    failures: u64,
    decisions: Vec<DecisionRecord>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let source = run_source(cfg)?;
        let eta = eta_for(cfg, &source)?;

        let mut tasks = Vec::with_capacity(cfg.tasks.len());
        let mut psi_max: f64 = 0.0;
        for entry in &cfg.tasks {
            let task = entry.task.clone();
            let outcome = match &entry.outcome {
                OutcomeSpec::Fixed => {
                    psi_max = psi_max.max(task.constant_psi.unwrap_or(0.0));
                    OutcomeRt::Fixed
                }
                OutcomeSpec::Scripted { jobs } => {
                    for j in jobs {
                        psi_max = script_psi(j, task.units.len()).into_iter().fold(psi_max, f64::max);
                    }
                    OutcomeRt::Scripted(jobs.clone())
                }
                OutcomeSpec::Synthetic {
                    exit_weights,
                    correct_prob,
                } => {
                    psi_max = psi_max.max(1.0);
                    OutcomeRt::Synthetic {
                        exit: WeightedIndex::new(exit_weights.iter().copied())
                            .map_err(|e| SimError::Config(format!("task {}: {e}", task.id)))?,
                        correct_prob: correct_prob.clone(),
                    }
                }
                OutcomeSpec::Dataset {
                    data,
                    adapt_weight,
                    adapt,
                    propagate,
                } => {
                    let path = task.model.as_deref().expect("validated");
                    let model = model_io::load_model(&cfg.resolve(path))?;
                    if model.num_layers() != task.units.len() {
                        return Err(SimError::Config(format!(
                            "task {}: model has {} layers but the task has {} units",
                            task.id,
                            model.num_layers(),
                            task.units.len()
                        )));
                    }
                    let data = model_io::load_dataset(&cfg.resolve(data))?;
                    let width = model.layers[0].input_len();
                    if data[0].1.len() != width {
                        return Err(SimError::Config(format!(
                            "task {}: dataset rows have {} features, model expects {width}",
                            task.id,
                            data[0].1.len()
                        )));
                    }
                    psi_max = model.psi_max.iter().copied().fold(psi_max, f64::max);
                    OutcomeRt::Dataset {
                        model: Box::new(model),
                        data,
                        adapt_weight: *adapt_weight,
                        adapt: *adapt,
                        propagate: *propagate,
                    }
                }
            };
            let first = task.phase_us;
            tasks.push(TaskRt {
                next_release: (first < cfg.duration_us && task.max_jobs != Some(0)).then_some(first),
                task,
                outcome,
                last_release: None,
                released: 0,
            });
        }
        tasks.sort_by_key(|t| t.task.id);

        let alpha = cfg.scheduler.alpha.unwrap_or(1.0 / cfg.max_deadline_us().max(1) as f64);
        let beta = cfg
            .scheduler
            .beta
            .unwrap_or(if psi_max > 0.0 { 1.0 / psi_max } else { 1.0 });

        let power = PowerState::new(cfg.initial_energy_uj, cfg.initially_on, 0);
        let mut clock_rng = stream_rng(cfg.seed, Stream::Clock);
        let clock_offset = draw_offset(&cfg.clock, &mut clock_rng);
        Ok(Self {
            cfg,
            cap: cfg.capacitor,
            source,
            eta,
            alpha,
            beta,
            tasks,
            plans: Vec::new(),
            records: Vec::new(),
            queue: Vec::new(),
            power,
            running: None,
            pinned: None,
            clock_offset,
            clock_rng,
            jitter_rng: stream_rng(cfg.seed, Stream::Jitter),
            outcome_rng: stream_rng(cfg.seed, Stream::Outcomes),
            rr_last: None,
            ledger: EnergyLedger {
                initial_pj: power.e_curr_pj,
                ..EnergyLedger::default()
            },
            on_time_us: 0,
            reboots: 0,
            failures: 0,
            decisions: Vec::new(),
        })
    }

    fn run(mut self) -> Result<SimReport, SimError> {
        let mut t = 0;
        loop {
            self.process_instant(t)?;
            match self.next_event(t) {
                Some(next) => t = self.advance_power(t, next)?,
                None => break,
            }
        }
        while let Some(job) = self.queue.pop() {
            self.finalize(&job, Some(DiscardReason::EndOfRun));
        }
        Ok(self.report(t))
    }

    fn in_fault(&self, t: u64) -> bool {
        self.cfg
            .faults
            .iter()
            .any(|f| f.at_us <= t && t < f.at_us + f.duration_us)
    }

    fn perceived(&self, t: u64) -> u64 {
        t.saturating_add_signed(self.clock_offset)
    }

    fn index_of(&self, key: u64) -> Option<usize> {
        self.queue.iter().position(|j| j.key == key)
    }

    fn task_index(&self, id: u32) -> usize {
        self.tasks
            .iter()
            .position(|t| t.task.id == id)
            .expect("job of a known task")
    }

    /// Handles everything due at `t`: power state, fragment completion,
    /// deadline discards, releases, then at most one dispatch.
    fn process_instant(&mut self, t: u64) -> Result<(), SimError> {
        // A fragment ending now has finished even if power fails now.
        self.complete_fragment(t)?;
        if self.power.device_on && self.in_fault(t) {
            self.power.device_on = false;
            self.power_failure();
        }
        if !self.power.device_on && !self.in_fault(t) && self.power.e_curr_pj >= self.cap.e_on_pj() {
            self.power.device_on = true;
            self.reboot();
        }
        if self.power.device_on {
            self.discard_expired(t);
        }
        self.release_jobs(t)?;
        if self.power.device_on && self.running.is_none() {
            self.dispatch(t);
        }
        Ok(())
    }

    /// Drops the running fragment's progress; the job resumes it later.
    fn power_failure(&mut self) {
        self.failures += 1;
        if let Some(r) = self.running.take() {
            self.ledger.lost_pj += r.delivered_pj;
        }
    }

    fn reboot(&mut self) {
        self.reboots += 1;
        self.clock_offset = draw_offset(&self.cfg.clock, &mut self.clock_rng);
    }

    fn complete_fragment(&mut self, t: u64) -> Result<(), SimError> {
        if self.running.as_ref().is_none_or(|r| r.end_us != t) {
            return Ok(());
        }
        let r = self.running.take().expect("checked");
        self.ledger.consumed_pj += r.delivered_pj;
        let idx = self.index_of(r.key).expect("running job is queued");
        let ti = self.task_index(self.queue[idx].task_id);
        self.queue[idx].fragment_progress += 1;
        let unit = self.queue[idx].next_unit;
        if self.queue[idx].fragment_progress < self.tasks[ti].task.fragments(unit).len() {
            return Ok(());
        }
        self.pinned = None;
        let outcome = self.unit_outcome(ti, r.key, unit)?;
        let job = &mut self.queue[idx];
        job.advance(&outcome)?;
        let rec = &mut self.records[r.key as usize];
        if job.mandatory_done && rec.completion_us.is_none() {
            rec.completion_us = Some(t);
            rec.mandatory_done = t <= job.deadline_us;
        }
        if job.is_finished() {
            let job = self.queue.remove(idx);
            self.finalize(&job, None);
        }
        Ok(())
    }

    fn unit_outcome(&mut self, ti: usize, key: u64, unit: usize) -> Result<UnitOutcome, SimError> {
        let psi_fixed = self.tasks[ti].task.constant_psi.unwrap_or(0.0);
        let units = self.tasks[ti].task.units.len();
        let plain = |psi: f64, exit: bool| UnitOutcome {
            label: 0,
            cluster: 0,
            delta1: 0.0,
            delta2: psi,
            psi,
            exit,
        };
        match &mut self.plans[key as usize] {
            Plan::Fixed => Ok(plain(psi_fixed, false)),
            Plan::Script(s) => {
                let psi = script_psi(s, units)[unit];
                Ok(UnitOutcome {
                    label: s.label,
                    ..plain(psi, unit + 1 >= s.exit_unit)
                })
            }
            Plan::Synthetic { exit_unit, .. } => {
                let exit = unit + 1 >= *exit_unit;
                Ok(plain(if exit { 1.0 } else { 0.0 }, exit))
            }
            Plan::Dataset { activation, .. } => {
                let OutcomeRt::Dataset {
                    model,
                    adapt_weight,
                    adapt,
                    propagate,
                    ..
                } = &mut self.tasks[ti].outcome
                else {
                    unreachable!("dataset plan belongs to a dataset task");
                };
                let act = forward_layer(model, unit, activation)?;
                let clf = &model.classifiers[unit];
                let feats = select_features(&act, &clf.feature_indices)?;
                let out = classify(clf, &feats, clf.threshold)?;
                if out.exit && *adapt {
                    adapt_centroid(
                        &mut model.classifiers[unit],
                        out.cluster,
                        &feats,
                        Some(&act.data),
                        *adapt_weight,
                    )?;
                    if *propagate {
                        propagate_chain(model, unit, out.cluster)?;
                    }
                }
                *activation = act;
                Ok(out)
            }
        }
    }

    fn result_correct(&self, job: &Job) -> bool {
        let ran = job.next_unit;
        match &self.plans[job.key as usize] {
            Plan::Fixed => true,
            Plan::Script(s) => s.correct_unit.is_none_or(|c| ran >= c),
            Plan::Synthetic { u, .. } => {
                let ti = self.task_index(job.task_id);
                match &self.tasks[ti].outcome {
                    OutcomeRt::Synthetic { correct_prob, .. } => ran > 0 && *u < correct_prob[ran - 1],
                    _ => unreachable!("synthetic plan belongs to a synthetic task"),
                }
            }
            Plan::Dataset { truth, .. } => job.label == Some(*truth),
        }
    }

    fn finalize(&mut self, job: &Job, reason: Option<DiscardReason>) {
        if self.pinned == Some(job.key) {
            self.pinned = None;
        }
        let correct = self.result_correct(job);
        let rec = &mut self.records[job.key as usize];
        rec.units_executed = job.units_executed;
        rec.optional_units = job.optional_units;
        rec.exit_unit = job.exit_unit;
        rec.label = job.label;
        rec.discard_reason = reason;
        rec.correct = rec.mandatory_done && correct;
    }

    fn discard_expired(&mut self, t: u64) {
        let now = self.perceived(t);
        let running = self.running.as_ref().map(|r| r.key);
        let mut i = 0;
        while i < self.queue.len() {
            let j = &self.queue[i];
            if Some(j.key) != running && now >= j.deadline_us {
                let job = self.queue.remove(i);
                self.finalize(&job, Some(DiscardReason::Deadline));
            } else {
                i += 1;
            }
        }
    }

    fn release_jobs(&mut self, t: u64) -> Result<(), SimError> {
        for ti in 0..self.tasks.len() {
            if self.tasks[ti].next_release != Some(t) {
                continue;
            }
            let key = self.records.len() as u64;
            let rt = &mut self.tasks[ti];
            rt.released += 1;
            let job = release_job(
                &rt.task,
                t,
                rt.last_release,
                key,
                rt.released,
                self.cfg.scheduler.policy.partitioned(),
            )?;
            rt.last_release = Some(t);
            let jitter = match rt.task.release_jitter_us {
                0 => 0,
                j => self.jitter_rng.gen_range(0..=j),
            };
            let next = t + rt.task.period_us + jitter;
            let more = rt.task.max_jobs.is_none_or(|m| rt.released < m);
            rt.next_release = (more && next < self.cfg.duration_us).then_some(next);

            let plan = match &rt.outcome {
                OutcomeRt::Fixed => Plan::Fixed,
                OutcomeRt::Scripted(jobs) => Plan::Script(jobs[((job.seq - 1) as usize) % jobs.len()].clone()),
                OutcomeRt::Synthetic { exit, .. } => Plan::Synthetic {
                    exit_unit: exit.sample(&mut self.outcome_rng) + 1,
                    u: self.outcome_rng.gen(),
                },
                OutcomeRt::Dataset { model, data, .. } => {
                    let (truth, x) = &data[((job.seq - 1) as usize) % data.len()];
                    let first = &model.layers[0];
                    let shape = match first.kind {
                        LayerKind::Conv2d => first.input_shape.clone().expect("validated conv2d"),
                        LayerKind::Dense => vec![x.len()],
                    };
                    Plan::Dataset {
                        activation: Tensor { shape, data: x.clone() },
                        truth: *truth,
                    }
                }
            };
            self.plans.push(plan);
            self.records.push(JobRecord {
                task: job.task_id,
                seq: job.seq,
                release_us: job.release_us,
                deadline_us: job.deadline_us,
                units_executed: 0,
                optional_units: 0,
                mandatory_done: false,
                correct: false,
                completion_us: None,
                discard_reason: None,
                exit_unit: None,
                label: None,
            });

            if !self.power.device_on {
                self.finalize(&job, Some(DiscardReason::DeviceOff));
                continue;
            }
            self.queue.push(job);
            if self.queue.len() > self.cfg.scheduler.queue_capacity {
                self.evict(t);
            }
        }
        Ok(())
    }

    fn evict(&mut self, t: u64) {
        let busy = self.running.as_ref().map(|r| r.key).or(self.pinned);
        let candidates: Vec<usize> = (0..self.queue.len())
            .filter(|&i| Some(self.queue[i].key) != busy)
            .collect();
        let view: Vec<Job> = candidates.iter().map(|&i| self.queue[i].clone()).collect();
        let ctx = self.context(t);
        if let Some(v) = drop_victim(&view, &ctx) {
            let job = self.queue.remove(candidates[v]);
            self.finalize(&job, Some(DiscardReason::QueueOverflow));
        }
    }

    fn context(&self, t: u64) -> SchedulerContext {
        SchedulerContext {
            t_c: self.perceived(t),
            alpha: self.alpha,
            beta: self.beta,
            eta: self.eta,
            e_curr_pj: self.power.e_curr_pj,
            e_opt_pj: self.cap.e_opt_pj(),
            e_man_pj: self.cap.e_man_pj(),
            policy: self.cfg.scheduler.policy,
            queue_capacity: self.cfg.scheduler.queue_capacity,
            persistent: self.cfg.scheduler.persistent,
            rr_last_task: self.rr_last,
        }
    }

    fn dispatch(&mut self, t: u64) {
        if let Some(key) = self.pinned {
            match self.index_of(key) {
                Some(idx) if self.power.e_curr_pj >= self.cap.e_man_pj() => self.start_fragment(t, idx),
                Some(_) => {}
                None => self.pinned = None,
            }
            if self.pinned.is_some() {
                return;
            }
        }
        let ctx = self.context(t);
        let decision = pick_next(&self.queue, &ctx);
        if self.cfg.record_decisions {
            let chosen = decision.choice.map(|i| &self.queue[i]);
            self.decisions.push(DecisionRecord {
                t_us: t,
                reason: decision.reason,
                task: chosen.map(|j| j.task_id),
                seq: chosen.map(|j| j.seq),
                unit: chosen.map(|j| j.next_unit + 1),
                optional: chosen.map(|j| !j.gamma),
                e_curr_uj: self.power.e_curr_uj(),
            });
        }
        if let Some(idx) = decision.choice {
            debug_assert_eq!(decision.reason, Reason::Selected);
            self.pinned = Some(self.queue[idx].key);
            self.rr_last = Some(self.queue[idx].task_id);
            self.start_fragment(t, idx);
        }
    }

    fn start_fragment(&mut self, t: u64, idx: usize) {
        let job = &self.queue[idx];
        let ti = self.task_index(job.task_id);
        let fragment = self.tasks[ti].task.fragments(job.next_unit)[job.fragment_progress];
        self.running = Some(Running {
            key: job.key,
            fragment,
            end_us: t + fragment.duration_us,
            delivered_pj: 0,
        });
    }

    fn work_remaining(&self) -> bool {
        self.running.is_some() || !self.queue.is_empty() || self.tasks.iter().any(|t| t.next_release.is_some())
    }

    fn next_event(&self, t: u64) -> Option<u64> {
        if !self.work_remaining() {
            return None;
        }
        let mut times: Vec<u64> = Vec::new();
        if let Some(r) = &self.running {
            times.push(r.end_us);
        }
        times.extend(self.tasks.iter().filter_map(|t| t.next_release));
        times.extend(self.source.next_change_after(t));
        for f in &self.cfg.faults {
            times.push(f.at_us);
            times.push(f.at_us + f.duration_us);
        }
        let harvest = self.source.power_at(t);
        let e = self.power.e_curr_pj;
        if self.power.device_on {
            let running = self.running.as_ref().map(|r| r.key);
            for j in self.queue.iter().filter(|j| Some(j.key) != running) {
                let due = j.deadline_us as i128 - self.clock_offset as i128;
                times.push(due.max(0) as u64);
            }
            if self.running.is_none() && !self.queue.is_empty() {
                let rate = harvest as i64;
                if e < self.cap.e_man_pj() {
                    times.extend(power_sim::time_to_reach(e, self.cap.e_man_pj(), rate).map(|d| t + d));
                } else if self.gated_optional_waiting() {
                    let target = (self.cap.e_opt_pj() as f64 / self.eta).ceil() as u64;
                    times.extend(power_sim::time_to_reach(e, target, rate).map(|d| t + d));
                }
            }
        } else if !self.in_fault(t) {
            times.extend(power_sim::time_to_reach(e, self.cap.e_on_pj(), harvest as i64).map(|d| t + d));
        }
        times.into_iter().filter(|&x| x > t).min()
    }

    /// Optional work is queued but held back by the energy gate.
    fn gated_optional_waiting(&self) -> bool {
        self.cfg.scheduler.policy == Policy::Zygarde
            && self.eta > 0.0
            && !self.context(0).optional_allowed()
            && self.queue.iter().any(|j| !j.gamma)
    }

    fn advance_power(&mut self, t: u64, next: u64) -> Result<u64, SimError> {
        let harvest = self.source.power_at(t);
        let load = self.running.as_ref().map_or(0, |r| r.fragment.load_uw);
        let was_on = self.power.device_on;
        let out = power_sim::advance(self.power, &self.cap, harvest, load, next - t, !self.in_fault(t))?;
        self.ledger.harvested_pj += out.harvested_pj;
        self.ledger.overflow_pj += out.overflow_pj;
        if was_on {
            self.on_time_us += out.elapsed_us;
        }
        if let Some(r) = &mut self.running {
            r.delivered_pj += out.consumed_pj;
        }
        self.power = out.state;
        let now = t + out.elapsed_us;
        match out.transition {
            Some(Transition::PowerOff) => {
                if self.running.as_ref().is_some_and(|r| r.end_us == now) {
                    // Fully powered; it completes at this instant.
                    self.failures += 1;
                } else {
                    self.power_failure();
                }
            }
            Some(Transition::PowerOn) => self.reboot(),
            None => {}
        }
        Ok(now)
    }

    fn report(mut self, end_us: u64) -> SimReport {
        self.ledger.final_pj = self.power.e_curr_pj;
        let released = self.records.len() as u64;
        let scheduled = self.records.iter().filter(|r| r.mandatory_done).count() as u64;
        let units: usize = self.records.iter().map(|r| r.units_executed).sum();
        let optional: usize = self.records.iter().map(|r| r.optional_units).sum();
        let aggregates = Aggregates {
            jobs_released: released,
            jobs_scheduled: scheduled,
            jobs_correct: self.records.iter().filter(|r| r.correct).count() as u64,
            deadline_misses: released - scheduled,
            reboots: self.reboots,
            power_failures: self.failures,
            power_on_fraction: if end_us == 0 {
                if self.power.device_on {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.on_time_us as f64 / end_us as f64
            },
            avg_units_per_job: if released == 0 {
                0.0
            } else {
                units as f64 / released as f64
            },
            energy_wasted_uj: (self.ledger.overflow_pj + self.ledger.lost_pj) as f64 / 1e6,
            optional_units_executed: optional as u64,
            end_us,
        };
        SimReport {
            policy: self.cfg.scheduler.policy,
            seed: self.cfg.seed,
            eta: self.eta,
            aggregates,
            energy: self.ledger,
            jobs: self.records,
            decisions: self.decisions,
        }
    }
}

/// Utility after each unit of a scripted job.
fn script_psi(s: &ScriptedJob, units: usize) -> Vec<f64> {
    s.psi
        .clone()
        .unwrap_or_else(|| (1..=units).map(|l| if l >= s.exit_unit { 1.0 } else { 0.0 }).collect())
}

/// Pushes an adapted centroid through every deeper layer, stopping at the
/// first layer that pools or has no matching cluster.
fn propagate_chain(model: &mut AgileModel, from: usize, cluster: usize) -> Result<(), SimError> {
    for layer in from..model.num_layers() - 1 {
        if cluster >= model.classifiers[layer + 1].k() {
            break;
        }
        match propagate_centroids(model, layer, cluster) {
            Ok(c) => install_centroid(model, layer + 1, cluster, c)?,
            Err(InferenceError::PooledPropagation(_)) => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn one_job(faults: serde_json::Value) -> SimConfig {
        serde_json::from_value(json!({
            "seed": 1,
            "duration_us": 100,
            "capacitor": {"capacity_uj": 1_000, "e_on_uj": 100, "e_off_uj": 10, "e_man_uj": 20},
            "initial_energy_uj": 1_000,
            "initially_on": true,
            "energy_source": {"kind": "constant", "power_uw": 1_000_000},
            "eta": {"fixed": 1.0},
            "scheduler": {"policy": "edf"},
            "faults": faults,
            "tasks": [{"id": 1, "period_us": 1_000, "deadline_us": 1_000, "max_jobs": 1,
                       "units": [{"exec_us": 40, "energy_uj": 4, "fragments": 4}]}]
        }))
        .unwrap()
    }

    #[test]
    fn script_psi_steps_at_the_exit_unit() {
        let s = ScriptedJob {
            exit_unit: 2,
            psi: None,
            correct_unit: None,
            label: 0,
        };
        assert_eq!(script_psi(&s, 4), [0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn uninterrupted_job_finishes_at_its_wcet() {
        let r = run(&one_job(json!([]))).unwrap();
        assert_eq!(r.jobs[0].completion_us, Some(40));
        assert_eq!(r.aggregates.power_failures, 0);
        assert!(r.energy.balanced());
    }

    #[test]
    fn fault_redoes_only_the_interrupted_fragment() {
        // Fragment [10, 20) is cut at 15; it reruns from 25.
        let r = run(&one_job(json!([{"at_us": 15, "duration_us": 10}]))).unwrap();
        assert_eq!(r.jobs[0].completion_us, Some(55));
        assert_eq!(r.energy.lost_pj, 5 * 100_000);
        assert!(r.energy.balanced());
    }

    #[test]
    fn fragment_ending_at_a_fault_survives() {
        let r = run(&one_job(json!([{"at_us": 20, "duration_us": 10}]))).unwrap();
        assert_eq!(r.jobs[0].completion_us, Some(50));
        assert_eq!(r.energy.lost_pj, 0);
        assert_eq!(r.aggregates.power_failures, 1);
    }

    #[test]
    fn policy_override_replaces_the_configured_one() {
        let r = run_with_policy(&one_job(json!([])), Policy::Rr).unwrap();
        assert_eq!(r.policy, Policy::Rr);
    }
}
