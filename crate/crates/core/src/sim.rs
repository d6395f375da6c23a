//! Deterministic cycle-level simulator of the migratory-thread machine.
//!
//! The machine is a set of nodelets, each pairing a single-issue in-order
//! core with a slice of globally addressable memory. Threads never read
//! remote memory: a load whose operand lives elsewhere migrates the thread —
//! context and program position — to the owning nodelet through the
//! migration engine, and execution resumes there. Stores to remote memory
//! instead post a fire-and-forget remote update that executes at the owner;
//! the issuing thread keeps running but may not migrate again until every
//! outstanding update has been acknowledged.
//!
//! Per nodelet the machine keeps three bounded queues: an arrival queue of
//! incoming thread contexts (migrations and spawns) waiting to be admitted,
//! a departure queue of outgoing packets waiting for the migration engine,
//! and a memory queue of remote updates waiting for the local memory port.
//! The migration engine accepts a fixed number of packets per source per
//! cycle and delivers them after a fixed latency; a packet whose destination
//! queue is full blocks its source queue head-of-line. Admission from the
//! arrival queue is gated by a per-nodelet cap on admitted threads driven
//! by a hysteresis controller: the cap halves once each time the arrival
//! queue climbs past the high watermark and creeps back up by one per cycle
//! while the queue sits below the low watermark. A flooded nodelet
//! therefore holds newcomers in the fabric — stalling their senders —
//! instead of absorbing them while it is behind, yet keeps serving at half
//! strength rather than strangling itself when the flood never lets up.
//!
//! Acknowledgments ride a separate response lane that the migration engine
//! drains ahead of regular departures and that no capacity limit can block.
//! Responses must always be deliverable: if they shared the bounded
//! departure queues with requests, a serviced update's acknowledgment could
//! wait behind a migration aimed at a full destination whose admission is
//! pinned by the very thread awaiting that acknowledgment — a circular wait
//! that wedges the machine. The other circular wait the bounded queues
//! could form — a ring of nodelets whose arrival queues are all full of
//! threads migrating into each other, every admission cap pinned low by the
//! very pressure the ring creates — is broken by a stall breaker in
//! admission: a nodelet that passes a whole cycle without progress of any
//! kind force-admits one matured arrival past its cap, parking it in the
//! memory-backed run queue, which the machine can always afford. Under
//! plain congestion the breaker stays quiet and the throttle does its job;
//! in a true wedge it drains the ring. Every run therefore terminates, and
//! the cycle budget exists only to turn a regression into a diagnosis
//! instead of a hang.
//!
//! Every cycle runs the same phase order — occupancy sampling, instruction
//! issue, arrival admission, migration-engine acceptance, memory-queue
//! service, acknowledgment delivery, throttle adjustment — with all scans in
//! fixed index order and round-robin scheduling inside each run queue. There
//! is no randomness anywhere: two runs of the same plan produce identical
//! reports, including bitwise-identical result vectors, because each thread
//! accumulates its dot products in program order exactly like
//! [`crate::matrix::spmv_reference`].

use crate::metrics::coefficient_of_variation;
use crate::partition::DistributedPlan;
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Errors from configuration validation and simulation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    /// A configuration field is out of range.
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    /// The config and the plan disagree on the nodelet count.
    #[error("config expects {cfg} nodelets, plan was built for {plan}")]
    NodeletMismatch {
        /// Nodelets in the config.
        cfg: usize,
        /// Nodelets in the plan.
        plan: usize,
    },
    /// The config and the plan disagree on threads per nodelet.
    #[error("config expects {cfg} threads per nodelet, plan was built for {plan}")]
    ThreadCountMismatch {
        /// Threads per nodelet in the config.
        cfg: usize,
        /// Threads per nodelet in the plan.
        plan: usize,
    },
    /// The input vector does not match the matrix width.
    #[error("x has length {got}, matrix has {expected} columns")]
    XLengthMismatch {
        /// Columns of the matrix.
        expected: usize,
        /// Length of the supplied vector.
        got: usize,
    },
    /// The machine failed to quiesce within the cycle budget. Every valid
    /// run terminates (the response lane and the stall breaker rule out
    /// circular waits), so this signals a budget set below the problem's
    /// natural runtime — or, should it ever fire otherwise, a regression
    /// worth the census it carries.
    #[error(
        "no quiescence within {cycle_budget} cycles; \
         {live} threads still live, {queued} packets queued"
    )]
    CycleBudgetExceeded {
        /// The exhausted budget.
        cycle_budget: u64,
        /// Threads not yet retired.
        live: usize,
        /// Packets sitting in arrival, departure, memory, and ack queues.
        queued: usize,
    },
}

/// Machine parameters. `Default` gives the reference machine: 8 nodelets of
/// 64 thread contexts, single-cycle local memory, and an 8-cycle migration
/// network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    /// Nodelets in the machine.
    pub nodelets: usize,
    /// Hardware thread contexts per nodelet; also the ceiling of the
    /// admission throttle.
    pub threads_per_nodelet: usize,
    /// Cycles a local memory access occupies its thread.
    pub local_access_cycles: u64,
    /// Multiplier on `local_access_cycles` for the first access a thread
    /// executes after migrating (cold operand, rounded up, at least 1).
    pub migration_penalty_factor: f64,
    /// Capacity of each arrival and departure queue, in packets.
    pub migration_queue_capacity: usize,
    /// Capacity of each remote-update memory queue, in packets.
    pub memory_queue_capacity: usize,
    /// Packets the migration engine accepts from one source per cycle.
    pub me_accepts_per_cycle: usize,
    /// Cycles between acceptance and delivery of a migration, spawn, or
    /// remote update.
    pub me_delivery_latency: u64,
    /// Cycles between an update being serviced and its acknowledgment
    /// reaching the issuing thread (on top of queueing).
    pub remote_update_ack_latency: u64,
    /// Arrival-queue fill fraction above which the admission cap halves.
    pub throttle_high_watermark: f64,
    /// Arrival-queue fill fraction below which the cap creeps back up.
    pub throttle_low_watermark: f64,
    /// Whether each forwarded acknowledgment consumes one of its source's
    /// migration-engine acceptance slots (responses then share engine
    /// bandwidth with outgoing requests) or rides a free sideband.
    pub acks_consume_me_slot: bool,
    /// Cycles between occupancy samples.
    pub occupancy_sample_interval: u64,
    /// Hard stop: simulation fails if quiescence takes longer than this.
    pub cycle_budget: u64,
    /// Seed recorded with runs that regenerate inputs; the machine itself is
    /// deterministic and never draws randomness.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            nodelets: 8,
            threads_per_nodelet: 64,
            local_access_cycles: 1,
            migration_penalty_factor: 2.0,
            migration_queue_capacity: 64,
            memory_queue_capacity: 64,
            me_accepts_per_cycle: 1,
            me_delivery_latency: 8,
            remote_update_ack_latency: 8,
            throttle_high_watermark: 0.9,
            throttle_low_watermark: 0.5,
            acks_consume_me_slot: true,
            occupancy_sample_interval: 100,
            cycle_budget: 100_000_000,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Checks every field is in range.
    ///
    /// # Errors
    ///
    /// [`SimError::InvalidConfig`] naming the offending field.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.nodelets == 0 {
            return Err(SimError::InvalidConfig("nodelets must be at least 1"));
        }
        if self.threads_per_nodelet == 0 {
            return Err(SimError::InvalidConfig("threads_per_nodelet must be at least 1"));
        }
        if self.local_access_cycles == 0 {
            return Err(SimError::InvalidConfig("local_access_cycles must be at least 1"));
        }
        if !self.migration_penalty_factor.is_finite() || self.migration_penalty_factor < 1.0 {
            return Err(SimError::InvalidConfig(
                "migration_penalty_factor must be finite and at least 1.0",
            ));
        }
        if self.migration_queue_capacity == 0 {
            return Err(SimError::InvalidConfig("migration_queue_capacity must be at least 1"));
        }
        if self.memory_queue_capacity == 0 {
            return Err(SimError::InvalidConfig("memory_queue_capacity must be at least 1"));
        }
        if self.me_accepts_per_cycle == 0 {
            return Err(SimError::InvalidConfig("me_accepts_per_cycle must be at least 1"));
        }
        let low = self.throttle_low_watermark;
        let high = self.throttle_high_watermark;
        if !(low.is_finite() && high.is_finite() && 0.0 < low && low < high && high <= 1.0) {
            return Err(SimError::InvalidConfig(
                "throttle watermarks must satisfy 0 < low < high <= 1",
            ));
        }
        if self.occupancy_sample_interval == 0 {
            return Err(SimError::InvalidConfig("occupancy_sample_interval must be at least 1"));
        }
        if self.cycle_budget == 0 {
            return Err(SimError::InvalidConfig("cycle_budget must be at least 1"));
        }
        Ok(())
    }
}

/// One evaluation of the admission throttle.
///
/// Above the high watermark the cap halves (never below 1); below the low
/// watermark it creeps up by one (never above `threads_per_nodelet`);
/// between the watermarks it holds, which is the hysteresis band that keeps
/// the cap from oscillating. The machine evaluates the decrease arm once
/// per congestion episode — on the cycle the fill first climbs past the
/// high watermark — and the increase arm on every cycle spent below the low
/// watermark. One halving per episode is what lets a nodelet that stays
/// saturated for an entire run settle at half its thread count instead of
/// being squeezed to one.
pub fn throttle_policy(fill_fraction: f64, current_cap: usize, cfg: &SimConfig) -> usize {
    if fill_fraction > cfg.throttle_high_watermark {
        (current_cap / 2).max(1)
    } else if fill_fraction < cfg.throttle_low_watermark {
        (current_cap + 1).min(cfg.threads_per_nodelet)
    } else {
        current_cap
    }
}

/// Per-nodelet event totals for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeletCounters {
    /// Memory instructions executed here: local loads and stores where they
    /// issued, remote updates where they were serviced.
    pub mem_instrs: u64,
    /// Thread migrations that arrived here.
    pub migrations_in: u64,
    /// Thread migrations that departed from here.
    pub migrations_out: u64,
    /// Remote updates serviced by this nodelet's memory port.
    pub remote_updates: u64,
    /// x-element loads executed here by threads that migrated in for them.
    pub remote_x_reads: u64,
    /// Spawned thread contexts delivered here through the network.
    pub spawn_arrivals: u64,
}

/// One nodelet's occupancy at one sampled cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OccupancySample {
    /// Cycle at which the sample was taken.
    pub cycle: u64,
    /// Sampled nodelet.
    pub nodelet: usize,
    /// Thread contexts on the nodelet: running, ready, awaiting
    /// acknowledgments, or waiting in the departure queue.
    pub resident: usize,
    /// Packets waiting in the arrival queue.
    pub migration_queue: usize,
    /// Admission cap set by the throttle.
    pub active_cap: usize,
}

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    /// Cycles until quiescence.
    pub cycles: u64,
    /// Per-nodelet event totals.
    pub nodelets: Vec<NodeletCounters>,
    /// Occupancy samples in (cycle, nodelet) order.
    pub occupancy: Vec<OccupancySample>,
    /// Migrations summed over all nodelets.
    pub total_migrations: u64,
    /// Coefficient of variation of per-nodelet memory instructions; `None`
    /// when undefined (no memory traffic).
    pub mem_instr_cv: Option<f64>,
    /// The computed result vector.
    pub b: Vec<f64>,
}

/// Thread population broken down by lifecycle stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreadCensus {
    /// Not yet spawned.
    pub unspawned: usize,
    /// Admitted at a nodelet: runnable or awaiting acknowledgments.
    pub resident: usize,
    /// In the migration engine's custody: waiting in a departure queue or
    /// in flight toward an arrival queue.
    pub traveling: usize,
    /// Retired.
    pub done: usize,
}

/// Notable machine events, for streaming traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    /// The migration engine accepted a thread migration.
    MigrationAccepted {
        /// Cycle of acceptance.
        cycle: u64,
        /// Migrating thread.
        thread: usize,
        /// Source nodelet.
        src: usize,
        /// Destination nodelet.
        dest: usize,
    },
    /// A thread left the arrival queue and joined a run queue.
    ThreadAdmitted {
        /// Cycle of admission.
        cycle: u64,
        /// Admitted thread.
        thread: usize,
        /// Admitting nodelet.
        nodelet: usize,
    },
    /// A remote update reached the owner's memory and executed.
    RemoteUpdateServiced {
        /// Cycle of service.
        cycle: u64,
        /// Servicing nodelet.
        nodelet: usize,
        /// Updated result row.
        row: usize,
    },
    /// A thread finished its program and released its context.
    ThreadRetired {
        /// Cycle of retirement.
        cycle: u64,
        /// Retiring thread.
        thread: usize,
        /// Nodelet that held it.
        nodelet: usize,
    },
    /// The admission throttle moved a nodelet's cap.
    ThrottleAdjusted {
        /// Cycle of adjustment.
        cycle: u64,
        /// Adjusted nodelet.
        nodelet: usize,
        /// Cap before.
        old_cap: usize,
        /// Cap after.
        new_cap: usize,
    },
}

/// Observer of machine events; attach one to stream a run trace.
pub trait EventSink {
    /// Called once per event, in deterministic order.
    fn record(&mut self, event: SimEvent);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ThreadState {
    Unspawned,
    Ready,
    InMigration,
    BlockedOnAck,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Program {
    /// Spawns one coordinator per nodelet, then retires.
    Main,
    /// Spawns this nodelet's workers locally, then retires.
    Coordinator,
    /// Multiplies its assigned rows.
    Worker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    RowLo,
    RowHi,
    Col,
    Val,
    X,
    B,
}

#[derive(Debug, Clone, Copy)]
enum MemKind {
    Home,
    X { col: usize },
    B,
}

enum Access {
    Mem { target: usize, kind: MemKind },
    Spawn { dest: usize, child: usize },
    Retire,
}

#[derive(Debug, Clone)]
struct ThreadCtx {
    home: usize,
    at: usize,
    state: ThreadState,
    program: Program,
    /// Spawn progress for main/coordinator threads.
    progress: usize,
    row: usize,
    end_row: usize,
    nz: usize,
    nz_end: usize,
    step: Step,
    acc: f64,
    cur_val: f64,
    pending_acks: u32,
    arrived_by_migration: bool,
    busy_until: u64,
}

#[derive(Debug, Clone, Copy)]
enum DeparturePacket {
    Migration { dest: usize, thread: usize },
    Spawn { dest: usize, thread: usize },
    Update { dest: usize, row: usize, value: f64, thread: usize },
}

/// An acknowledgment on the response lane, waiting for the migration engine
/// to forward it back to the thread that issued the update. Responses are
/// never refused by their destination, which is what keeps the memory ports
/// and the request queues free of circular waits.
#[derive(Debug, Clone, Copy)]
struct ResponseTransit {
    dest: usize,
    thread: usize,
}

#[derive(Debug, Clone, Copy)]
struct Arrival {
    thread: usize,
    ready_at: u64,
    migrated: bool,
}

#[derive(Debug, Clone, Copy)]
struct MemOp {
    row: usize,
    value: f64,
    thread: usize,
    reply_to: usize,
    ready_at: u64,
}

#[derive(Debug, Clone, Copy)]
struct AckDelivery {
    thread: usize,
    arrive_at: u64,
}

/// The machine itself. [`simulate`] drives it to completion; construct one
/// directly to step cycle by cycle and inspect queues in flight.
pub struct Machine<'a> {
    plan: &'a DistributedPlan,
    x: &'a [f64],
    cfg: SimConfig,
    penalty_cycles: u64,
    threads: Vec<ThreadCtx>,
    run_queues: Vec<VecDeque<usize>>,
    arrivals: Vec<VecDeque<Arrival>>,
    departures: Vec<VecDeque<DeparturePacket>>,
    responses: Vec<VecDeque<ResponseTransit>>,
    memory_queues: Vec<VecDeque<MemOp>>,
    acks: Vec<VecDeque<AckDelivery>>,
    /// Threads admitted and not yet handed to the migration engine; the
    /// admission cap compares against this.
    active: Vec<usize>,
    /// Thread contexts sitting in this nodelet's departure queue — still
    /// physically here, but no longer schedulable.
    departing: Vec<usize>,
    /// Last cycle each nodelet issued, admitted, forwarded a departure, or
    /// received an acknowledgment; the stall breaker watches this.
    last_progress: Vec<u64>,
    active_cap: Vec<usize>,
    /// Whether each arrival queue was above the high watermark at the last
    /// throttle evaluation; the multiplicative decrease fires only on the
    /// cycle this flips to true.
    congested: Vec<bool>,
    counters: Vec<NodeletCounters>,
    occupancy: Vec<OccupancySample>,
    b: Vec<f64>,
    cycle: u64,
    done_count: usize,
    sink: Option<&'a mut (dyn EventSink + 'a)>,
}

impl<'a> Machine<'a> {
    /// Builds a machine over a plan and an input vector.
    ///
    /// # Errors
    ///
    /// [`SimError::InvalidConfig`] for out-of-range parameters,
    /// [`SimError::NodeletMismatch`] / [`SimError::ThreadCountMismatch`] when
    /// the config disagrees with the plan, and [`SimError::XLengthMismatch`]
    /// when the vector does not match the matrix width.
    pub fn new(
        plan: &'a DistributedPlan,
        x: &'a [f64],
        cfg: &SimConfig,
    ) -> Result<Machine<'a>, SimError> {
        cfg.validate()?;
        if cfg.nodelets != plan.nodelets() {
            return Err(SimError::NodeletMismatch { cfg: cfg.nodelets, plan: plan.nodelets() });
        }
        if cfg.threads_per_nodelet != plan.threads_per_nodelet() {
            return Err(SimError::ThreadCountMismatch {
                cfg: cfg.threads_per_nodelet,
                plan: plan.threads_per_nodelet(),
            });
        }
        if x.len() != plan.num_cols() {
            return Err(SimError::XLengthMismatch { expected: plan.num_cols(), got: x.len() });
        }

        let p = cfg.nodelets;
        let t = cfg.threads_per_nodelet;
        let scaled = cfg.migration_penalty_factor * cfg.local_access_cycles as f64;
        let truncated = scaled as u64;
        let rounded_up = if (truncated as f64) < scaled { truncated + 1 } else { truncated };
        let penalty_cycles = rounded_up.max(1);

        let blank = ThreadCtx {
            home: 0,
            at: 0,
            state: ThreadState::Unspawned,
            program: Program::Worker,
            progress: 0,
            row: 0,
            end_row: 0,
            nz: 0,
            nz_end: 0,
            step: Step::RowLo,
            acc: 0.0,
            cur_val: 0.0,
            pending_acks: 0,
            arrived_by_migration: false,
            busy_until: 0,
        };
        let mut threads = vec![blank; p * t + p + 1];
        for nodelet in 0..p {
            for slot in 0..t {
                let ctx = &mut threads[nodelet * t + slot];
                ctx.home = nodelet;
                ctx.at = nodelet;
                let (first, end) = plan.assignment().thread_rows(nodelet, slot);
                ctx.row = first;
                ctx.end_row = end;
            }
            let coord = &mut threads[p * t + nodelet];
            coord.program = Program::Coordinator;
            coord.home = nodelet;
            coord.at = nodelet;
        }
        let main_id = p * t + p;
        threads[main_id].program = Program::Main;
        threads[main_id].state = ThreadState::Ready;

        let mut run_queues: Vec<VecDeque<usize>> = (0..p).map(|_| VecDeque::new()).collect();
        run_queues[0].push_back(main_id);
        let mut active = vec![0usize; p];
        active[0] = 1;

        Ok(Machine {
            plan,
            x,
            cfg: cfg.clone(),
            penalty_cycles,
            threads,
            run_queues,
            arrivals: (0..p).map(|_| VecDeque::new()).collect(),
            departures: (0..p).map(|_| VecDeque::new()).collect(),
            responses: (0..p).map(|_| VecDeque::new()).collect(),
            memory_queues: (0..p).map(|_| VecDeque::new()).collect(),
            acks: (0..p).map(|_| VecDeque::new()).collect(),
            active,
            departing: vec![0; p],
            last_progress: vec![0; p],
            active_cap: vec![t; p],
            congested: vec![false; p],
            counters: vec![NodeletCounters::default(); p],
            occupancy: Vec::new(),
            b: vec![0.0; plan.num_rows()],
            cycle: 0,
            done_count: 0,
            sink: None,
        })
    }

    /// Streams events from the rest of this run into `sink`.
    pub fn attach_sink(&mut self, sink: &'a mut (dyn EventSink + 'a)) {
        self.sink = Some(sink);
    }

    fn emit(&mut self, event: SimEvent) {
        if let Some(sink) = self.sink.as_mut() {
            sink.record(event);
        }
    }

    /// Current cycle (cycles fully executed so far).
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// True once every thread has retired and every queue drained.
    pub fn is_quiescent(&self) -> bool {
        self.done_count == self.threads.len()
            && self.arrivals.iter().all(VecDeque::is_empty)
            && self.departures.iter().all(VecDeque::is_empty)
            && self.responses.iter().all(VecDeque::is_empty)
            && self.memory_queues.iter().all(VecDeque::is_empty)
            && self.acks.iter().all(VecDeque::is_empty)
    }

    /// Thread contexts physically on a nodelet: admitted (runnable or
    /// awaiting acknowledgments) plus those whose departure packet still
    /// waits in its queue.
    pub fn resident_threads(&self, nodelet: usize) -> usize {
        self.active[nodelet] + self.departing[nodelet]
    }

    /// Packets waiting in a nodelet's arrival queue.
    pub fn migration_queue_len(&self, nodelet: usize) -> usize {
        self.arrivals[nodelet].len()
    }

    /// Packets waiting in a nodelet's departure queue.
    pub fn departure_queue_len(&self, nodelet: usize) -> usize {
        self.departures[nodelet].len()
    }

    /// Remote updates waiting for a nodelet's memory port.
    pub fn memory_queue_len(&self, nodelet: usize) -> usize {
        self.memory_queues[nodelet].len()
    }

    /// Current admission cap of a nodelet.
    pub fn active_thread_cap(&self, nodelet: usize) -> usize {
        self.active_cap[nodelet]
    }

    /// Thread population by lifecycle stage.
    pub fn census(&self) -> ThreadCensus {
        let mut census = ThreadCensus { unspawned: 0, resident: 0, traveling: 0, done: 0 };
        for thread in &self.threads {
            match thread.state {
                ThreadState::Unspawned => census.unspawned += 1,
                ThreadState::Ready | ThreadState::BlockedOnAck => census.resident += 1,
                ThreadState::InMigration => census.traveling += 1,
                ThreadState::Done => census.done += 1,
            }
        }
        census
    }

    fn queued_packets(&self) -> usize {
        self.arrivals.iter().map(VecDeque::len).sum::<usize>()
            + self.departures.iter().map(VecDeque::len).sum::<usize>()
            + self.responses.iter().map(VecDeque::len).sum::<usize>()
            + self.memory_queues.iter().map(VecDeque::len).sum::<usize>()
            + self.acks.iter().map(VecDeque::len).sum::<usize>()
    }

    /// Appends one occupancy row per nodelet at the current cycle.
    pub fn sample_occupancy(&mut self) {
        for nodelet in 0..self.cfg.nodelets {
            self.occupancy.push(OccupancySample {
                cycle: self.cycle,
                nodelet,
                resident: self.active[nodelet] + self.departing[nodelet],
                migration_queue: self.arrivals[nodelet].len(),
                active_cap: self.active_cap[nodelet],
            });
        }
    }

    fn note_progress(&mut self, nodelet: usize, cycle: u64) {
        self.last_progress[nodelet] = cycle;
    }

    fn peek_access(&self, id: usize) -> Access {
        let t = &self.threads[id];
        let p = self.cfg.nodelets;
        let tn = self.cfg.threads_per_nodelet;
        match t.program {
            Program::Main => {
                if t.progress < p {
                    Access::Spawn { dest: t.progress, child: p * tn + t.progress }
                } else {
                    Access::Retire
                }
            }
            Program::Coordinator => {
                if t.progress < tn {
                    Access::Spawn { dest: t.home, child: t.home * tn + t.progress }
                } else {
                    Access::Retire
                }
            }
            Program::Worker => match t.step {
                Step::RowLo => {
                    if t.row >= t.end_row {
                        Access::Retire
                    } else {
                        Access::Mem { target: t.home, kind: MemKind::Home }
                    }
                }
                Step::RowHi | Step::Col | Step::Val => {
                    Access::Mem { target: t.home, kind: MemKind::Home }
                }
                Step::X => {
                    let col = self.plan.shard(t.home).col_index()[t.nz];
                    Access::Mem { target: self.plan.x_owner(col), kind: MemKind::X { col } }
                }
                Step::B => {
                    Access::Mem { target: self.plan.b_owner(t.row), kind: MemKind::B }
                }
            },
        }
    }

    /// Executes a memory access at the thread's current nodelet: charges the
    /// occupancy cost, bumps the counter, applies the side effect, advances
    /// the program.
    fn execute_local(&mut self, id: usize, kind: MemKind, cycle: u64) {
        let nodelet = self.threads[id].at;
        let cost = if self.threads[id].arrived_by_migration {
            self.penalty_cycles
        } else {
            self.cfg.local_access_cycles
        };
        self.counters[nodelet].mem_instrs += 1;
        match kind {
            MemKind::Home => {
                let t = &self.threads[id];
                match t.step {
                    Step::RowLo => self.threads[id].step = Step::RowHi,
                    Step::RowHi => {
                        let shard = self.plan.shard(t.home);
                        let rel = t.row - shard.first_row();
                        let (lo, hi) = (shard.row_ptr()[rel], shard.row_ptr()[rel + 1]);
                        let t = &mut self.threads[id];
                        t.nz = lo;
                        t.nz_end = hi;
                        t.step = if lo < hi { Step::Col } else { Step::B };
                    }
                    Step::Col => self.threads[id].step = Step::Val,
                    Step::Val => {
                        let value = self.plan.shard(t.home).values()[t.nz];
                        let t = &mut self.threads[id];
                        t.cur_val = value;
                        t.step = Step::X;
                    }
                    Step::X | Step::B => unreachable!("x and b accesses carry their own kind"),
                }
            }
            MemKind::X { col } => {
                let xv = self.x[col];
                let t = &mut self.threads[id];
                t.acc += t.cur_val * xv;
                t.nz += 1;
                t.step = if t.nz < t.nz_end { Step::Col } else { Step::B };
            }
            MemKind::B => {
                let t = &self.threads[id];
                self.b[t.row] = t.acc;
                Self::advance_row(&mut self.threads[id]);
            }
        }
        let t = &mut self.threads[id];
        t.arrived_by_migration = false;
        t.busy_until = cycle + cost;
    }

    fn advance_row(t: &mut ThreadCtx) {
        t.row += 1;
        t.acc = 0.0;
        t.step = Step::RowLo;
    }

    /// Phase 1: each nodelet's core scans its run queue round-robin and
    /// issues at most one instruction. Retiring and blocking consume no issue
    /// slot; threads that cannot proceed (busy, or a full departure queue)
    /// hold their queue position. Everything except a failed enqueue counts
    /// as progress for the stall breaker — a busy thread means the core has
    /// live work, not that the nodelet is stuck.
    fn phase_issue(&mut self, cycle: u64) {
        for nodelet in 0..self.cfg.nodelets {
            let snapshot = self.run_queues[nodelet].len();
            let mut scanned = 0;
            let mut i = 0;
            while scanned < snapshot && i < self.run_queues[nodelet].len() {
                scanned += 1;
                let id = self.run_queues[nodelet][i];
                if self.threads[id].busy_until > cycle {
                    self.note_progress(nodelet, cycle);
                    i += 1;
                    continue;
                }
                match self.peek_access(id) {
                    Access::Retire => {
                        self.note_progress(nodelet, cycle);
                        if self.threads[id].pending_acks > 0 {
                            self.threads[id].state = ThreadState::BlockedOnAck;
                            self.run_queues[nodelet].remove(i);
                        } else {
                            self.threads[id].state = ThreadState::Done;
                            self.done_count += 1;
                            self.active[nodelet] -= 1;
                            self.run_queues[nodelet].remove(i);
                            self.emit(SimEvent::ThreadRetired { cycle, thread: id, nodelet });
                        }
                    }
                    Access::Spawn { dest, child } => {
                        if dest == nodelet {
                            let c = &mut self.threads[child];
                            c.state = ThreadState::Ready;
                            c.at = dest;
                            c.busy_until = cycle;
                            self.run_queues[dest].push_back(child);
                            self.active[dest] += 1;
                        } else {
                            if self.departures[nodelet].len() >= self.cfg.migration_queue_capacity
                            {
                                i += 1;
                                continue;
                            }
                            self.threads[child].state = ThreadState::InMigration;
                            self.departures[nodelet]
                                .push_back(DeparturePacket::Spawn { dest, thread: child });
                            self.departing[nodelet] += 1;
                        }
                        self.note_progress(nodelet, cycle);
                        let t = &mut self.threads[id];
                        t.progress += 1;
                        t.busy_until = cycle + 1;
                        self.rotate_to_back(nodelet, i);
                        break;
                    }
                    Access::Mem { target, kind } => {
                        if target == nodelet {
                            self.execute_local(id, kind, cycle);
                            self.note_progress(nodelet, cycle);
                            self.rotate_to_back(nodelet, i);
                            break;
                        }
                        if let MemKind::B = kind {
                            // Remote result store: fire-and-forget update,
                            // the thread stays put and keeps going.
                            if self.departures[nodelet].len() >= self.cfg.migration_queue_capacity
                            {
                                i += 1;
                                continue;
                            }
                            let (row, value) = {
                                let t = &self.threads[id];
                                (t.row, t.acc)
                            };
                            self.departures[nodelet].push_back(DeparturePacket::Update {
                                dest: target,
                                row,
                                value,
                                thread: id,
                            });
                            self.note_progress(nodelet, cycle);
                            let t = &mut self.threads[id];
                            t.pending_acks += 1;
                            t.busy_until = cycle + 1;
                            Self::advance_row(t);
                            self.rotate_to_back(nodelet, i);
                            break;
                        }
                        // Remote load: the thread must migrate, which the
                        // ack barrier forbids while updates are in flight.
                        if self.threads[id].pending_acks > 0 {
                            self.threads[id].state = ThreadState::BlockedOnAck;
                            self.run_queues[nodelet].remove(i);
                            self.note_progress(nodelet, cycle);
                            continue;
                        }
                        if self.departures[nodelet].len() >= self.cfg.migration_queue_capacity {
                            i += 1;
                            continue;
                        }
                        if let MemKind::X { .. } = kind {
                            self.counters[target].remote_x_reads += 1;
                        }
                        self.threads[id].state = ThreadState::InMigration;
                        self.active[nodelet] -= 1;
                        self.departing[nodelet] += 1;
                        self.run_queues[nodelet].remove(i);
                        self.departures[nodelet]
                            .push_back(DeparturePacket::Migration { dest: target, thread: id });
                        self.note_progress(nodelet, cycle);
                        break;
                    }
                }
            }
        }
    }

    fn rotate_to_back(&mut self, nodelet: usize, i: usize) {
        if let Some(id) = self.run_queues[nodelet].remove(i) {
            self.run_queues[nodelet].push_back(id);
        }
    }

    /// Phase 2a: matured arrivals join the run queue while the admission cap
    /// has room. The queue is FIFO; an immature head blocks everything
    /// behind it.
    ///
    /// One escape valve backs the cap: a nodelet that went a whole cycle
    /// without progress — nothing issued, admitted, handed to the engine,
    /// or acknowledged — force-admits one matured head even at the cap. A
    /// delivered context parks in the memory-backed run queue, so the
    /// machine can always afford that, and it breaks the one circular wait
    /// the bounded queues could otherwise close: a ring of nodelets whose
    /// arrival queues are all full of threads migrating into each other,
    /// each cap pinned low because its own queue is full. Under plain
    /// congestion the breaker stays quiet — a nodelet that is issuing or
    /// draining departures is progressing — so a flooded nodelet still
    /// holds newcomers in the fabric rather than absorbing them.
    fn phase_admit(&mut self, cycle: u64) {
        for nodelet in 0..self.cfg.nodelets {
            let stalled = self.last_progress[nodelet] + 1 < cycle;
            let mut admitted = 0usize;
            loop {
                let at_cap = self.active[nodelet] >= self.active_cap[nodelet];
                if at_cap && !(stalled && admitted == 0) {
                    break;
                }
                match self.arrivals[nodelet].front() {
                    Some(front) if front.ready_at <= cycle => {}
                    _ => break,
                }
                let arrival = self.arrivals[nodelet].pop_front().expect("front checked");
                let t = &mut self.threads[arrival.thread];
                t.at = nodelet;
                t.state = ThreadState::Ready;
                t.arrived_by_migration = arrival.migrated;
                t.busy_until = cycle;
                self.run_queues[nodelet].push_back(arrival.thread);
                self.active[nodelet] += 1;
                admitted += 1;
                self.note_progress(nodelet, cycle);
                self.emit(SimEvent::ThreadAdmitted { cycle, thread: arrival.thread, nodelet });
            }
        }
    }

    /// Phase 2b: the migration engine forwards each source's pending
    /// acknowledgments, then accepts packets from its departure queue,
    /// head-of-line, up to the per-source budget, reserving destination
    /// capacity as it goes. Responses go first because nothing can refuse
    /// them; a reply stuck behind a blocked request could otherwise close a
    /// circular wait between two full queues.
    fn phase_accept(&mut self, cycle: u64) {
        for src in 0..self.cfg.nodelets {
            let mut budget = self.cfg.me_accepts_per_cycle;
            while let Some(&resp) = self.responses[src].front() {
                if self.cfg.acks_consume_me_slot {
                    if budget == 0 {
                        break;
                    }
                    budget -= 1;
                }
                self.responses[src].pop_front();
                self.acks[resp.dest].push_back(AckDelivery {
                    thread: resp.thread,
                    arrive_at: cycle + self.cfg.remote_update_ack_latency,
                });
            }
            while budget > 0 {
                let Some(&packet) = self.departures[src].front() else { break };
                match packet {
                    DeparturePacket::Migration { dest, thread }
                    | DeparturePacket::Spawn { dest, thread } => {
                        if self.arrivals[dest].len() >= self.cfg.migration_queue_capacity {
                            break;
                        }
                        self.departures[src].pop_front();
                        self.departing[src] -= 1;
                        self.note_progress(src, cycle);
                        let migrated = matches!(packet, DeparturePacket::Migration { .. });
                        self.arrivals[dest].push_back(Arrival {
                            thread,
                            ready_at: cycle + self.cfg.me_delivery_latency,
                            migrated,
                        });
                        if migrated {
                            self.counters[src].migrations_out += 1;
                            self.counters[dest].migrations_in += 1;
                            self.emit(SimEvent::MigrationAccepted { cycle, thread, src, dest });
                        } else {
                            self.counters[dest].spawn_arrivals += 1;
                        }
                        budget -= 1;
                    }
                    DeparturePacket::Update { dest, row, value, thread } => {
                        if self.memory_queues[dest].len() >= self.cfg.memory_queue_capacity {
                            break;
                        }
                        self.departures[src].pop_front();
                        self.note_progress(src, cycle);
                        self.memory_queues[dest].push_back(MemOp {
                            row,
                            value,
                            thread,
                            reply_to: src,
                            ready_at: cycle + self.cfg.me_delivery_latency,
                        });
                        budget -= 1;
                    }
                }
            }
        }
    }

    /// Phase 3: each memory port services at most one matured remote update
    /// per cycle. The acknowledgment joins the response lane, which no
    /// capacity limit can block, so service itself is unconditional.
    fn phase_memory(&mut self, cycle: u64) {
        for nodelet in 0..self.cfg.nodelets {
            let ready = matches!(
                self.memory_queues[nodelet].front(),
                Some(op) if op.ready_at <= cycle
            );
            if !ready {
                continue;
            }
            let op = self.memory_queues[nodelet].pop_front().expect("front checked");
            self.b[op.row] = op.value;
            self.counters[nodelet].mem_instrs += 1;
            self.counters[nodelet].remote_updates += 1;
            self.responses[nodelet].push_back(ResponseTransit { dest: op.reply_to, thread: op.thread });
            self.emit(SimEvent::RemoteUpdateServiced { cycle, nodelet, row: op.row });
        }
    }

    /// Phase 4: matured acknowledgments reach their threads; a thread whose
    /// last update is confirmed becomes runnable again.
    fn phase_acks(&mut self, cycle: u64) {
        for nodelet in 0..self.cfg.nodelets {
            loop {
                match self.acks[nodelet].front() {
                    Some(front) if front.arrive_at <= cycle => {}
                    _ => break,
                }
                let ack = self.acks[nodelet].pop_front().expect("front checked");
                let t = &mut self.threads[ack.thread];
                debug_assert_eq!(t.at, nodelet, "ack delivered where the update was issued");
                debug_assert!(t.pending_acks > 0);
                t.pending_acks -= 1;
                if t.pending_acks == 0 && t.state == ThreadState::BlockedOnAck {
                    t.state = ThreadState::Ready;
                    self.run_queues[nodelet].push_back(ack.thread);
                }
                self.note_progress(nodelet, cycle);
            }
        }
    }

    /// Phase 5: the throttle inspects each arrival queue's fill level and
    /// adjusts the admission cap on the edges the hysteresis defines.
    ///
    /// The decrease arm is evaluated once per congestion episode — on the
    /// cycle fill first climbs past the high watermark — not on every cycle
    /// spent above it, so a queue that stays saturated because its nodelet
    /// is the workload's hot spot settles at half its cap instead of
    /// collapsing toward one. The increase arm is evaluated on every cycle
    /// spent below the low watermark. In between, and for the rest of a
    /// congestion episode, the cap holds.
    fn phase_throttle(&mut self, cycle: u64) {
        for nodelet in 0..self.cfg.nodelets {
            let fill =
                self.arrivals[nodelet].len() as f64 / self.cfg.migration_queue_capacity as f64;
            let above_high = fill > self.cfg.throttle_high_watermark;
            let entering_congestion = above_high && !self.congested[nodelet];
            self.congested[nodelet] = above_high;
            if !entering_congestion && fill >= self.cfg.throttle_low_watermark {
                continue;
            }
            let old_cap = self.active_cap[nodelet];
            let new_cap = throttle_policy(fill, old_cap, &self.cfg);
            if new_cap != old_cap {
                self.active_cap[nodelet] = new_cap;
                self.emit(SimEvent::ThrottleAdjusted { cycle, nodelet, old_cap, new_cap });
            }
        }
    }

    /// Executes one cycle: sampling, issue, admission, acceptance, memory
    /// service, ack delivery, throttle — always in that order.
    pub fn step(&mut self) {
        if self.cycle % self.cfg.occupancy_sample_interval == 0 {
            self.sample_occupancy();
        }
        let cycle = self.cycle;
        self.phase_issue(cycle);
        self.phase_admit(cycle);
        self.phase_accept(cycle);
        self.phase_memory(cycle);
        self.phase_acks(cycle);
        self.phase_throttle(cycle);
        self.cycle += 1;
    }

    /// Steps until quiescence.
    ///
    /// # Errors
    ///
    /// [`SimError::CycleBudgetExceeded`] if the budget runs out first.
    pub fn run_to_completion(&mut self) -> Result<(), SimError> {
        while !self.is_quiescent() {
            if self.cycle >= self.cfg.cycle_budget {
                let census = self.census();
                return Err(SimError::CycleBudgetExceeded {
                    cycle_budget: self.cfg.cycle_budget,
                    live: census.unspawned + census.resident + census.traveling,
                    queued: self.queued_packets(),
                });
            }
            self.step();
        }
        Ok(())
    }

    /// Consumes the machine into its report.
    pub fn into_report(self) -> MetricsReport {
        let mem: Vec<f64> = self.counters.iter().map(|c| c.mem_instrs as f64).collect();
        MetricsReport {
            cycles: self.cycle,
            total_migrations: self.counters.iter().map(|c| c.migrations_in).sum(),
            mem_instr_cv: coefficient_of_variation(&mem).ok(),
            nodelets: self.counters,
            occupancy: self.occupancy,
            b: self.b,
        }
    }
}

/// Runs one multiply to quiescence and reports.
///
/// # Errors
///
/// See [`Machine::new`] and [`Machine::run_to_completion`].
pub fn simulate(
    plan: &DistributedPlan,
    x: &[f64],
    cfg: &SimConfig,
) -> Result<MetricsReport, SimError> {
    let mut machine = Machine::new(plan, x, cfg)?;
    machine.run_to_completion()?;
    Ok(machine.into_report())
}

/// Like [`simulate`], streaming events into `sink` along the way.
///
/// # Errors
///
/// See [`simulate`].
pub fn simulate_with_sink<'a>(
    plan: &'a DistributedPlan,
    x: &'a [f64],
    cfg: &SimConfig,
    sink: &'a mut (dyn EventSink + 'a),
) -> Result<MetricsReport, SimError> {
    let mut machine = Machine::new(plan, x, cfg)?;
    machine.attach_sink(sink);
    machine.run_to_completion()?;
    Ok(machine.into_report())
}
