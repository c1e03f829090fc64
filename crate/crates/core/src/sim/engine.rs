use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use super::{
    ChainRole, ChainStats, ConfirmationMode, Disposition, HierarchicalBreakdown, LatencySummary,
    RequestRecord, SimError, SimOptions, SimResult,
};
use crate::config::ChainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival,
    BlockMined,
    Rejection,
    ServiceCompletion,
    /// Additive mode: the request's last confirmation delay has elapsed.
    ConfirmationDue(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    chain: usize,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that the max-heap pops the earliest event; ties go to the
// event scheduled first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Chain {
    role: ChainRole,
    cfg: ChainConfig,
    arrivals: Option<Exp<f64>>,
    mining: Exp<f64>,
    rejection: Option<Exp<f64>>,
    service: Exp<f64>,
    pool: VecDeque<usize>,
    queue: VecDeque<usize>,
    busy: u32,
    mining_armed: bool,
    rejection_armed: bool,
    blocks: u64,
    // event-driven mode: (block count at which the batch is confirmed, batch)
    awaiting: VecDeque<(u64, Vec<usize>)>,
    records: Vec<RequestRecord>,
    served: usize,
    rejected: usize,
    max_block_batch: usize,
    max_rejection_batch: usize,
}

impl Chain {
    fn new(role: ChainRole, cfg: ChainConfig, background: bool) -> Self {
        let exp = |rate: f64| Exp::new(rate).expect("validated positive rate");
        Self {
            role,
            cfg,
            arrivals: background.then(|| exp(cfg.arrival_rate)),
            mining: exp(cfg.mining_rate),
            rejection: (cfg.rejection_rate > 0.0).then(|| exp(cfg.rejection_rate)),
            service: exp(cfg.service_rate),
            pool: VecDeque::new(),
            queue: VecDeque::new(),
            busy: 0,
            mining_armed: false,
            rejection_armed: false,
            blocks: 0,
            awaiting: VecDeque::new(),
            records: Vec::new(),
            served: 0,
            rejected: 0,
            max_block_batch: 0,
            max_rejection_batch: 0,
        }
    }
}

struct Sim {
    now: f64,
    seq: u64,
    events: u64,
    fel: BinaryHeap<Event>,
    rng: ChaCha8Rng,
    chains: Vec<Chain>,
    mode: ConfirmationMode,
    max_backlog: usize,
    samples: Vec<f64>,
    secondary_samples: Vec<f64>,
    primary_samples: Vec<f64>,
}

const PRIMARY: usize = 0;
const SECONDARY: usize = 1;

impl Sim {
    fn schedule(&mut self, chain: usize, delay: f64, kind: EventKind) {
        self.seq += 1;
        self.fel.push(Event {
            time: self.now + delay,
            seq: self.seq,
            chain,
            kind,
        });
    }

    fn hierarchical(&self) -> bool {
        self.chains.len() > 1
    }

    fn rearm(&mut self, c: usize) {
        let ch = &self.chains[c];
        if !ch.mining_armed && (!ch.pool.is_empty() || !ch.awaiting.is_empty()) {
            let d = self.rng.sample(ch.mining);
            self.chains[c].mining_armed = true;
            self.schedule(c, d, EventKind::BlockMined);
        }
        let ch = &self.chains[c];
        if let Some(rej) = ch.rejection {
            if !ch.rejection_armed && !ch.pool.is_empty() {
                let d = self.rng.sample(rej);
                self.chains[c].rejection_armed = true;
                self.schedule(c, d, EventKind::Rejection);
            }
        }
    }

    fn submit(&mut self, c: usize, origin: Option<usize>) -> Result<(), SimError> {
        let now = self.now;
        let ch = &mut self.chains[c];
        let id = ch.records.len();
        ch.records.push(RequestRecord::new(now, origin));
        ch.pool.push_back(id);
        if ch.pool.len() > self.max_backlog {
            return Err(SimError::Unstable {
                chain: ch.role,
                limit: self.max_backlog,
                time: now,
            });
        }
        self.rearm(c);
        Ok(())
    }

    fn confirm(&mut self, c: usize, id: usize) -> Result<(), SimError> {
        let now = self.now;
        let ch = &mut self.chains[c];
        ch.records[id].confirmed_at = Some(now);
        if ch.busy < ch.cfg.servers {
            self.start_service(c, id)?;
        } else {
            ch.queue.push_back(id);
            if ch.queue.len() > self.max_backlog {
                return Err(SimError::Unstable {
                    chain: ch.role,
                    limit: self.max_backlog,
                    time: now,
                });
            }
        }
        Ok(())
    }

    fn start_service(&mut self, c: usize, id: usize) -> Result<(), SimError> {
        let now = self.now;
        let ch = &mut self.chains[c];
        ch.busy += 1;
        ch.served += 1;
        let rec = &mut ch.records[id];
        rec.service_start_at = Some(now);
        rec.disposition = Disposition::Served;
        assert!(rec.is_ordered(), "timestamps out of order: {rec:?}");
        let latency = now - rec.submitted_at;
        let origin = rec.origin;
        let d = self.rng.sample(ch.service);
        self.schedule(c, d, EventKind::ServiceCompletion);

        if !self.hierarchical() {
            self.samples.push(latency);
        } else if c == SECONDARY {
            self.submit(PRIMARY, Some(id))?;
        } else if let Some(o) = origin {
            let sec = &self.chains[SECONDARY].records[o];
            let sec_start = sec.service_start_at.expect("injected at service start");
            self.samples.push(now - sec.submitted_at);
            self.secondary_samples.push(sec_start - sec.submitted_at);
            self.primary_samples.push(latency);
        }
        Ok(())
    }

    fn on_block(&mut self, c: usize) -> Result<(), SimError> {
        let now = self.now;
        let mode = self.mode;
        let ch = &mut self.chains[c];
        ch.mining_armed = false;
        ch.blocks += 1;
        let mut ready = Vec::new();
        while ch
            .awaiting
            .front()
            .is_some_and(|(due, _)| *due <= ch.blocks)
        {
            ready.extend(ch.awaiting.pop_front().unwrap().1);
        }
        let take = ch.pool.len().min(ch.cfg.block_capacity as usize);
        let batch: Vec<usize> = ch.pool.drain(..take).collect();
        ch.max_block_batch = ch.max_block_batch.max(batch.len());
        for &id in &batch {
            ch.records[id].mined_at = Some(now);
        }
        let extra = ch.cfg.confirmations - 1;
        if extra == 0 {
            ready.extend(batch);
        } else if !batch.is_empty() {
            match mode {
                ConfirmationMode::EventDriven => {
                    let due = ch.blocks + u64::from(extra);
                    ch.awaiting.push_back((due, batch));
                }
                ConfirmationMode::Additive => {
                    let mining = ch.mining;
                    for id in batch {
                        let delay: f64 = (0..extra).map(|_| self.rng.sample(mining)).sum();
                        self.schedule(c, delay, EventKind::ConfirmationDue(id));
                    }
                }
            }
        }
        for id in ready {
            self.confirm(c, id)?;
        }
        self.rearm(c);
        Ok(())
    }

    fn on_rejection(&mut self, c: usize) {
        let ch = &mut self.chains[c];
        ch.rejection_armed = false;
        let take = ch.pool.len().min(ch.cfg.rejection_batch as usize);
        for id in ch.pool.drain(..take) {
            ch.records[id].disposition = Disposition::Rejected;
        }
        ch.rejected += take;
        ch.max_rejection_batch = ch.max_rejection_batch.max(take);
        self.rearm(c);
    }

    fn on_completion(&mut self, c: usize) -> Result<(), SimError> {
        let ch = &mut self.chains[c];
        ch.busy -= 1;
        if let Some(id) = ch.queue.pop_front() {
            self.start_service(c, id)?;
        }
        Ok(())
    }

    fn step(&mut self) -> Result<bool, SimError> {
        let Some(ev) = self.fel.pop() else {
            return Ok(false);
        };
        assert!(ev.time >= self.now, "event list out of order");
        self.now = ev.time;
        self.events += 1;
        let c = ev.chain;
        match ev.kind {
            EventKind::Arrival => {
                let dist = self.chains[c].arrivals.expect("arrivals enabled");
                let d = self.rng.sample(dist);
                self.schedule(c, d, EventKind::Arrival);
                self.submit(c, None)?;
            }
            EventKind::BlockMined => self.on_block(c)?,
            EventKind::Rejection => self.on_rejection(c),
            EventKind::ServiceCompletion => self.on_completion(c)?,
            EventKind::ConfirmationDue(id) => self.confirm(c, id)?,
        }
        Ok(true)
    }
}

/// `chains` is `[(role, config, own arrivals enabled)]`; a second entry is
/// the secondary chain feeding the first.
pub(super) fn run(
    chains: &[(ChainRole, ChainConfig, bool)],
    options: &SimOptions,
) -> Result<SimResult, SimError> {
    let mut sim = Sim {
        now: 0.0,
        seq: 0,
        events: 0,
        fel: BinaryHeap::new(),
        rng: ChaCha8Rng::seed_from_u64(options.seed),
        chains: chains
            .iter()
            .map(|&(role, cfg, bg)| Chain::new(role, cfg, bg))
            .collect(),
        mode: options.mode,
        max_backlog: options.max_backlog,
        samples: Vec::with_capacity(options.target_served),
        secondary_samples: Vec::new(),
        primary_samples: Vec::new(),
    };
    for c in 0..sim.chains.len() {
        if let Some(dist) = sim.chains[c].arrivals {
            let d = sim.rng.sample(dist);
            sim.schedule(c, d, EventKind::Arrival);
        }
    }
    while sim.samples.len() < options.target_served {
        if !sim.step()? {
            break;
        }
    }

    let target = options.target_served;
    let discard = ((target as f64 * options.warmup_fraction).ceil() as usize).min(target - 1);
    // one block can start several services at once; keep exactly `target`
    let served_count = sim.samples.len();
    sim.samples.truncate(target);
    sim.secondary_samples.truncate(target);
    sim.primary_samples.truncate(target);
    let samples = sim.samples.split_off(discard.min(sim.samples.len()));
    let hierarchical = sim.hierarchical();
    let breakdown = hierarchical.then(|| {
        let sec = sim
            .secondary_samples
            .split_off(discard.min(sim.secondary_samples.len()));
        let prim = sim
            .primary_samples
            .split_off(discard.min(sim.primary_samples.len()));
        HierarchicalBreakdown {
            secondary: LatencySummary::from_samples(&sec),
            primary: LatencySummary::from_samples(&prim),
            e2e: LatencySummary::from_samples(&samples),
            secondary_samples: sec,
            primary_samples: prim,
        }
    });
    let (generated_count, rejected_count) = if hierarchical {
        let sec = &sim.chains[SECONDARY];
        let lost_on_primary = sim.chains[PRIMARY]
            .records
            .iter()
            .filter(|r| r.origin.is_some() && r.disposition == Disposition::Rejected)
            .count();
        (sec.records.len(), sec.rejected + lost_on_primary)
    } else {
        (sim.chains[0].records.len(), sim.chains[0].rejected)
    };
    let chains = sim
        .chains
        .into_iter()
        .map(|ch| ChainStats {
            role: ch.role,
            generated: ch.records.len(),
            served: ch.served,
            rejected: ch.rejected,
            max_block_batch: ch.max_block_batch,
            max_rejection_batch: ch.max_rejection_batch,
            records: ch.records,
        })
        .collect();
    Ok(SimResult {
        summary: LatencySummary::from_samples(&samples),
        latency_samples: samples,
        served_count,
        rejected_count,
        generated_count,
        warmup_discarded: discard,
        end_time: sim.now,
        events_processed: sim.events,
        chains,
        hierarchical: breakdown,
    })
}
