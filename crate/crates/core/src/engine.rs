//! Deterministic discrete-event scheduler.
//!
//! Jobs occupy every resource on their path for their whole duration. A job
//! starts once all of its dependencies have ended and every resource on its
//! path has a free server. At each decision instant the waiting jobs are
//! considered in ascending `seq` order and started greedily; jobs made ready
//! by zero-duration completions at the same instant join the same scan.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::archmodels;
use crate::config::{ArchVariant, ValidatedConfig};
use crate::error::{Error, Result};
use crate::trace::{Trace, TraceEvent};
use crate::units::{bytes_time_ps, ns_to_ps, Picos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResourceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServiceModel {
    /// Bytes per second.
    Bandwidth(u64),
    /// Nanoseconds.
    FixedDelay(u64),
    /// Clock in hertz.
    Processor(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub name: String,
    pub model: ServiceModel,
    /// Number of parallel servers.
    pub multiplicity: u32,
}

/// Interning table of the resources a run uses.
#[derive(Debug, Clone, Default)]
pub struct ResourceTable {
    resources: Vec<Resource>,
    by_name: HashMap<String, ResourceId>,
}

impl ResourceTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, registering the resource on first use.
    pub fn intern(&mut self, name: &str, model: ServiceModel, multiplicity: u32) -> ResourceId {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = ResourceId(self.resources.len() as u32);
        self.resources.push(Resource {
            name: name.to_string(),
            model,
            multiplicity,
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, id: ResourceId) -> &Resource {
        &self.resources[id.0 as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<ResourceId> {
        self.by_name.get(name).copied()
    }

    pub fn as_slice(&self) -> &[Resource] {
        &self.resources
    }
}

/// A unit of scheduled work.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub seq: u64,
    pub deps: Vec<u64>,
    pub resources: Vec<ResourceId>,
    pub duration: Picos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub start: Picos,
    pub end: Picos,
}

/// Breakdown bucket of a timed event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Component {
    HostPim,
    PimExec,
    PimHost,
    InterPim,
}

impl Component {
    pub fn is_transfer(self) -> bool {
        self != Component::PimExec
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub event: TraceEvent,
    pub start: Picos,
    pub end: Picos,
    pub component: Component,
    pub resources: Vec<ResourceId>,
}

impl TimedEvent {
    pub fn duration(&self) -> Picos {
        self.end - self.start
    }
}

/// `fixed_ns + bytes / bw`, in picoseconds, the bandwidth term rounded up.
pub fn bulk_transfer_time(bytes: u64, fixed_ns: u64, bw: u64) -> Result<Picos> {
    if bw == 0 {
        return Err(Error::InvalidArgument("bandwidth must be > 0".into()));
    }
    Ok(ns_to_ps(fixed_ns) + bytes_time_ps(bytes, bw))
}

/// Span from the earliest start to the latest end.
pub fn makespan(events: &[TimedEvent]) -> Result<Picos> {
    span(events.iter().map(|e| (e.start, e.end)))
        .ok_or_else(|| Error::InvalidArgument("makespan of an empty event list".into()))
}

pub(crate) fn span(intervals: impl Iterator<Item = (Picos, Picos)>) -> Option<Picos> {
    let mut lo = Picos::MAX;
    let mut hi = 0;
    let mut any = false;
    for (s, e) in intervals {
        any = true;
        lo = lo.min(s);
        hi = hi.max(e);
    }
    any.then(|| hi - lo)
}

/// Routes and runs a trace under `arch`, one device holding every PU.
pub fn simulate(t: &Trace, arch: &ArchVariant, cfg: &ValidatedConfig) -> Result<Vec<TimedEvent>> {
    archmodels::simulate_with_placement(
        t,
        arch,
        cfg,
        &archmodels::Placement::single_device(t.n_pus()),
    )
}

/// Schedules `jobs` (sorted by strictly increasing `seq`) on `resources`.
pub fn schedule(resources: &[Resource], jobs: &[Job]) -> Result<Vec<Slot>> {
    Scheduler::new(resources, jobs)?.run()
}

struct Scheduler<'a> {
    jobs: &'a [Job],
    durations: Vec<Picos>,
    free: Vec<u32>,
    sig_of: Vec<usize>,
    sig_resources: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    remaining: Vec<usize>,
    waiting: Vec<BTreeSet<usize>>,
    /// Signatures with a non-empty waiting set.
    active: BTreeSet<usize>,
    pending: Vec<usize>,
    running: BinaryHeap<Reverse<(Picos, usize)>>,
    slots: Vec<Option<Slot>>,
}

impl<'a> Scheduler<'a> {
    fn new(resources: &[Resource], jobs: &'a [Job]) -> Result<Self> {
        for r in resources {
            if r.multiplicity == 0 {
                return Err(Error::InvalidArgument(format!(
                    "resource `{}` has multiplicity 0",
                    r.name
                )));
            }
        }
        let n = jobs.len();
        let mut sig_ids: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut sig_resources = Vec::new();
        let mut sig_of = Vec::with_capacity(n);
        let mut children = vec![Vec::new(); n];
        let mut remaining = vec![0; n];
        for (i, job) in jobs.iter().enumerate() {
            if i > 0 && job.seq <= jobs[i - 1].seq {
                return Err(Error::InvalidTrace(format!(
                    "job seq {} out of order",
                    job.seq
                )));
            }
            let mut key: Vec<usize> = job.resources.iter().map(|r| r.0 as usize).collect();
            key.sort_unstable();
            key.dedup();
            if let Some(&bad) = key.iter().find(|&&r| r >= resources.len()) {
                return Err(Error::InvalidArgument(format!("unknown resource id {bad}")));
            }
            let next = sig_ids.len();
            let sig = *sig_ids.entry(key.clone()).or_insert_with(|| {
                sig_resources.push(key);
                next
            });
            sig_of.push(sig);
            for &d in &job.deps {
                let di = jobs[..i].binary_search_by_key(&d, |j| j.seq).map_err(|_| {
                    Error::InvalidTrace(format!("seq {}: dangling dependency {d}", job.seq))
                })?;
                children[di].push(i);
                remaining[i] += 1;
            }
        }
        let pending = (0..n).filter(|&i| remaining[i] == 0).collect();
        Ok(Scheduler {
            jobs,
            durations: jobs.iter().map(|j| j.duration).collect(),
            free: resources.iter().map(|r| r.multiplicity).collect(),
            waiting: vec![BTreeSet::new(); sig_resources.len()],
            active: BTreeSet::new(),
            sig_of,
            sig_resources,
            children,
            remaining,
            pending,
            running: BinaryHeap::new(),
            slots: vec![None; n],
        })
    }

    fn feasible(&self, sig: usize) -> bool {
        self.sig_resources[sig].iter().all(|&r| self.free[r] > 0)
    }

    fn finish(&mut self, j: usize) {
        for &r in &self.sig_resources[self.sig_of[j]] {
            self.free[r] += 1;
        }
        for k in 0..self.children[j].len() {
            let c = self.children[j][k];
            self.remaining[c] -= 1;
            if self.remaining[c] == 0 {
                self.pending.push(c);
            }
        }
    }

    /// Moves newly ready jobs into their signature queues and queues a heap
    /// entry for each one that became the head of its queue.
    fn admit(&mut self, heads: &mut BinaryHeap<Reverse<(usize, usize)>>) {
        for j in std::mem::take(&mut self.pending) {
            let s = self.sig_of[j];
            self.waiting[s].insert(j);
            self.active.insert(s);
            if self.waiting[s].first() == Some(&j) {
                heads.push(Reverse((j, s)));
            }
        }
    }

    /// Starts every job that can start at `now`, scanning in `seq` order.
    /// Jobs readied by zero-duration completions join the same scan; their
    /// `seq` is above the completed job's, so the scan order is preserved.
    fn dispatch(&mut self, now: Picos) {
        let mut heads = BinaryHeap::new();
        self.admit(&mut heads);
        for &s in &self.active {
            if let Some(&j) = self.waiting[s].first() {
                heads.push(Reverse((j, s)));
            }
        }
        while let Some(Reverse((j, s))) = heads.pop() {
            // stale entry: its job started or lost the head to a lower seq
            if self.waiting[s].first() != Some(&j) || !self.feasible(s) {
                continue;
            }
            self.waiting[s].remove(&j);
            for &r in &self.sig_resources[s] {
                self.free[r] -= 1;
            }
            let end = now + self.durations[j];
            self.slots[j] = Some(Slot { start: now, end });
            match self.waiting[s].first() {
                Some(&next) => heads.push(Reverse((next, s))),
                None => {
                    self.active.remove(&s);
                }
            }
            if end == now {
                self.finish(j);
                self.admit(&mut heads);
            } else {
                self.running.push(Reverse((end, j)));
            }
        }
    }

    fn run(mut self) -> Result<Vec<Slot>> {
        self.dispatch(0);
        while let Some(Reverse((now, j))) = self.running.pop() {
            self.finish(j);
            while let Some(&Reverse((t, k))) = self.running.peek() {
                if t != now {
                    break;
                }
                self.running.pop();
                self.finish(k);
            }
            self.dispatch(now);
        }
        self.slots
            .into_iter()
            .zip(self.jobs)
            .map(|(s, j)| {
                s.ok_or_else(|| Error::InvalidTrace(format!("job {} never became ready", j.seq)))
            })
            .collect()
    }
}
