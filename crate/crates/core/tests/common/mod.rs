//! Independent oracles and checkers shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use nearmem_core::engine::{Resource, TimedEvent};
use nearmem_core::trace::{EventKind, PuRef, Trace, TraceEvent, TraceMeta};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub type Picos = u64;

/// `fixed_ns + bytes / bw` in picoseconds with the bandwidth term rounded up,
/// written out longhand in wide integers.
pub fn transfer_time_oracle(bytes: u64, fixed_ns: u64, bw: u64) -> Picos {
    let fixed = fixed_ns as u128 * 1000;
    let num = bytes as u128 * 1_000_000_000_000u128;
    let bw = bw as u128;
    let q = num / bw;
    let stream = if q * bw == num { q } else { q + 1 };
    (fixed + stream) as Picos
}

/// One unit of work for the brute-force scheduler.
#[derive(Debug, Clone)]
pub struct OracleJob {
    pub seq: u64,
    pub deps: Vec<u64>,
    pub resources: Vec<usize>,
    pub duration: Picos,
}

/// Greedy list scheduler evaluated by brute force at every decision instant.
///
/// At time `t` the jobs whose dependencies have all ended are visited in
/// ascending `seq`; each starts if every resource on its path is held by
/// fewer running jobs than it has servers. Passes repeat until nothing more
/// starts at `t` (zero-length jobs finish on the spot), then `t` advances to
/// the next completion.
pub fn oracle_schedule(multiplicity: &[u32], jobs: &[OracleJob]) -> Vec<(Picos, Picos)> {
    let mut slot: Vec<Option<(Picos, Picos)>> = vec![None; jobs.len()];
    let index: HashMap<u64, usize> = jobs.iter().enumerate().map(|(i, j)| (j.seq, i)).collect();
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&i| jobs[i].seq);
    let mut t: Picos = 0;
    loop {
        loop {
            let mut started = false;
            for &i in &order {
                if slot[i].is_some() {
                    continue;
                }
                let ready = jobs[i]
                    .deps
                    .iter()
                    .all(|d| slot[index[d]].is_some_and(|(_, end)| end <= t));
                if !ready {
                    continue;
                }
                let fits = jobs[i].resources.iter().all(|&r| {
                    let busy = (0..jobs.len())
                        .filter(|&k| {
                            jobs[k].resources.contains(&r)
                                && slot[k].is_some_and(|(s, e)| s <= t && t < e)
                        })
                        .count();
                    busy < multiplicity[r] as usize
                });
                if fits {
                    slot[i] = Some((t, t + jobs[i].duration));
                    started = true;
                }
            }
            if !started {
                break;
            }
        }
        if slot.iter().all(|s| s.is_some()) {
            break;
        }
        let next = slot
            .iter()
            .flatten()
            .map(|&(_, e)| e)
            .filter(|&e| e > t)
            .min()
            .expect("unscheduled jobs but nothing running");
        t = next;
    }
    slot.into_iter().map(|s| s.unwrap()).collect()
}

pub fn makespan_of(slots: &[(Picos, Picos)]) -> Picos {
    let lo = slots.iter().map(|s| s.0).min().unwrap_or(0);
    let hi = slots.iter().map(|s| s.1).max().unwrap_or(0);
    hi - lo
}

/// Random valid trace with up to `max_pus` PUs and up to `max_events` events.
pub fn random_trace(rng: &mut StdRng, max_pus: u32, max_events: usize) -> Trace {
    let n_pus = rng.gen_range(1..=max_pus);
    let n_events = rng.gen_range(1..=max_events);
    let mut events: Vec<TraceEvent> = Vec::with_capacity(n_events);
    let mut seq = 0u64;
    for _ in 0..n_events {
        seq += rng.gen_range(1..=3);
        let kind = match rng.gen_range(0..10) {
            0..=2 => EventKind::H2dXfer,
            3..=4 => EventKind::D2hXfer,
            5..=7 => EventKind::KernelExec,
            8 => EventKind::InterPuXfer,
            _ => EventKind::Barrier,
        };
        let pu = if kind == EventKind::Barrier {
            PuRef::All
        } else {
            PuRef::Pu(rng.gen_range(0..n_pus))
        };
        let (bytes, cycles) = match kind {
            EventKind::KernelExec => (0, rng.gen_range(0..20_000)),
            EventKind::Barrier => (0, 0),
            _ => (rng.gen_range(0..200_000), 0),
        };
        let mut deps: Vec<u64> = events
            .iter()
            .filter(|_| rng.gen_bool(0.2))
            .map(|e| e.seq)
            .collect();
        deps.dedup();
        events.push(TraceEvent {
            seq,
            kind,
            pu,
            bytes,
            cycles,
            depends_on: deps,
        });
    }
    let mut meta = TraceMeta::new("RANDOM", n_pus);
    meta.parallel_transfers = rng.gen_bool(0.5);
    Trace::new(meta, events).expect("generator emits valid traces")
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn holders(events: &[TimedEvent], r: usize, t: Picos) -> usize {
    events
        .iter()
        .filter(|e| e.resources.iter().any(|x| x.0 as usize == r) && e.start <= t && t < e.end)
        .count()
}

/// Every event starts after all of its dependencies have ended.
pub fn check_causality(events: &[TimedEvent]) -> Result<(), String> {
    let end: HashMap<u64, Picos> = events.iter().map(|e| (e.event.seq, e.end)).collect();
    for e in events {
        for d in &e.event.depends_on {
            let de = end
                .get(d)
                .ok_or(format!("seq {}: missing dep {d}", e.event.seq))?;
            if e.start < *de {
                return Err(format!(
                    "seq {} starts at {} before dep {d} ends at {de}",
                    e.event.seq, e.start
                ));
            }
        }
    }
    Ok(())
}

/// No resource ever holds more jobs than it has servers. Occupancy only
/// grows at start instants, so checking those suffices.
pub fn check_capacity(resources: &[Resource], events: &[TimedEvent]) -> Result<(), String> {
    for e in events {
        for r in &e.resources {
            let n = holders(events, r.0 as usize, e.start);
            let cap = resources[r.0 as usize].multiplicity as usize;
            if n > cap {
                return Err(format!(
                    "{} holds {n} > {cap} at {}",
                    resources[r.0 as usize].name, e.start
                ));
            }
        }
    }
    Ok(())
}

/// A job that waits past its ready time is blocked by a full resource at
/// every state change in between.
pub fn check_no_unforced_idleness(
    resources: &[Resource],
    events: &[TimedEvent],
) -> Result<(), String> {
    let end: HashMap<u64, Picos> = events.iter().map(|e| (e.event.seq, e.end)).collect();
    let mut instants: Vec<Picos> = events.iter().flat_map(|e| [e.start, e.end]).collect();
    instants.sort_unstable();
    instants.dedup();
    for e in events {
        let ready = e.event.depends_on.iter().map(|d| end[d]).max().unwrap_or(0);
        for &t in instants.iter().filter(|&&t| t >= ready && t < e.start) {
            let blocked = e.resources.iter().any(|r| {
                holders(events, r.0 as usize, t) >= resources[r.0 as usize].multiplicity as usize
            });
            if !blocked {
                return Err(format!(
                    "seq {} idle at {t} (ready {ready}, start {})",
                    e.event.seq, e.start
                ));
            }
        }
    }
    Ok(())
}
