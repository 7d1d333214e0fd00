//! Host-visible event traces: format, parser, writer and a synthetic
//! generator that expands a workload descriptor into per-PU events.
//!
//! The file format is newline-delimited JSON. The first line is a header
//! `{"format_version":1,"workload_name":..,"n_pus":..,"staged":..,
//! "parallel_transfers":..}`; every
//! following line is one event
//! `{"seq":..,"kind":..,"pu":..,"bytes":..,"cycles":..,"depends_on":[..]}`.

use std::fmt;
use std::io::{BufRead, Write};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::workloads::{CommKind, WorkloadDescriptor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "H2D_XFER")]
    H2dXfer,
    #[serde(rename = "D2H_XFER")]
    D2hXfer,
    #[serde(rename = "KERNEL_EXEC")]
    KernelExec,
    #[serde(rename = "BARRIER")]
    Barrier,
    #[serde(rename = "INTER_PU_XFER")]
    InterPuXfer,
    /// PU-to-PU copy kept inside one CXL device (produced by device assist).
    #[serde(rename = "DEVICE_XFER")]
    DeviceXfer,
}

impl EventKind {
    pub fn is_transfer(self) -> bool {
        !matches!(self, EventKind::KernelExec | EventKind::Barrier)
    }
}

/// Target of an event: one PU, or every PU (barriers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PuRef {
    Pu(u32),
    All,
}

impl PuRef {
    pub fn index(self) -> Option<u32> {
        match self {
            PuRef::Pu(p) => Some(p),
            PuRef::All => None,
        }
    }
}

impl Serialize for PuRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PuRef::Pu(p) => s.serialize_u32(*p),
            PuRef::All => s.serialize_str("ALL"),
        }
    }
}

impl<'de> Deserialize<'de> for PuRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct PuVisitor;
        impl Visitor<'_> for PuVisitor {
            type Value = PuRef;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a PU index or \"ALL\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<PuRef, E> {
                u32::try_from(v)
                    .map(PuRef::Pu)
                    .map_err(|_| E::custom("pu index out of range"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<PuRef, E> {
                if v == "ALL" {
                    Ok(PuRef::All)
                } else {
                    Err(E::custom(format!("invalid pu `{v}`")))
                }
            }
        }
        d.deserialize_any(PuVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub pu: PuRef,
    pub bytes: u64,
    pub cycles: u64,
    pub depends_on: Vec<u64>,
}

/// Trace-wide properties recorded in the header line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMeta {
    pub workload_name: String,
    pub n_pus: u32,
    /// Recorded for explicit host staging (as opposed to unified addressing).
    pub staged: bool,
    /// Per-PU transfers were issued as one parallel batch.
    pub parallel_transfers: bool,
}

impl TraceMeta {
    pub fn new(workload_name: impl Into<String>, n_pus: u32) -> Self {
        TraceMeta {
            workload_name: workload_name.into(),
            n_pus,
            staged: true,
            parallel_transfers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    workload_name: String,
    n_pus: u32,
    staged: bool,
    parallel_transfers: bool,
}

impl Header {
    fn from_meta(m: &TraceMeta) -> Self {
        Header {
            format_version: FORMAT_VERSION,
            workload_name: m.workload_name.clone(),
            n_pus: m.n_pus,
            staged: m.staged,
            parallel_transfers: m.parallel_transfers,
        }
    }

    fn into_meta(self) -> TraceMeta {
        TraceMeta {
            workload_name: self.workload_name,
            n_pus: self.n_pus,
            staged: self.staged,
            parallel_transfers: self.parallel_transfers,
        }
    }
}

/// An ordered, validated event list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    meta: TraceMeta,
    events: Vec<TraceEvent>,
}

impl Trace {
    /// Builds a trace, checking every structural invariant.
    pub fn new(meta: TraceMeta, events: Vec<TraceEvent>) -> Result<Self> {
        let n_pus = meta.n_pus;
        let trace = Trace { meta, events };
        for (i, e) in trace.events.iter().enumerate() {
            trace
                .check_event(i, e)
                .map_err(|m| Error::InvalidTrace(format!("event seq {}: {m}", e.seq)))?;
        }
        if n_pus == 0 {
            return Err(Error::InvalidTrace("n_pus must be ≥ 1".into()));
        }
        Ok(trace)
    }

    fn check_event(&self, index: usize, e: &TraceEvent) -> std::result::Result<(), String> {
        if index > 0 && e.seq <= self.events[index - 1].seq {
            return Err("seq not strictly increasing".into());
        }
        let earlier = &self.events[..index];
        let mut prev = None;
        for &d in &e.depends_on {
            if prev.is_some_and(|p| d <= p) {
                return Err("depends_on must be strictly increasing".into());
            }
            prev = Some(d);
            if earlier.binary_search_by_key(&d, |x| x.seq).is_err() {
                return Err(format!("dangling dependency {d}"));
            }
        }
        match (e.kind, e.pu) {
            (EventKind::Barrier, PuRef::All) => {}
            (EventKind::Barrier, _) => return Err("BARRIER must target ALL".into()),
            (_, PuRef::All) => return Err("only BARRIER may target ALL".into()),
            (_, PuRef::Pu(p)) if p >= self.meta.n_pus => {
                return Err(format!("pu {p} out of range (n_pus = {})", self.meta.n_pus))
            }
            _ => {}
        }
        match e.kind {
            EventKind::KernelExec | EventKind::Barrier if e.bytes != 0 => {
                Err("bytes must be 0".into())
            }
            EventKind::KernelExec => Ok(()),
            _ if e.cycles != 0 => Err("cycles only apply to KERNEL_EXEC".into()),
            _ => Ok(()),
        }
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn workload_name(&self) -> &str {
        &self.meta.workload_name
    }

    pub fn n_pus(&self) -> u32 {
        self.meta.n_pus
    }

    pub fn staged(&self) -> bool {
        self.meta.staged
    }

    pub fn parallel_transfers(&self) -> bool {
        self.meta.parallel_transfers
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }

    /// Total bytes over events of `kind`.
    pub fn bytes_of(&self, kind: EventKind) -> u64 {
        self.events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.bytes)
            .sum()
    }

    pub fn count_of(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Splits `total` over `n` parts: ceiling-sized chunks, remainder on the last.
pub fn partition(total: u64, n: u32) -> Vec<u64> {
    let n64 = n as u64;
    let chunk = total.div_ceil(n64);
    (0..n64)
        .map(|i| total.saturating_sub(i * chunk).min(chunk))
        .collect()
}

/// Expands a workload into one batch of per-PU events.
///
/// Staged and unified traces carry the same events and volumes; the flag
/// only records which dataflow the trace was recorded for.
pub fn generate_trace(w: &WorkloadDescriptor, n_pus: u32, staged: bool) -> Result<Trace> {
    if n_pus == 0 {
        return Err(Error::InvalidArgument("n_pus must be ≥ 1".into()));
    }
    w.validate()?;
    if w.input_bytes == 0 && w.total_cycles() == 0 {
        return Err(Error::InvalidWorkload {
            name: w.name.clone(),
            message: "empty workload: no input and no compute".into(),
        });
    }

    let mut events: Vec<TraceEvent> = Vec::new();
    let mut push = |kind, pu, bytes, cycles, depends_on: Vec<u64>| -> u64 {
        let seq = events.len() as u64;
        events.push(TraceEvent {
            seq,
            kind,
            pu,
            bytes,
            cycles,
            depends_on,
        });
        seq
    };

    let inputs = partition(w.input_bytes, n_pus);
    let outputs = partition(w.effective_output_bytes(), n_pus);

    let h2d: Vec<Option<u64>> = if w.input_bytes > 0 {
        inputs
            .iter()
            .enumerate()
            .map(|(p, &b)| Some(push(EventKind::H2dXfer, PuRef::Pu(p as u32), b, 0, vec![])))
            .collect()
    } else {
        vec![None; n_pus as usize]
    };

    let mut last: Vec<u64> = inputs
        .iter()
        .enumerate()
        .map(|(p, &b)| {
            let cycles = (b as f64 * w.compute_cycles_per_input_byte).round() as u64;
            let deps = h2d[p].into_iter().collect();
            push(EventKind::KernelExec, PuRef::Pu(p as u32), 0, cycles, deps)
        })
        .collect();

    if n_pus >= 2 && w.comm.kind != CommKind::None {
        for round in 0..w.comm.rounds {
            let senders: Vec<u32> = match w.comm.kind {
                CommKind::AllSyncRounds => (0..n_pus).collect(),
                CommKind::ReductionTree => {
                    let stride = 1u64 << round.min(40);
                    (0..n_pus)
                        .filter(|&p| (p as u64) % (2 * stride) == stride)
                        .collect()
                }
                CommKind::None => unreachable!(),
            };
            if senders.is_empty() {
                break;
            }
            let xfers: Vec<u64> = senders
                .iter()
                .map(|&p| {
                    push(
                        EventKind::InterPuXfer,
                        PuRef::Pu(p),
                        w.comm.bytes_per_pu_per_round,
                        0,
                        vec![last[p as usize]],
                    )
                })
                .collect();
            let mut deps = xfers;
            // non-participants still gate the barrier
            if w.comm.kind == CommKind::ReductionTree {
                deps.extend(last.iter().copied());
                deps.sort_unstable();
                deps.dedup();
            }
            let barrier = push(EventKind::Barrier, PuRef::All, 0, 0, deps);
            last.iter_mut().for_each(|l| *l = barrier);
        }
    }

    if w.effective_output_bytes() > 0 {
        for (p, &b) in outputs.iter().enumerate() {
            push(EventKind::D2hXfer, PuRef::Pu(p as u32), b, 0, vec![last[p]]);
        }
    }

    let meta = TraceMeta {
        workload_name: w.name.clone(),
        n_pus,
        staged,
        parallel_transfers: w.transfer_parallelizable,
    };
    Trace::new(meta, events)
}

/// Writes the canonical newline-delimited JSON form.
pub fn write_trace<W: Write>(t: &Trace, mut sink: W) -> Result<()> {
    let header = Header::from_meta(&t.meta);
    serde_json::to_writer(&mut sink, &header).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    for e in &t.events {
        serde_json::to_writer(&mut sink, e).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn trace_to_string(t: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(t, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Parses a trace, rejecting malformed lines and invariant violations.
pub fn parse_trace<R: BufRead>(stream: R) -> Result<Trace> {
    let mut lines = stream.lines().enumerate();
    let header: Header = match lines.next() {
        None => {
            return Err(Error::TraceParse {
                line: 1,
                message: "missing header".into(),
            })
        }
        Some((i, line)) => serde_json::from_str(&line?).map_err(|e| Error::TraceParse {
            line: i + 1,
            message: format!("malformed header: {e}"),
        })?,
    };
    if header.format_version != FORMAT_VERSION {
        return Err(Error::TraceParse {
            line: 1,
            message: format!("unsupported format_version {}", header.format_version),
        });
    }
    if header.n_pus == 0 {
        return Err(Error::TraceParse {
            line: 1,
            message: "n_pus must be ≥ 1".into(),
        });
    }

    let mut partial = Trace {
        meta: header.into_meta(),
        events: Vec::new(),
    };
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        let event: TraceEvent = serde_json::from_str(&line).map_err(|e| Error::TraceParse {
            line: lineno,
            message: format!("malformed record: {e}"),
        })?;
        partial
            .check_event(partial.events.len(), &event)
            .map_err(|message| Error::TraceParse {
                line: lineno,
                message,
            })?;
        partial.events.push(event);
    }
    Ok(partial)
}

pub fn parse_trace_str(text: &str) -> Result<Trace> {
    parse_trace(text.as_bytes())
}
