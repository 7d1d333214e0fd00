//! Maps trace events onto the resources of each architecture and prices them.
//!
//! DIMM-PIM resources: one staging lane per rank (`rank{r}`), a single host
//! copy engine (`host.xfer`) used by serialized and host-mediated copies, and
//! one processor per PU. CXL-PIM resources, per device `d`: the two link
//! directions (`cxl{d}.link.h2d`, `cxl{d}.link.d2h`) and the device memory
//! (`cxl{d}.mem`), plus one processor per PU.

use std::collections::BTreeSet;

use crate::config::{ArchVariant, BaseArch, ValidatedConfig};
use crate::engine::{
    makespan, schedule, Component, Job, ResourceId, ResourceTable, ServiceModel, TimedEvent,
};
use crate::error::{Error, Result};
use crate::metrics::{breakdown, SimReport};
use crate::trace::{generate_trace, partition, EventKind, Trace, TraceEvent};
use crate::units::{bytes_time_ps, cycles_time_ps, ns_to_ps, Picos};
use crate::workloads::{CommKind, WorkloadDescriptor};

/// Granule at which per-access latency is charged.
pub const ACCESS_BYTES: u64 = 64;

/// Assignment of PUs to CXL devices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    device_of_pu: Vec<u32>,
    n_devices: u32,
}

/// How PUs are spread over devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementPolicy {
    /// Every PU on device 0.
    Colocate,
    /// PU `p` on device `p mod K`.
    Stripe,
}

impl PlacementPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "colocate" => Ok(PlacementPolicy::Colocate),
            "stripe" => Ok(PlacementPolicy::Stripe),
            _ => Err(Error::InvalidArgument(format!(
                "unknown placement `{s}` (expected colocate or stripe)"
            ))),
        }
    }

    /// Communicating workloads keep their PUs together; the rest spread out.
    pub fn for_workload(w: &WorkloadDescriptor) -> Self {
        if w.comm.kind == CommKind::None {
            PlacementPolicy::Stripe
        } else {
            PlacementPolicy::Colocate
        }
    }
}

impl Placement {
    pub fn new(device_of_pu: Vec<u32>, n_devices: u32) -> Result<Self> {
        if n_devices == 0 {
            return Err(Error::InvalidArgument("placement needs ≥ 1 device".into()));
        }
        if let Some(d) = device_of_pu.iter().find(|&&d| d >= n_devices) {
            return Err(Error::InvalidArgument(format!(
                "placement uses device {d} of {n_devices}"
            )));
        }
        Ok(Placement {
            device_of_pu,
            n_devices,
        })
    }

    pub fn single_device(n_pus: u32) -> Self {
        Placement {
            device_of_pu: vec![0; n_pus as usize],
            n_devices: 1,
        }
    }

    pub fn build(policy: PlacementPolicy, n_pus: u32, n_devices: u32) -> Result<Self> {
        let map = match policy {
            PlacementPolicy::Colocate => vec![0; n_pus as usize],
            PlacementPolicy::Stripe => (0..n_pus).map(|p| p % n_devices.max(1)).collect(),
        };
        Placement::new(map, n_devices)
    }

    pub fn n_pus(&self) -> u32 {
        self.device_of_pu.len() as u32
    }

    pub fn n_devices(&self) -> u32 {
        self.n_devices
    }

    pub fn device_of(&self, pu: u32) -> u32 {
        self.device_of_pu[pu as usize]
    }

    /// Devices holding at least one PU.
    pub fn used_devices(&self) -> BTreeSet<u32> {
        self.device_of_pu.iter().copied().collect()
    }
}

/// Work item of a routed demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Bytes { bytes: u64, bandwidth_bps: u64 },
    Cycles { cycles: u64, clock_hz: u64 },
}

impl Leg {
    fn time(self) -> Picos {
        match self {
            Leg::Bytes {
                bytes,
                bandwidth_bps,
            } => bytes_time_ps(bytes, bandwidth_bps),
            Leg::Cycles { cycles, clock_hz } => cycles_time_ps(cycles, clock_hz),
        }
    }
}

/// A trace event translated into a resource path and a service demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutedDemand {
    pub seq: u64,
    pub path: Vec<ResourceId>,
    pub fixed_ps: Picos,
    pub legs: Vec<Leg>,
    pub component: Component,
}

impl RoutedDemand {
    pub fn duration(&self) -> Picos {
        self.fixed_ps + self.legs.iter().map(|l| l.time()).sum::<Picos>()
    }

    /// Durations of consecutive parts of this demand carrying `amounts`.
    ///
    /// The parts form one continuous stream, so each costs its share of the
    /// undivided duration (fixed latency included) and the parts sum to it
    /// exactly. Parts of a zero-volume demand share it evenly.
    pub fn batch_durations(&self, amounts: &[u64]) -> Vec<Picos> {
        let total = self.duration() as u128;
        let volume: u128 = amounts.iter().map(|&a| a as u128).sum();
        let n = amounts.len() as u128;
        let mut cum = 0u128;
        let mut prev = 0u128;
        amounts
            .iter()
            .enumerate()
            .map(|(b, &a)| {
                cum += a as u128;
                let upto = if volume == 0 {
                    (total * (b as u128 + 1)).div_ceil(n)
                } else {
                    (total * cum).div_ceil(volume)
                };
                let d = upto - prev;
                prev = upto;
                d as Picos
            })
            .collect()
    }

    /// Bytes carried over all legs; a two-hop copy counts its bytes twice.
    pub fn bytes_moved(&self) -> u64 {
        self.legs
            .iter()
            .map(|l| match *l {
                Leg::Bytes { bytes, .. } => bytes,
                Leg::Cycles { .. } => 0,
            })
            .sum()
    }
}

fn component_of(kind: EventKind) -> Component {
    match kind {
        EventKind::H2dXfer => Component::HostPim,
        EventKind::D2hXfer => Component::PimHost,
        EventKind::KernelExec => Component::PimExec,
        EventKind::Barrier | EventKind::InterPuXfer | EventKind::DeviceXfer => Component::InterPim,
    }
}

fn pu_of(e: &TraceEvent) -> Result<u32> {
    e.pu.index()
        .ok_or_else(|| Error::InvalidTrace(format!("event seq {} needs a PU", e.seq)))
}

fn pu_resource(table: &mut ResourceTable, cfg: &ValidatedConfig, pu: u32) -> ResourceId {
    let hz = cfg.pim().pu_clock_hz;
    table.intern(&format!("pu{pu}"), ServiceModel::Processor(hz), 1)
}

fn exec_demand(
    table: &mut ResourceTable,
    cfg: &ValidatedConfig,
    e: &TraceEvent,
) -> Result<RoutedDemand> {
    let pu = pu_of(e)?;
    Ok(RoutedDemand {
        seq: e.seq,
        path: vec![pu_resource(table, cfg, pu)],
        fixed_ps: 0,
        legs: vec![Leg::Cycles {
            cycles: e.cycles,
            clock_hz: cfg.pim().pu_clock_hz,
        }],
        component: Component::PimExec,
    })
}

fn barrier_demand(e: &TraceEvent) -> RoutedDemand {
    RoutedDemand {
        seq: e.seq,
        path: Vec::new(),
        fixed_ps: 0,
        legs: Vec::new(),
        component: Component::InterPim,
    }
}

/// Prices one event on the DIMM-PIM system.
///
/// Batched staging copies stream over the PU's rank lane at the per-rank
/// bandwidth. Serialized copies (`parallel_transfers == false`) are issued
/// one PU at a time by the host, each over a single chip lane, and pay the
/// host dispatch overhead. PU-to-PU data is bounced through host memory.
pub fn route_dimm_pim(
    e: &TraceEvent,
    cfg: &ValidatedConfig,
    parallel_transfers: bool,
    table: &mut ResourceTable,
) -> Result<RoutedDemand> {
    let pim = cfg.pim();
    let beta = pim.host_bandwidth_per_rank_bps;
    let overhead = ns_to_ps(cfg.host().orchestration_overhead_ns);
    let host = table.intern("host.xfer", ServiceModel::Bandwidth(beta), 1);
    let rank = |table: &mut ResourceTable, pu: u32| {
        let r = pu / cfg.pus_per_rank();
        table.intern(&format!("rank{r}"), ServiceModel::Bandwidth(beta), 1)
    };
    match e.kind {
        EventKind::H2dXfer | EventKind::D2hXfer => {
            let pu = pu_of(e)?;
            let lane = rank(table, pu);
            let (path, fixed_ps, bw) = if parallel_transfers {
                (vec![lane], 0, beta)
            } else {
                let chip_bw = (beta / pim.chips_per_rank as u64).max(1);
                (vec![host, lane], overhead, chip_bw)
            };
            Ok(RoutedDemand {
                seq: e.seq,
                path,
                fixed_ps,
                legs: vec![Leg::Bytes {
                    bytes: e.bytes,
                    bandwidth_bps: bw,
                }],
                component: component_of(e.kind),
            })
        }
        EventKind::InterPuXfer => {
            let pu = pu_of(e)?;
            let lane = rank(table, pu);
            let hop = Leg::Bytes {
                bytes: e.bytes,
                bandwidth_bps: beta,
            };
            Ok(RoutedDemand {
                seq: e.seq,
                path: vec![host, lane],
                fixed_ps: overhead,
                legs: vec![hop, hop],
                component: Component::InterPim,
            })
        }
        EventKind::KernelExec => exec_demand(table, cfg, e),
        EventKind::Barrier => Ok(barrier_demand(e)),
        EventKind::DeviceXfer => Err(Error::IllegalArch(
            "DEVICE_XFER events exist only on CXL-PIM".into(),
        )),
    }
}

/// Per-device CXL resources.
struct CxlPorts {
    link_h2d: ResourceId,
    link_d2h: ResourceId,
    mem: ResourceId,
}

fn cxl_ports(
    table: &mut ResourceTable,
    cfg: &ValidatedConfig,
    device: u32,
    mem_servers: u32,
) -> CxlPorts {
    let cxl = cfg.cxl();
    let links = cfg.device_parallelism();
    let bw = cxl.link_bandwidth_bps;
    CxlPorts {
        link_h2d: table.intern(
            &format!("cxl{device}.link.h2d"),
            ServiceModel::Bandwidth(bw),
            links,
        ),
        link_d2h: table.intern(
            &format!("cxl{device}.link.d2h"),
            ServiceModel::Bandwidth(bw),
            links,
        ),
        mem: table.intern(
            &format!("cxl{device}.mem"),
            ServiceModel::FixedDelay(cxl.mem_latency_ns),
            mem_servers,
        ),
    }
}

/// Routing context for CXL-PIM runs.
pub struct CxlRoute<'a> {
    pub cfg: &'a ValidatedConfig,
    pub optimized: bool,
    pub parallel_transfers: bool,
    pub placement: &'a Placement,
}

impl CxlRoute<'_> {
    fn mem_servers(&self) -> u32 {
        if self.optimized && self.parallel_transfers {
            self.cfg.device_parallelism()
        } else {
            1
        }
    }

    /// Fixed latency of one link crossing carrying `bytes`.
    fn crossing_latency(&self, bytes: u64) -> Picos {
        let f = self.cfg.fixed_cxl_overhead_ps();
        if self.cfg.cxl().per_access_latency {
            f * bytes.div_ceil(ACCESS_BYTES).max(1)
        } else {
            f
        }
    }
}

/// Prices one event on a CXL-PIM system.
///
/// Host transfers cross the link and occupy the target device's memory.
/// Without device assist a PU-to-PU exchange is read back by the host and
/// written to every device of the group, so it holds the source device's
/// outbound link and the inbound link and memory of each group device.
pub fn route_cxl(
    e: &TraceEvent,
    route: &CxlRoute<'_>,
    table: &mut ResourceTable,
) -> Result<RoutedDemand> {
    let cfg = route.cfg;
    let link_bw = cfg.cxl().link_bandwidth_bps;
    let servers = route.mem_servers();
    match e.kind {
        EventKind::H2dXfer | EventKind::D2hXfer => {
            let pu = pu_of(e)?;
            let ports = cxl_ports(table, cfg, route.placement.device_of(pu), servers);
            let link = if e.kind == EventKind::H2dXfer {
                ports.link_h2d
            } else {
                ports.link_d2h
            };
            Ok(RoutedDemand {
                seq: e.seq,
                path: vec![link, ports.mem],
                fixed_ps: route.crossing_latency(e.bytes),
                legs: vec![Leg::Bytes {
                    bytes: e.bytes,
                    bandwidth_bps: link_bw,
                }],
                component: component_of(e.kind),
            })
        }
        EventKind::InterPuXfer => {
            let pu = pu_of(e)?;
            let own = route.placement.device_of(pu);
            let src = cxl_ports(table, cfg, own, servers);
            let mut path = vec![src.link_d2h, src.mem];
            for d in route.placement.used_devices() {
                let p = cxl_ports(table, cfg, d, servers);
                path.push(p.link_h2d);
                path.push(p.mem);
            }
            path.sort_unstable();
            path.dedup();
            let hop = Leg::Bytes {
                bytes: e.bytes,
                bandwidth_bps: link_bw,
            };
            Ok(RoutedDemand {
                seq: e.seq,
                path,
                fixed_ps: 2 * route.crossing_latency(e.bytes)
                    + ns_to_ps(cfg.host().orchestration_overhead_ns),
                legs: vec![hop, hop],
                component: Component::InterPim,
            })
        }
        EventKind::DeviceXfer => {
            let pu = pu_of(e)?;
            let ports = cxl_ports(table, cfg, route.placement.device_of(pu), servers);
            Ok(RoutedDemand {
                seq: e.seq,
                path: vec![ports.mem],
                fixed_ps: ns_to_ps(cfg.cxl().mem_latency_ns),
                legs: vec![Leg::Bytes {
                    bytes: e.bytes,
                    bandwidth_bps: cfg.device_internal_bandwidth_bps(),
                }],
                component: Component::InterPim,
            })
        }
        EventKind::KernelExec => exec_demand(table, cfg, e),
        EventKind::Barrier => Ok(barrier_demand(e)),
    }
}

/// Routes every event of `t` under `base`.
pub fn route_trace(
    t: &Trace,
    base: BaseArch,
    cfg: &ValidatedConfig,
    placement: &Placement,
) -> Result<(ResourceTable, Vec<RoutedDemand>)> {
    let mut table = ResourceTable::new();
    let route = CxlRoute {
        cfg,
        optimized: base == BaseArch::CxlPimOpt,
        parallel_transfers: t.parallel_transfers(),
        placement,
    };
    let demands = t
        .events()
        .iter()
        .map(|e| match base {
            BaseArch::DimmPim => route_dimm_pim(e, cfg, t.parallel_transfers(), &mut table),
            _ => route_cxl(e, &route, &mut table),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((table, demands))
}

/// Replaces host-mediated PU-to-PU copies with on-device copies when every
/// PU of the trace sits on the same device. Otherwise returns `t` unchanged.
pub fn apply_device_assist(t: &Trace, placement: &Placement) -> Result<Trace> {
    check_placement(t, placement)?;
    if placement.used_devices().len() > 1 {
        return Ok(t.clone());
    }
    let events = t
        .events()
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if e.kind == EventKind::InterPuXfer {
                e.kind = EventKind::DeviceXfer;
            }
            e
        })
        .collect();
    Trace::new(t.meta().clone(), events)
}

/// Splits every event of `t` into `batches` parts.
///
/// Part `b` of an event depends on part `b` of each of its dependencies. A PU
/// executes its parts in order, so each kernel part also waits for the
/// previous part on the same PU. The parts of one event get consecutive
/// sequence numbers, which keeps the relative priority of the original
/// events intact. One batch reproduces `t` exactly.
pub fn split_into_batches(t: &Trace, batches: u32) -> Result<Trace> {
    if batches == 0 {
        return Err(Error::InvalidArgument("batches must be ≥ 1".into()));
    }
    if batches == 1 {
        return Ok(t.clone());
    }
    let events = t.events();
    let nb = batches as u64;
    let index_of = |seq: u64| {
        events
            .binary_search_by_key(&seq, |e| e.seq)
            .expect("validated trace") as u64
    };
    let mut out = Vec::with_capacity(events.len() * batches as usize);
    for (i, e) in events.iter().enumerate() {
        let i = i as u64;
        let bytes = partition(e.bytes, batches);
        let cycles = partition(e.cycles, batches);
        for b in 0..nb {
            let mut deps: Vec<u64> = e.depends_on.iter().map(|&d| index_of(d) * nb + b).collect();
            if e.kind == EventKind::KernelExec && b > 0 {
                deps.push(i * nb + b - 1);
            }
            deps.sort_unstable();
            out.push(TraceEvent {
                seq: i * nb + b,
                kind: e.kind,
                pu: e.pu,
                bytes: bytes[b as usize],
                cycles: cycles[b as usize],
                depends_on: deps,
            });
        }
    }
    Trace::new(t.meta().clone(), out)
}

/// Runs `t` under `arch` with `batches`-way pipelining.
pub fn pipeline_schedule(
    t: &Trace,
    batches: u32,
    arch: &ArchVariant,
    cfg: &ValidatedConfig,
) -> Result<Vec<TimedEvent>> {
    let variant = ArchVariant {
        pipeline_batches: Some(batches),
        ..*arch
    };
    simulate_with_placement(t, &variant, cfg, &Placement::single_device(t.n_pus()))
}

fn check_placement(t: &Trace, placement: &Placement) -> Result<()> {
    if placement.n_pus() != t.n_pus() {
        return Err(Error::InvalidArgument(format!(
            "placement covers {} PUs, trace has {}",
            placement.n_pus(),
            t.n_pus()
        )));
    }
    Ok(())
}

/// Applies the variant's extensions, routes and schedules `t`.
///
/// With `B` pipeline batches the host runs the batch count in `1..=B` that
/// finishes first, preferring more batches on ties. A fixed split can lose
/// to a coarser one (rounding on runs batching cannot speed up, or greedy
/// packing that stages one PU's parts side by side); see
/// [`batched_schedule`] for the raw run at a given count.
pub fn simulate_with_placement(
    t: &Trace,
    arch: &ArchVariant,
    cfg: &ValidatedConfig,
    placement: &Placement,
) -> Result<Vec<TimedEvent>> {
    arch.check()?;
    check_placement(t, placement)?;
    if t.n_pus() > cfg.total_pus() {
        return Err(Error::InvalidTrace(format!(
            "trace uses {} PUs, the system has {}",
            t.n_pus(),
            cfg.total_pus()
        )));
    }
    if arch.base.is_cxl() {
        if placement.n_devices() > cfg.cxl().devices {
            return Err(Error::InvalidArgument(format!(
                "placement spans {} devices, cxl.devices = {}",
                placement.n_devices(),
                cfg.cxl().devices
            )));
        }
        let per_device = cfg.cxl().max_pus as usize;
        let busiest = placement
            .used_devices()
            .into_iter()
            .map(|d| placement.device_of_pu.iter().filter(|&&x| x == d).count())
            .max()
            .unwrap_or(0);
        if busiest > per_device {
            log::warn!(
                "{busiest} PUs on one CXL device exceed cxl.max_pus = {per_device}; \
                 continuing with the requested count"
            );
        }
    } else if t.events().iter().any(|e| e.kind == EventKind::DeviceXfer) {
        return Err(Error::IllegalArch(
            "DEVICE_XFER events exist only on CXL-PIM".into(),
        ));
    }

    let mut best = batched_schedule(t, arch.device_assist, arch.base, 1, cfg, placement)?;
    let limit = match arch.pipeline_batches {
        Some(b) if !best.is_empty() => b,
        _ => return Ok(best),
    };
    let mut best_span = makespan(&best)?;
    let mut chosen = 1;
    for c in 2..=limit {
        let run = batched_schedule(t, arch.device_assist, arch.base, c, cfg, placement)?;
        let span = makespan(&run)?;
        if span <= best_span {
            best = run;
            best_span = span;
            chosen = c;
        }
    }
    if chosen != limit {
        log::debug!(
            "{}: running {chosen} of up to {limit} batches",
            t.workload_name()
        );
    }
    Ok(best)
}

/// Routes and schedules `t` split into `batches` parts per event, without
/// the variant checks or the batch-count search of [`simulate_with_placement`].
pub fn batched_schedule(
    t: &Trace,
    device_assist: bool,
    base: BaseArch,
    batches: u32,
    cfg: &ValidatedConfig,
    placement: &Placement,
) -> Result<Vec<TimedEvent>> {
    if batches == 0 {
        return Err(Error::InvalidArgument("batches must be ≥ 1".into()));
    }
    let trace = if device_assist {
        apply_device_assist(t, placement)?
    } else {
        t.clone()
    };

    // Batches are priced from the unsplit demands so that the parts of an
    // event sum to its unbatched duration.
    let (table, demands) = route_trace(&trace, base, cfg, placement)?;
    let per_batch: Vec<Vec<Picos>> = trace
        .events()
        .iter()
        .zip(&demands)
        .map(|(e, d)| {
            let amount = if e.kind == EventKind::KernelExec {
                e.cycles
            } else {
                e.bytes
            };
            d.batch_durations(&partition(amount, batches))
        })
        .collect();
    let trace = split_into_batches(&trace, batches)?;
    let nb = batches as usize;
    let jobs: Vec<Job> = trace
        .events()
        .iter()
        .enumerate()
        .map(|(k, e)| Job {
            seq: e.seq,
            deps: e.depends_on.clone(),
            resources: demands[k / nb].path.clone(),
            duration: per_batch[k / nb][k % nb],
        })
        .collect();
    let slots = schedule(table.as_slice(), &jobs)?;
    Ok(trace
        .into_events()
        .into_iter()
        .zip(slots)
        .enumerate()
        .map(|(k, (event, s))| TimedEvent {
            event,
            start: s.start,
            end: s.end,
            component: demands[k / nb].component,
            resources: demands[k / nb].path.clone(),
        })
        .collect())
}

/// Generates `w` on `placement.n_pus()` PUs and runs it under `arch`.
pub fn simulate_workload(
    w: &WorkloadDescriptor,
    arch: &ArchVariant,
    cfg: &ValidatedConfig,
    placement: &Placement,
) -> Result<Vec<TimedEvent>> {
    let t = generate_trace(w, placement.n_pus(), !arch.base.is_cxl())?;
    simulate_with_placement(&t, arch, cfg, placement)
}

/// Runs `w` with the given placement and summarizes the run.
pub fn evaluate_placement(
    w: &WorkloadDescriptor,
    placement: &Placement,
    arch: &ArchVariant,
    cfg: &ValidatedConfig,
) -> Result<SimReport> {
    let events = simulate_workload(w, arch, cfg, placement)?;
    Ok(breakdown(&events)?.with_labels(&w.name, &arch.label(), placement.n_pus()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, SystemConfig};
    use crate::engine::makespan;
    use crate::trace::{PuRef, TraceMeta};

    fn cfg() -> ValidatedConfig {
        validate_config(SystemConfig::default()).unwrap()
    }

    fn ev(seq: u64, kind: EventKind, pu: u32, bytes: u64, deps: Vec<u64>) -> TraceEvent {
        TraceEvent {
            seq,
            kind,
            pu: PuRef::Pu(pu),
            bytes,
            cycles: 0,
            depends_on: deps,
        }
    }

    fn trace(n_pus: u32, parallel: bool, events: Vec<TraceEvent>) -> Trace {
        let mut meta = TraceMeta::new("T", n_pus);
        meta.parallel_transfers = parallel;
        Trace::new(meta, events).unwrap()
    }

    fn run(t: &Trace, arch: ArchVariant) -> Vec<TimedEvent> {
        crate::engine::simulate(t, &arch, &cfg()).unwrap()
    }

    #[test]
    fn single_64b_transfer_costs_fixed_plus_one_ns() {
        let t = trace(1, true, vec![ev(0, EventKind::H2dXfer, 0, 64, vec![])]);
        for base in [BaseArch::CxlPimOpt, BaseArch::CxlPimUnopt] {
            let out = run(&t, ArchVariant::plain(base));
            assert_eq!(out[0].duration(), 251_000);
        }
    }

    #[test]
    fn unoptimized_device_serializes_transfers() {
        let t = trace(
            2,
            true,
            vec![
                ev(0, EventKind::H2dXfer, 0, 64, vec![]),
                ev(1, EventKind::H2dXfer, 1, 64, vec![]),
            ],
        );
        let unopt = makespan(&run(&t, ArchVariant::plain(BaseArch::CxlPimUnopt))).unwrap();
        let opt = makespan(&run(&t, ArchVariant::plain(BaseArch::CxlPimOpt))).unwrap();
        assert_eq!(unopt, 502_000);
        assert_eq!(opt, 251_000);
    }

    #[test]
    fn dimm_inter_pu_copy_goes_through_host() {
        let mut c = SystemConfig::default();
        c.pim.host_bandwidth_per_rank_bps = 2_000_000_000;
        c.host.orchestration_overhead_ns = 0;
        let cfg = validate_config(c).unwrap();
        let mut table = ResourceTable::new();
        let e = ev(0, EventKind::InterPuXfer, 3, 1024, vec![]);
        let d = route_dimm_pim(&e, &cfg, true, &mut table).unwrap();
        assert_eq!(d.duration(), 1_024_000);
        assert_eq!(d.bytes_moved(), 2048);
        // 1 KiB each way at 2 GB/s is 1.024 us; the dispatch overhead adds on top.
        let mut c = cfg.config().clone();
        c.host.orchestration_overhead_ns = 1_000;
        let cfg = validate_config(c).unwrap();
        let d = route_dimm_pim(&e, &cfg, true, &mut ResourceTable::new()).unwrap();
        assert_eq!(d.duration(), 2_024_000);
    }

    #[test]
    fn cxl_inter_pu_copy_crosses_the_link_twice() {
        let cfg = cfg();
        let p = Placement::single_device(2);
        let route = CxlRoute {
            cfg: &cfg,
            optimized: true,
            parallel_transfers: true,
            placement: &p,
        };
        let e = ev(0, EventKind::InterPuXfer, 1, 64, vec![]);
        let d = route_cxl(&e, &route, &mut ResourceTable::new()).unwrap();
        assert_eq!(d.duration(), 2 * 251_000 + 1_000_000);
    }

    #[test]
    fn per_access_latency_scales_with_granules() {
        let mut c = SystemConfig::default();
        c.cxl.per_access_latency = true;
        let cfg = validate_config(c).unwrap();
        let t = trace(1, true, vec![ev(0, EventKind::H2dXfer, 0, 256, vec![])]);
        let out =
            crate::engine::simulate(&t, &ArchVariant::plain(BaseArch::CxlPimOpt), &cfg).unwrap();
        assert_eq!(out[0].duration(), 4 * 250_000 + 4_000);
    }

    #[test]
    fn serialized_dimm_transfers_use_one_chip_lane() {
        let cfg = cfg();
        let e = ev(0, EventKind::H2dXfer, 0, 6_400, vec![]);
        let par = route_dimm_pim(&e, &cfg, true, &mut ResourceTable::new()).unwrap();
        let ser = route_dimm_pim(&e, &cfg, false, &mut ResourceTable::new()).unwrap();
        assert_eq!(par.duration(), 1_000_000);
        assert_eq!(ser.duration(), 1_000_000 + 8_000_000);
    }

    #[test]
    fn dimm_rejects_device_copies() {
        let e = ev(0, EventKind::DeviceXfer, 0, 64, vec![]);
        assert!(route_dimm_pim(&e, &cfg(), true, &mut ResourceTable::new()).is_err());
    }

    #[test]
    fn assist_rewrites_only_single_device_groups() {
        let t = trace(
            2,
            true,
            vec![
                ev(0, EventKind::InterPuXfer, 0, 64, vec![]),
                ev(1, EventKind::InterPuXfer, 1, 64, vec![]),
            ],
        );
        let one = apply_device_assist(&t, &Placement::single_device(2)).unwrap();
        assert_eq!(one.count_of(EventKind::DeviceXfer), 2);
        let split = Placement::build(PlacementPolicy::Stripe, 2, 2).unwrap();
        let two = apply_device_assist(&t, &split).unwrap();
        assert_eq!(two, t);
    }

    #[test]
    fn one_batch_is_the_identity() {
        let w = crate::workloads::builtin("MLP").unwrap();
        let t = generate_trace(&w, 4, false).unwrap();
        assert_eq!(split_into_batches(&t, 1).unwrap(), t);
    }

    #[test]
    fn batches_conserve_bytes_and_cycles() {
        let w = crate::workloads::builtin("RED").unwrap();
        let t = generate_trace(&w, 8, false).unwrap();
        let s = split_into_batches(&t, 3).unwrap();
        assert_eq!(s.events().len(), 3 * t.events().len());
        for k in [
            EventKind::H2dXfer,
            EventKind::D2hXfer,
            EventKind::InterPuXfer,
        ] {
            assert_eq!(s.bytes_of(k), t.bytes_of(k));
        }
        let cycles = |t: &Trace| t.events().iter().map(|e| e.cycles).sum::<u64>();
        assert_eq!(cycles(&s), cycles(&t));
    }

    #[test]
    fn pipelining_overlaps_balanced_stages() {
        // N equal batches with transfer time t and compute time t finish in
        // (N + 1) t instead of 2 N t once fixed latencies are zero.
        let mut c = SystemConfig::default();
        c.cxl.switch_delay_ns = 0;
        c.cxl.mem_latency_ns = 0;
        let cfg = validate_config(c).unwrap();
        let n: u32 = 4;
        let bytes_per_batch = 64_000u64;
        let t_ps = bytes_time_ps(bytes_per_batch, cfg.cxl().link_bandwidth_bps);
        let cycles_per_batch = 350; // 1 us at 350 MHz
        assert_eq!(
            t_ps,
            cycles_time_ps(cycles_per_batch, cfg.pim().pu_clock_hz)
        );
        let t = trace(
            1,
            true,
            vec![
                ev(0, EventKind::H2dXfer, 0, bytes_per_batch * n as u64, vec![]),
                TraceEvent {
                    seq: 1,
                    kind: EventKind::KernelExec,
                    pu: PuRef::Pu(0),
                    bytes: 0,
                    cycles: cycles_per_batch * n as u64,
                    depends_on: vec![0],
                },
            ],
        );
        let arch = ArchVariant::plain(BaseArch::CxlPimOpt);
        let plain = makespan(&crate::engine::simulate(&t, &arch, &cfg).unwrap()).unwrap();
        let piped = makespan(&pipeline_schedule(&t, n, &arch, &cfg).unwrap()).unwrap();
        assert_eq!(plain, 2 * n as u64 * t_ps);
        assert_eq!(piped, (n as u64 + 1) * t_ps);
    }

    #[test]
    fn assist_speedup_follows_amdahl() {
        // 40% compute, 60% host-mediated exchange; the on-device copy is 5x
        // faster than the two link crossings it replaces.
        let mut c = SystemConfig::default();
        c.cxl.switch_delay_ns = 0;
        c.cxl.mem_latency_ns = 0;
        c.host.orchestration_overhead_ns = 0;
        c.cxl.device_internal_bandwidth_bps = Some(c.cxl.link_bandwidth_bps * 5 / 2);
        let cfg = validate_config(c).unwrap();
        let exec_ps = 4_000_000u64;
        let cycles = exec_ps * cfg.pim().pu_clock_hz / 1_000_000_000_000;
        let bytes = 192_000; // 2 x 3 us at 64 GB/s
        let t = trace(
            1,
            true,
            vec![
                TraceEvent {
                    seq: 0,
                    kind: EventKind::KernelExec,
                    pu: PuRef::Pu(0),
                    bytes: 0,
                    cycles,
                    depends_on: vec![],
                },
                ev(1, EventKind::InterPuXfer, 0, bytes, vec![0]),
            ],
        );
        let arch = ArchVariant::plain(BaseArch::CxlPimOpt);
        let base = makespan(&crate::engine::simulate(&t, &arch, &cfg).unwrap()).unwrap();
        let assisted =
            makespan(&crate::engine::simulate(&t, &arch.with_device_assist(), &cfg).unwrap())
                .unwrap();
        let expected = 1.0 / (0.4 + 0.6 / 5.0);
        let got = base as f64 / assisted as f64;
        assert!((got - expected).abs() < 1e-3, "{got} vs {expected}");
    }

    #[test]
    fn placement_report_matches_plain_run_for_one_device() {
        let w = crate::workloads::scale_workload(&crate::workloads::builtin("VA").unwrap(), 1e-6)
            .unwrap();
        let arch = ArchVariant::plain(BaseArch::CxlPimOpt);
        let cfg = cfg();
        let r = evaluate_placement(&w, &Placement::single_device(1), &arch, &cfg).unwrap();
        let t = generate_trace(&w, 1, false).unwrap();
        let plain = breakdown(&crate::engine::simulate(&t, &arch, &cfg).unwrap()).unwrap();
        assert_eq!(r.total_ps, plain.total_ps);
        assert_eq!(r.arch, "cxl-opt");
    }

    #[test]
    fn stripe_and_colocate() {
        let s = Placement::build(PlacementPolicy::Stripe, 5, 2).unwrap();
        assert_eq!(
            (0..5).map(|p| s.device_of(p)).collect::<Vec<_>>(),
            vec![0, 1, 0, 1, 0]
        );
        let c = Placement::build(PlacementPolicy::Colocate, 5, 2).unwrap();
        assert_eq!(c.used_devices().len(), 1);
        assert!(Placement::new(vec![0, 2], 2).is_err());
    }

    #[test]
    fn extensions_rejected_on_dimm() {
        let t = trace(1, true, vec![ev(0, EventKind::H2dXfer, 0, 64, vec![])]);
        let arch = ArchVariant::plain(BaseArch::DimmPim).with_pipeline(2);
        assert!(matches!(
            crate::engine::simulate(&t, &arch, &cfg()),
            Err(Error::IllegalArch(_))
        ));
    }
}
