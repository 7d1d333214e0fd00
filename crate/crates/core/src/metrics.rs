//! Aggregation of timed events into breakdowns, ratios and report files.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{span, Component, TimedEvent};
use crate::error::{Error, Result};
use crate::trace::EventKind;
use crate::units::{bytes_time_ps, Picos};
use crate::workloads::WorkloadDescriptor;

/// Digits after the decimal point for ratios in CSV output.
pub const RATIO_DECIMALS: usize = 6;

/// Four-bucket time breakdown of one run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimReport {
    pub workload: String,
    pub arch: String,
    pub n_pus: u32,
    /// Makespan of the whole run.
    pub total_ps: Picos,
    pub host_pim_ps: Picos,
    pub pim_exec_ps: Picos,
    pub pim_host_ps: Picos,
    pub inter_pim_ps: Picos,
    /// Wall time during which at least one transfer is in flight.
    pub transfer_time_ps: Picos,
    /// Longest per-PU kernel time, i.e. the run with free data movement.
    pub pim_ideal_ps: Picos,
}

impl SimReport {
    pub fn with_labels(mut self, workload: &str, arch: &str, n_pus: u32) -> Self {
        self.workload = workload.to_string();
        self.arch = arch.to_string();
        self.n_pus = n_pus;
        self
    }

    pub fn bucket(&self, c: Component) -> Picos {
        match c {
            Component::HostPim => self.host_pim_ps,
            Component::PimExec => self.pim_exec_ps,
            Component::PimHost => self.pim_host_ps,
            Component::InterPim => self.inter_pim_ps,
        }
    }

    pub fn busy_total(&self) -> Picos {
        self.host_pim_ps + self.pim_exec_ps + self.pim_host_ps + self.inter_pim_ps
    }

    pub fn transfer_busy(&self) -> Picos {
        self.host_pim_ps + self.pim_host_ps + self.inter_pim_ps
    }

    /// Share of busy time spent in one bucket.
    pub fn share(&self, c: Component) -> Result<f64> {
        let total = self.busy_total();
        if total == 0 {
            return Err(Error::InvalidArgument("report has no busy time".into()));
        }
        Ok(self.bucket(c) as f64 / total as f64)
    }
}

/// Summed length of the union of half-open intervals.
fn union_length(mut intervals: Vec<(Picos, Picos)>) -> Picos {
    intervals.sort_unstable();
    let mut total = 0;
    let mut cur: Option<(Picos, Picos)> = None;
    for (s, e) in intervals {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        total += ce - cs;
    }
    total
}

/// Aggregates a timeline. Labels are left empty; see [`SimReport::with_labels`].
pub fn breakdown(events: &[TimedEvent]) -> Result<SimReport> {
    let total = span(events.iter().map(|e| (e.start, e.end)))
        .ok_or_else(|| Error::InvalidArgument("breakdown of an empty event list".into()))?;
    let mut r = SimReport {
        total_ps: total,
        ..SimReport::default()
    };
    let mut exec_per_pu: BTreeMap<u32, Picos> = BTreeMap::new();
    let mut transfers = Vec::new();
    for e in events {
        let d = e.duration();
        match e.component {
            Component::HostPim => r.host_pim_ps += d,
            Component::PimExec => r.pim_exec_ps += d,
            Component::PimHost => r.pim_host_ps += d,
            Component::InterPim => r.inter_pim_ps += d,
        }
        if e.component.is_transfer() {
            transfers.push((e.start, e.end));
        }
        if e.event.kind == EventKind::KernelExec {
            if let Some(p) = e.event.pu.index() {
                *exec_per_pu.entry(p).or_default() += d;
            }
        }
    }
    r.transfer_time_ps = union_length(transfers);
    r.pim_ideal_ps = exec_per_pu.values().copied().max().unwrap_or(0);
    Ok(r)
}

/// Transfer buckets over all buckets, on busy time. The headline ratio.
pub fn transfer_ratio(r: &SimReport) -> Result<f64> {
    let total = r.busy_total();
    if total == 0 || r.total_ps == 0 {
        return Err(Error::InvalidArgument(
            "transfer ratio of a zero-time report".into(),
        ));
    }
    Ok(r.transfer_busy() as f64 / total as f64)
}

/// Transfer wall time over makespan.
pub fn transfer_ratio_makespan(r: &SimReport) -> Result<f64> {
    if r.total_ps == 0 {
        return Err(Error::InvalidArgument(
            "transfer ratio of a zero-time report".into(),
        ));
    }
    Ok(r.transfer_time_ps as f64 / r.total_ps as f64)
}

/// Divides every element by `baseline`.
pub fn normalize(series: &[f64], baseline: f64) -> Result<Vec<f64>> {
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "normalization baseline must be positive, got {baseline}"
        )));
    }
    Ok(series.iter().map(|x| x / baseline).collect())
}

pub fn pim_ideal(r: &SimReport) -> Picos {
    r.pim_ideal_ps
}

/// Host-only run time: dataset size over the calibrated CPU throughput.
pub fn cpu_baseline_time(w: &WorkloadDescriptor) -> Result<Picos> {
    if w.cpu_baseline_throughput_bps == 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: cpu baseline throughput must be > 0",
            w.name
        )));
    }
    Ok(bytes_time_ps(
        w.dataset_bytes,
        w.cpu_baseline_throughput_bps,
    ))
}

/// One workload under one architecture across a PU grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<(u32, SimReport)>,
    pub baseline: String,
}

impl SweepResult {
    pub fn new(baseline: impl Into<String>) -> Self {
        SweepResult {
            points: Vec::new(),
            baseline: baseline.into(),
        }
    }

    /// Appends a point, keeping PU counts strictly increasing and the
    /// workload fixed.
    pub fn push(&mut self, r: SimReport) -> Result<()> {
        if let Some((n, last)) = self.points.last() {
            if r.n_pus <= *n {
                return Err(Error::InvalidArgument(format!(
                    "sweep point {} after {n}",
                    r.n_pus
                )));
            }
            if r.workload != last.workload {
                return Err(Error::InvalidArgument(format!(
                    "sweep mixes {} and {}",
                    last.workload, r.workload
                )));
            }
        }
        self.points.push((r.n_pus, r));
        Ok(())
    }

    /// Transfer times across the grid, divided by the first point's.
    pub fn normalized_transfer_times(&self) -> Result<Vec<f64>> {
        let series: Vec<f64> = self
            .points
            .iter()
            .map(|(_, r)| r.transfer_time_ps as f64)
            .collect();
        let base = series.first().copied().unwrap_or(0.0);
        normalize(&series, base)
    }
}

/// Row layout shared by the CSV and JSON writers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub workload: String,
    pub arch: String,
    pub n_pus: u32,
    pub total_ps: Picos,
    pub host_pim_ps: Picos,
    pub pim_exec_ps: Picos,
    pub pim_host_ps: Picos,
    pub inter_pim_ps: Picos,
    pub transfer_ratio_busy: f64,
    pub transfer_ratio_makespan: f64,
}

pub const CSV_COLUMNS: [&str; 10] = [
    "workload",
    "arch",
    "n_pus",
    "total_ps",
    "host_pim_ps",
    "pim_exec_ps",
    "pim_host_ps",
    "inter_pim_ps",
    "transfer_ratio_busy",
    "transfer_ratio_makespan",
];

impl ReportRow {
    pub fn from_report(r: &SimReport) -> Result<Self> {
        Ok(ReportRow {
            workload: r.workload.clone(),
            arch: r.arch.clone(),
            n_pus: r.n_pus,
            total_ps: r.total_ps,
            host_pim_ps: r.host_pim_ps,
            pim_exec_ps: r.pim_exec_ps,
            pim_host_ps: r.pim_host_ps,
            inter_pim_ps: r.inter_pim_ps,
            transfer_ratio_busy: transfer_ratio(r)?,
            transfer_ratio_makespan: transfer_ratio_makespan(r)?,
        })
    }
}

/// An extra trailing column, one value per report.
#[derive(Debug, Clone, Copy)]
pub struct ExtraColumn<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

fn check_extra(extra: Option<ExtraColumn>, n: usize) -> Result<()> {
    match extra {
        Some(c) if c.values.len() != n => Err(Error::InvalidArgument(format!(
            "column {} has {} values for {n} rows",
            c.name,
            c.values.len()
        ))),
        _ => Ok(()),
    }
}

/// Writes `# `-prefixed header lines, the column row, then one row per report.
pub fn write_csv<W: Write>(out: &mut W, header: &[String], reports: &[SimReport]) -> Result<()> {
    write_csv_with(out, header, reports, None)
}

/// [`write_csv`] with an optional column appended after the fixed ones.
pub fn write_csv_with<W: Write>(
    out: &mut W,
    header: &[String],
    reports: &[SimReport],
    extra: Option<ExtraColumn>,
) -> Result<()> {
    check_extra(extra, reports.len())?;
    for line in header {
        writeln!(out, "# {line}")?;
    }
    write!(out, "{}", CSV_COLUMNS.join(","))?;
    if let Some(c) = extra {
        write!(out, ",{}", c.name)?;
    }
    writeln!(out)?;
    for (i, r) in reports.iter().enumerate() {
        let row = ReportRow::from_report(r)?;
        write!(
            out,
            "{},{},{},{},{},{},{},{},{:.prec$},{:.prec$}",
            row.workload,
            row.arch,
            row.n_pus,
            row.total_ps,
            row.host_pim_ps,
            row.pim_exec_ps,
            row.pim_host_ps,
            row.inter_pim_ps,
            row.transfer_ratio_busy,
            row.transfer_ratio_makespan,
            prec = RATIO_DECIMALS
        )?;
        if let Some(c) = extra {
            write!(out, ",{:.prec$}", c.values[i], prec = RATIO_DECIMALS)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// JSON mirror of [`write_csv`]: `{"provenance": [..], "rows": [..]}`.
pub fn write_json<W: Write>(out: &mut W, header: &[String], reports: &[SimReport]) -> Result<()> {
    write_json_with(out, header, reports, None, None)
}

/// [`write_json`] with an optional per-row column and an optional `summary`
/// object placed after the rows.
pub fn write_json_with<W: Write>(
    out: &mut W,
    header: &[String],
    reports: &[SimReport],
    extra: Option<ExtraColumn>,
    summary: Option<serde_json::Value>,
) -> Result<()> {
    check_extra(extra, reports.len())?;
    let mut rows = Vec::with_capacity(reports.len());
    for (i, r) in reports.iter().enumerate() {
        let row = serde_json::to_value(ReportRow::from_report(r)?)
            .map_err(|e| Error::InvalidArgument(format!("json encoding failed: {e}")))?;
        let serde_json::Value::Object(mut obj) = row else {
            unreachable!("rows serialize as objects")
        };
        if let Some(c) = extra {
            obj.insert(c.name.to_string(), c.values[i].into());
        }
        rows.push(serde_json::Value::Object(obj));
    }
    let mut doc = serde_json::Map::new();
    doc.insert("provenance".into(), header.into());
    doc.insert("rows".into(), rows.into());
    if let Some(s) = summary {
        doc.insert("summary".into(), s);
    }
    serde_json::to_writer_pretty(&mut *out, &doc)
        .map_err(|e| Error::InvalidArgument(format!("json encoding failed: {e}")))?;
    writeln!(out)?;
    Ok(())
}
