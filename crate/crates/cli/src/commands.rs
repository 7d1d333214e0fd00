use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use nearmem_core::archmodels::{evaluate_placement, simulate_with_placement, Placement};
use nearmem_core::config::{ArchVariant, BaseArch, ValidatedConfig};
use nearmem_core::metrics::{
    breakdown, cpu_baseline_time, write_csv_with, write_json_with, ExtraColumn, SimReport,
    RATIO_DECIMALS,
};
use nearmem_core::trace::{generate_trace, parse_trace, write_trace, EventKind, Trace};
use nearmem_core::units::Picos;
use nearmem_core::workloads::{CommKind, WorkloadDescriptor, BUILTIN_NAMES};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::failure::{ExitKind, Stage};
use crate::setup::{
    arch_variant, customize, file_workload, load_config, named_workload, placement, provenance,
    resolve_workload, workload_line, LoadedConfig,
};
use crate::{
    ArchArg, Cli, Command, CompareArgs, Format, GenTraceArgs, NormalizeTo, Output, RunArgs,
    SweepArgs,
};

const NORMALIZED_COLUMN: &str = "normalized_total";

pub fn dispatch(cli: Cli, args: &[String]) -> Result<()> {
    let config = load_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Run(a) => run(&config, args, a),
        Command::Sweep(a) => sweep(&config, args, a),
        Command::CompareAssist(a) => compare_assist(&config, args, a),
        Command::GenTrace(a) => gen_trace(&config, a),
        Command::ValidateConfig => validate(&config, args),
    }
}

fn exchanges(w: &WorkloadDescriptor) -> bool {
    w.comm.kind != CommKind::None
}

/// Writes `bytes` to `path`, or stdout when no path is given.
fn deliver(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn emit(
    out: &Output,
    header: &[String],
    reports: &[SimReport],
    normalized: Option<&[f64]>,
    summary: Option<Value>,
) -> Result<()> {
    let extra = normalized.map(|values| ExtraColumn {
        name: NORMALIZED_COLUMN,
        values,
    });
    let mut buf = Vec::new();
    match out.format {
        Format::Csv => {
            write_csv_with(&mut buf, header, reports, extra)?;
            if let Some(Value::Object(s)) = &summary {
                for (k, v) in s {
                    match v.as_f64() {
                        Some(x) => writeln!(buf, "# {k}={x:.prec$}", prec = RATIO_DECIMALS)?,
                        None => writeln!(buf, "# {k}={v}")?,
                    }
                }
            }
        }
        Format::Json => write_json_with(&mut buf, header, reports, extra, summary)?,
    }
    deliver(out.output.as_deref(), &buf)
}

fn write_timeline(path: &Path, events: &[nearmem_core::TimedEvent]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn simulate_report(
    trace: &Trace,
    arch: &ArchVariant,
    cfg: &ValidatedConfig,
    p: &Placement,
) -> Result<(SimReport, Vec<nearmem_core::TimedEvent>)> {
    let events = simulate_with_placement(trace, arch, cfg, p)
        .with_context(|| format!("simulating {} on {}", trace.workload_name(), arch.label()))?;
    let report =
        breakdown(&events)?.with_labels(trace.workload_name(), &arch.label(), trace.n_pus());
    Ok((report, events))
}

/// Normalization denominators keyed by (workload, n_pus).
///
/// `dimm-pim` and `best` reuse rows already simulated under the plain
/// architectures and simulate the missing ones.
fn baselines(
    how: NormalizeTo,
    reports: &[SimReport],
    workloads: &HashMap<String, WorkloadDescriptor>,
    cfg: &ValidatedConfig,
) -> Result<HashMap<(String, u32), Picos>> {
    let have: HashMap<(&str, &str, u32), Picos> = reports
        .iter()
        .map(|r| ((r.workload.as_str(), r.arch.as_str(), r.n_pus), r.total_ps))
        .collect();
    let mut keys: Vec<(String, u32)> = reports
        .iter()
        .map(|r| (r.workload.clone(), r.n_pus))
        .collect();
    keys.sort();
    keys.dedup();
    let candidates: &[BaseArch] = match how {
        NormalizeTo::Cpu => &[],
        NormalizeTo::DimmPim => &[BaseArch::DimmPim],
        NormalizeTo::Best => &BaseArch::ALL,
    };
    keys.into_par_iter()
        .map(|(name, n)| {
            let w = &workloads[&name];
            let base = if how == NormalizeTo::Cpu {
                cpu_baseline_time(w)?
            } else {
                let mut best = Picos::MAX;
                for &b in candidates {
                    let total = match have.get(&(name.as_str(), b.name(), n)) {
                        Some(&t) => t,
                        None => {
                            let arch = ArchVariant::plain(b);
                            evaluate_placement(w, &Placement::single_device(n), &arch, cfg)
                                .with_context(|| format!("baseline {name} {} {n}", b.name()))?
                                .total_ps
                        }
                    };
                    best = best.min(total);
                }
                best
            };
            Ok(((name, n), base))
        })
        .collect()
}

fn normalized_column(
    how: Option<NormalizeTo>,
    reports: &[SimReport],
    workloads: &HashMap<String, WorkloadDescriptor>,
    cfg: &ValidatedConfig,
) -> Result<Option<Vec<f64>>> {
    let Some(how) = how else { return Ok(None) };
    let base = baselines(how, reports, workloads, cfg)?;
    let values = reports
        .iter()
        .map(|r| {
            let b = base[&(r.workload.clone(), r.n_pus)];
            if b == 0 {
                anyhow::bail!("{} at {} PUs has a zero baseline", r.workload, r.n_pus);
            }
            Ok(r.total_ps as f64 / b as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(values))
}

fn run(config: &LoadedConfig, args: &[String], a: RunArgs) -> Result<()> {
    let cfg = &config.cfg;
    let arch = arch_variant(a.arch, a.ext.pipeline, a.ext.device_assist)?;
    let (trace, desc) = match &a.trace {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let t = parse_trace(BufReader::new(file))
                .with_context(|| format!("reading trace {}", path.display()))?;
            (t, None)
        }
        None => {
            let w = resolve_workload(&a.source)?;
            let n = a.pus.unwrap_or(cfg.total_pus());
            let t = generate_trace(&w, n, !arch.base.is_cxl())
                .with_context(|| format!("generating {} on {n} PUs", w.name))?;
            (t, Some(w))
        }
    };
    let exchanging = match &desc {
        Some(w) => exchanges(w),
        None => trace.count_of(EventKind::InterPuXfer) > 0,
    };
    let p = placement(
        &arch,
        trace.n_pus(),
        a.ext.devices,
        a.ext.placement,
        exchanging,
        cfg,
    )?;
    let (report, events) = simulate_report(&trace, &arch, cfg, &p)?;
    if let Some(path) = &a.emit_timeline {
        write_timeline(path, &events)?;
    }

    let workloads: HashMap<String, WorkloadDescriptor> =
        desc.iter().map(|w| (w.name.clone(), w.clone())).collect();
    let reports = [report];
    let normalized = normalized_column(a.normalize_to, &reports, &workloads, cfg)?;
    let extra = match &desc {
        Some(w) => vec![workload_line(w)],
        None => vec![format!("trace {}", trace.workload_name())],
    };
    let header = provenance(config, args, extra);
    emit(&a.out, &header, &reports, normalized.as_deref(), None)
}

fn default_grid() -> Vec<u32> {
    (0..=9).map(|k| 1 << k).collect()
}

fn sweep(config: &LoadedConfig, args: &[String], a: SweepArgs) -> Result<()> {
    let cfg = &config.cfg;
    let mut workloads: Vec<WorkloadDescriptor> = Vec::new();
    let names: Vec<String> = if a.workloads.is_empty() && a.workload_files.is_empty() {
        BUILTIN_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        a.workloads.clone()
    };
    for name in &names {
        workloads.push(customize(
            named_workload(name)?,
            &a.workload_overrides,
            a.scale,
        )?);
    }
    for path in &a.workload_files {
        workloads.push(customize(
            file_workload(path)?,
            &a.workload_overrides,
            a.scale,
        )?);
    }
    let mut by_name: HashMap<String, WorkloadDescriptor> = HashMap::new();
    for w in &workloads {
        if by_name.insert(w.name.clone(), w.clone()).is_some() {
            return Err(Stage::new(
                ExitKind::Workload,
                format!("workload {} selected twice", w.name),
            )
            .into());
        }
    }

    let arch_args = if a.archs.is_empty() {
        vec![ArchArg::DimmPim, ArchArg::CxlUnopt, ArchArg::CxlOpt]
    } else {
        a.archs.clone()
    };
    let archs = arch_args
        .iter()
        .map(|&x| arch_variant(x, a.ext.pipeline, a.ext.device_assist))
        .collect::<Result<Vec<_>>>()?;

    let mut grid = if a.pus.is_empty() {
        default_grid()
    } else {
        a.pus.clone()
    };
    grid.sort_unstable();
    grid.dedup();
    if grid.first() == Some(&0) {
        return Err(Stage::new(ExitKind::Arch, "--pus values must be ≥ 1").into());
    }

    let mut cells = Vec::new();
    for w in &workloads {
        for arch in &archs {
            for &n in &grid {
                let p = placement(arch, n, a.ext.devices, a.ext.placement, exchanges(w), cfg)?;
                cells.push((w, *arch, n, p));
            }
        }
    }
    let mut reports: Vec<SimReport> = cells
        .par_iter()
        .map(|(w, arch, n, p)| {
            evaluate_placement(w, p, arch, cfg)
                .with_context(|| format!("sweep cell {} / {} / {n} PUs", w.name, arch.label()))
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|x, y| (&x.workload, &x.arch, x.n_pus).cmp(&(&y.workload, &y.arch, y.n_pus)));

    let normalized = normalized_column(a.normalize_to, &reports, &by_name, cfg)?;
    let header = provenance(config, args, workloads.iter().map(workload_line).collect());
    emit(&a.out, &header, &reports, normalized.as_deref(), None)
}

/// `num / den`, with 0/0 read as no change.
fn speedup(num: Picos, den: Picos) -> f64 {
    match (num, den) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        _ => num as f64 / den as f64,
    }
}

fn compare_assist(config: &LoadedConfig, args: &[String], a: CompareArgs) -> Result<()> {
    let cfg = &config.cfg;
    if a.arch == ArchArg::DimmPim {
        return Err(Stage::new(ExitKind::Arch, "compare-assist needs a CXL architecture").into());
    }
    let w = resolve_workload(&a.source)?;
    let n = a.pus.unwrap_or(cfg.total_pus());
    let plain = arch_variant(a.arch, a.pipeline, false)?;
    let assisted = arch_variant(a.arch, a.pipeline, true)?;
    let p = placement(&plain, n, a.devices, a.placement, exchanges(&w), cfg)?;
    let (without, with) = rayon::join(
        || evaluate_placement(&w, &p, &plain, cfg),
        || evaluate_placement(&w, &p, &assisted, cfg),
    );
    let reports = [
        without.with_context(|| format!("{} on {}", w.name, plain.label()))?,
        with.with_context(|| format!("{} on {}", w.name, assisted.label()))?,
    ];
    let summary = json!({
        "assist_speedup_transfer_time": speedup(reports[0].transfer_time_ps, reports[1].transfer_time_ps),
        "assist_speedup_total": speedup(reports[0].total_ps, reports[1].total_ps),
    });
    let header = provenance(config, args, vec![workload_line(&w)]);
    emit(&a.out, &header, &reports, None, Some(summary))
}

fn gen_trace(config: &LoadedConfig, a: GenTraceArgs) -> Result<()> {
    let w = resolve_workload(&a.source)?;
    let n = a.pus.unwrap_or(config.cfg.total_pus());
    let staged = a.arch == ArchArg::DimmPim;
    let t = generate_trace(&w, n, staged)
        .with_context(|| format!("generating {} on {n} PUs", w.name))?;
    let mut buf = Vec::new();
    write_trace(&t, &mut buf)?;
    deliver(a.output.as_deref(), &buf)
}

fn validate(config: &LoadedConfig, args: &[String]) -> Result<()> {
    let cfg = &config.cfg;
    let flat: serde_json::Map<String, Value> = cfg
        .config()
        .to_flat()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let doc = json!({
        "provenance": provenance(config, args, Vec::new()),
        "config": flat,
        "derived": {
            "total_pus": cfg.total_pus(),
            "pus_per_rank": cfg.pus_per_rank(),
            "channel_bandwidth_bps": cfg.channel_bandwidth_bps(),
            "device_internal_bandwidth_bps": cfg.device_internal_bandwidth_bps(),
            "device_parallelism": cfg.device_parallelism(),
            "fixed_cxl_overhead_ps": cfg.fixed_cxl_overhead_ps(),
        },
        "sha256": config.hash(),
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    deliver(None, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speedup_handles_empty_runs() {
        assert_eq!(speedup(0, 0), 1.0);
        assert_eq!(speedup(10, 5), 2.0);
        assert!(speedup(1, 0).is_infinite());
    }

    #[test]
    fn default_grid_is_powers_of_two_to_512() {
        let g = default_grid();
        assert_eq!(g.len(), 10);
        assert_eq!((g[0], g[9]), (1, 512));
    }
}
