//! Turns command-line selections into validated core inputs.

use std::path::Path;

use anyhow::Result;
use nearmem_core::archmodels::{Placement, PlacementPolicy};
use nearmem_core::config::{validate_config, ArchVariant, BaseArch, SystemConfig, ValidatedConfig};
use nearmem_core::workloads::{builtin, scale_workload, WorkloadDescriptor};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::failure::{ExitKind, Stage};
use crate::{ArchArg, PlacementArg, WorkloadSource};

pub struct LoadedConfig {
    pub cfg: ValidatedConfig,
    /// Config file path, or `built-in defaults`.
    pub source: String,
}

impl LoadedConfig {
    /// SHA-256 of the canonical form of the effective config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.cfg.config().to_canonical_json().as_bytes());
        format!("{digest:x}")
    }
}

/// Splits `KEY=VALUE`. The value is read as JSON when it parses, otherwise
/// as a plain string, so `--set cxl.channel_mem_tech=DDR5-4800` works unquoted.
pub fn parse_assignment(s: &str) -> Option<(&str, Value)> {
    let (key, raw) = s.split_once('=')?;
    let key = key.trim();
    if key.is_empty() {
        return None;
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Some((key, value))
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig> {
    let (mut cfg, source) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                Stage::wrap(
                    ExitKind::Config,
                    format!("cannot read config {}", p.display()),
                    e,
                )
            })?;
            let cfg = SystemConfig::from_json_str(&text)
                .map_err(|e| Stage::wrap(ExitKind::Config, format!("config {}", p.display()), e))?;
            (cfg, p.display().to_string())
        }
        None => (SystemConfig::default(), "built-in defaults".to_string()),
    };
    for o in overrides {
        let (key, value) = parse_assignment(o).ok_or_else(|| {
            Stage::new(
                ExitKind::Config,
                format!("--set expects KEY=VALUE, got `{o}`"),
            )
        })?;
        cfg.set(key, &value)
            .map_err(|e| Stage::wrap(ExitKind::Config, format!("--set {o}"), e))?;
    }
    let cfg = validate_config(cfg).map_err(|e| Stage::wrap(ExitKind::Config, "config", e))?;
    Ok(LoadedConfig { cfg, source })
}

/// Applies `--workload-set` overrides and `--scale` to a descriptor.
pub fn customize(
    mut w: WorkloadDescriptor,
    overrides: &[String],
    scale: Option<f64>,
) -> Result<WorkloadDescriptor> {
    for o in overrides {
        let (key, value) = parse_assignment(o).ok_or_else(|| {
            Stage::new(
                ExitKind::Workload,
                format!("--workload-set expects KEY=VALUE, got `{o}`"),
            )
        })?;
        w.set(key, &value)
            .map_err(|e| Stage::wrap(ExitKind::Workload, format!("--workload-set {o}"), e))?;
    }
    w.validate()
        .map_err(|e| Stage::wrap(ExitKind::Workload, format!("workload {}", w.name), e))?;
    match scale {
        Some(f) => {
            Ok(scale_workload(&w, f).map_err(|e| Stage::wrap(ExitKind::Workload, "--scale", e))?)
        }
        None => Ok(w),
    }
}

pub fn named_workload(name: &str) -> Result<WorkloadDescriptor> {
    Ok(
        builtin(name)
            .map_err(|e| Stage::wrap(ExitKind::Workload, format!("workload {name}"), e))?,
    )
}

pub fn file_workload(path: &Path) -> Result<WorkloadDescriptor> {
    let what = format!("workload file {}", path.display());
    let text = std::fs::read_to_string(path)
        .map_err(|e| Stage::wrap(ExitKind::Workload, what.clone(), e))?;
    Ok(WorkloadDescriptor::from_json_str(&text, None)
        .map_err(|e| Stage::wrap(ExitKind::Workload, what, e))?)
}

pub fn resolve_workload(src: &WorkloadSource) -> Result<WorkloadDescriptor> {
    let w = match (&src.workload, &src.workload_file) {
        (Some(name), _) => named_workload(name)?,
        (None, Some(path)) => file_workload(path)?,
        (None, None) => {
            return Err(Stage::new(
                ExitKind::Workload,
                "no workload given; use --workload or --workload-file",
            )
            .into())
        }
    };
    customize(w, &src.workload_overrides, src.scale)
}

pub fn base_arch(a: ArchArg) -> BaseArch {
    match a {
        ArchArg::DimmPim => BaseArch::DimmPim,
        ArchArg::CxlUnopt => BaseArch::CxlPimUnopt,
        ArchArg::CxlOpt => BaseArch::CxlPimOpt,
    }
}

pub fn arch_variant(a: ArchArg, pipeline: Option<u32>, assist: bool) -> Result<ArchVariant> {
    let v = ArchVariant {
        base: base_arch(a),
        pipeline_batches: pipeline,
        device_assist: assist,
    };
    v.check()
        .map_err(|e| Stage::wrap(ExitKind::Arch, format!("--arch {}", v.base.name()), e))?;
    Ok(v)
}

/// Maps `n_pus` PUs onto `devices` CXL devices.
pub fn placement(
    arch: &ArchVariant,
    n_pus: u32,
    devices: u32,
    choice: Option<PlacementArg>,
    exchanges: bool,
    cfg: &ValidatedConfig,
) -> Result<Placement> {
    let illegal = |m: String| -> anyhow::Error { Stage::new(ExitKind::Arch, m).into() };
    if devices == 0 {
        return Err(illegal("--devices must be ≥ 1".into()));
    }
    if devices > 1 {
        if !arch.base.is_cxl() {
            return Err(illegal(format!(
                "{} has no CXL devices to spread over",
                arch.base.name()
            )));
        }
        if devices > cfg.cxl().devices {
            return Err(illegal(format!(
                "--devices {devices} exceeds cxl.devices = {}; raise it with --set cxl.devices={devices}",
                cfg.cxl().devices
            )));
        }
    }
    let policy = match choice {
        Some(PlacementArg::Colocate) => PlacementPolicy::Colocate,
        Some(PlacementArg::Stripe) => PlacementPolicy::Stripe,
        None if exchanges => PlacementPolicy::Colocate,
        None => PlacementPolicy::Stripe,
    };
    Ok(Placement::build(policy, n_pus, devices)
        .map_err(|e| Stage::wrap(ExitKind::Arch, "placement", e))?)
}

fn quote(arg: &str) -> String {
    if arg.is_empty() || arg.contains(|c: char| c.is_whitespace() || c == '"') {
        format!("{arg:?}")
    } else {
        arg.to_string()
    }
}

/// Header lines every report starts with: tool version, config hash and
/// the full argument list, then one line per extra item.
pub fn provenance(config: &LoadedConfig, args: &[String], extra: Vec<String>) -> Vec<String> {
    let mut lines = vec![
        format!("nearmem-sim {}", env!("CARGO_PKG_VERSION")),
        format!("config {} sha256={}", config.source, config.hash()),
        format!(
            "flags {}",
            args.iter().map(|a| quote(a)).collect::<Vec<_>>().join(" ")
        ),
    ];
    lines.extend(extra);
    lines
}

/// One-line echo of a descriptor for the provenance header.
pub fn workload_line(w: &WorkloadDescriptor) -> String {
    let compact: Value = serde_json::from_str(&w.to_json()).expect("descriptor JSON parses");
    format!("workload {compact}")
}
