//! Hardware parameters for the host, the DIMM-based PIM system and the
//! CXL-attached PIM device.
//!
//! Configs are read from a flat JSON object whose keys are dotted field paths
//! (`cxl.mem_latency_ns`). A value may be a bare scalar or an annotated
//! object `{"value": .., "_comment": ".."}`. Top-level keys beginning with
//! `_` are ignored; any other unrecognized key is an error.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::units::{ns_to_ps, Picos};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostConfig {
    pub core_count: u32,
    /// Host DRAM bandwidth in bytes/s.
    pub mem_bandwidth_bps: u64,
    /// Fixed host cost per host-mediated transfer dispatch.
    pub orchestration_overhead_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PimConfig {
    pub ranks: u32,
    pub chips_per_rank: u32,
    pub pus_per_chip: u32,
    pub pu_clock_hz: u64,
    pub scratchpad_bytes: u64,
    pub bank_bytes: u64,
    /// Host <-> PIM staging bandwidth of one rank when all of its PUs are
    /// written in parallel. Calibrated; see `configs/hardware-defaults.json`.
    pub host_bandwidth_per_rank_bps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CxlConfig {
    /// Per-direction link bandwidth in bytes/s.
    pub link_bandwidth_bps: u64,
    pub switch_delay_ns: u64,
    /// CXL.mem access latency, reads and writes alike.
    pub mem_latency_ns: u64,
    pub channels: u32,
    pub channel_mem_tech: String,
    /// Requests one channel services concurrently when rank-level
    /// parallelism is enabled (the optimized device).
    pub parallel_requests_per_channel: u32,
    pub max_pus: u32,
    /// On-device copy bandwidth; `None` means channels x channel bandwidth.
    pub device_internal_bandwidth_bps: Option<u64>,
    /// Charge the fixed latency once per 64 B access instead of once per message.
    pub per_access_latency: bool,
    /// Number of CXL-PIM devices attached to the host.
    pub devices: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub host: HostConfig,
    pub pim: PimConfig,
    pub cxl: CxlConfig,
    pub time_resolution_ps: u64,
}

impl Default for SystemConfig {
    /// The reference system: 8-rank UPMEM-style PIM and a single
    /// PCIe Gen5 x8 CXL device with four DDR4-2400 channels.
    fn default() -> Self {
        SystemConfig {
            host: HostConfig {
                core_count: 32,
                mem_bandwidth_bps: 102_400_000_000,
                orchestration_overhead_ns: 1_000,
            },
            pim: PimConfig {
                ranks: 8,
                chips_per_rank: 8,
                pus_per_chip: 8,
                pu_clock_hz: 350_000_000,
                scratchpad_bytes: 64 * 1024,
                bank_bytes: 64 * 1024 * 1024,
                host_bandwidth_per_rank_bps: 6_400_000_000,
            },
            cxl: CxlConfig {
                link_bandwidth_bps: 64_000_000_000,
                switch_delay_ns: 70,
                mem_latency_ns: 180,
                channels: 4,
                channel_mem_tech: "DDR4-2400".to_string(),
                parallel_requests_per_channel: 2,
                max_pus: 256,
                device_internal_bandwidth_bps: None,
                per_access_latency: false,
                devices: 1,
            },
            time_resolution_ps: 1,
        }
    }
}

const SUPPORTED_GENERATIONS: [&str; 3] = ["DDR3", "DDR4", "DDR5"];

/// Peak bandwidth of one channel of the given DDR technology, in bytes/s.
///
/// Tags have the form `DDR<gen>-<MT/s>`; the data bus is 64 bits wide.
pub fn derive_channel_bandwidth(tech: &str) -> Result<u64> {
    let unknown = || Error::UnknownMemTech {
        tag: tech.to_string(),
        supported: SUPPORTED_GENERATIONS
            .iter()
            .map(|g| format!("{g}-<MT/s>"))
            .collect::<Vec<_>>()
            .join(", "),
    };
    let (generation, rate) = tech.split_once('-').ok_or_else(unknown)?;
    if !SUPPORTED_GENERATIONS.contains(&generation) {
        return Err(unknown());
    }
    let mts: u64 = rate.parse().map_err(|_| unknown())?;
    if mts == 0 {
        return Err(unknown());
    }
    Ok(mts * 1_000_000 * 8)
}

/// Switch delay plus device memory latency paid by every CXL message.
pub fn fixed_cxl_overhead(cxl: &CxlConfig) -> u64 {
    cxl.switch_delay_ns + cxl.mem_latency_ns
}

/// A [`SystemConfig`] whose invariants have been checked, with derived
/// quantities filled in. Immutable; share it freely between runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    cfg: SystemConfig,
    total_pus: u32,
    pus_per_rank: u32,
    channel_bandwidth_bps: u64,
    device_internal_bandwidth_bps: u64,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn host(&self) -> &HostConfig {
        &self.cfg.host
    }

    pub fn pim(&self) -> &PimConfig {
        &self.cfg.pim
    }

    pub fn cxl(&self) -> &CxlConfig {
        &self.cfg.cxl
    }

    /// Total DIMM-PIM processing units.
    pub fn total_pus(&self) -> u32 {
        self.total_pus
    }

    pub fn pus_per_rank(&self) -> u32 {
        self.pus_per_rank
    }

    pub fn channel_bandwidth_bps(&self) -> u64 {
        self.channel_bandwidth_bps
    }

    pub fn device_internal_bandwidth_bps(&self) -> u64 {
        self.device_internal_bandwidth_bps
    }

    /// Concurrent requests an optimized CXL device services.
    pub fn device_parallelism(&self) -> u32 {
        self.cfg.cxl.channels * self.cfg.cxl.parallel_requests_per_channel
    }

    pub fn fixed_cxl_overhead_ps(&self) -> Picos {
        ns_to_ps(fixed_cxl_overhead(&self.cfg.cxl))
    }

    pub fn into_inner(self) -> SystemConfig {
        self.cfg
    }
}

/// Checks every invariant, reporting the first violation by field path.
pub fn validate_config(cfg: SystemConfig) -> Result<ValidatedConfig> {
    fn positive(path: &str, v: u64) -> Result<()> {
        if v == 0 {
            return Err(Error::config(path, format!("{path} must be > 0")));
        }
        Ok(())
    }
    fn at_least_one(path: &str, v: u32) -> Result<()> {
        if v < 1 {
            return Err(Error::config(path, format!("{path} must be ≥ 1")));
        }
        Ok(())
    }

    at_least_one("host.core_count", cfg.host.core_count)?;
    positive("host.mem_bandwidth_bps", cfg.host.mem_bandwidth_bps)?;

    at_least_one("pim.ranks", cfg.pim.ranks)?;
    at_least_one("pim.chips_per_rank", cfg.pim.chips_per_rank)?;
    at_least_one("pim.pus_per_chip", cfg.pim.pus_per_chip)?;
    positive("pim.pu_clock_hz", cfg.pim.pu_clock_hz)?;
    positive("pim.scratchpad_bytes", cfg.pim.scratchpad_bytes)?;
    positive("pim.bank_bytes", cfg.pim.bank_bytes)?;
    if cfg.pim.bank_bytes < cfg.pim.scratchpad_bytes {
        return Err(Error::config(
            "pim.bank_bytes",
            "pim.bank_bytes must be ≥ pim.scratchpad_bytes",
        ));
    }
    positive(
        "pim.host_bandwidth_per_rank_bps",
        cfg.pim.host_bandwidth_per_rank_bps,
    )?;

    positive("cxl.link_bandwidth_bps", cfg.cxl.link_bandwidth_bps)?;
    at_least_one("cxl.channels", cfg.cxl.channels)?;
    at_least_one(
        "cxl.parallel_requests_per_channel",
        cfg.cxl.parallel_requests_per_channel,
    )?;
    at_least_one("cxl.max_pus", cfg.cxl.max_pus)?;
    at_least_one("cxl.devices", cfg.cxl.devices)?;
    let channel_bandwidth_bps = derive_channel_bandwidth(&cfg.cxl.channel_mem_tech)
        .map_err(|e| Error::config("cxl.channel_mem_tech", e.to_string()))?;
    if let Some(bw) = cfg.cxl.device_internal_bandwidth_bps {
        positive("cxl.device_internal_bandwidth_bps", bw)?;
    }
    if cfg.time_resolution_ps != 1 {
        return Err(Error::config(
            "time_resolution_ps",
            "time_resolution_ps must be 1",
        ));
    }

    let pus_per_rank = cfg
        .pim
        .chips_per_rank
        .checked_mul(cfg.pim.pus_per_chip)
        .ok_or_else(|| Error::config("pim.pus_per_chip", "PU count overflows"))?;
    let total_pus = pus_per_rank
        .checked_mul(cfg.pim.ranks)
        .ok_or_else(|| Error::config("pim.ranks", "PU count overflows"))?;
    let device_internal_bandwidth_bps = cfg
        .cxl
        .device_internal_bandwidth_bps
        .unwrap_or(channel_bandwidth_bps * cfg.cxl.channels as u64);

    Ok(ValidatedConfig {
        cfg,
        total_pus,
        pus_per_rank,
        channel_bandwidth_bps,
        device_internal_bandwidth_bps,
    })
}

impl SystemConfig {
    /// Parses a flat dotted-key JSON document on top of the defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::config("<root>", format!("malformed JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(Error::config("<root>", "config must be a JSON object"));
        };
        let mut cfg = SystemConfig::default();
        for (key, raw) in &map {
            if key.starts_with('_') {
                continue;
            }
            cfg.set(key, unwrap_annotated(raw))?;
        }
        Ok(cfg)
    }

    /// Sets one field by dotted path.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "host.core_count" => self.host.core_count = as_u32(key, v)?,
            "host.mem_bandwidth_bps" => self.host.mem_bandwidth_bps = as_u64(key, v)?,
            "host.orchestration_overhead_ns" => {
                self.host.orchestration_overhead_ns = as_u64(key, v)?
            }
            "pim.ranks" => self.pim.ranks = as_u32(key, v)?,
            "pim.chips_per_rank" => self.pim.chips_per_rank = as_u32(key, v)?,
            "pim.pus_per_chip" => self.pim.pus_per_chip = as_u32(key, v)?,
            "pim.pu_clock_hz" => self.pim.pu_clock_hz = as_u64(key, v)?,
            "pim.scratchpad_bytes" => self.pim.scratchpad_bytes = as_u64(key, v)?,
            "pim.bank_bytes" => self.pim.bank_bytes = as_u64(key, v)?,
            "pim.host_bandwidth_per_rank_bps" => {
                self.pim.host_bandwidth_per_rank_bps = as_u64(key, v)?
            }
            "cxl.link_bandwidth_bps" => self.cxl.link_bandwidth_bps = as_u64(key, v)?,
            "cxl.switch_delay_ns" => self.cxl.switch_delay_ns = as_u64(key, v)?,
            "cxl.mem_latency_ns" => self.cxl.mem_latency_ns = as_u64(key, v)?,
            "cxl.channels" => self.cxl.channels = as_u32(key, v)?,
            "cxl.channel_mem_tech" => self.cxl.channel_mem_tech = as_str(key, v)?,
            "cxl.parallel_requests_per_channel" => {
                self.cxl.parallel_requests_per_channel = as_u32(key, v)?
            }
            "cxl.max_pus" => self.cxl.max_pus = as_u32(key, v)?,
            "cxl.device_internal_bandwidth_bps" => {
                self.cxl.device_internal_bandwidth_bps = match v {
                    Value::Null => None,
                    _ => Some(as_u64(key, v)?),
                }
            }
            "cxl.per_access_latency" => self.cxl.per_access_latency = as_bool(key, v)?,
            "cxl.devices" => self.cxl.devices = as_u32(key, v)?,
            "time_resolution_ps" => self.time_resolution_ps = as_u64(key, v)?,
            _ => return Err(Error::config(key, format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Flat dotted-key representation, keys in a fixed documented order.
    pub fn to_flat(&self) -> Vec<(&'static str, Value)> {
        vec![
            ("host.core_count", self.host.core_count.into()),
            ("host.mem_bandwidth_bps", self.host.mem_bandwidth_bps.into()),
            (
                "host.orchestration_overhead_ns",
                self.host.orchestration_overhead_ns.into(),
            ),
            ("pim.ranks", self.pim.ranks.into()),
            ("pim.chips_per_rank", self.pim.chips_per_rank.into()),
            ("pim.pus_per_chip", self.pim.pus_per_chip.into()),
            ("pim.pu_clock_hz", self.pim.pu_clock_hz.into()),
            ("pim.scratchpad_bytes", self.pim.scratchpad_bytes.into()),
            ("pim.bank_bytes", self.pim.bank_bytes.into()),
            (
                "pim.host_bandwidth_per_rank_bps",
                self.pim.host_bandwidth_per_rank_bps.into(),
            ),
            ("cxl.link_bandwidth_bps", self.cxl.link_bandwidth_bps.into()),
            ("cxl.switch_delay_ns", self.cxl.switch_delay_ns.into()),
            ("cxl.mem_latency_ns", self.cxl.mem_latency_ns.into()),
            ("cxl.channels", self.cxl.channels.into()),
            (
                "cxl.channel_mem_tech",
                self.cxl.channel_mem_tech.clone().into(),
            ),
            (
                "cxl.parallel_requests_per_channel",
                self.cxl.parallel_requests_per_channel.into(),
            ),
            ("cxl.max_pus", self.cxl.max_pus.into()),
            (
                "cxl.device_internal_bandwidth_bps",
                self.cxl
                    .device_internal_bandwidth_bps
                    .map_or(Value::Null, Value::from),
            ),
            ("cxl.per_access_latency", self.cxl.per_access_latency.into()),
            ("cxl.devices", self.cxl.devices.into()),
            ("time_resolution_ps", self.time_resolution_ps.into()),
        ]
    }

    /// Canonical compact JSON; used for hashing and echoing.
    pub fn to_canonical_json(&self) -> String {
        let mut map = Map::new();
        for (k, v) in self.to_flat() {
            map.insert(k.to_string(), v);
        }
        serde_json::to_string(&Value::Object(map)).expect("config serializes")
    }
}

pub(crate) fn unwrap_annotated(raw: &Value) -> &Value {
    match raw {
        Value::Object(obj) if obj.contains_key("value") => &obj["value"],
        other => other,
    }
}

pub(crate) fn as_u64(key: &str, v: &Value) -> Result<u64> {
    v.as_u64()
        .or_else(|| {
            // accept integral floats such as 6.4e9
            v.as_f64()
                .filter(|f| *f >= 0.0 && f.fract() == 0.0 && *f < u64::MAX as f64)
                .map(|f| f as u64)
        })
        .ok_or_else(|| Error::config(key, format!("{key} must be a non-negative integer")))
}

pub(crate) fn as_u32(key: &str, v: &Value) -> Result<u32> {
    let n = as_u64(key, v)?;
    u32::try_from(n).map_err(|_| Error::config(key, format!("{key} is out of range")))
}

pub(crate) fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::config(key, format!("{key} must be a number")))
}

pub(crate) fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| Error::config(key, format!("{key} must be a boolean")))
}

pub(crate) fn as_str(key: &str, v: &Value) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::config(key, format!("{key} must be a string")))
}

/// Base dataflow model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseArch {
    /// Disjoint address spaces with explicit staging copies.
    DimmPim,
    /// CXL-attached PIM whose device memory serves one request at a time.
    CxlPimUnopt,
    /// CXL-attached PIM with rank-level parallel request handling.
    CxlPimOpt,
}

impl BaseArch {
    pub const ALL: [BaseArch; 3] = [
        BaseArch::DimmPim,
        BaseArch::CxlPimUnopt,
        BaseArch::CxlPimOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseArch::DimmPim => "dimm-pim",
            BaseArch::CxlPimUnopt => "cxl-unopt",
            BaseArch::CxlPimOpt => "cxl-opt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BaseArch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown arch `{s}`")))
    }

    pub fn is_cxl(self) -> bool {
        !matches!(self, BaseArch::DimmPim)
    }
}

/// Which dataflow model prices a run, plus the CXL-side extensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchVariant {
    pub base: BaseArch,
    /// Number of pipeline batches when pipelining is on.
    pub pipeline_batches: Option<u32>,
    pub device_assist: bool,
}

impl ArchVariant {
    pub fn plain(base: BaseArch) -> Self {
        ArchVariant {
            base,
            pipeline_batches: None,
            device_assist: false,
        }
    }

    pub fn with_pipeline(mut self, batches: u32) -> Self {
        self.pipeline_batches = Some(batches);
        self
    }

    pub fn with_device_assist(mut self) -> Self {
        self.device_assist = true;
        self
    }

    pub fn pipeline_enabled(&self) -> bool {
        self.pipeline_batches.is_some()
    }

    /// Extensions exist only on the CXL side.
    pub fn check(&self) -> Result<()> {
        if !self.base.is_cxl() && (self.pipeline_enabled() || self.device_assist) {
            return Err(Error::IllegalArch(format!(
                "{} admits neither pipelining nor device assist",
                self.base.name()
            )));
        }
        if self.pipeline_batches == Some(0) {
            return Err(Error::IllegalArch("pipeline batches must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Label used in reports, e.g. `cxl-opt+pipeline4+assist`.
    pub fn label(&self) -> String {
        let mut s = self.base.name().to_string();
        if let Some(b) = self.pipeline_batches {
            s.push_str(&format!("+pipeline{b}"));
        }
        if self.device_assist {
            s.push_str("+assist");
        }
        s
    }
}
