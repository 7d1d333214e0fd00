//! Parametric descriptors for the scaled PrIM kernels.
//!
//! Every builtin descriptor satisfies `input_bytes + output_bytes ==
//! dataset_bytes`: the headline dataset size counts the buffers that live in
//! PIM memory, split between what is staged in and what is read back. The
//! split, the compute intensities, the exchange volumes and the CPU
//! throughputs are shipped defaults chosen from each kernel's buffer
//! semantics and calibrated together with the DIMM staging bandwidth; all of
//! them can be overridden from a workload file.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::{as_bool, as_f64, as_str, as_u32, as_u64, unwrap_annotated};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommKind {
    None,
    /// Every PU exchanges with all others, then all synchronize.
    AllSyncRounds,
    /// Pairwise halving: in round r, PUs with `p % 2^(r+1) == 2^r` send.
    ReductionTree,
}

impl CommKind {
    pub fn name(self) -> &'static str {
        match self {
            CommKind::None => "NONE",
            CommKind::AllSyncRounds => "ALL_SYNC_ROUNDS",
            CommKind::ReductionTree => "REDUCTION_TREE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            CommKind::None,
            CommKind::AllSyncRounds,
            CommKind::ReductionTree,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommPattern {
    pub kind: CommKind,
    pub rounds: u32,
    pub bytes_per_pu_per_round: u64,
}

impl CommPattern {
    pub const NONE: CommPattern = CommPattern {
        kind: CommKind::None,
        rounds: 0,
        bytes_per_pu_per_round: 0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadDescriptor {
    pub name: String,
    pub dataset_bytes: u64,
    pub input_bytes: u64,
    /// Output buffer size before `selectivity` is applied.
    pub output_bytes: u64,
    pub compute_cycles_per_input_byte: f64,
    pub comm: CommPattern,
    /// Whether per-PU transfers can be issued as one parallel batch.
    pub transfer_parallelizable: bool,
    pub selectivity: f64,
    /// Coarse host-only throughput in dataset bytes per second.
    pub cpu_baseline_throughput_bps: u64,
}

/// Qualitative scaling behaviour observed for each kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BehaviorGroup {
    /// Computation dominates at every PU count.
    ComputeBound,
    /// Staging transfers dominate under DIMM-PIM.
    TransferBound,
    /// Transfers stay per-PU sequential and limit scaling.
    CommLimited,
}

impl WorkloadDescriptor {
    /// Bytes read back to the host after selectivity, rounded to nearest.
    pub fn effective_output_bytes(&self) -> u64 {
        (self.output_bytes as f64 * self.selectivity).round() as u64
    }

    /// Total compute cycles for the whole input.
    pub fn total_cycles(&self) -> u64 {
        (self.input_bytes as f64 * self.compute_cycles_per_input_byte).round() as u64
    }

    pub fn behavior_group(&self) -> Option<BehaviorGroup> {
        behavior_group(&self.name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::InvalidWorkload {
            name: self.name.clone(),
            message: message.to_string(),
        };
        if self.name.is_empty() {
            return Err(bad("name must be non-empty"));
        }
        if !(0.0..=1.0).contains(&self.selectivity) {
            return Err(bad("selectivity must lie in [0, 1]"));
        }
        if !self.compute_cycles_per_input_byte.is_finite()
            || self.compute_cycles_per_input_byte < 0.0
        {
            return Err(bad("compute_cycles_per_input_byte must be finite and ≥ 0"));
        }
        if self.comm.kind == CommKind::None && self.comm.rounds != 0 {
            return Err(bad("comm.kind NONE requires comm.rounds = 0"));
        }
        Ok(())
    }

    /// Parses a flat dotted-key JSON descriptor. Keys missing from the
    /// document are taken from `base` when given, otherwise they are required.
    pub fn from_json_str(text: &str, base: Option<&WorkloadDescriptor>) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::config("<workload>", format!("malformed JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(Error::config(
                "<workload>",
                "workload must be a JSON object",
            ));
        };
        let mut w = match base {
            Some(b) => b.clone(),
            None => {
                let name = map
                    .get("name")
                    .map(unwrap_annotated)
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::config("name", "workload file needs a `name`"))?;
                match builtin(name) {
                    Ok(b) => b,
                    Err(_) => {
                        for key in REQUIRED_KEYS {
                            if !map.contains_key(*key) {
                                return Err(Error::config(key, format!("missing key `{key}`")));
                            }
                        }
                        WorkloadDescriptor::blank(name)
                    }
                }
            }
        };
        for (key, raw) in &map {
            if key.starts_with('_') {
                continue;
            }
            w.set(key, unwrap_annotated(raw))?;
        }
        w.validate()?;
        Ok(w)
    }

    fn blank(name: &str) -> Self {
        WorkloadDescriptor {
            name: name.to_string(),
            dataset_bytes: 0,
            input_bytes: 0,
            output_bytes: 0,
            compute_cycles_per_input_byte: 0.0,
            comm: CommPattern::NONE,
            transfer_parallelizable: true,
            selectivity: 1.0,
            cpu_baseline_throughput_bps: 1,
        }
    }

    /// Overrides one field by dotted path.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "name" => self.name = as_str(key, v)?,
            "dataset_bytes" => self.dataset_bytes = as_u64(key, v)?,
            "input_bytes" => self.input_bytes = as_u64(key, v)?,
            "output_bytes" => self.output_bytes = as_u64(key, v)?,
            "compute_cycles_per_input_byte" => self.compute_cycles_per_input_byte = as_f64(key, v)?,
            "comm.kind" => {
                let s = as_str(key, v)?;
                self.comm.kind = CommKind::parse(&s)
                    .ok_or_else(|| Error::config(key, format!("unknown comm kind `{s}`")))?;
            }
            "comm.rounds" => self.comm.rounds = as_u32(key, v)?,
            "comm.bytes_per_pu_per_round" => self.comm.bytes_per_pu_per_round = as_u64(key, v)?,
            "transfer_parallelizable" => self.transfer_parallelizable = as_bool(key, v)?,
            "selectivity" => self.selectivity = as_f64(key, v)?,
            "cpu_baseline_throughput_bps" => self.cpu_baseline_throughput_bps = as_u64(key, v)?,
            _ => return Err(Error::config(key, format!("unknown workload key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut map = Map::new();
        map.insert("name".into(), self.name.clone().into());
        map.insert("dataset_bytes".into(), self.dataset_bytes.into());
        map.insert("input_bytes".into(), self.input_bytes.into());
        map.insert("output_bytes".into(), self.output_bytes.into());
        map.insert(
            "compute_cycles_per_input_byte".into(),
            self.compute_cycles_per_input_byte.into(),
        );
        map.insert("comm.kind".into(), self.comm.kind.name().into());
        map.insert("comm.rounds".into(), self.comm.rounds.into());
        map.insert(
            "comm.bytes_per_pu_per_round".into(),
            self.comm.bytes_per_pu_per_round.into(),
        );
        map.insert(
            "transfer_parallelizable".into(),
            self.transfer_parallelizable.into(),
        );
        map.insert("selectivity".into(), self.selectivity.into());
        map.insert(
            "cpu_baseline_throughput_bps".into(),
            self.cpu_baseline_throughput_bps.into(),
        );
        serde_json::to_string_pretty(&Value::Object(map)).expect("descriptor serializes")
    }
}

const REQUIRED_KEYS: &[&str] = &[
    "dataset_bytes",
    "input_bytes",
    "output_bytes",
    "compute_cycles_per_input_byte",
    "cpu_baseline_throughput_bps",
];

/// Scales every volume by `factor`, rounding to the nearest byte.
pub fn scale_workload(w: &WorkloadDescriptor, factor: f64) -> Result<WorkloadDescriptor> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be > 0, got {factor}"
        )));
    }
    let scale = |b: u64| (b as f64 * factor).round() as u64;
    let mut out = w.clone();
    out.dataset_bytes = scale(w.dataset_bytes);
    out.input_bytes = scale(w.input_bytes);
    out.output_bytes = scale(w.output_bytes);
    out.comm.bytes_per_pu_per_round = scale(w.comm.bytes_per_pu_per_round);
    Ok(out)
}

const GB_128: u64 = 128_000_000_000;
const GB_95: u64 = 95_360_000_000;
const GB_10: u64 = 10_240_000_000;
const MB_634: u64 = 634_000_000;

pub const BUILTIN_NAMES: [&str; 14] = [
    "VA", "UNI", "SEL", "GEMV", "SPMV", "TS", "BS", "MLP", "SCAN-SSA", "SCAN-RSS", "TRNS", "RED",
    "HST-L", "HST-S",
];

#[allow(clippy::too_many_arguments)]
fn desc(
    name: &str,
    dataset: u64,
    output: u64,
    cpb: f64,
    comm: CommPattern,
    parallel: bool,
    selectivity: f64,
    cpu_bps: u64,
) -> WorkloadDescriptor {
    WorkloadDescriptor {
        name: name.to_string(),
        dataset_bytes: dataset,
        input_bytes: dataset - output,
        output_bytes: output,
        compute_cycles_per_input_byte: cpb,
        comm,
        transfer_parallelizable: parallel,
        selectivity,
        cpu_baseline_throughput_bps: cpu_bps,
    }
}

fn all_sync(rounds: u32, bytes: u64) -> CommPattern {
    CommPattern {
        kind: CommKind::AllSyncRounds,
        rounds,
        bytes_per_pu_per_round: bytes,
    }
}

/// The fourteen kernels at their large-scale dataset sizes.
pub fn builtin_workloads() -> Vec<WorkloadDescriptor> {
    vec![
        // A + B = C: two equal input vectors staged in, one read back.
        desc(
            "VA",
            GB_128,
            GB_128 / 3,
            0.004,
            CommPattern::NONE,
            true,
            1.0,
            64_000_000_000,
        ),
        // Input array plus an equally sized output buffer of which half is
        // filled with unique elements. Partial results are merged through
        // the host in one all-PU exchange.
        desc(
            "UNI",
            GB_128,
            GB_128 / 2,
            0.004,
            all_sync(1, 312_500_000),
            true,
            0.5,
            64_000_000_000,
        ),
        // Output buffer as large as the input; every element selected.
        // Variable-length per-PU results cannot be batched.
        desc(
            "SEL",
            GB_128,
            GB_128 / 2,
            0.01,
            CommPattern::NONE,
            false,
            1.0,
            64_000_000_000,
        ),
        // Matrix dominates; the output vector is one element per row.
        desc(
            "GEMV",
            GB_128,
            GB_128 / 16_384,
            0.0006,
            CommPattern::NONE,
            true,
            1.0,
            48_000_000_000,
        ),
        // CSR matrix plus dense vector in, one partial output vector out.
        // Irregular per-PU row blocks keep transfers sequential.
        desc(
            "SPMV",
            MB_634,
            34_000_000,
            0.02,
            CommPattern::NONE,
            false,
            1.0,
            16_000_000_000,
        ),
        // Time series in, per-PU best match out.
        desc(
            "TS",
            GB_10,
            GB_10 / 1_000,
            2.0,
            CommPattern::NONE,
            true,
            1.0,
            4_000_000_000,
        ),
        // Sorted array and queries in, positions out.
        desc(
            "BS",
            GB_10,
            GB_10 / 1_000,
            1.5,
            CommPattern::NONE,
            true,
            1.0,
            4_000_000_000,
        ),
        // Weights and activations in; one sync per layer boundary (3 layers).
        desc(
            "MLP",
            GB_95,
            GB_95 / 1_024,
            0.01,
            all_sync(3, 77_600_000),
            true,
            1.0,
            32_000_000_000,
        ),
        desc(
            "SCAN-SSA",
            GB_95,
            GB_95 / 2,
            0.0012,
            CommPattern::NONE,
            true,
            1.0,
            48_000_000_000,
        ),
        desc(
            "SCAN-RSS",
            GB_95,
            GB_95 / 2,
            0.0011,
            CommPattern::NONE,
            true,
            1.0,
            48_000_000_000,
        ),
        // Matrix in, transposed tiles out; tiles are redistributed across
        // PUs through the host between the two transposition steps.
        desc(
            "TRNS",
            GB_95,
            GB_95 / 2,
            0.004,
            all_sync(1, 232_812_500),
            true,
            1.0,
            32_000_000_000,
        ),
        // Array in, one partial sum per PU combined pairwise.
        desc(
            "RED",
            GB_95,
            4_096,
            0.0006,
            CommPattern {
                kind: CommKind::ReductionTree,
                rounds: 9,
                bytes_per_pu_per_round: 4_096,
            },
            true,
            1.0,
            64_000_000_000,
        ),
        // Image in, per-PU 4096-bin histograms out.
        desc(
            "HST-L",
            GB_95,
            512 * 4_096,
            0.0006,
            CommPattern::NONE,
            true,
            1.0,
            48_000_000_000,
        ),
        // Image in, per-PU 256-bin histograms out.
        desc(
            "HST-S",
            GB_95,
            512 * 1_024,
            0.0006,
            CommPattern::NONE,
            true,
            1.0,
            48_000_000_000,
        ),
    ]
}

/// Looks up a builtin by name, case-insensitively.
pub fn builtin(name: &str) -> Result<WorkloadDescriptor> {
    builtin_workloads()
        .into_iter()
        .find(|w| w.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownWorkload(name.to_string()))
}

pub fn behavior_group(name: &str) -> Option<BehaviorGroup> {
    match name {
        "TS" | "BS" => Some(BehaviorGroup::ComputeBound),
        "UNI" | "SPMV" | "SEL" | "TRNS" | "VA" => Some(BehaviorGroup::TransferBound),
        "HST-L" | "HST-S" | "RED" | "SCAN-SSA" | "SCAN-RSS" | "GEMV" => {
            Some(BehaviorGroup::CommLimited)
        }
        _ => None,
    }
}
