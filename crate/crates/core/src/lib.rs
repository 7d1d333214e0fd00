//! Trace-driven simulator of host/PIM data movement on DIMM-based and
//! CXL-attached processing-in-memory systems.
//!
//! A run goes config -> workload -> trace -> route/schedule -> report:
//! [`config::validate_config`], [`workloads::builtin`],
//! [`trace::generate_trace`], [`engine::simulate`] and
//! [`metrics::breakdown`].

pub mod archmodels;
pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod trace;
pub mod units;
pub mod workloads;

pub use config::{validate_config, ArchVariant, BaseArch, SystemConfig, ValidatedConfig};
pub use engine::{simulate, Component, TimedEvent};
pub use error::{Error, Result};
pub use metrics::{breakdown, SimReport};
pub use trace::{generate_trace, Trace};
pub use workloads::WorkloadDescriptor;
