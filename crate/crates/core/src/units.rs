//! Integer time arithmetic. One tick is one picosecond.

/// Simulated time in picoseconds.
pub type Picos = u64;

pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_S: u128 = 1_000_000_000_000;

pub fn ns_to_ps(ns: u64) -> Picos {
    ns * PS_PER_NS
}

/// Time to move `bytes` at `bytes_per_s`, rounded up to the next picosecond.
///
/// `bytes_per_s` must be non-zero.
pub fn bytes_time_ps(bytes: u64, bytes_per_s: u64) -> Picos {
    debug_assert!(bytes_per_s > 0);
    let num = bytes as u128 * PS_PER_S;
    let bw = bytes_per_s as u128;
    num.div_ceil(bw) as Picos
}

/// Time for `cycles` at `hz`, rounded up.
pub fn cycles_time_ps(cycles: u64, hz: u64) -> Picos {
    bytes_time_ps(cycles, hz)
}

pub fn ps_to_ns_f64(ps: Picos) -> f64 {
    ps as f64 / PS_PER_NS as f64
}
