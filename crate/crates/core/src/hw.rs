//! Closed-form throughput, latency and register-depth models of the IUPA
//! and CPA architectures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::two_binomial;

/// Register-array depths of an IUPA decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterDepths {
    pub second_order: usize,
    pub third_order: usize,
}

/// Model output together with the parameters it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwEstimate {
    pub architecture: String,
    pub m: u32,
    pub r: u32,
    #[serde(rename = "G")]
    pub g: Option<usize>,
    pub lambda: Option<usize>,
    pub p: Option<usize>,
    pub f_mhz: f64,
    pub t_fod: usize,
    pub t_add: Option<usize>,
    pub n_iters: usize,
    pub throughput_mbps: f64,
    pub latency_cc_per_iter: usize,
    pub latency_cc: usize,
    pub latency_us: f64,
    pub register_depths: Option<RegisterDepths>,
}

/// Cycles of the FHT first-order decoder: 3 up to length 16, 4 beyond.
pub fn default_t_fod(first_order_len: usize) -> usize {
    if first_order_len <= 16 {
        3
    } else {
        4
    }
}

/// Default adder-stage latency of the CPA accumulator path.
pub const DEFAULT_T_ADD: usize = 2;

fn check_pow2(name: &str, v: usize) -> Result<()> {
    if v == 0 || !v.is_power_of_two() {
        return Err(Error::Config(format!("{name} = {v} must be a power of two")));
    }
    Ok(())
}

fn check_common(m: u32, f_mhz: f64, n_iters: usize) -> Result<()> {
    if !(4..=16).contains(&m) {
        return Err(Error::Config(format!("m = {m} outside 4..=16")));
    }
    if !(f_mhz.is_finite() && f_mhz > 0.0) {
        return Err(Error::Config(format!("clock frequency {f_mhz} MHz must be positive")));
    }
    if n_iters == 0 {
        return Err(Error::Config("at least one iteration is needed".into()));
    }
    Ok(())
}

/// IUPA decoder for RM(m, 3) with `G` second-order decoders and latency
/// budget `λ`. `t_fod` defaults to [`default_t_fod`] of `2^(m−2)`.
pub fn iupa_model(
    m: u32,
    groups: usize,
    lambda: usize,
    f_mhz: f64,
    t_fod: Option<usize>,
    n_iters: usize,
) -> Result<HwEstimate> {
    check_common(m, f_mhz, n_iters)?;
    check_pow2("G", groups)?;
    check_pow2("lambda", lambda)?;
    let t_fod = t_fod.unwrap_or_else(|| default_t_fod(1 << (m - 2)));
    let rows = (1usize << (m - 1)) - 1;
    let t_group = 2 + t_fod + lambda + 1;
    let per_iter = 2 + t_group + (rows * lambda).div_ceil(groups) + m as usize;
    let n = 1usize << m;
    // stages from a new projected vector to its pre-aggregation unit
    let l_agg2 = 1 + t_fod;
    let l_agg3 = 1 + t_group;
    let depths = RegisterDepths {
        second_order: l_agg2.div_ceil(lambda) + 1,
        third_order: l_agg3.div_ceil(lambda * n / 2 * groups) + 1,
    };
    Ok(HwEstimate {
        architecture: "iupa".into(),
        m,
        r: 3,
        g: Some(groups),
        lambda: Some(lambda),
        p: None,
        f_mhz,
        t_fod,
        t_add: None,
        n_iters,
        throughput_mbps: 2.0 * groups as f64 * f_mhz / lambda as f64,
        latency_cc_per_iter: per_iter,
        latency_cc: per_iter * n_iters,
        latency_us: (per_iter * n_iters) as f64 / f_mhz,
        register_depths: Some(depths),
    })
}

/// CPA decoder for RM(m, r) with `p` processing units; `p` must divide the
/// number of projections.
pub fn cpa_model(
    m: u32,
    r: u32,
    p: usize,
    f_mhz: f64,
    t_fod: Option<usize>,
    t_add: Option<usize>,
    n_iters: usize,
) -> Result<HwEstimate> {
    check_common(m, f_mhz, n_iters)?;
    if r < 2 || r >= m {
        return Err(Error::Config(format!("CPA needs 2 <= r < m, got RM({m},{r})")));
    }
    let n_p = two_binomial(m, r - 1)? as usize;
    if p == 0 || !n_p.is_multiple_of(p) {
        return Err(Error::Config(format!("p = {p} does not divide the {n_p} projections")));
    }
    let t_fod = t_fod.unwrap_or_else(|| default_t_fod(1 << (m - r + 1)));
    let t_add = t_add.unwrap_or(DEFAULT_T_ADD);
    let per_iter = 1 + 1 + t_fod + 1 + t_add + n_p / p;
    let n = 1usize << m;
    Ok(HwEstimate {
        architecture: "cpa".into(),
        m,
        r,
        g: None,
        lambda: None,
        p: Some(p),
        f_mhz,
        t_fod,
        t_add: Some(t_add),
        n_iters,
        throughput_mbps: p as f64 * f_mhz * n as f64 / n_p as f64,
        latency_cc_per_iter: per_iter,
        latency_cc: per_iter * n_iters,
        latency_us: (per_iter * n_iters) as f64 / f_mhz,
        register_depths: None,
    })
}

/// Processing units of an IUPA configuration: the allocated ones plus
/// `2^(m−2)/λ` right-half units per group.
pub fn iupa_total_pus(m: u32, groups: usize, lambda: usize, allocated: usize) -> usize {
    allocated + groups * ((1usize << (m - 2)) / lambda).max(1)
}
