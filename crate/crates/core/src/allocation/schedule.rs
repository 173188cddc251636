use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::matrix::RedundancyMatrix;
use super::solver::GroupAssignment;
use crate::error::{Error, Result};

/// Rows and full column list processed by one second-order decoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleGroup {
    /// Top-level projection indices, ascending.
    pub rows: Vec<usize>,
    /// Second-order projection indices, ascending.
    pub cols: Vec<usize>,
    /// PUs for the allocated (D) columns.
    pub p: usize,
}

/// A complete IUPA projection schedule for RM(m, 3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IupaSchedule {
    pub m: u32,
    #[serde(rename = "G")]
    pub g: usize,
    /// `None` for the ideal schedule.
    pub lambda: Option<usize>,
    pub groups: Vec<ScheduleGroup>,
    /// D labels processed more than once.
    pub duplicates: usize,
    /// Group that holds one row fewer and is padded by the all-zero vector.
    #[serde(default)]
    pub dummy_group: Option<usize>,
    #[serde(default)]
    pub objective: Option<usize>,
    #[serde(default)]
    pub total_pus: Option<usize>,
    #[serde(default)]
    pub proven_optimal: Option<bool>,
}

impl IupaSchedule {
    /// Number of top-level rows, `2^(m−1) − 1`.
    pub fn num_rows(&self) -> usize {
        (1 << (self.m - 1)) - 1
    }

    /// First-order decodings per outer iteration.
    pub fn fods_per_iteration(&self) -> usize {
        self.groups.iter().map(|g| g.rows.len() * g.cols.len()).sum()
    }

    /// Short label for records, e.g. `ideal` or `ilp(2,4)`.
    pub fn id(&self) -> String {
        match self.lambda {
            None => "ideal".into(),
            Some(l) => format!("ilp({},{l})", self.g),
        }
    }

    /// Times each label of R is processed.
    pub fn label_coverage(&self, rm: &RedundancyMatrix) -> Vec<usize> {
        let mut count = vec![0; rm.num_labels()];
        for g in &self.groups {
            for &j in &g.rows {
                for &k in &g.cols {
                    count[rm.label(j, k) as usize - 1] += 1;
                }
            }
        }
        count
    }

    /// Rows partition the top level, columns are in range, every label is
    /// covered.
    pub fn validate(&self, rm: &RedundancyMatrix) -> Result<()> {
        if rm.m() != self.m {
            return Err(Error::Config(format!("schedule is for m = {}, code has m = {}", self.m, rm.m())));
        }
        let n = rm.size();
        let mut seen = vec![false; n + 1];
        for g in &self.groups {
            for &j in &g.rows {
                if j == 0 || j > n || std::mem::replace(&mut seen[j], true) {
                    return Err(Error::Config(format!("row {j} is out of range or repeated")));
                }
            }
            if let Some(&k) = g.cols.iter().find(|&&k| k == 0 || k > n) {
                return Err(Error::Config(format!("column {k} out of range")));
            }
        }
        if seen[1..].iter().any(|s| !s) {
            return Err(Error::Config("schedule leaves top-level rows unassigned".into()));
        }
        if let Some(l) = self.label_coverage(rm).iter().position(|&c| c == 0) {
            return Err(Error::Config(format!("label {} is never processed", l + 1)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Full per-group schedule: allocated columns plus the whole right half.
pub fn derive_schedule(assign: &GroupAssignment, rm: &RedundancyMatrix) -> Result<IupaSchedule> {
    if assign.m != rm.m() {
        return Err(Error::Config("assignment and matrix disagree on m".into()));
    }
    let groups: Vec<ScheduleGroup> = (0..assign.groups)
        .map(|g| {
            let mut cols = assign.cols[g].clone();
            cols.extend(rm.right_start()..=rm.size());
            ScheduleGroup { rows: assign.rows[g].clone(), cols, p: assign.p[g] }
        })
        .collect();
    let sizes: Vec<usize> = groups.iter().map(|g| g.rows.len()).collect();
    let dummy_group = sizes.iter().position(|&s| s < *sizes.iter().max().unwrap_or(&0));
    let mut sched = IupaSchedule {
        m: assign.m,
        g: assign.groups,
        lambda: Some(assign.lambda),
        groups,
        duplicates: 0,
        dummy_group,
        objective: Some(assign.objective),
        total_pus: Some(assign.total_pus()),
        proven_optimal: Some(assign.proven_optimal),
    };
    sched.duplicates = sched.label_coverage(rm).iter().filter(|&&c| c >= 2).count();
    sched.validate(rm)?;
    Ok(sched)
}

/// First and last second-order projection of row `b` in the unique
/// selection: `b_f = 2^⌊log2 b⌋`, `b_l = 2^(m−r+2) − 1`.
pub fn unique_column_range(m: u32, r: u32, b: usize) -> (usize, usize) {
    let bf = 1 << (usize::BITS - 1 - b.leading_zeros());
    (bf, (1 << (m - r + 2)) - 1)
}

/// The duplicate-free schedule: one group per row, row `b` processing
/// columns `b_f..=b_l`.
pub fn ideal_schedule(rm: &RedundancyMatrix) -> IupaSchedule {
    let m = rm.m();
    let groups: Vec<ScheduleGroup> = (1..=rm.size())
        .map(|b| {
            let (bf, bl) = unique_column_range(m, 3, b);
            let cols: Vec<usize> = (bf..=bl).collect();
            ScheduleGroup { rows: vec![b], p: cols.len(), cols }
        })
        .collect();
    let mut sched = IupaSchedule {
        m,
        g: groups.len(),
        lambda: None,
        groups,
        duplicates: 0,
        dummy_group: None,
        objective: None,
        total_pus: None,
        proven_optimal: None,
    };
    sched.duplicates = sched.label_coverage(rm).iter().filter(|&&c| c >= 2).count();
    sched
}

/// Greedy construction of a duplicate-free schedule: scan R row by row and
/// keep every cell whose label has not been seen. Used as a cross-check of
/// the closed-form column ranges.
pub fn greedy_unique_cells(rm: &RedundancyMatrix) -> HashMap<usize, Vec<usize>> {
    let mut seen = vec![false; rm.num_labels() + 1];
    let mut out: HashMap<usize, Vec<usize>> = HashMap::new();
    for j in 1..=rm.size() {
        for k in 1..=rm.size() {
            let l = rm.label(j, k) as usize;
            if !seen[l] {
                seen[l] = true;
                out.entry(j).or_default().push(k);
            }
        }
    }
    out
}
