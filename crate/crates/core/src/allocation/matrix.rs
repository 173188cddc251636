use std::collections::HashMap;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::gf2::{compose_projection_chain, Gf2Subspace};

/// Labels of the first-order codewords reached by every (top-level row,
/// second-order column) pair of an RM(m, 3) projection tree.
///
/// Rows and columns are 1-based projection indices `1..2^(m−1)`. Labels are
/// numbered `1..` by first appearance in row-major order; equal labels mean
/// the same 2-D subspace and hence the same first-order codeword.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RedundancyMatrix {
    m: u32,
    size: usize,
    labels: Vec<u32>,
    #[serde(skip)]
    subspaces: Vec<Gf2Subspace>,
}

impl RedundancyMatrix {
    pub fn m(&self) -> u32 {
        self.m
    }

    /// Rows (and columns) of R: `2^(m−1) − 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Columns of the duplicate-bearing block D: `2^(m−2) − 1`.
    pub fn d_cols(&self) -> usize {
        (1 << (self.m - 2)) - 1
    }

    /// First column of the duplicate-free right half.
    pub fn right_start(&self) -> usize {
        1 << (self.m - 2)
    }

    pub fn num_labels(&self) -> usize {
        self.subspaces.len()
    }

    /// Label at 1-based `(row, col)`.
    #[inline]
    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[(row - 1) * self.size + col - 1]
    }

    /// Subspace of a 1-based label.
    pub fn subspace(&self, label: u32) -> &Gf2Subspace {
        &self.subspaces[label as usize - 1]
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.labels.chunks(self.size).map(<[u32]>::to_vec).collect()
    }

    /// Cells `(row, col)` of D grouped by label, in label order. Only labels
    /// that occur in D are present.
    pub fn d_label_cells(&self) -> Vec<(u32, Vec<(usize, usize)>)> {
        let mut by_label: HashMap<u32, Vec<(usize, usize)>> = HashMap::new();
        for j in 1..=self.size {
            for k in 1..=self.d_cols() {
                by_label.entry(self.label(j, k)).or_default().push((j, k));
            }
        }
        let mut out: Vec<_> = by_label.into_iter().collect();
        out.sort_unstable_by_key(|(l, _)| *l);
        out
    }
}

/// Builds R for RM(m, 3), `4 ≤ m ≤ 8`.
pub fn build_redundancy_matrix(m: u32) -> Result<RedundancyMatrix> {
    if !(4..=8).contains(&m) {
        return domain(format!("redundancy matrix needs 4 <= m <= 8, got {m}"));
    }
    let size = (1usize << (m - 1)) - 1;
    let mut ids: HashMap<Gf2Subspace, u32> = HashMap::new();
    let mut subspaces = Vec::new();
    let mut labels = Vec::with_capacity(size * size);
    for j in 1..=size as u32 {
        for k in 1..=size as u32 {
            let s = compose_projection_chain(m, j, k)?;
            let next = subspaces.len() as u32 + 1;
            let id = *ids.entry(s.clone()).or_insert_with(|| {
                subspaces.push(s);
                next
            });
            labels.push(id);
        }
    }
    Ok(RedundancyMatrix { m, size, labels, subspaces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::two_binomial;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn invariants_hold_for_small_m() {
        for m in 4..=7u32 {
            let r = build_redundancy_matrix(m).unwrap();
            assert_eq!(r.num_labels() as u128, two_binomial(m, 2).unwrap());
            let mut right = HashSet::new();
            for j in 1..=r.size() {
                for k in r.right_start()..=r.size() {
                    assert!(right.insert(r.label(j, k)), "m={m}");
                }
            }
            let mut d_counts: HashMap<u32, usize> = HashMap::new();
            for j in 1..=r.size() {
                for k in 1..=r.d_cols() {
                    *d_counts.entry(r.label(j, k)).or_default() += 1;
                }
            }
            assert!(d_counts.values().all(|&c| c == 3));
            assert!(d_counts.keys().all(|l| !right.contains(l)));
            assert_eq!(d_counts.len() + right.len(), r.num_labels());
        }
    }

    #[test]
    fn rm53_shapes() {
        let r = build_redundancy_matrix(5).unwrap();
        assert_eq!(r.size(), 15);
        assert_eq!(r.d_cols(), 7);
        assert_eq!(r.num_labels(), 155);
        let d = r.d_label_cells();
        assert_eq!(d.len(), 35);
        assert!(d.iter().all(|(_, cells)| cells.len() == 3));
        assert_eq!(r.label(1, 1), 1);
        assert_eq!(build_redundancy_matrix(6).unwrap().num_labels(), 651);
        assert!(build_redundancy_matrix(3).is_err());
        assert!(build_redundancy_matrix(9).is_err());
    }

    #[test]
    fn labels_identify_subspaces() {
        let r = build_redundancy_matrix(5).unwrap();
        for j in 1..=15 {
            for k in 1..=15 {
                let s = compose_projection_chain(5, j as u32, k as u32).unwrap();
                assert_eq!(r.subspace(r.label(j, k)), &s);
            }
        }
    }
}
