//! Reed-Muller codes: Plotkin-recursive generator, encoding, membership and
//! the exact binary projection onto cosets.

use crate::error::{check_len, domain, Result};
use crate::gf2::{CosetTable, MAX_M};

fn binomial(n: u32, k: u32) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) as usize / (i + 1) as usize)
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

/// Packs a 0/1 byte vector into 64-bit words, coordinate `z` at bit `z % 64`
/// of word `z / 64`.
fn pack(bits: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; words(bits.len())];
    for (z, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            out[z / 64] |= 1 << (z % 64);
        }
    }
    out
}

fn unpack(row: &[u64], n: usize) -> Vec<u8> {
    (0..n).map(|z| (row[z / 64] >> (z % 64) & 1) as u8).collect()
}

fn first_set_bit(row: &[u64]) -> Option<usize> {
    row.iter().enumerate().find(|(_, w)| **w != 0).map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

/// Generator matrix of RM(m, r) as `k` rows of `2^m` bits, built by
/// `G(m,r) = [[G(m-1,r), G(m-1,r)], [0, G(m-1,r-1)]]`.
pub fn generator_matrix(m: u32, r: u32) -> Result<Vec<Vec<u8>>> {
    if m > MAX_M {
        return domain(format!("m = {m} exceeds {MAX_M}"));
    }
    if r > m {
        return domain(format!("order r = {r} exceeds m = {m}"));
    }
    Ok(plotkin(m, r))
}

fn plotkin(m: u32, r: u32) -> Vec<Vec<u8>> {
    let n = 1usize << m;
    if r == 0 {
        return vec![vec![1u8; n]];
    }
    if m == 0 {
        return vec![vec![1u8]];
    }
    let upper = plotkin(m - 1, r.min(m - 1));
    let lower = plotkin(m - 1, r - 1);
    let half = n / 2;
    let mut rows = Vec::with_capacity(upper.len() + lower.len());
    for row in &upper {
        let mut full = row.clone();
        full.extend_from_slice(row);
        rows.push(full);
    }
    for row in &lower {
        let mut full = vec![0u8; half];
        full.extend_from_slice(row);
        rows.push(full);
    }
    rows
}

/// A Reed-Muller code RM(m, r).
#[derive(Debug, Clone)]
pub struct RmCode {
    m: u32,
    r: u32,
    generator: Vec<Vec<u64>>,
    /// Row-reduced copy of the generator, keyed by pivot coordinate.
    echelon: Vec<(usize, Vec<u64>)>,
}

impl RmCode {
    pub fn new(m: u32, r: u32) -> Result<Self> {
        let rows = generator_matrix(m, r)?;
        let generator: Vec<Vec<u64>> = rows.iter().map(|r| pack(r)).collect();
        let mut echelon: Vec<(usize, Vec<u64>)> = Vec::new();
        for row in &generator {
            let mut v = row.clone();
            reduce_against(&echelon, &mut v);
            if let Some(p) = first_set_bit(&v) {
                for (_, e) in echelon.iter_mut() {
                    if e[p / 64] >> (p % 64) & 1 == 1 {
                        e.iter_mut().zip(&v).for_each(|(a, b)| *a ^= b);
                    }
                }
                echelon.push((p, v));
            }
        }
        let code = RmCode { m, r, generator, echelon };
        debug_assert_eq!(code.echelon.len(), code.k());
        Ok(code)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn n(&self) -> usize {
        1 << self.m
    }

    pub fn k(&self) -> usize {
        (0..=self.r).map(|i| binomial(self.m, i)).sum()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n() as f64
    }

    /// Rank of the generator over F₂.
    pub fn rank(&self) -> usize {
        self.echelon.len()
    }

    pub fn generator_rows(&self) -> Vec<Vec<u8>> {
        self.generator.iter().map(|r| unpack(r, self.n())).collect()
    }

    /// `c = u G` over F₂.
    pub fn encode(&self, u: &[u8]) -> Result<Vec<u8>> {
        check_len(self.k(), u.len())?;
        let mut acc = vec![0u64; words(self.n())];
        for (bit, row) in u.iter().zip(&self.generator) {
            if bit & 1 == 1 {
                acc.iter_mut().zip(row).for_each(|(a, b)| *a ^= b);
            }
        }
        Ok(unpack(&acc, self.n()))
    }

    /// Whether `c` lies in the row space of the generator.
    pub fn is_codeword(&self, c: &[u8]) -> bool {
        if c.len() != self.n() {
            return false;
        }
        let mut v = pack(c);
        reduce_against(&self.echelon, &mut v);
        v.iter().all(|&w| w == 0)
    }
}

fn reduce_against(echelon: &[(usize, Vec<u64>)], v: &mut [u64]) {
    for (p, row) in echelon {
        if v[p / 64] >> (p % 64) & 1 == 1 {
            v.iter_mut().zip(row).for_each(|(a, b)| *a ^= b);
        }
    }
}

/// Projects a binary vector onto the cosets of `table`'s subspace: coset `T`
/// receives the XOR of `c` over its members.
pub fn binary_project(c: &[u8], table: &CosetTable) -> Result<Vec<u8>> {
    check_len(table.len(), c.len())?;
    Ok((0..table.num_cosets()).map(|t| table.members(t).iter().fold(0u8, |acc, &z| acc ^ c[z as usize])).collect())
}
