//! Subspaces of F₂^m and their quotient-space coset tables.
//!
//! Coordinates are the integers `0..2^m`, read as bit vectors. A subspace is
//! identified by its reduced row-echelon basis: every basis vector has a
//! distinct leading bit, no other basis vector has that bit set, and the
//! vectors are stored in descending order. Two subspaces are equal exactly
//! when these bases are equal, which makes [`Gf2Subspace`] hashable.
//!
//! The coset of `z` is represented by its minimum member, which is `z` with
//! every pivot bit cleared. Cosets are numbered by ascending representative,
//! so the coset index of `z` is `z` reduced by the basis with the pivot bits
//! squeezed out. This numbering is linear in `z`, which is what makes the
//! projected vectors codewords of the smaller Reed-Muller code.

use crate::error::{domain, Result};

/// Largest ambient dimension accepted anywhere in the crate.
pub const MAX_M: u32 = 10;

/// Gaussian (2-)binomial coefficient: the number of `s`-dimensional
/// subspaces of F₂^m.
///
/// Evaluated with the q-Pascal recurrence, so the result is exact.
pub fn two_binomial(m: u32, s: u32) -> Result<u128> {
    if s > m {
        return domain(format!("two_binomial: s = {s} exceeds m = {m}"));
    }
    if m > 64 {
        return domain(format!("two_binomial: m = {m} too large"));
    }
    // row[j] holds [i choose j]_2 for the current i.
    let mut row = vec![0u128; s as usize + 1];
    row[0] = 1;
    for i in 1..=m {
        for j in (1..=s.min(i) as usize).rev() {
            // [i, j] = [i-1, j-1] + 2^j [i-1, j]
            let shifted = row[j]
                .checked_shl(j as u32)
                .filter(|v| v >> j == row[j])
                .ok_or_else(|| crate::Error::Domain("two_binomial overflow".into()))?;
            row[j] =
                row[j - 1].checked_add(shifted).ok_or_else(|| crate::Error::Domain("two_binomial overflow".into()))?;
        }
    }
    Ok(row[s as usize])
}

fn check_m(m: u32) -> Result<()> {
    if m == 0 || m > MAX_M {
        return domain(format!("ambient dimension m = {m} outside 1..={MAX_M}"));
    }
    Ok(())
}

#[inline]
fn leading_bit(v: u32) -> u32 {
    31 - v.leading_zeros()
}

/// A subspace of F₂^m in canonical (reduced row-echelon) form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gf2Subspace {
    m: u32,
    basis: Vec<u32>,
}

impl Gf2Subspace {
    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn dim(&self) -> u32 {
        self.basis.len() as u32
    }

    /// Canonical basis, descending leading bits.
    pub fn basis(&self) -> &[u32] {
        &self.basis
    }

    /// Bit mask of the pivot (leading) positions.
    pub fn pivot_mask(&self) -> u32 {
        self.basis.iter().fold(0, |acc, &b| acc | 1 << leading_bit(b))
    }

    /// All `2^d` members in ascending order.
    pub fn span(&self) -> Vec<u32> {
        let mut out = vec![0u32];
        for &b in &self.basis {
            let len = out.len();
            for i in 0..len {
                out.push(out[i] ^ b);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn contains(&self, v: u32) -> bool {
        self.reduce(v) == 0
    }

    /// Clears every pivot bit of `v` by adding basis vectors. The result is
    /// the minimum member of the coset `v + self`.
    #[inline]
    pub fn reduce(&self, mut v: u32) -> u32 {
        for &b in &self.basis {
            if v >> leading_bit(b) & 1 == 1 {
                v ^= b;
            }
        }
        v
    }
}

/// Reduced row-echelon basis of the span of `gens` inside F₂^m.
pub fn canonical_span(m: u32, gens: &[u32]) -> Result<Gf2Subspace> {
    check_m(m)?;
    if let Some(&g) = gens.iter().find(|&&g| g >> m != 0) {
        return domain(format!("generator {g} is not an {m}-bit value"));
    }
    let mut basis: Vec<u32> = Vec::with_capacity(gens.len());
    for &g in gens {
        let mut v = g;
        for &b in &basis {
            if v >> leading_bit(b) & 1 == 1 {
                v ^= b;
            }
        }
        if v == 0 {
            continue;
        }
        let lb = leading_bit(v);
        for b in basis.iter_mut() {
            if *b >> lb & 1 == 1 {
                *b ^= v;
            }
        }
        basis.push(v);
        basis.sort_unstable_by(|a, b| b.cmp(a));
    }
    if basis.is_empty() {
        return domain("canonical_span: generators span only the zero vector");
    }
    Ok(Gf2Subspace { m, basis })
}

/// Every `d`-dimensional subspace of F₂^m, ordered lexicographically by
/// canonical basis. For `d = 1` this is `{0, i}` for `i = 1, 2, …, 2^m − 1`.
pub fn enumerate_subspaces(m: u32, d: u32) -> Result<Vec<Gf2Subspace>> {
    check_m(m)?;
    if d == 0 || d > m {
        return domain(format!("subspace dimension d = {d} outside 1..={m}"));
    }
    let mut out = Vec::new();
    let mut pivots = Vec::with_capacity(d as usize);
    choose_pivots(m, d, m, &mut pivots, &mut out);
    out.sort_unstable();
    Ok(out)
}

fn choose_pivots(m: u32, d: u32, below: u32, pivots: &mut Vec<u32>, out: &mut Vec<Gf2Subspace>) {
    if pivots.len() == d as usize {
        fill_free_bits(m, pivots, 0, &mut Vec::new(), out);
        return;
    }
    let remaining = d as usize - pivots.len();
    for p in (remaining as u32 - 1..below).rev() {
        pivots.push(p);
        choose_pivots(m, d, p, pivots, out);
        pivots.pop();
    }
}

fn fill_free_bits(m: u32, pivots: &[u32], idx: usize, acc: &mut Vec<u32>, out: &mut Vec<Gf2Subspace>) {
    if idx == pivots.len() {
        out.push(Gf2Subspace { m, basis: acc.clone() });
        return;
    }
    let pivot_mask: u32 = pivots.iter().fold(0, |a, &p| a | 1 << p);
    let p = pivots[idx];
    let free: Vec<u32> = (0..p).filter(|b| pivot_mask >> b & 1 == 0).collect();
    for pattern in 0u32..1 << free.len() {
        let mut v = 1 << p;
        for (t, &bit) in free.iter().enumerate() {
            if pattern >> t & 1 == 1 {
                v |= 1 << bit;
            }
        }
        acc.push(v);
        fill_free_bits(m, pivots, idx + 1, acc, out);
        acc.pop();
    }
}

/// Bidirectional map between the cosets of a subspace and their members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CosetTable {
    subspace: Gf2Subspace,
    reps: Vec<u32>,
    coset_of: Vec<u32>,
    /// `members[c * 2^d .. (c + 1) * 2^d]` is coset `c`, ascending.
    members: Vec<u32>,
}

impl CosetTable {
    pub fn new(subspace: &Gf2Subspace) -> Self {
        let m = subspace.m;
        let n = 1usize << m;
        let d = subspace.dim();
        let size = 1usize << d;
        let pivots = subspace.pivot_mask();
        let free: Vec<u32> = (0..m).filter(|b| pivots >> b & 1 == 0).collect();
        let squeeze =
            |rep: u32| -> u32 { free.iter().enumerate().fold(0, |acc, (t, &bit)| acc | (rep >> bit & 1) << t) };
        let span = subspace.span();
        let num_cosets = n >> d;
        let mut reps = vec![0u32; num_cosets];
        let mut coset_of = vec![0u32; n];
        let mut members = vec![0u32; n];
        for z in 0..n as u32 {
            let rep = subspace.reduce(z);
            let c = squeeze(rep);
            coset_of[z as usize] = c;
            if rep == z {
                reps[c as usize] = rep;
                for (t, &v) in span.iter().enumerate() {
                    members[c as usize * size + t] = rep ^ v;
                }
            }
        }
        for c in 0..num_cosets {
            members[c * size..(c + 1) * size].sort_unstable();
        }
        CosetTable { subspace: subspace.clone(), reps, coset_of, members }
    }

    pub fn subspace(&self) -> &Gf2Subspace {
        &self.subspace
    }

    pub fn m(&self) -> u32 {
        self.subspace.m
    }

    /// Number of coordinates, `2^m`.
    pub fn len(&self) -> usize {
        self.coset_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coset_of.is_empty()
    }

    pub fn num_cosets(&self) -> usize {
        self.reps.len()
    }

    pub fn coset_size(&self) -> usize {
        1 << self.subspace.dim()
    }

    /// Minimum member of each coset, ascending.
    pub fn reps(&self) -> &[u32] {
        &self.reps
    }

    #[inline]
    pub fn coset_of(&self, z: u32) -> u32 {
        self.coset_of[z as usize]
    }

    pub fn coset_indices(&self) -> &[u32] {
        &self.coset_of
    }

    #[inline]
    pub fn members(&self, coset: usize) -> &[u32] {
        let size = self.coset_size();
        &self.members[coset * size..(coset + 1) * size]
    }

    /// All cosets back to back, `coset_size()` entries each.
    pub fn flat_members(&self) -> &[u32] {
        &self.members
    }
}

/// Coset table of `sub`.
pub fn coset_table(sub: &Gf2Subspace) -> CosetTable {
    CosetTable::new(sub)
}

/// The 2-dimensional subspace reached by projecting onto `{0, i1}` and then,
/// inside the quotient space, onto `{0, i2}`.
///
/// The second projection pairs quotient indices `t` and `t ⊕ i2`, i.e. the
/// original coordinates `reps[t]` and `reps[t ⊕ i2]`. Since the
/// representative map is linear their sum is `reps[i2]` for every `t`, so the
/// composite collapses the span of `i1` and `reps[i2]`.
pub fn compose_projection_chain(m: u32, i1: u32, i2: u32) -> Result<Gf2Subspace> {
    check_m(m)?;
    if m < 2 {
        return domain("compose_projection_chain needs m >= 2");
    }
    if i1 == 0 || i1 >= 1 << m {
        return domain(format!("level-1 index {i1} outside 1..{}", 1u32 << m));
    }
    if i2 == 0 || i2 >= 1 << (m - 1) {
        return domain(format!("level-2 index {i2} outside 1..{}", 1u32 << (m - 1)));
    }
    let outer = canonical_span(m, &[i1])?;
    let table = CosetTable::new(&outer);
    let reps = table.reps();
    let t = 0usize;
    let partner = reps[t] ^ reps[t ^ i2 as usize];
    canonical_span(m, &[i1, partner])
}
