//! Depth-first branch-and-bound for the allocation model.
//!
//! The search branches on the uncovered label with the fewest placement
//! options. An option picks one of the label's three cells and one group,
//! assigning the cell's row and column to that group when they are not there
//! yet. Costs depend only on the column counts:
//!
//! * primary: `Σ_g ⌈|C_g| / λ⌉` PUs,
//! * secondary: `Σ_g size_g · |C_g|`, the number of D cells the groups end
//!   up processing. Every label is covered at least once, so this minus the
//!   label count is the number of duplicate first-order decodings.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::ilp::{verify_values, IlpModel};
use crate::error::{Error, Result};

/// Search limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub time_limit: Duration,
    /// Stops after this many nodes; results are reproducible when the node
    /// limit rather than the clock ends the search.
    pub node_limit: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { time_limit: Duration::from_secs(60), node_limit: None }
    }
}

impl SolveOptions {
    pub fn with_time_limit(secs: f64) -> Self {
        SolveOptions { time_limit: Duration::from_secs_f64(secs), node_limit: None }
    }
}

/// A solved allocation: per-group rows and D columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAssignment {
    pub m: u32,
    pub groups: usize,
    pub lambda: usize,
    /// 1-based D rows of each group, ascending.
    pub rows: Vec<Vec<usize>>,
    /// 1-based D columns of each group, ascending.
    pub cols: Vec<Vec<usize>>,
    /// `⌈|cols_i| / λ⌉`.
    pub p: Vec<usize>,
    /// PUs per group reserved for the right half of R.
    pub extra_pus: usize,
    pub objective: usize,
    /// Labels of D processed more than once.
    pub duplicate_count: usize,
    /// Processed D cells beyond one per label.
    pub duplicate_cells: usize,
    /// The covering cell `(group, row, col)` selected for each label.
    pub selection: Vec<(u32, usize, usize, usize)>,
    pub proven_optimal: bool,
    pub nodes: u64,
}

impl GroupAssignment {
    pub fn total_pus(&self) -> usize {
        self.objective + self.groups * self.extra_pus
    }

    /// Variable values in the model's layout.
    pub fn to_values(&self, model: &IlpModel) -> Result<Vec<f64>> {
        let mut v = vec![0.0; model.vars.len()];
        for &(label, g, j, k) in &self.selection {
            let idx = model
                .x_var(g, j, k)
                .ok_or_else(|| Error::Infeasible(format!("label {label}: no variable for cell ({g}, {j}, {k})")))?;
            v[idx] = 1.0;
        }
        for g in 0..self.groups {
            for &k in &self.cols[g] {
                v[model.c_var(g, k)] = 1.0;
            }
            for &j in &self.rows[g] {
                v[model.r_var(g, j)] = 1.0;
            }
            v[model.p_var(g)] = self.p[g] as f64;
        }
        Ok(v)
    }

    /// Runs the independent constraint check against `model`.
    pub fn verify(&self, model: &IlpModel) -> Result<()> {
        verify_values(model, &self.to_values(model)?)
    }
}

const UNASSIGNED: usize = usize::MAX;

struct Search<'a> {
    model: &'a IlpModel,
    lambda: usize,
    sizes: Vec<usize>,
    max_cols: usize,
    /// Dense label of D cell `(j, k)`, 0-based.
    cell_label: Vec<usize>,
    /// Three (row, col) cells per dense label, 0-based.
    cells: Vec<Vec<(usize, usize)>>,
    row_group: Vec<usize>,
    group_rows: Vec<Vec<usize>>,
    group_cols: Vec<u64>,
    cover: Vec<u32>,
    uncovered: usize,
    cost: usize,
    processed: usize,
    best: Option<(usize, usize, Vec<usize>, Vec<u64>)>,
    nodes: u64,
    deadline: Instant,
    node_limit: u64,
    aborted: bool,
}

#[derive(Clone, Copy, Debug)]
struct Move {
    d_cost: usize,
    d_proc: usize,
    g: usize,
    row: Option<usize>,
    col: Option<usize>,
}

impl<'a> Search<'a> {
    fn new(model: &'a IlpModel, opts: SolveOptions) -> Result<Self> {
        let (nr, nc) = (model.num_rows, model.num_cols);
        if nc > 64 {
            return Err(Error::Config(format!("{nc} D columns exceed the solver's 64-column limit")));
        }
        let mut cell_label = vec![usize::MAX; nr * nc];
        let mut cells = Vec::with_capacity(model.label_cells.len());
        for (dense, (_, cs)) in model.label_cells.iter().enumerate() {
            let v: Vec<(usize, usize)> = cs.iter().map(|&(j, k)| (j - 1, k - 1)).collect();
            for &(j, k) in &v {
                cell_label[j * nc + k] = dense;
            }
            cells.push(v);
        }
        Ok(Search {
            model,
            lambda: model.lambda,
            sizes: model.group_sizes.clone(),
            max_cols: nc,
            cell_label,
            uncovered: cells.len(),
            cover: vec![0; cells.len()],
            cells,
            row_group: vec![UNASSIGNED; nr],
            group_rows: vec![Vec::new(); model.groups],
            group_cols: vec![0; model.groups],
            cost: 0,
            processed: 0,
            best: None,
            nodes: 0,
            deadline: Instant::now() + opts.time_limit,
            node_limit: opts.node_limit.unwrap_or(u64::MAX),
            aborted: false,
        })
    }

    fn fix_consecutive_rows(&mut self) {
        let mut j = 0;
        for g in 0..self.sizes.len() {
            for _ in 0..self.sizes[g] {
                self.add_row(g, j);
                j += 1;
            }
        }
    }

    #[inline]
    fn label_at(&self, j: usize, k: usize) -> usize {
        self.cell_label[j * self.model.num_cols + k]
    }

    fn bump(&mut self, j: usize, k: usize, up: bool) {
        let l = self.label_at(j, k);
        if l == usize::MAX {
            return;
        }
        if up {
            if self.cover[l] == 0 {
                self.uncovered -= 1;
            }
            self.cover[l] += 1;
        } else {
            self.cover[l] -= 1;
            if self.cover[l] == 0 {
                self.uncovered += 1;
            }
        }
    }

    fn add_col(&mut self, g: usize, k: usize) {
        if (self.group_cols[g].count_ones() as usize).is_multiple_of(self.lambda) {
            self.cost += 1;
        }
        self.processed += self.sizes[g];
        self.group_cols[g] |= 1 << k;
        for i in 0..self.group_rows[g].len() {
            let j = self.group_rows[g][i];
            self.bump(j, k, true);
        }
    }

    fn remove_col(&mut self, g: usize, k: usize) {
        self.group_cols[g] &= !(1 << k);
        self.processed -= self.sizes[g];
        if (self.group_cols[g].count_ones() as usize).is_multiple_of(self.lambda) {
            self.cost -= 1;
        }
        for i in 0..self.group_rows[g].len() {
            let j = self.group_rows[g][i];
            self.bump(j, k, false);
        }
    }

    fn add_row(&mut self, g: usize, j: usize) {
        self.row_group[j] = g;
        self.group_rows[g].push(j);
        let mut cols = self.group_cols[g];
        while cols != 0 {
            let k = cols.trailing_zeros() as usize;
            cols &= cols - 1;
            self.bump(j, k, true);
        }
    }

    fn remove_row(&mut self, g: usize, j: usize) {
        self.row_group[j] = UNASSIGNED;
        let popped = self.group_rows[g].pop();
        debug_assert_eq!(popped, Some(j));
        let mut cols = self.group_cols[g];
        while cols != 0 {
            let k = cols.trailing_zeros() as usize;
            cols &= cols - 1;
            self.bump(j, k, false);
        }
    }

    fn col_delta(&self, g: usize) -> usize {
        (self.group_cols[g].count_ones() as usize).is_multiple_of(self.lambda) as usize
    }

    /// Placement options for one uncovered label, cheapest first.
    fn moves(&self, label: usize, out: &mut Vec<Move>) {
        out.clear();
        for &(j, k) in &self.cells[label] {
            let g = self.row_group[j];
            if g != UNASSIGNED {
                out.push(Move { d_cost: self.col_delta(g), d_proc: self.sizes[g], g, row: None, col: Some(k) });
                continue;
            }
            let mut seen_empty: Vec<usize> = Vec::new();
            for g in 0..self.sizes.len() {
                if self.group_rows[g].len() >= self.sizes[g] {
                    continue;
                }
                if self.group_rows[g].is_empty() && self.group_cols[g] == 0 {
                    // interchangeable with an earlier empty group of equal size
                    if seen_empty.contains(&self.sizes[g]) {
                        continue;
                    }
                    seen_empty.push(self.sizes[g]);
                }
                let has_col = self.group_cols[g] >> k & 1 == 1;
                let (d_cost, d_proc, col) =
                    if has_col { (0, 0, None) } else { (self.col_delta(g), self.sizes[g], Some(k)) };
                out.push(Move { d_cost, d_proc, g, row: Some(j), col });
            }
        }
        out.sort_by_key(|m| (m.d_cost, m.d_proc, m.g, m.row, m.col));
    }

    /// Lower bound on (primary, secondary) cost of any completion.
    fn bound(&self) -> Option<(usize, usize)> {
        let mut need = self.uncovered;
        let free_rows: usize = (0..self.sizes.len())
            .map(|g| (self.sizes[g] - self.group_rows[g].len()) * self.group_cols[g].count_ones() as usize)
            .sum();
        let proc_lb = self.processed + need.saturating_sub(free_rows);
        if free_rows >= need {
            return Some((self.cost, proc_lb));
        }
        need -= free_rows;
        // Columns that fit in already-paid PU slots.
        let mut spare_cap = Vec::with_capacity(self.sizes.len());
        for g in 0..self.sizes.len() {
            let c = self.group_cols[g].count_ones() as usize;
            let room = self.max_cols - c;
            let free = ((self.lambda - c % self.lambda) % self.lambda).min(room);
            let gain = free * self.sizes[g];
            if gain >= need {
                return Some((self.cost, proc_lb));
            }
            need -= gain;
            spare_cap.push(room - free);
        }
        // Then whole PUs, most valuable first.
        let mut blocks: Vec<usize> = Vec::new();
        for (g, &room) in spare_cap.iter().enumerate() {
            let mut r = room;
            while r > 0 {
                let take = r.min(self.lambda);
                blocks.push(take * self.sizes[g]);
                r -= take;
            }
        }
        blocks.sort_unstable_by(|a, b| b.cmp(a));
        let mut extra = 0;
        for b in blocks {
            extra += 1;
            if b >= need {
                return Some((self.cost + extra, proc_lb));
            }
            need -= b;
        }
        None
    }

    fn beats_incumbent(&self, cost: usize, processed: usize) -> bool {
        match &self.best {
            None => true,
            Some((bc, bp, _, _)) => (cost, processed) < (*bc, *bp),
        }
    }

    fn dfs(&mut self) {
        self.nodes += 1;
        if self.nodes >= self.node_limit || (self.nodes.is_multiple_of(1024) && Instant::now() >= self.deadline) {
            self.aborted = true;
        }
        if self.aborted {
            return;
        }
        if self.uncovered == 0 {
            if self.beats_incumbent(self.cost, self.processed) {
                self.best = Some((self.cost, self.processed, self.row_group.clone(), self.group_cols.clone()));
            }
            return;
        }
        let Some((lb_cost, lb_proc)) = self.bound() else { return };
        if !self.beats_incumbent(lb_cost, lb_proc) {
            return;
        }
        // most constrained uncovered label
        let mut moves = Vec::new();
        let mut best_label = None;
        let mut best_moves: Vec<Move> = Vec::new();
        let mut forced_cost = false;
        for l in 0..self.cells.len() {
            if self.cover[l] > 0 {
                continue;
            }
            self.moves(l, &mut moves);
            if moves.is_empty() {
                return;
            }
            forced_cost |= moves[0].d_cost > 0;
            if best_label.is_none() || moves.len() < best_moves.len() {
                best_label = Some(l);
                std::mem::swap(&mut best_moves, &mut moves);
            }
        }
        if forced_cost && !self.beats_incumbent(self.cost + 1, lb_proc) {
            return;
        }
        for mv in best_moves {
            if !self.beats_incumbent(self.cost + mv.d_cost, self.processed + mv.d_proc) {
                continue;
            }
            if let Some(j) = mv.row {
                self.add_row(mv.g, j);
            }
            if let Some(k) = mv.col {
                self.add_col(mv.g, k);
            }
            self.dfs();
            if let Some(k) = mv.col {
                self.remove_col(mv.g, k);
            }
            if let Some(j) = mv.row {
                self.remove_row(mv.g, j);
            }
            if self.aborted {
                return;
            }
        }
    }
}

/// Solves `model` exactly, or returns the best assignment found when a limit
/// is hit (then `proven_optimal` is false).
///
/// A first pass fixes the rows to consecutive blocks (group `g` takes the
/// next `size_g` rows) and only chooses columns; its result seeds the
/// incumbent of the unrestricted search.
pub fn solve_ilp(model: &IlpModel, opts: SolveOptions) -> Result<GroupAssignment> {
    let seed_opts = SolveOptions { time_limit: opts.time_limit / 4, node_limit: opts.node_limit.map(|n| n / 4) };
    let mut seed = Search::new(model, seed_opts)?;
    seed.fix_consecutive_rows();
    seed.dfs();
    let mut search = Search::new(model, opts)?;
    search.best = seed.best.take();
    search.nodes = seed.nodes;
    search.dfs();
    let proven = !search.aborted;
    let nodes = search.nodes;
    let Some((_, _, row_group, cols)) = search.best.take() else {
        return Err(if proven {
            Error::Infeasible("no assignment covers every label".into())
        } else {
            Error::Infeasible("search limit reached before any assignment was found".into())
        });
    };
    Ok(finish(model, row_group, cols, proven, nodes))
}

/// Places the rows the search left open and derives the reported fields.
fn finish(model: &IlpModel, mut row_group: Vec<usize>, cols: Vec<u64>, proven: bool, nodes: u64) -> GroupAssignment {
    let (nr, nc, ng) = (model.num_rows, model.num_cols, model.groups);
    let mut label_of = vec![usize::MAX; nr * nc];
    for (dense, (_, cs)) in model.label_cells.iter().enumerate() {
        for &(j, k) in cs {
            label_of[(j - 1) * nc + k - 1] = dense;
        }
    }
    let mut count = vec![0usize; model.label_cells.len()];
    let mut fill = vec![0usize; ng];
    let col_list = |g: usize| {
        let mask = cols[g];
        (0..nc).filter(move |k| mask >> k & 1 == 1)
    };
    for (j, &g) in row_group.iter().enumerate() {
        if g != UNASSIGNED {
            fill[g] += 1;
            for k in col_list(g) {
                if label_of[j * nc + k] != usize::MAX {
                    count[label_of[j * nc + k]] += 1;
                }
            }
        }
    }
    // Open rows go where they repeat the fewest already-covered labels.
    for j in 0..nr {
        if row_group[j] != UNASSIGNED {
            continue;
        }
        let g = (0..ng)
            .filter(|&g| fill[g] < model.group_sizes[g])
            .min_by_key(|&g| {
                let fresh_dups = col_list(g).filter(|&k| {
                    let l = label_of[j * nc + k];
                    l != usize::MAX && count[l] == 1
                });
                (fresh_dups.count(), g)
            })
            .expect("capacity remains for every open row");
        row_group[j] = g;
        fill[g] += 1;
        for k in col_list(g) {
            if label_of[j * nc + k] != usize::MAX {
                count[label_of[j * nc + k]] += 1;
            }
        }
    }
    let rows: Vec<Vec<usize>> =
        (0..ng).map(|g| (0..nr).filter(|&j| row_group[j] == g).map(|j| j + 1).collect()).collect();
    let col_sets: Vec<Vec<usize>> = (0..ng).map(|g| col_list(g).map(|k| k + 1).collect()).collect();
    let p: Vec<usize> = col_sets.iter().map(|c| c.len().div_ceil(model.lambda)).collect();
    let selection = model
        .label_cells
        .iter()
        .map(|(label, cs)| {
            let &(j, k) =
                cs.iter().find(|&&(j, k)| cols[row_group[j - 1]] >> (k - 1) & 1 == 1).expect("every label is covered");
            (*label, row_group[j - 1], j, k)
        })
        .collect();
    let right_cols = 1usize << (model.m - 2);
    GroupAssignment {
        m: model.m,
        groups: ng,
        lambda: model.lambda,
        objective: p.iter().sum(),
        p,
        extra_pus: right_cols.div_ceil(model.lambda),
        duplicate_count: count.iter().filter(|&&c| c >= 2).count(),
        duplicate_cells: count.iter().map(|&c| c.saturating_sub(1)).sum(),
        rows,
        cols: col_sets,
        selection,
        proven_optimal: proven,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{build_ilp, build_redundancy_matrix};

    fn solve(m: u32, g: usize, lambda: usize, nodes: u64) -> (IlpModel, GroupAssignment) {
        let rm = build_redundancy_matrix(m).unwrap();
        let model = build_ilp(&rm, g, lambda).unwrap();
        let opts = SolveOptions { time_limit: Duration::from_secs(600), node_limit: Some(nodes) };
        let a = solve_ilp(&model, opts).unwrap();
        (model, a)
    }

    #[test]
    fn single_group_large_lambda() {
        let (model, a) = solve(5, 1, 8, 20_000_000);
        a.verify(&model).unwrap();
        assert_eq!(a.objective, 1);
        assert!(a.proven_optimal);
    }

    #[test]
    fn rm53_two_groups() {
        let (model, a) = solve(5, 2, 2, 500_000);
        a.verify(&model).unwrap();
        assert_eq!(a.rows[0].len(), 7);
        assert_eq!(a.rows[1].len(), 8);
        assert!(a.duplicate_count <= 25);
        assert_eq!(a.p, a.cols.iter().map(|c| c.len().div_ceil(2)).collect::<Vec<_>>());
    }

    #[test]
    fn rm53_four_groups() {
        let (model, a) = solve(5, 4, 2, 500_000);
        a.verify(&model).unwrap();
        assert!(a.duplicate_count <= 3, "{a:?}");
    }

    #[test]
    fn rm63_two_groups_meets_hyperplane_cost() {
        for (lambda, total) in [(8, 6), (4, 12), (2, 24)] {
            let (model, a) = solve(6, 2, lambda, 200_000);
            a.verify(&model).unwrap();
            assert!(a.total_pus() <= total, "lambda={lambda}: {}", a.total_pus());
        }
    }

    #[test]
    fn node_limit_is_reproducible() {
        let rm = build_redundancy_matrix(5).unwrap();
        let model = build_ilp(&rm, 4, 2).unwrap();
        let opts = SolveOptions { time_limit: Duration::from_secs(600), node_limit: Some(5_000) };
        let a = solve_ilp(&model, opts).unwrap();
        let b = solve_ilp(&model, opts).unwrap();
        assert_eq!(a, b);
    }
}
