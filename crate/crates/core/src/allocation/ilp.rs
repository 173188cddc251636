use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::matrix::RedundancyMatrix;
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum VarKind {
    Binary,
    Continuous { lo: f64, hi: f64 },
    Integer { lo: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, i64)>,
    pub sense: Sense,
    pub rhs: i64,
}

/// The projection-allocation integer program over the D block of R.
///
/// Rows `j` and columns `k` are 1-based D indices, groups `g` are 0-based.
/// Group 0 is the short group.
#[derive(Debug, Clone, Serialize)]
pub struct IlpModel {
    pub m: u32,
    pub groups: usize,
    pub lambda: usize,
    pub num_rows: usize,
    pub num_cols: usize,
    pub group_sizes: Vec<usize>,
    /// D cells of every label occurring in D, ascending label.
    pub label_cells: Vec<(u32, Vec<(usize, usize)>)>,
    pub vars: Vec<Var>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, i64)>,
    #[serde(skip)]
    x_index: Vec<Option<usize>>,
}

/// Rows per group: `2^(m−1)/G` each, one fewer for group 0. With `G = 1`
/// the single group holds every row.
pub fn group_sizes(num_rows: usize, groups: usize) -> Vec<usize> {
    if groups == 1 {
        return vec![num_rows];
    }
    let base = (num_rows + 1) / groups;
    (0..groups).map(|g| if g == 0 { base - 1 } else { base }).collect()
}

fn check_pow2(name: &str, v: usize) -> Result<()> {
    if v == 0 || !v.is_power_of_two() {
        return Err(Error::Config(format!("{name} = {v} must be a power of two")));
    }
    Ok(())
}

/// Builds the allocation model for `G` groups and latency budget `λ`.
pub fn build_ilp(rm: &RedundancyMatrix, groups: usize, lambda: usize) -> Result<IlpModel> {
    IlpModel::from_cells(rm.m(), rm.size(), rm.d_cols(), groups, lambda, rm.d_label_cells())
}

impl IlpModel {
    /// Builds the model from an explicit label-to-cells map.
    pub fn from_cells(
        m: u32,
        num_rows: usize,
        num_cols: usize,
        groups: usize,
        lambda: usize,
        label_cells: Vec<(u32, Vec<(usize, usize)>)>,
    ) -> Result<Self> {
        check_pow2("G", groups)?;
        check_pow2("lambda", lambda)?;
        if groups > num_rows.div_ceil(2) && groups != 1 {
            return Err(Error::Config(format!("G = {groups} leaves groups without rows")));
        }
        for (_, cells) in &label_cells {
            if let Some(&(j, k)) = cells.iter().find(|&&(j, k)| j == 0 || j > num_rows || k == 0 || k > num_cols) {
                return domain(format!("cell ({j}, {k}) outside D"));
            }
        }
        let sizes = group_sizes(num_rows, groups);
        let mut vars = Vec::new();
        let mut x_index = vec![None; groups * num_rows * num_cols];
        for g in 0..groups {
            for (_, cells) in &label_cells {
                for &(j, k) in cells {
                    let slot = (g * num_rows + j - 1) * num_cols + k - 1;
                    if x_index[slot].is_none() {
                        x_index[slot] = Some(vars.len());
                        vars.push(Var { name: format!("x_{g}_{j}_{k}"), kind: VarKind::Binary });
                    }
                }
            }
        }
        let unit = VarKind::Continuous { lo: 0.0, hi: 1.0 };
        let c0 = vars.len();
        for g in 0..groups {
            for k in 1..=num_cols {
                vars.push(Var { name: format!("c_{g}_{k}"), kind: unit });
            }
        }
        let r0 = vars.len();
        for g in 0..groups {
            for j in 1..=num_rows {
                vars.push(Var { name: format!("r_{g}_{j}"), kind: unit });
            }
        }
        let p0 = vars.len();
        for g in 0..groups {
            vars.push(Var { name: format!("p_{g}"), kind: VarKind::Integer { lo: 0 } });
        }
        let c = |g: usize, k: usize| c0 + g * num_cols + k - 1;
        let r = |g: usize, j: usize| r0 + g * num_rows + j - 1;
        let x = |g: usize, j: usize, k: usize| x_index[(g * num_rows + j - 1) * num_cols + k - 1].expect("x exists");

        let mut constraints = Vec::new();
        for g in 0..groups {
            let mut terms: Vec<(usize, i64)> = (1..=num_cols).map(|k| (c(g, k), 1)).collect();
            terms.push((p0 + g, -(lambda as i64)));
            constraints.push(Constraint { name: format!("latency_{g}"), terms, sense: Sense::Le, rhs: 0 });
        }
        for (label, cells) in &label_cells {
            let terms = (0..groups)
                .flat_map(|g| cells.iter().map(move |&(j, k)| (g, j, k)))
                .map(|(g, j, k)| (x(g, j, k), 1))
                .collect();
            constraints.push(Constraint { name: format!("once_{label}"), terms, sense: Sense::Eq, rhs: 1 });
        }
        for g in 0..groups {
            for (_, cells) in &label_cells {
                for &(j, k) in cells {
                    constraints.push(Constraint {
                        name: format!("col_{g}_{j}_{k}"),
                        terms: vec![(c(g, k), 1), (x(g, j, k), -1)],
                        sense: Sense::Ge,
                        rhs: 0,
                    });
                    constraints.push(Constraint {
                        name: format!("row_{g}_{j}_{k}"),
                        terms: vec![(r(g, j), 1), (x(g, j, k), -1)],
                        sense: Sense::Ge,
                        rhs: 0,
                    });
                }
            }
        }
        for j in 1..=num_rows {
            let terms = (0..groups).map(|g| (r(g, j), 1)).collect();
            constraints.push(Constraint { name: format!("onegroup_{j}"), terms, sense: Sense::Eq, rhs: 1 });
        }
        for (g, &size) in sizes.iter().enumerate() {
            let terms = (1..=num_rows).map(|j| (r(g, j), 1)).collect();
            constraints.push(Constraint { name: format!("rows_{g}"), terms, sense: Sense::Eq, rhs: size as i64 });
        }
        let objective = (0..groups).map(|g| (p0 + g, 1)).collect();
        Ok(IlpModel {
            m,
            groups,
            lambda,
            num_rows,
            num_cols,
            group_sizes: sizes,
            label_cells,
            vars,
            constraints,
            objective,
            x_index,
        })
    }

    pub fn num_x(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn x_var(&self, g: usize, j: usize, k: usize) -> Option<usize> {
        if g >= self.groups || j == 0 || j > self.num_rows || k == 0 || k > self.num_cols {
            return None;
        }
        self.x_index[(g * self.num_rows + j - 1) * self.num_cols + k - 1]
    }

    pub fn c_var(&self, g: usize, k: usize) -> usize {
        self.num_x() + g * self.num_cols + k - 1
    }

    pub fn r_var(&self, g: usize, j: usize) -> usize {
        self.num_x() + self.groups * self.num_cols + g * self.num_rows + j - 1
    }

    pub fn p_var(&self, g: usize) -> usize {
        self.num_x() + self.groups * (self.num_cols + self.num_rows) + g
    }

    /// The model in CPLEX LP text format. Output is deterministic.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ projection allocation RM({},3) G={} lambda={}", self.m, self.groups, self.lambda);
        s.push_str("Minimize\n");
        s.push_str(&format_expr(" obj:", &self.objective, &self.vars));
        s.push_str("Subject To\n");
        for c in &self.constraints {
            let mut line = format_expr(&format!(" {}:", c.name), &c.terms, &self.vars);
            line.pop();
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(line, " {op} {}", c.rhs);
            s.push_str(&line);
        }
        s.push_str("Bounds\n");
        for v in &self.vars {
            match v.kind {
                VarKind::Continuous { lo, hi } => {
                    let _ = writeln!(s, " {lo} <= {} <= {hi}", v.name);
                }
                VarKind::Integer { lo } => {
                    let _ = writeln!(s, " {} >= {lo}", v.name);
                }
                VarKind::Binary => {}
            }
        }
        write_name_section(&mut s, "Generals", self.vars.iter().filter(|v| matches!(v.kind, VarKind::Integer { .. })));
        write_name_section(&mut s, "Binaries", self.vars.iter().filter(|v| v.kind == VarKind::Binary));
        s.push_str("End\n");
        s
    }
}

fn format_expr(head: &str, terms: &[(usize, i64)], vars: &[Var]) -> String {
    let mut s = String::from(head);
    if terms.is_empty() {
        s.push_str(" 0\n");
        return s;
    }
    for (i, &(v, coef)) in terms.iter().enumerate() {
        if i > 0 && i % 8 == 0 {
            s.push_str("\n   ");
        }
        let sign = if coef < 0 { '-' } else { '+' };
        let mag = coef.unsigned_abs();
        let name = &vars[v].name;
        match (i, mag) {
            (0, 1) if coef > 0 => {
                let _ = write!(s, " {name}");
            }
            (0, _) if coef > 0 => {
                let _ = write!(s, " {mag} {name}");
            }
            (_, 1) => {
                let _ = write!(s, " {sign} {name}");
            }
            _ => {
                let _ = write!(s, " {sign} {mag} {name}");
            }
        }
    }
    s.push('\n');
    s
}

fn write_name_section<'a>(s: &mut String, title: &str, vars: impl Iterator<Item = &'a Var>) {
    let names: Vec<&str> = vars.map(|v| v.name.as_str()).collect();
    if names.is_empty() {
        return;
    }
    s.push_str(title);
    s.push('\n');
    for chunk in names.chunks(10) {
        let _ = writeln!(s, " {}", chunk.join(" "));
    }
}

/// Writes the model to `path` in LP format.
pub fn export_lp(model: &IlpModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model.to_lp_string())?;
    Ok(())
}

/// Checks a full variable assignment against every constraint row of the
/// model, after rounding continuous values below 1 down to 0.
pub fn verify_values(model: &IlpModel, values: &[f64]) -> Result<()> {
    if values.len() != model.vars.len() {
        return Err(Error::DimensionMismatch { expected: model.vars.len(), got: values.len() });
    }
    let mut v = values.to_vec();
    for (val, var) in v.iter_mut().zip(&model.vars) {
        match var.kind {
            VarKind::Binary => {
                if *val != 0.0 && *val != 1.0 {
                    return Err(Error::Infeasible(format!("{} = {val} is not binary", var.name)));
                }
            }
            VarKind::Continuous { lo, hi } => {
                if *val < lo || *val > hi {
                    return Err(Error::Infeasible(format!("{} = {val} outside [{lo}, {hi}]", var.name)));
                }
                if *val < 1.0 {
                    *val = 0.0;
                }
            }
            VarKind::Integer { lo } => {
                if val.fract() != 0.0 || *val < lo as f64 {
                    return Err(Error::Infeasible(format!("{} = {val} is not an integer >= {lo}", var.name)));
                }
            }
        }
    }
    for c in &model.constraints {
        let lhs: f64 = c.terms.iter().map(|&(i, a)| a as f64 * v[i]).sum();
        let rhs = c.rhs as f64;
        let ok = match c.sense {
            Sense::Le => lhs <= rhs,
            Sense::Ge => lhs >= rhs,
            Sense::Eq => lhs == rhs,
        };
        if !ok {
            return Err(Error::Infeasible(format!("constraint {} violated: {lhs} vs {rhs}", c.name)));
        }
    }
    Ok(())
}

/// Objective value of an assignment.
pub fn objective_value(model: &IlpModel, values: &[f64]) -> f64 {
    model.objective.iter().map(|&(i, a)| a as f64 * values[i]).sum()
}
