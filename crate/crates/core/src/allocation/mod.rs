//! Projection allocation for IUPA on RM(m, 3): the redundancy matrix, the
//! grouping integer program, a branch-and-bound solver and the schedules
//! the decoder consumes.

mod ilp;
mod matrix;
mod schedule;
mod solver;

pub use ilp::{
    build_ilp, export_lp, group_sizes, objective_value, verify_values, Constraint, IlpModel, Sense, Var, VarKind,
};
pub use matrix::{build_redundancy_matrix, RedundancyMatrix};
pub use schedule::{
    derive_schedule, greedy_unique_cells, ideal_schedule, unique_column_range, IupaSchedule, ScheduleGroup,
};
pub use solver::{solve_ilp, GroupAssignment, SolveOptions};
