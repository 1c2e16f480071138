//! Solution methods for the security-constrained dispatch with primary
//! response: the extensive form and three decompositions.

pub mod bd;
pub mod bddc;
pub mod ccga;
mod common;
pub mod ef;

pub use common::{
    add_angle_block, add_balance, add_generation, add_line_rows, add_nominal_block,
    add_state_columns, add_violation_row, cost, master_lower_bound, respond_all, select_rows,
    solver_params, state_vectors, Deadline, DispatchState, IterationRecord, RowKey, RunReport,
    RunStatus,
};

use crate::config::{Method, RunConfig};
use crate::error::MethodError;
use crate::network::PowerSystem;

/// What a method hands back: the dispatch it settled on, if any, and the
/// run report. Infeasibility and time or iteration limits are reported
/// through `report.status`, not as errors.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub dispatch: Option<DispatchState>,
    pub report: RunReport,
}

/// Runs the method selected in `config`.
pub fn solve(system: &PowerSystem, config: &RunConfig) -> Result<Outcome, MethodError> {
    match config.method {
        Method::Ef => ef::solve_ef(system, config),
        Method::Bd => bd::solve_bd(system, config),
        Method::Bddc => bddc::solve_bddc(system, config),
        Method::Ccga => ccga::solve_ccga(system, config),
    }
}

/// Turns a terminal error into a reported status; other errors pass through.
pub(crate) fn finish_early(
    mut report: RunReport,
    err: MethodError,
    deadline: &Deadline,
) -> Result<Outcome, MethodError> {
    report.status = match err {
        MethodError::Infeasible => RunStatus::Infeasible,
        MethodError::TimeLimit => RunStatus::TimeLimit,
        MethodError::IterationLimit(_) => RunStatus::IterationLimit,
        other => return Err(other),
    };
    report.wall_s = deadline.elapsed();
    Ok(Outcome {
        dispatch: None,
        report,
    })
}

/// Log timestamp: wall time, or the iteration count in deterministic mode.
pub(crate) fn stamp(config: &RunConfig, deadline: &Deadline, iter: usize) -> f64 {
    if config.deterministic {
        iter as f64
    } else {
        deadline.elapsed()
    }
}
