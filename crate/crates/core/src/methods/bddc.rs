//! Benders variant with direct cuts: the master's post-contingency
//! dispatches are screened with the PTDF rows and the most violated line
//! limits are added to the master as they are.

use std::collections::BTreeSet;

use crate::config::RunConfig;
use crate::error::MethodError;
use crate::network::PowerSystem;
use crate::ptdf::{screen, PtdfBundle};

use super::bd::FullMaster;
use super::common::{add_violation_row, dispatch_mw, select_rows, solve_within, Deadline, RowKey};
use super::{finish_early, stamp, DispatchState, IterationRecord, Outcome, RunReport};

pub fn solve_bddc(system: &PowerSystem, config: &RunConfig) -> Result<Outcome, MethodError> {
    let deadline = Deadline::new(config.time_limit_s);
    let mut report = RunReport::new("bddc");
    match run(system, config, &deadline, &mut report) {
        Ok(dispatch) => {
            report.wall_s = deadline.elapsed();
            Ok(Outcome {
                dispatch: Some(dispatch),
                report,
            })
        }
        Err(err) => finish_early(report, err, &deadline),
    }
}

fn run(
    system: &PowerSystem,
    config: &RunConfig,
    deadline: &Deadline,
    report: &mut RunReport,
) -> Result<DispatchState, MethodError> {
    let base = system.base_mva;
    let bundle = PtdfBundle::build(system)?;
    let mut master = FullMaster::build(system, &bundle, config)?;
    report.imported = system.contingencies.clone();
    let position: std::collections::HashMap<usize, usize> = master
        .states
        .iter()
        .enumerate()
        .map(|(k, (s, _))| (*s, k))
        .collect();
    let mut present: BTreeSet<RowKey> = BTreeSet::new();
    let mut best_bound = f64::NEG_INFINITY;

    for iter in 0..config.max_iterations {
        let result = solve_within(&mut master.model, deadline)?;
        best_bound = best_bound.max(result.best_bound);
        let states = master.state_values(&result, base);
        let table = screen(&bundle, &states, config.eps_violation_mw)?;
        let alpha = table.alpha_max;

        if alpha < config.eps_violation_mw {
            let (dispatch, _) = DispatchState::evaluate(
                system,
                &bundle,
                dispatch_mw(system, &result, &master.g),
                config,
            )?;
            report.iterations.push(IterationRecord {
                iter,
                wall_s: stamp(config, deadline, iter),
                objective: result.objective,
                alpha_mw: alpha,
                cuts_added: 0,
                s_size: master.states.len(),
                lb: Some(best_bound),
                ub: Some(dispatch.objective),
            });
            report.objective = dispatch.objective;
            report.best_bound = best_bound;
            return Ok(dispatch);
        }

        let rows = select_rows(&table, |_| config.beta1, &mut present);
        for v in &rows {
            let cols = &master.states[position[&v.contingency]].1;
            let tag = format!("bddc{}", v.contingency);
            add_violation_row(&mut master.model, &bundle, cols, v, base, &tag)?;
        }
        let added = rows.len();
        if added == 0 {
            return Err(MethodError::NonconvergentCut {
                contingency: table.argmax_state.unwrap_or_default(),
            });
        }
        report.iterations.push(IterationRecord {
            iter,
            wall_s: stamp(config, deadline, iter),
            objective: result.objective,
            alpha_mw: alpha,
            cuts_added: added,
            s_size: master.states.len(),
            lb: Some(best_bound),
            ub: None,
        });
        report.total_cuts += added;
        report.best_bound = best_bound;
    }
    Err(MethodError::IterationLimit(config.max_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::triangle;

    #[test]
    fn feasible_first_master_adds_no_rows() {
        let outcome = solve_bddc(&triangle(), &RunConfig::default()).unwrap();
        assert_eq!(outcome.report.iterations.len(), 1);
        assert_eq!(outcome.report.total_cuts, 0);
        assert!(outcome.dispatch.unwrap().feasible);
    }
}
