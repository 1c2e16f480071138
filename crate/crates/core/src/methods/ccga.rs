//! Constraint-and-column generation. The master starts with a relaxed
//! post-contingency dispatch per state (balance and response envelope
//! only). Each round the exact responses of the master's nominal dispatch
//! are derived by bisection and screened; the worst state gets its
//! disjunctions imported and the worst line limits are added as cuts.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::RunConfig;
use crate::error::MethodError;
use crate::network::PowerSystem;
use crate::ptdf::{screen, PtdfBundle};
use crate::response::{add_response_envelope, big_m_values, build_disjunctions, ResponseColumns};
use crate::solver::{ModelHandle, Var};

use super::common::{
    add_balance, add_nominal_block, add_state_columns, add_violation_row, cost, dispatch_mw,
    respond_all, select_rows, solve_within, solver_params, state_vectors, Deadline, RowKey,
};
use super::{finish_early, stamp, DispatchState, IterationRecord, Outcome, RunReport};

pub fn solve_ccga(system: &PowerSystem, config: &RunConfig) -> Result<Outcome, MethodError> {
    solve_ccga_with(system, config, None, &mut |_| {})
}

/// CCGA with an optional restriction and a per-iteration observer.
///
/// With `saturating = Some(h)` only the units in `h` may sit at their
/// limit after an imported outage; every other unit is held on the linear
/// response branch. The result is then feasible but possibly suboptimal,
/// i.e. an upper bound.
pub fn solve_ccga_with(
    system: &PowerSystem,
    config: &RunConfig,
    saturating: Option<&BTreeSet<usize>>,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<Outcome, MethodError> {
    let deadline = Deadline::new(config.time_limit_s);
    let mut report = RunReport::new("ccga");
    match run(system, config, saturating, observer, &deadline, &mut report) {
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
    saturating: Option<&BTreeSet<usize>>,
    observer: &mut dyn FnMut(&IterationRecord),
    deadline: &Deadline,
    report: &mut RunReport,
) -> Result<DispatchState, MethodError> {
    let base = system.base_mva;
    let bundle = PtdfBundle::build(system)?;
    let big_m = big_m_values(system, config.big_m_mode);
    let linear_only = |i: usize| saturating.is_some_and(|h| !h.contains(&i));

    let mut params = solver_params(config);
    params.mip_gap = config.master_mip_gap;
    let mut model = ModelHandle::new(params)?;
    let g = add_nominal_block(&mut model, system, &bundle)?;
    let mut columns: BTreeMap<usize, Vec<Var>> = BTreeMap::new();
    for &s in &system.contingencies {
        let g_s = add_state_columns(&mut model, system, s, "gs")?;
        add_balance(&mut model, system, &g_s, &format!("balance[{s}]"))?;
        add_response_envelope(&mut model, system, s, ResponseColumns { g: &g, g_s: &g_s })?;
        columns.insert(s, g_s);
    }

    let mut imported: BTreeSet<usize> = BTreeSet::new();
    let mut present: BTreeSet<RowKey> = BTreeSet::new();
    let mut best_bound = f64::NEG_INFINITY;

    for iter in 0..config.max_iterations {
        let result = solve_within(&mut model, deadline)?;
        best_bound = best_bound.max(result.best_bound);
        let g_now = dispatch_mw(system, &result, &g);
        let responses = respond_all(system, &g_now, config.eps_binary_mw);
        if let Some(r) = responses.iter().find(|r| !r.converged) {
            return Err(MethodError::ResponseInfeasible {
                contingency: r.contingency,
                residual_mw: r.imbalance_mw,
            });
        }
        let table = screen(&bundle, &state_vectors(&responses), config.eps_violation_mw)?;
        let alpha = table.alpha_max;
        let mut record = IterationRecord {
            iter,
            wall_s: 0.0,
            objective: result.objective,
            alpha_mw: alpha,
            cuts_added: 0,
            s_size: imported.len(),
            lb: Some(best_bound),
            ub: None,
        };

        if alpha < config.eps_violation_mw {
            record.ub = Some(cost(system, &g_now));
            record.wall_s = stamp(config, deadline, iter);
            observer(&record);
            report.iterations.push(record);
            report.objective = cost(system, &g_now);
            report.best_bound = best_bound;
            report.imported = imported.into_iter().collect();
            let (dispatch, _) = DispatchState::evaluate(system, &bundle, g_now, config)?;
            return Ok(dispatch);
        }

        let worst = table.argmax_state.expect("a violation exists");
        let newly_imported = imported.insert(worst);
        if newly_imported {
            let cols = ResponseColumns {
                g: &g,
                g_s: &columns[&worst],
            };
            build_disjunctions(&mut model, system, worst, cols, &big_m, &linear_only)?;
        }
        let beta = |s: usize| {
            if imported.contains(&s) {
                config.beta1
            } else {
                config.beta2
            }
        };
        let rows = select_rows(&table, beta, &mut present);
        for v in &rows {
            let tag = format!("ccga{}", v.contingency);
            add_violation_row(&mut model, &bundle, &columns[&v.contingency], v, base, &tag)?;
        }
        let added = rows.len();
        if added == 0 && !newly_imported {
            return Err(MethodError::NonconvergentCut { contingency: worst });
        }
        record.cuts_added = added;
        record.s_size = imported.len();
        record.wall_s = stamp(config, deadline, iter);
        observer(&record);
        report.iterations.push(record);
        report.total_cuts += added;
        report.best_bound = best_bound;
        report.imported = imported.iter().copied().collect();
    }
    Err(MethodError::IterationLimit(config.max_iterations))
}
