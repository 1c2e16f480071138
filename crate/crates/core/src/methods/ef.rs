//! Extensive form: one MILP holding the network and the response model of
//! every contingency.

use crate::config::RunConfig;
use crate::error::MethodError;
use crate::network::PowerSystem;
use crate::ptdf::PtdfBundle;
use crate::response::{add_response_envelope, big_m_values, build_disjunctions, ResponseColumns};
use crate::solver::{ModelHandle, SolveStatus};

use super::common::{
    add_angle_block, add_generation, add_state_columns, dispatch_mw, solver_params, Deadline,
};
use super::{finish_early, stamp, DispatchState, IterationRecord, Outcome, RunReport, RunStatus};

pub fn build_ef(
    system: &PowerSystem,
    config: &RunConfig,
) -> Result<(ModelHandle, Vec<crate::solver::Var>), MethodError> {
    let mut model = ModelHandle::new(solver_params(config))?;
    let big_m = big_m_values(system, config.big_m_mode);
    let g = add_generation(&mut model, system)?;
    add_angle_block(&mut model, system, &g, "nom")?;
    for &s in &system.contingencies {
        let g_s = add_state_columns(&mut model, system, s, "gs")?;
        add_angle_block(&mut model, system, &g_s, &s.to_string())?;
        let columns = ResponseColumns { g: &g, g_s: &g_s };
        build_disjunctions(&mut model, system, s, columns, &big_m, &|_| false)?;
        add_response_envelope(&mut model, system, s, columns)?;
    }
    Ok((model, g))
}

pub fn solve_ef(system: &PowerSystem, config: &RunConfig) -> Result<Outcome, MethodError> {
    let deadline = Deadline::new(config.time_limit_s);
    let mut report = RunReport::new("ef");
    let bundle = PtdfBundle::build(system)?;
    let (mut model, g) = build_ef(system, config)?;
    model.set_time_limit(deadline.remaining())?;
    let result = model.solve()?;
    match result.status {
        SolveStatus::OptimalWithinGap => {}
        SolveStatus::TimeLimit if result.has_solution() => report.status = RunStatus::TimeLimit,
        SolveStatus::TimeLimit => return finish_early(report, MethodError::TimeLimit, &deadline),
        SolveStatus::Infeasible => return finish_early(report, MethodError::Infeasible, &deadline),
        SolveStatus::Error => {
            return Err(MethodError::Solver(crate::error::SolverError::Backend(
                result.message,
            )))
        }
    }
    let (dispatch, _) =
        DispatchState::evaluate(system, &bundle, dispatch_mw(system, &result, &g), config)?;
    report.objective = dispatch.objective;
    report.best_bound = result.best_bound;
    report.imported = system.contingencies.clone();
    report.iterations.push(IterationRecord {
        iter: 0,
        wall_s: stamp(config, &deadline, 0),
        objective: result.objective,
        alpha_mw: dispatch.max_violation_mw,
        cuts_added: 0,
        s_size: system.contingencies.len(),
        lb: Some(result.best_bound),
        ub: Some(dispatch.objective),
    });
    report.wall_s = deadline.elapsed();
    Ok(Outcome {
        dispatch: Some(dispatch),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{triangle, two_bus};

    #[test]
    fn without_contingencies_it_is_a_dc_opf() {
        let mut sys = triangle();
        let outcome = solve_ef(&sys, &RunConfig::default()).unwrap();
        assert_eq!(outcome.report.status, RunStatus::Optimal);
        assert!((outcome.report.objective - 900.0).abs() < 1e-6);

        // line 0-2 carries 30 + g0 / 3, so the cheap unit stops at 60 MW
        sys.lines[2].capacity = 50.0;
        let outcome = solve_ef(&sys, &RunConfig::default()).unwrap();
        let d = outcome.dispatch.unwrap();
        assert!((d.objective - 1200.0).abs() < 1e-6);
        assert!((d.g[0] - 60.0).abs() < 1e-6);
    }

    #[test]
    fn lone_unit_outage_is_infeasible() {
        let mut sys = two_bus();
        sys.generators.truncate(1);
        sys.contingencies = vec![0];
        sys.validate().unwrap();
        let outcome = solve_ef(&sys, &RunConfig::default()).unwrap();
        assert_eq!(outcome.report.status, RunStatus::Infeasible);
        assert!(outcome.dispatch.is_none());
    }

    #[test]
    fn response_too_small_for_either_outage() {
        // each unit can ramp 20 MW, yet covering the other's loss needs 80
        let outcome = solve_ef(&two_bus(), &RunConfig::default()).unwrap();
        assert_eq!(outcome.report.status, RunStatus::Infeasible);
    }
}
