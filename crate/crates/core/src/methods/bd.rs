//! Benders decomposition with feasibility cuts. The master carries the
//! nominal dispatch and the full response model of every contingency; one
//! LP per contingency measures how far the master's post-contingency
//! dispatch is from satisfying the network limits.

use crate::config::RunConfig;
use crate::error::MethodError;
use crate::network::PowerSystem;
use crate::ptdf::{screen, PtdfBundle};
use crate::response::{add_response_envelope, big_m_values, build_disjunctions, ResponseColumns};
use crate::solver::{ModelHandle, Sense, SolveResult, SolverParams, Var, VarKind};

use super::common::{
    add_balance, add_nominal_block, add_state_columns, dispatch_mw, solve_within, solver_params,
    values_mw, Deadline,
};
use super::{finish_early, stamp, DispatchState, IterationRecord, Outcome, RunReport};

/// Master shared by the Benders variants: nominal block plus, for every
/// contingency, `g_s` columns, their balance, the disjunctions and the
/// response envelope.
pub struct FullMaster {
    pub model: ModelHandle,
    pub g: Vec<Var>,
    /// `(s, g_s columns)` in contingency order.
    pub states: Vec<(usize, Vec<Var>)>,
}

impl FullMaster {
    pub fn build(
        system: &PowerSystem,
        bundle: &PtdfBundle,
        config: &RunConfig,
    ) -> Result<Self, MethodError> {
        let mut model = ModelHandle::new(solver_params(config))?;
        let g = add_nominal_block(&mut model, system, bundle)?;
        let big_m = big_m_values(system, config.big_m_mode);
        let mut states = Vec::with_capacity(system.contingencies.len());
        for &s in &system.contingencies {
            let g_s = add_state_columns(&mut model, system, s, "gs")?;
            add_balance(&mut model, system, &g_s, &format!("balance[{s}]"))?;
            let columns = ResponseColumns { g: &g, g_s: &g_s };
            build_disjunctions(&mut model, system, s, columns, &big_m, &|_| false)?;
            add_response_envelope(&mut model, system, s, columns)?;
            states.push((s, g_s));
        }
        Ok(FullMaster { model, g, states })
    }

    /// Post-contingency dispatches of the last master solution, MW.
    pub fn state_values(&self, result: &SolveResult, base: f64) -> Vec<(usize, Vec<f64>)> {
        self.states
            .iter()
            .map(|(s, cols)| (*s, values_mw(result, cols, base)))
            .collect()
    }
}

/// Optimal value of the overload LP and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    /// Total line overload, MW.
    pub overload_mw: f64,
    /// `d overload / d g_s` per generator; unique up to a constant shift,
    /// which is immaterial for balanced dispatches.
    pub gradient: Vec<f64>,
}

/// Minimum total overload needed to route the fixed post-contingency
/// dispatch `g_s` (MW) through the network. The slack bus balance row is
/// left out so a small imbalance lands on the slack.
pub fn feasibility_subproblem(
    system: &PowerSystem,
    g_s: &[f64],
    params: SolverParams,
) -> Result<Subproblem, MethodError> {
    let base = system.base_mva;
    let mut model = ModelHandle::new(params)?;
    let theta: Vec<Var> = system
        .buses
        .iter()
        .map(|bus| {
            let (lo, hi) = if bus.id == system.slack_bus {
                (0.0, 0.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            model.add_var(
                &format!("theta[{}]", bus.id),
                lo,
                hi,
                0.0,
                VarKind::Continuous,
            )
        })
        .collect::<Result<_, _>>()?;
    let mut flow = Vec::with_capacity(system.n_lines());
    for line in &system.lines {
        let f = model.add_var(
            &format!("f[{}]", line.id),
            f64::NEG_INFINITY,
            f64::INFINITY,
            0.0,
            VarKind::Continuous,
        )?;
        let up = model.add_var(
            &format!("over[{}]", line.id),
            0.0,
            f64::INFINITY,
            1.0,
            VarKind::Continuous,
        )?;
        let down = model.add_var(
            &format!("under[{}]", line.id),
            0.0,
            f64::INFINITY,
            1.0,
            VarKind::Continuous,
        )?;
        let cap = line.capacity / base;
        model.add_linear_constraint(
            &[(f, 1.0), (up, -1.0)],
            Sense::Le,
            cap,
            &format!("hi[{}]", line.id),
        )?;
        model.add_linear_constraint(
            &[(f, 1.0), (down, 1.0)],
            Sense::Ge,
            -cap,
            &format!("lo[{}]", line.id),
        )?;
        model.add_linear_constraint(
            &[
                (f, 1.0),
                (theta[line.from_bus], -line.susceptance),
                (theta[line.to_bus], line.susceptance),
            ],
            Sense::Eq,
            0.0,
            &format!("kvl[{}]", line.id),
        )?;
        flow.push(f);
    }
    let mut injection = system.loads_mw().iter().map(|d| -d).collect::<Vec<_>>();
    for gen in &system.generators {
        injection[gen.bus] += g_s[gen.id];
    }
    let mut rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); system.n_buses()];
    for line in &system.lines {
        rows[line.from_bus].push((flow[line.id], 1.0));
        rows[line.to_bus].push((flow[line.id], -1.0));
    }
    let mut kcl = vec![None; system.n_buses()];
    for (b, coeffs) in rows.into_iter().enumerate() {
        if b == system.slack_bus {
            continue;
        }
        // outgoing minus incoming flow equals the net injection
        let name = format!("kcl[{b}]");
        model.add_linear_constraint(&coeffs, Sense::Eq, injection[b] / base, &name)?;
        kcl[b] = model.row(&name);
    }
    let result = model.solve()?;
    if result.status != crate::solver::SolveStatus::OptimalWithinGap {
        return Err(MethodError::Solver(crate::error::SolverError::Backend(
            format!(
                "overload subproblem ended with {:?}: {}",
                result.status, result.message
            ),
        )));
    }
    let duals: Vec<f64> = kcl
        .iter()
        .map(|row| row.and_then(|r| result.dual(r)).unwrap_or(0.0))
        .collect();
    Ok(Subproblem {
        overload_mw: result.objective * base,
        gradient: system.generators.iter().map(|gen| duals[gen.bus]).collect(),
    })
}

/// Feasibility cut `gradient^T g_s <= rhs_mw` on the post-contingency
/// dispatch of one state, in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct BendersCut {
    pub contingency: usize,
    pub iter: usize,
    pub gradient: Vec<f64>,
    pub rhs_mw: f64,
}

impl BendersCut {
    /// `gradient^T g_s - rhs`; positive when `g_s` violates the cut.
    pub fn excess_mw(&self, g_s: &[f64]) -> f64 {
        self.gradient
            .iter()
            .zip(g_s)
            .map(|(d, x)| d * x)
            .sum::<f64>()
            - self.rhs_mw
    }
}

pub fn solve_bd(system: &PowerSystem, config: &RunConfig) -> Result<Outcome, MethodError> {
    solve_bd_with(system, config, &mut |_| {})
}

/// BD that hands every generated cut to `on_cut`.
pub fn solve_bd_with(
    system: &PowerSystem,
    config: &RunConfig,
    on_cut: &mut dyn FnMut(&BendersCut),
) -> Result<Outcome, MethodError> {
    let deadline = Deadline::new(config.time_limit_s);
    let mut report = RunReport::new("bd");
    match run(system, config, &deadline, &mut report, on_cut) {
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
    on_cut: &mut dyn FnMut(&BendersCut),
) -> Result<DispatchState, MethodError> {
    let base = system.base_mva;
    let bundle = PtdfBundle::build(system)?;
    let mut master = FullMaster::build(system, &bundle, config)?;
    report.imported = system.contingencies.clone();
    // last master point each state was cut at
    let mut last_cut: Vec<Option<Vec<f64>>> = vec![None; master.states.len()];
    let mut best_bound = f64::NEG_INFINITY;

    for iter in 0..config.max_iterations {
        let result = solve_within(&mut master.model, deadline)?;
        best_bound = best_bound.max(result.best_bound);
        let states = master.state_values(&result, base);
        let subproblems: Vec<Subproblem> = states
            .iter()
            .map(|(_, g_s)| feasibility_subproblem(system, g_s, solver_params(config)))
            .collect::<Result<_, _>>()?;
        let worst = subproblems
            .iter()
            .map(|p| p.overload_mw)
            .fold(0.0, f64::max);
        let alpha = screen(&bundle, &states, config.eps_violation_mw)?.alpha_max;

        if worst <= config.eps_violation_mw {
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

        let mut cuts = Vec::new();
        for (k, ((s, g_s), sub)) in states.iter().zip(&subproblems).enumerate() {
            if sub.overload_mw <= config.eps_violation_mw {
                continue;
            }
            if let Some(prev) = &last_cut[k] {
                if prev.iter().zip(g_s).all(|(a, b)| (a - b).abs() <= 1e-7) {
                    return Err(MethodError::NonconvergentCut { contingency: *s });
                }
            }
            // overload + grad^T (g_s - g_s*) <= 0, written on the p.u. columns
            let cols = &master.states[k].1;
            let rhs = sub
                .gradient
                .iter()
                .zip(g_s)
                .map(|(d, x)| d * x)
                .sum::<f64>()
                - sub.overload_mw;
            let coeffs: Vec<(Var, f64)> = cols
                .iter()
                .zip(&sub.gradient)
                .filter(|(_, d)| d.abs() > 1e-12)
                .map(|(&v, &d)| (v, d))
                .collect();
            on_cut(&BendersCut {
                contingency: *s,
                iter,
                gradient: sub.gradient.clone(),
                rhs_mw: rhs,
            });
            cuts.push((format!("bd[{s},{iter}]"), coeffs, Sense::Le, rhs / base));
            last_cut[k] = Some(g_s.clone());
        }
        report.iterations.push(IterationRecord {
            iter,
            wall_s: stamp(config, deadline, iter),
            objective: result.objective,
            alpha_mw: alpha,
            cuts_added: cuts.len(),
            s_size: master.states.len(),
            lb: Some(best_bound),
            ub: None,
        });
        report.total_cuts += cuts.len();
        report.best_bound = best_bound;
        master.model.add_rows_incremental(cuts)?;
    }
    Err(MethodError::IterationLimit(config.max_iterations))
}
