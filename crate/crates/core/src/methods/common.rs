//! Result types and helpers shared by the solution methods.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{MethodError, SolverError};
use crate::network::PowerSystem;
use crate::ptdf::{screen, Direction, PtdfBundle, Violation, ViolationTable};
use crate::response::{binary_search, ResponseOutcome};
use crate::solver::{ModelHandle, SolveResult, SolveStatus, SolverParams, Var, VarKind};

/// Nominal dispatch plus the post-contingency response for every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchState {
    /// Nominal generation, MW.
    pub g: Vec<f64>,
    pub responses: Vec<ResponseOutcome>,
    /// `c^T g`, $/h.
    pub objective: f64,
    pub feasible: bool,
    pub max_violation_mw: f64,
}

impl DispatchState {
    /// Derives the post-contingency states of `g` by bisection and screens
    /// them. `feasible` holds when every search converged and no line is
    /// overloaded by `eps_violation_mw` or more.
    pub fn evaluate(
        system: &PowerSystem,
        bundle: &PtdfBundle,
        g: Vec<f64>,
        config: &RunConfig,
    ) -> Result<(Self, ViolationTable), MethodError> {
        let responses = respond_all(system, &g, config.eps_binary_mw);
        let converged = responses.iter().all(|r| r.converged);
        let table = if converged {
            screen(bundle, &state_vectors(&responses), config.eps_violation_mw)?
        } else {
            ViolationTable::default()
        };
        let objective = cost(system, &g);
        let state = DispatchState {
            feasible: converged && table.alpha_max < config.eps_violation_mw,
            max_violation_mw: table.alpha_max,
            g,
            responses,
            objective,
        };
        Ok((state, table))
    }

    pub fn response(&self, contingency: usize) -> Option<&ResponseOutcome> {
        self.responses.iter().find(|r| r.contingency == contingency)
    }
}

/// `c^T g`.
pub fn cost(system: &PowerSystem, g: &[f64]) -> f64 {
    system
        .generators
        .iter()
        .zip(g)
        .map(|(gen, &p)| gen.cost * p)
        .sum()
}

/// Bisection for every contingency, in contingency order.
pub fn respond_all(system: &PowerSystem, g: &[f64], eps_binary_mw: f64) -> Vec<ResponseOutcome> {
    system
        .contingencies
        .par_iter()
        .map(|&s| binary_search(system, g, s, eps_binary_mw))
        .collect()
}

pub fn state_vectors(responses: &[ResponseOutcome]) -> Vec<(usize, Vec<f64>)> {
    responses
        .iter()
        .map(|r| (r.contingency, r.g_s.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Optimal,
    Infeasible,
    TimeLimit,
    IterationLimit,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Optimal => "optimal",
            RunStatus::Infeasible => "infeasible",
            RunStatus::TimeLimit => "time_limit",
            RunStatus::IterationLimit => "iteration_limit",
        }
    }
}

/// One row of the convergence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub wall_s: f64,
    /// Master objective `z`, $/h.
    pub objective: f64,
    pub alpha_mw: f64,
    pub cuts_added: usize,
    #[serde(rename = "S_size")]
    pub s_size: usize,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub status: RunStatus,
    pub iterations: Vec<IterationRecord>,
    /// Objective of the returned dispatch, `+inf` when there is none.
    pub objective: f64,
    /// Best proven lower bound on the optimum.
    pub best_bound: f64,
    pub wall_s: f64,
    /// Contingencies whose disjunctions are in the master.
    pub imported: Vec<usize>,
    pub total_cuts: usize,
}

impl RunReport {
    pub fn new(method: &str) -> Self {
        RunReport {
            method: method.to_string(),
            status: RunStatus::Optimal,
            iterations: Vec::new(),
            objective: f64::INFINITY,
            best_bound: f64::NEG_INFINITY,
            wall_s: 0.0,
            imported: Vec::new(),
            total_cuts: 0,
        }
    }
}

/// Latest proven lower bound from a report: the best bound of the last
/// master solve, never decreasing across iterations.
pub fn master_lower_bound(report: &RunReport) -> f64 {
    report
        .iterations
        .iter()
        .filter_map(|r| r.lb)
        .fold(report.best_bound, f64::max)
}

/// Wall clock for one run, with an optional overall budget.
#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    start: Instant,
    limit_s: Option<f64>,
}

impl Deadline {
    pub fn new(limit_s: Option<f64>) -> Self {
        Deadline {
            start: Instant::now(),
            limit_s,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn remaining(&self) -> Option<f64> {
        self.limit_s.map(|l| (l - self.elapsed()).max(0.0))
    }

    pub fn expired(&self) -> bool {
        self.remaining().is_some_and(|r| r <= 0.0)
    }
}

pub fn solver_params(config: &RunConfig) -> SolverParams {
    SolverParams {
        mip_gap: config.mip_gap,
        time_limit_s: config.time_limit_s,
        threads: if config.deterministic {
            1
        } else {
            config.threads
        },
        seed: config.deterministic.then_some(0),
        verbose: false,
        options: config.solver_options.clone(),
    }
}

/// Solves with whatever time is left and maps terminal statuses to errors.
pub fn solve_within(
    model: &mut ModelHandle,
    deadline: &Deadline,
) -> Result<SolveResult, MethodError> {
    if deadline.expired() {
        return Err(MethodError::TimeLimit);
    }
    model.set_time_limit(deadline.remaining())?;
    let result = model.solve()?;
    match result.status {
        SolveStatus::OptimalWithinGap => Ok(result),
        SolveStatus::Infeasible => Err(MethodError::Infeasible),
        SolveStatus::TimeLimit => Err(MethodError::TimeLimit),
        SolveStatus::Error => Err(MethodError::Solver(SolverError::Backend(result.message))),
    }
}

/// Generator columns `g` (p.u.) carrying the cost.
pub fn add_generation(
    model: &mut ModelHandle,
    system: &PowerSystem,
) -> Result<Vec<Var>, SolverError> {
    let base = system.base_mva;
    system
        .generators
        .iter()
        .map(|gen| {
            model.add_var(
                &format!("g[{}]", gen.id),
                gen.g_min / base,
                gen.g_max / base,
                gen.cost * base,
                VarKind::Continuous,
            )
        })
        .collect()
}

/// Post-contingency columns `g_s` (p.u.) in `[0, g_max]`, with the outaged
/// unit fixed at zero.
pub fn add_state_columns(
    model: &mut ModelHandle,
    system: &PowerSystem,
    s: usize,
    prefix: &str,
) -> Result<Vec<Var>, SolverError> {
    let base = system.base_mva;
    system
        .generators
        .iter()
        .map(|gen| {
            let hi = if gen.id == s { 0.0 } else { gen.g_max / base };
            model.add_var(
                &format!("{prefix}[{s},{}]", gen.id),
                0.0,
                hi,
                0.0,
                VarKind::Continuous,
            )
        })
        .collect()
}

/// `sum(cols) = total load`.
pub fn add_balance(
    model: &mut ModelHandle,
    system: &PowerSystem,
    cols: &[Var],
    name: &str,
) -> Result<(), SolverError> {
    let all: Vec<(Var, f64)> = cols.iter().map(|&v| (v, 1.0)).collect();
    model.add_linear_constraint(
        &all,
        crate::solver::Sense::Eq,
        system.total_load_mw() / system.base_mva,
        name,
    )?;
    Ok(())
}

/// Nominal block of the masters: generator columns `g` (p.u.) with cost,
/// total balance and PTDF rows for every line limit. Returns the `g` columns.
pub fn add_nominal_block(
    model: &mut ModelHandle,
    system: &PowerSystem,
    bundle: &PtdfBundle,
) -> Result<Vec<Var>, SolverError> {
    let g = add_generation(model, system)?;
    add_balance(model, system, &g, "balance")?;
    for l in 0..bundle.n_lines() {
        add_line_rows(model, bundle, &g, l, system.base_mva, "nom", true, true)?;
    }
    Ok(g)
}

/// MW values of `vars`.
pub fn values_mw(result: &SolveResult, vars: &[Var], base: f64) -> Vec<f64> {
    vars.iter().map(|&v| result.value(v) * base).collect()
}

/// Nominal dispatch in MW, clipped into the generator limits and
/// rebalanced so that it meets the load to round-off.
pub fn dispatch_mw(system: &PowerSystem, result: &SolveResult, g: &[Var]) -> Vec<f64> {
    let mut out: Vec<f64> = system
        .generators
        .iter()
        .zip(values_mw(result, g, system.base_mva))
        .map(|(gen, p)| p.clamp(gen.g_min, gen.g_max))
        .collect();
    rebalance(system, &mut out);
    out
}

/// Moves the residual `e^T d - e^T g` onto the units with the most room.
pub fn rebalance(system: &PowerSystem, g: &mut [f64]) {
    let load = system.total_load_mw();
    for _ in 0..4 {
        let residual = load - g.iter().sum::<f64>();
        if residual == 0.0 {
            return;
        }
        let room = |i: usize| {
            let gen = &system.generators[i];
            if residual > 0.0 {
                gen.g_max - g[i]
            } else {
                g[i] - gen.g_min
            }
        };
        let Some(i) = (0..g.len()).max_by(|&a, &b| room(a).total_cmp(&room(b))) else {
            return;
        };
        let gen = &system.generators[i];
        g[i] = (g[i] + residual).clamp(gen.g_min, gen.g_max);
    }
}

/// Writes the PTDF limit rows of line `l` on the given generator columns.
#[allow(clippy::too_many_arguments)]
pub fn add_line_rows(
    model: &mut ModelHandle,
    bundle: &PtdfBundle,
    g: &[Var],
    l: usize,
    base: f64,
    tag: &str,
    plus: bool,
    minus: bool,
) -> Result<(), SolverError> {
    let coeffs: Vec<(Var, f64)> = g
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, bundle.k1[(l, i)]))
        .filter(|&(_, k)| k.abs() > 1e-12)
        .collect();
    if plus {
        model.add_linear_constraint(
            &coeffs,
            crate::solver::Sense::Ge,
            -bundle.k2[l] / base,
            &format!("cut+[{tag},{l}]"),
        )?;
    }
    if minus {
        let neg: Vec<(Var, f64)> = coeffs.iter().map(|&(v, k)| (v, -k)).collect();
        model.add_linear_constraint(
            &neg,
            crate::solver::Sense::Ge,
            -bundle.k4[l] / base,
            &format!("cut-[{tag},{l}]"),
        )?;
    }
    Ok(())
}

/// A directed line-limit row of one state: `(contingency, line, direction)`.
pub type RowKey = (usize, usize, Direction);

/// Violations to turn into rows this round: those above `alpha_max / beta(s)`
/// that are not in `present` yet. The chosen keys are added to `present`.
pub fn select_rows(
    table: &ViolationTable,
    beta: impl Fn(usize) -> f64,
    present: &mut BTreeSet<RowKey>,
) -> Vec<Violation> {
    table
        .entries
        .iter()
        .filter(|v| v.alpha_mw > table.alpha_max / beta(v.contingency))
        .filter(|v| present.insert((v.contingency, v.line, v.direction)))
        .copied()
        .collect()
}

/// Adds the one row of `v` that its direction calls for.
pub fn add_violation_row(
    model: &mut ModelHandle,
    bundle: &PtdfBundle,
    g_s: &[Var],
    v: &Violation,
    base: f64,
    tag: &str,
) -> Result<(), SolverError> {
    let reverse = v.direction == Direction::Reverse;
    add_line_rows(model, bundle, g_s, v.line, base, tag, reverse, !reverse)
}

/// DC power flow in angle form on the given generator columns: angles,
/// rated flows, `f = S θ` and nodal balance. Used where a full network
/// copy per state is wanted instead of PTDF rows.
pub fn add_angle_block(
    model: &mut ModelHandle,
    system: &PowerSystem,
    g: &[Var],
    tag: &str,
) -> Result<(), SolverError> {
    use crate::solver::Sense;
    let base = system.base_mva;
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
                &format!("theta[{tag},{}]", bus.id),
                lo,
                hi,
                0.0,
                VarKind::Continuous,
            )
        })
        .collect::<Result<_, _>>()?;
    let flow: Vec<Var> = system
        .lines
        .iter()
        .map(|line| {
            let cap = line.capacity / base;
            model.add_var(
                &format!("f[{tag},{}]", line.id),
                -cap,
                cap,
                0.0,
                VarKind::Continuous,
            )
        })
        .collect::<Result<_, _>>()?;
    for line in &system.lines {
        model.add_linear_constraint(
            &[
                (flow[line.id], 1.0),
                (theta[line.from_bus], -line.susceptance),
                (theta[line.to_bus], line.susceptance),
            ],
            Sense::Eq,
            0.0,
            &format!("kvl[{tag},{}]", line.id),
        )?;
    }
    let mut rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); system.n_buses()];
    for gen in &system.generators {
        rows[gen.bus].push((g[gen.id], 1.0));
    }
    for line in &system.lines {
        rows[line.from_bus].push((flow[line.id], -1.0));
        rows[line.to_bus].push((flow[line.id], 1.0));
    }
    for (bus, coeffs) in system.buses.iter().zip(rows) {
        model.add_linear_constraint(
            &coeffs,
            Sense::Eq,
            bus.net_load / base,
            &format!("kcl[{tag},{}]", bus.id),
        )?;
    }
    Ok(())
}
