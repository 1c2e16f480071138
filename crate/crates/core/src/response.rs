//! Primary response of the surviving units after a generator outage.
//!
//! Every unit `i` other than the outaged one moves to
//! `min(g_i + n * r_i, g_max_i)` where `r_i = gamma_i * capacity_i` and the
//! global signal `n` lies in `[0, 1]`. The total post-contingency output is
//! continuous, piecewise linear and nondecreasing in `n`, so the signal that
//! restores the demand balance is found by bisection.

use serde::{Deserialize, Serialize};

use crate::config::BigMMode;
use crate::error::SolverError;
use crate::network::PowerSystem;
use crate::solver::{ModelHandle, Sense, Var, VarKind};

/// Post-contingency state computed for one outage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseOutcome {
    pub contingency: usize,
    pub n_s: f64,
    /// Post-contingency output per generator, MW.
    pub g_s: Vec<f64>,
    /// `true` when the unit follows the linear response (below its limit).
    pub x_s: Vec<bool>,
    /// `e^T g_s - e^T d`, MW.
    pub imbalance_mw: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Evaluates the response to signal `n` for the loss of unit `s`.
///
/// Returns the post-contingency dispatch and the imbalance `e^T g_s - e^T d`,
/// both in MW.
pub fn respond(system: &PowerSystem, g_nominal: &[f64], s: usize, n: f64) -> (Vec<f64>, f64) {
    let g_s = response_vector(system, g_nominal, s, n);
    let imbalance = g_s.iter().sum::<f64>() - system.total_load_mw();
    (g_s, imbalance)
}

fn response_vector(system: &PowerSystem, g_nominal: &[f64], s: usize, n: f64) -> Vec<f64> {
    system
        .generators
        .iter()
        .zip(g_nominal)
        .map(|(gen, &g)| {
            if gen.id == s {
                0.0
            } else {
                let linear = g + n * gen.response_limit;
                if linear >= gen.g_max {
                    gen.g_max
                } else {
                    linear
                }
            }
        })
        .collect()
}

fn imbalance(system: &PowerSystem, g_nominal: &[f64], s: usize, n: f64, load: f64) -> f64 {
    response_vector(system, g_nominal, s, n).iter().sum::<f64>() - load
}

/// Unit `i` follows the linear response at signal `n`; units sitting exactly
/// on the kink count as capped.
fn follows_linear(system: &PowerSystem, g_nominal: &[f64], s: usize, n: f64) -> Vec<bool> {
    system
        .generators
        .iter()
        .zip(g_nominal)
        .map(|(gen, &g)| gen.id != s && g + n * gen.response_limit < gen.g_max)
        .collect()
}

/// Upper bound on the bisection steps needed to reach `eps_mw`.
pub fn bisection_iteration_bound(system: &PowerSystem, eps_mw: f64) -> usize {
    let total: f64 = system.generators.iter().map(|g| g.g_max).sum();
    let ratio = (total / eps_mw).max(1.0);
    ratio.log2().ceil() as usize + 2
}

/// Finds the signal `n` in `[0, 1]` that balances the loss of unit `s`.
///
/// The bracket `[lo, hi]` always satisfies `e(lo) < -eps <= e(hi)`; the first
/// midpoint with `|e| <= eps` is returned. When the demand cannot be met even
/// at `n = 1` the outcome carries `converged = false` and `n = 1`; when the
/// survivors already over-produce at `n = 0` it carries `converged = false`
/// and `n = 0`.
pub fn binary_search(
    system: &PowerSystem,
    g_nominal: &[f64],
    s: usize,
    eps_binary_mw: f64,
) -> ResponseOutcome {
    let load = system.total_load_mw();
    let finish = |n: f64, converged: bool, iterations: usize| {
        let (g_s, imbalance_mw) = respond(system, g_nominal, s, n);
        ResponseOutcome {
            contingency: s,
            n_s: n,
            x_s: follows_linear(system, g_nominal, s, n),
            g_s,
            imbalance_mw,
            converged,
            iterations,
        }
    };

    let at_zero = imbalance(system, g_nominal, s, 0.0, load);
    if at_zero.abs() <= eps_binary_mw {
        return finish(0.0, true, 0);
    }
    if at_zero > eps_binary_mw {
        return finish(0.0, false, 0);
    }
    let at_one = imbalance(system, g_nominal, s, 1.0, load);
    if at_one.abs() <= eps_binary_mw {
        return finish(1.0, true, 0);
    }
    if at_one < -eps_binary_mw {
        return finish(1.0, false, 0);
    }

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut iterations = 0;
    // The bracket reaches the tolerance well before this; the cap only guards
    // against floating-point stagnation.
    let cap = bisection_iteration_bound(system, eps_binary_mw) + 64;
    loop {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let e = imbalance(system, g_nominal, s, mid, load);
        if e.abs() <= eps_binary_mw {
            return finish(mid, true, iterations);
        }
        if e > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if iterations >= cap {
            let e_hi = imbalance(system, g_nominal, s, hi, load);
            let e_lo = imbalance(system, g_nominal, s, lo, load);
            let best = if e_hi.abs() < e_lo.abs() { hi } else { lo };
            return finish(best, false, iterations);
        }
    }
}

/// Per-generator big-M in MW: `max(g_max - g_min, gamma * capacity) + 1`.
pub fn big_m_values(system: &PowerSystem, mode: BigMMode) -> Vec<f64> {
    let per_gen: Vec<f64> = system
        .generators
        .iter()
        .map(|g| (g.g_max - g.g_min).max(g.response_limit) + 1.0)
        .collect();
    match mode {
        BigMMode::PerGenerator => per_gen,
        BigMMode::Global => {
            let m = per_gen.iter().copied().fold(0.0, f64::max);
            vec![m; per_gen.len()]
        }
    }
}

/// Model columns the disjunctions are written against. Power columns are in
/// per unit on the system base.
#[derive(Debug, Clone, Copy)]
pub struct ResponseColumns<'a> {
    pub g: &'a [Var],
    pub g_s: &'a [Var],
}

/// Columns created for one imported disjunction block.
#[derive(Debug, Clone)]
pub struct DisjunctionBlock {
    pub contingency: usize,
    pub n_s: Var,
    /// `None` for the outaged unit.
    pub x: Vec<Option<Var>>,
}

/// Writes the big-M form of the response model for contingency `s`.
///
/// `linear_only(i)` pins `x_{s,i} = 1`, forcing unit `i` onto the linear
/// response branch.
pub fn build_disjunctions(
    model: &mut ModelHandle,
    system: &PowerSystem,
    s: usize,
    columns: ResponseColumns<'_>,
    big_m_mw: &[f64],
    linear_only: &dyn Fn(usize) -> bool,
) -> Result<DisjunctionBlock, SolverError> {
    let base = system.base_mva;
    let n_s = model.add_var(&format!("n[{s}]"), 0.0, 1.0, 0.0, VarKind::Continuous)?;
    let mut x = Vec::with_capacity(system.n_generators());
    for gen in &system.generators {
        let i = gen.id;
        if i == s {
            x.push(None);
            continue;
        }
        let fixed = linear_only(i);
        let x_var = model.add_var(
            &format!("x[{s},{i}]"),
            if fixed { 1.0 } else { 0.0 },
            1.0,
            0.0,
            VarKind::Binary,
        )?;
        let (g, gs) = (columns.g[i], columns.g_s[i]);
        let r = gen.response_limit / base;
        let m = big_m_mw[i] / base;
        let gmax = gen.g_max / base;
        model.add_linear_constraint(
            &[(gs, 1.0), (g, -1.0), (n_s, -r), (x_var, m)],
            Sense::Le,
            m,
            &format!("resp_hi[{s},{i}]"),
        )?;
        model.add_linear_constraint(
            &[(gs, 1.0), (g, -1.0), (n_s, -r), (x_var, -m)],
            Sense::Ge,
            -m,
            &format!("resp_lo[{s},{i}]"),
        )?;
        // min(a, b) <= a holds on both branches; tightens the relaxation
        model.add_linear_constraint(
            &[(gs, 1.0), (g, -1.0), (n_s, -r)],
            Sense::Le,
            0.0,
            &format!("resp_ub[{s},{i}]"),
        )?;
        model.add_linear_constraint(
            &[(g, 1.0), (n_s, r), (x_var, gmax)],
            Sense::Ge,
            gmax,
            &format!("cap_reach[{s},{i}]"),
        )?;
        model.add_linear_constraint(
            &[(gs, 1.0), (x_var, gmax)],
            Sense::Ge,
            gmax,
            &format!("cap_hold[{s},{i}]"),
        )?;
        x.push(Some(x_var));
    }
    model.set_bounds(columns.g_s[s], 0.0, 0.0)?;
    Ok(DisjunctionBlock {
        contingency: s,
        n_s,
        x,
    })
}

/// Headroom kept below each response limit in the envelope rows, MW. A
/// master solution then leaves the bisection a strictly positive reserve
/// at `n = 1` despite solver round-off.
pub const RESPONSE_MARGIN_MW: f64 = 1e-5;

/// Adds `g_i <= g_{s,i} <= g_i + r_i - margin` for every surviving unit.
///
/// Up to the margin both rows hold for the exact response whatever the
/// binaries are, so they leave the feasible set unchanged; they only tighten
/// the LP relaxation of the big-M form.
pub fn add_response_envelope(
    model: &mut ModelHandle,
    system: &PowerSystem,
    s: usize,
    columns: ResponseColumns<'_>,
) -> Result<(), SolverError> {
    let base = system.base_mva;
    for gen in system.generators.iter().filter(|g| g.id != s) {
        let i = gen.id;
        model.add_ranged_constraint(
            &[(columns.g_s[i], 1.0), (columns.g[i], -1.0)],
            0.0,
            (gen.response_limit - RESPONSE_MARGIN_MW).max(0.0) / base,
            &format!("envelope[{s},{i}]"),
        )?;
    }
    Ok(())
}
