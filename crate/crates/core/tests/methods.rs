mod common;

use scopf_core::bounds::run_bounds;
use scopf_core::caseio::parse_case;
use scopf_core::methods::bd::{feasibility_subproblem, solve_bd_with};
use scopf_core::methods::ccga::solve_ccga;
use scopf_core::methods::{master_lower_bound, solver_params};
use scopf_core::solver::{ModelHandle, Sense, SolveStatus, SolverParams, Var, VarKind};
use scopf_core::{solve, Method, PowerSystem, RunConfig, RunStatus};

use common::{angle_flows, load_case, max_overload};

/// Relative slack for comparing master bounds with the EF optimum. The
/// masters keep a small reserve below each response limit, which can lift
/// their bound a hair above the exact optimum.
const LB_TOL: f64 = 1e-6;

fn config(method: Method) -> RunConfig {
    RunConfig {
        method,
        threads: 1,
        ..RunConfig::default()
    }
}

/// Angle-form network on the MW generator columns `g`.
fn add_network(model: &mut ModelHandle, system: &PowerSystem, g: &[Var], tag: &str) {
    let base = system.base_mva;
    let theta: Vec<Var> = (0..system.n_buses())
        .map(|b| {
            let free = if b == system.slack_bus {
                0.0
            } else {
                f64::INFINITY
            };
            model
                .add_var(
                    &format!("t{tag}.{b}"),
                    -free,
                    free,
                    0.0,
                    VarKind::Continuous,
                )
                .unwrap()
        })
        .collect();
    let mut rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); system.n_buses()];
    for gen in &system.generators {
        rows[gen.bus].push((g[gen.id], 1.0));
    }
    for l in &system.lines {
        let f = model
            .add_var(
                &format!("f{tag}.{}", l.id),
                -l.capacity,
                l.capacity,
                0.0,
                VarKind::Continuous,
            )
            .unwrap();
        let k = base * l.susceptance;
        model
            .add_linear_constraint(
                &[(f, 1.0), (theta[l.from_bus], -k), (theta[l.to_bus], k)],
                Sense::Eq,
                0.0,
                &format!("kvl{tag}.{}", l.id),
            )
            .unwrap();
        rows[l.from_bus].push((f, -1.0));
        rows[l.to_bus].push((f, 1.0));
    }
    for (b, row) in rows.into_iter().enumerate() {
        let load = system.buses[b].net_load;
        model
            .add_linear_constraint(&row, Sense::Eq, load, &format!("kcl{tag}.{b}"))
            .unwrap();
    }
}

/// Exact optimum by enumerating which survivors sit at their limit in every
/// state and solving the LP of each pattern. `None` if no pattern is feasible.
fn enumerate_patterns(system: &PowerSystem) -> Option<f64> {
    let n = system.n_generators();
    let states = &system.contingencies;
    let bits = states.len() * (n - 1);
    assert!(bits <= 12, "pattern enumeration is for toys");
    let mut best: Option<f64> = None;
    for pattern in 0u32..(1 << bits) {
        let mut model = ModelHandle::new(SolverParams {
            threads: 1,
            ..SolverParams::default()
        })
        .unwrap();
        let g: Vec<Var> = system
            .generators
            .iter()
            .map(|gen| {
                model
                    .add_var(
                        &format!("g{}", gen.id),
                        gen.g_min,
                        gen.g_max,
                        gen.cost,
                        VarKind::Continuous,
                    )
                    .unwrap()
            })
            .collect();
        add_network(&mut model, system, &g, "nom");
        let mut bit = 0;
        for &s in states {
            let n_s = model
                .add_var(&format!("n{s}"), 0.0, 1.0, 0.0, VarKind::Continuous)
                .unwrap();
            let mut g_s = Vec::new();
            for gen in &system.generators {
                let i = gen.id;
                let name = format!("gs{s}.{i}");
                if i == s {
                    g_s.push(
                        model
                            .add_var(&name, 0.0, 0.0, 0.0, VarKind::Continuous)
                            .unwrap(),
                    );
                    continue;
                }
                let capped = pattern >> bit & 1 == 1;
                bit += 1;
                let r = gen.response_limit;
                if capped {
                    let v = model
                        .add_var(&name, gen.g_max, gen.g_max, 0.0, VarKind::Continuous)
                        .unwrap();
                    model
                        .add_linear_constraint(
                            &[(g[i], 1.0), (n_s, r)],
                            Sense::Ge,
                            gen.g_max,
                            &format!("c{s}.{i}"),
                        )
                        .unwrap();
                    g_s.push(v);
                } else {
                    let v = model
                        .add_var(&name, 0.0, gen.g_max, 0.0, VarKind::Continuous)
                        .unwrap();
                    model
                        .add_linear_constraint(
                            &[(v, 1.0), (g[i], -1.0), (n_s, -r)],
                            Sense::Eq,
                            0.0,
                            &format!("l{s}.{i}"),
                        )
                        .unwrap();
                    g_s.push(v);
                }
            }
            add_network(&mut model, system, &g_s, &s.to_string());
        }
        let result = model.solve().unwrap();
        if result.status == SolveStatus::OptimalWithinGap {
            best = Some(best.map_or(result.objective, |b: f64| b.min(result.objective)));
        }
    }
    best
}

/// Plain DC-OPF in angle form, no contingencies.
fn dc_opf(system: &PowerSystem) -> f64 {
    let mut model = ModelHandle::new(SolverParams::default()).unwrap();
    let g: Vec<Var> = system
        .generators
        .iter()
        .map(|gen| {
            model
                .add_var(
                    &format!("g{}", gen.id),
                    gen.g_min,
                    gen.g_max,
                    gen.cost,
                    VarKind::Continuous,
                )
                .unwrap()
        })
        .collect();
    add_network(&mut model, system, &g, "nom");
    let result = model.solve().unwrap();
    assert_eq!(result.status, SolveStatus::OptimalWithinGap);
    result.objective
}

fn objective(system: &PowerSystem, config: &RunConfig) -> f64 {
    let outcome = solve(system, config).unwrap();
    assert_eq!(
        outcome.report.status,
        RunStatus::Optimal,
        "{:?}",
        config.method
    );
    outcome.dispatch.unwrap().objective
}

#[test]
fn toy_optimum_matches_pattern_enumeration() {
    let cfg = RunConfig {
        mip_gap: 1e-7,
        ..config(Method::Ef)
    };
    let sys = load_case("case3_toy", &cfg);
    let exact = enumerate_patterns(&sys).unwrap();
    for method in [Method::Ef, Method::Bd, Method::Bddc, Method::Ccga] {
        let z = objective(
            &sys,
            &RunConfig {
                method,
                ..cfg.clone()
            },
        );
        assert!(
            (z - exact).abs() <= 1e-5 * exact,
            "{method:?}: {z} vs {exact}"
        );
    }
    // the network binds: dropping the ratings gives a cheaper dispatch
    let mut loose = sys.clone();
    loose.lines.iter_mut().for_each(|l| l.capacity = 1e4);
    assert!(enumerate_patterns(&loose).unwrap() < exact - 1.0);
}

#[test]
fn methods_agree_within_twice_the_gap() {
    for name in ["case3_toy", "case30_scopf"] {
        let sys = load_case(name, &RunConfig::default());
        let z_ef = objective(&sys, &config(Method::Ef));
        let tol = 2.0 * RunConfig::default().mip_gap * z_ef;
        for method in [Method::Bd, Method::Bddc, Method::Ccga] {
            let z = objective(&sys, &config(method));
            assert!((z - z_ef).abs() <= tol, "{name} {method:?}: {z} vs {z_ef}");
        }
    }
}

#[test]
fn empty_contingency_set_is_a_dc_opf() {
    let mut sys = load_case("case30_scopf", &RunConfig::default());
    sys.contingencies.clear();
    let exact = dc_opf(&sys);
    for method in [Method::Ef, Method::Bd, Method::Bddc, Method::Ccga] {
        let outcome = solve(&sys, &config(method)).unwrap();
        assert_eq!(outcome.report.iterations.len(), 1, "{method:?}");
        assert_eq!(outcome.report.total_cuts, 0);
        let z = outcome.dispatch.unwrap().objective;
        assert!(
            (z - exact).abs() <= 1e-6 * exact,
            "{method:?}: {z} vs {exact}"
        );
    }
}

#[test]
fn single_unit_case_is_infeasible_for_every_method() {
    let sys = parse_case(
        &common::data_dir().join("single_gen.m"),
        &RunConfig::default(),
    )
    .unwrap();
    for method in [Method::Ef, Method::Bd, Method::Bddc, Method::Ccga] {
        let outcome = solve(&sys, &config(method)).unwrap();
        assert_eq!(outcome.report.status, RunStatus::Infeasible, "{method:?}");
        assert!(outcome.dispatch.is_none());
    }
}

#[test]
fn final_dispatches_route_in_every_state() {
    for name in ["case3_toy", "case30_scopf"] {
        let sys = load_case(name, &RunConfig::default());
        for method in [Method::Ef, Method::Bd, Method::Bddc, Method::Ccga] {
            let dispatch = solve(&sys, &config(method)).unwrap().dispatch.unwrap();
            assert!(dispatch.feasible);
            for r in &dispatch.responses {
                assert!(r.converged && r.imbalance_mw.abs() <= 1e-10);
                let flows = angle_flows(&sys, &r.g_s).flows;
                assert!(
                    max_overload(&sys, &flows) <= 0.05,
                    "{name} {method:?} state {}",
                    r.contingency
                );
            }
        }
    }
}

#[test]
fn benders_cuts_keep_the_ef_optimum() {
    for name in ["case3_toy", "case30_scopf"] {
        let sys = load_case(name, &RunConfig::default());
        let ef = solve(&sys, &config(Method::Ef)).unwrap().dispatch.unwrap();
        let mut cuts = Vec::new();
        let bd = solve_bd_with(&sys, &config(Method::Bd), &mut |c| cuts.push(c.clone())).unwrap();
        assert_eq!(bd.report.status, RunStatus::Optimal);
        assert!(!cuts.is_empty(), "{name} should need cuts");
        for cut in &cuts {
            let g_s = &ef.response(cut.contingency).unwrap().g_s;
            // a cut may only exceed zero by the residual overload of g_s
            let slack = feasibility_subproblem(&sys, g_s, solver_params(&config(Method::Bd)))
                .unwrap()
                .overload_mw;
            let excess = cut.excess_mw(g_s);
            assert!(
                excess <= slack + 1e-5,
                "{name}: cut on {} exceeds by {excess}",
                cut.contingency
            );
        }
    }
}

#[test]
fn ccga_relaxations_tighten_monotonically() {
    for name in ["case3_toy", "case30_scopf"] {
        let sys = load_case(name, &RunConfig::default());
        let z_ef = objective(&sys, &config(Method::Ef));
        let outcome = solve_ccga(&sys, &config(Method::Ccga)).unwrap();
        let rows = &outcome.report.iterations;
        assert!(rows.len() > 1, "{name} should take more than one round");
        for w in rows.windows(2) {
            assert!(w[1].objective >= w[0].objective - 1e-6 * w[0].objective.abs());
            assert!(w[1].lb.unwrap() >= w[0].lb.unwrap());
        }
        let lb = master_lower_bound(&outcome.report);
        assert!(
            lb <= z_ef * (1.0 + LB_TOL),
            "{name}: lb {lb} above EF {z_ef}"
        );
        let z = outcome.dispatch.unwrap().objective;
        assert!((z - lb) <= RunConfig::default().mip_gap * z);
    }
}

#[test]
fn bounds_bracket_the_optimum() {
    let cfg = config(Method::Ccga);
    let sys = load_case("case30_scopf", &cfg);
    let z_ef = objective(&sys, &config(Method::Ef));
    let trace = run_bounds(&sys, &cfg).unwrap();
    let gap = cfg.mip_gap;
    let z_full = trace.full_objective;
    for run in &trace.restricted {
        assert!(run.objective >= z_full * (1.0 - gap), "p = {}", run.p);
        assert!(run.objective >= z_ef * (1.0 - 2.0 * gap));
    }
    let records = trace.records();
    for r in &records {
        if let (Some(lb), Some(ub)) = (r.lb, r.ub) {
            assert!(lb <= ub);
        }
        if let Some(lb) = r.lb {
            assert!(lb <= z_ef * (1.0 + LB_TOL), "{lb} above {z_ef}");
        }
    }
    assert!(trace.final_gap <= gap);
    assert!(
        trace
            .events
            .iter()
            .filter(|e| e.kind != scopf_core::bounds::EventKind::LbFromMaster)
            .count()
            >= 3
    );
}
