//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scopf_core::caseio::{parse_case_with, Sidecar};
use scopf_core::network::build_angle_to_flow;
use scopf_core::solver::{ModelHandle, Sense, SolveStatus, SolverParams, Var, VarKind};
use scopf_core::{binary_search, Bus, Generator, Line, PowerSystem, RunConfig};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Loads `data/<name>.m`, with `data/<name>.json` as sidecar when present.
pub fn load_case(name: &str, config: &RunConfig) -> PowerSystem {
    let dir = data_dir();
    let sidecar_path = dir.join(format!("{name}.json"));
    let sidecar = if sidecar_path.exists() {
        Sidecar::load(&sidecar_path).unwrap()
    } else {
        Sidecar::default()
    };
    parse_case_with(&dir.join(format!("{name}.m")), config, &sidecar).unwrap()
}

/// Connected random network: a random spanning tree plus a few extra lines,
/// one unit per `n_gen` placed anywhere, every unit in the contingency set.
pub fn random_system(seed: u64, n_bus: usize, n_gen: usize) -> PowerSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buses: Vec<Bus> = (0..n_bus)
        .map(|id| Bus {
            id,
            net_load: if id == 0 {
                0.0
            } else {
                rng.gen_range(0.0..60.0)
            },
        })
        .collect();
    let mut ends: Vec<(usize, usize)> = (1..n_bus).map(|b| (rng.gen_range(0..b), b)).collect();
    for _ in 0..n_bus / 2 {
        let a = rng.gen_range(0..n_bus);
        let b = rng.gen_range(0..n_bus);
        if a != b {
            ends.push((a, b));
        }
    }
    let lines = ends
        .into_iter()
        .enumerate()
        .map(|(id, (from_bus, to_bus))| Line {
            id,
            from_bus,
            to_bus,
            susceptance: rng.gen_range(2.0..20.0),
            capacity: rng.gen_range(20.0..150.0),
        })
        .collect();
    let load: f64 = buses.iter().map(|b| b.net_load).sum();
    // enough room that losing any one unit leaves the rest above the load
    let g_max = (load / (n_gen as f64 - 1.0).max(1.0)).max(20.0) * 1.6;
    let generators = (0..n_gen)
        .map(|id| {
            let cap = g_max * rng.gen_range(0.8..1.2);
            Generator::new(
                id,
                rng.gen_range(0..n_bus),
                rng.gen_range(5.0..50.0),
                0.0,
                cap,
                cap,
                rng.gen_range(0.05..0.5),
            )
        })
        .collect();
    PowerSystem::new(buses, lines, generators, 100.0, (0..n_gen).collect(), 0).unwrap()
}

/// Random generator vector in MW summing to the load.
pub fn random_balanced(system: &PowerSystem, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..system.n_generators())
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    let total: f64 = w.iter().sum();
    let load = system.total_load_mw();
    w.iter().map(|x| x / total * load).collect()
}

/// Branch flows from the angle formulation.
pub struct AngleFlows {
    /// MW.
    pub flows: Vec<f64>,
    /// `max |f - S theta|`, p.u.
    pub kvl_residual: f64,
}

fn angle_model(
    system: &PowerSystem,
    g_s: &[f64],
    limited: bool,
) -> (ModelHandle, Vec<Var>, Vec<Var>) {
    let base = system.base_mva;
    let mut model = ModelHandle::new(SolverParams {
        threads: 1,
        ..SolverParams::default()
    })
    .unwrap();
    let theta: Vec<Var> = (0..system.n_buses())
        .map(|b| {
            let free = if b == system.slack_bus {
                0.0
            } else {
                f64::INFINITY
            };
            model
                .add_var(&format!("t{b}"), -free, free, 0.0, VarKind::Continuous)
                .unwrap()
        })
        .collect();
    let flow: Vec<Var> = system
        .lines
        .iter()
        .map(|l| {
            let cap = if limited {
                l.capacity / base
            } else {
                f64::INFINITY
            };
            model
                .add_var(&format!("f{}", l.id), -cap, cap, 0.0, VarKind::Continuous)
                .unwrap()
        })
        .collect();
    for l in &system.lines {
        model
            .add_linear_constraint(
                &[
                    (flow[l.id], 1.0),
                    (theta[l.from_bus], -l.susceptance),
                    (theta[l.to_bus], l.susceptance),
                ],
                Sense::Eq,
                0.0,
                &format!("kvl{}", l.id),
            )
            .unwrap();
    }
    let mut inject: Vec<f64> = system.buses.iter().map(|b| -b.net_load).collect();
    for gen in &system.generators {
        inject[gen.bus] += g_s[gen.id];
    }
    for (b, &injection) in inject.iter().enumerate() {
        if b == system.slack_bus {
            continue;
        }
        let mut row = Vec::new();
        for l in &system.lines {
            if l.from_bus == b {
                row.push((flow[l.id], 1.0));
            }
            if l.to_bus == b {
                row.push((flow[l.id], -1.0));
            }
        }
        model
            .add_linear_constraint(&row, Sense::Eq, injection / base, &format!("kcl{b}"))
            .unwrap();
    }
    (model, theta, flow)
}

/// Solves the DC power flow for a fixed post-contingency dispatch with
/// unbounded lines.
pub fn angle_flows(system: &PowerSystem, g_s: &[f64]) -> AngleFlows {
    let (mut model, theta, flow) = angle_model(system, g_s, false);
    let result = model.solve().unwrap();
    assert_eq!(result.status, SolveStatus::OptimalWithinGap);
    let t = nalgebra::DVector::from_vec(result.values_of(&theta));
    let s_theta = build_angle_to_flow(system) * t;
    let f = result.values_of(&flow);
    let kvl_residual = f
        .iter()
        .zip(s_theta.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    AngleFlows {
        flows: f.iter().map(|x| x * system.base_mva).collect(),
        kvl_residual,
    }
}

/// Whether the dispatch can be routed with every line inside its rating.
pub fn routable(system: &PowerSystem, g_s: &[f64]) -> bool {
    let (mut model, _, _) = angle_model(system, g_s, true);
    let status = model.solve().unwrap().status;
    assert!(matches!(
        status,
        SolveStatus::OptimalWithinGap | SolveStatus::Infeasible
    ));
    status == SolveStatus::OptimalWithinGap
}

/// Largest line overload in MW of a routed dispatch.
pub fn max_overload(system: &PowerSystem, flows_mw: &[f64]) -> f64 {
    system
        .lines
        .iter()
        .map(|l| (flows_mw[l.id].abs() - l.capacity).max(0.0))
        .fold(0.0, f64::max)
}

/// Post-contingency dispatch from a MILP written in MW:
/// `g_s,i = min(g_i + n r_i, g_max_i)` through a binary per unit, with
/// `sum g_s = load`. Independent of the library's encoding.
pub fn milp_response(system: &PowerSystem, g: &[f64], s: usize) -> Option<Vec<f64>> {
    let mut params = SolverParams {
        threads: 1,
        mip_gap: 0.0,
        ..SolverParams::default()
    };
    for key in ["mip_feasibility_tolerance", "primal_feasibility_tolerance"] {
        params.options.insert(key.into(), "1e-10".into());
    }
    let mut model = ModelHandle::new(params).unwrap();
    let n = model
        .add_var("n", 0.0, 1.0, 0.0, VarKind::Continuous)
        .unwrap();
    let mut cols = Vec::new();
    let mut balance = Vec::new();
    for gen in &system.generators {
        let i = gen.id;
        if i == s {
            continue;
        }
        let gs = model
            .add_var(&format!("gs{i}"), 0.0, gen.g_max, 0.0, VarKind::Continuous)
            .unwrap();
        // y = 1 when the unit is held at its limit
        let y = model
            .add_var(&format!("y{i}"), 0.0, 1.0, 0.0, VarKind::Binary)
            .unwrap();
        let r = gen.response_limit;
        let m = gen.g_max + r + 1.0;
        // gs <= g + n r and gs <= g_max always
        model
            .add_linear_constraint(&[(gs, 1.0), (n, -r)], Sense::Le, g[i], &format!("a{i}"))
            .unwrap();
        // gs >= g + n r unless capped
        model
            .add_linear_constraint(
                &[(gs, 1.0), (n, -r), (y, m)],
                Sense::Ge,
                g[i],
                &format!("b{i}"),
            )
            .unwrap();
        // gs >= g_max when capped, and capping needs g + n r >= g_max
        model
            .add_linear_constraint(
                &[(gs, 1.0), (y, -gen.g_max)],
                Sense::Ge,
                0.0,
                &format!("c{i}"),
            )
            .unwrap();
        model
            .add_linear_constraint(
                &[(n, r), (y, -m)],
                Sense::Ge,
                gen.g_max - g[i] - m,
                &format!("d{i}"),
            )
            .unwrap();
        cols.push((i, gs));
        balance.push((gs, 1.0));
    }
    model
        .add_linear_constraint(&balance, Sense::Eq, system.total_load_mw(), "balance")
        .unwrap();
    let result = model.solve().unwrap();
    if result.status != SolveStatus::OptimalWithinGap {
        return None;
    }
    let mut out = vec![0.0; system.n_generators()];
    for (i, v) in cols {
        out[i] = result.value(v);
    }
    Some(out)
}

/// Nominal dispatch within the limits that meets the load.
pub fn nominal(system: &PowerSystem, rng: &mut impl Rng) -> Vec<f64> {
    let load = system.total_load_mw();
    let mut g: Vec<f64> = system
        .generators
        .iter()
        .map(|gen| rng.gen_range(0.0..gen.g_max))
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|x| *x *= load / total);
    g.iter_mut()
        .zip(&system.generators)
        .for_each(|(x, gen)| *x = x.min(gen.g_max));
    g
}

/// Instances where the outage can be covered and some survivor is still on
/// its linear branch, so the response is unique.
pub fn response_instances(seed: u64, count: usize) -> Vec<(PowerSystem, Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let sys = random_system(rng.gen(), rng.gen_range(2..6), 3);
        let g = nominal(&sys, &mut rng);
        let s = rng.gen_range(0..3);
        let r = binary_search(&sys, &g, s, 1e-10);
        if r.converged && r.x_s.iter().any(|&x| x) {
            out.push((sys, g, s));
        }
    }
    out
}
