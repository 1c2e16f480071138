//! Upper and lower bounds on the optimal cost from two concurrent CCGA
//! streams.
//!
//! The first stream solves a sequence of restricted problems in which only
//! the cheapest `p` percent of the units may saturate after an outage; each
//! restricted optimum is a feasible dispatch and hence an upper bound. The
//! second stream solves the unrestricted problem and reports the best bound
//! of every master solve as a lower bound.

use std::collections::BTreeSet;
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::BoundsError;
use crate::methods::ccga::solve_ccga_with;
use crate::methods::{IterationRecord, Outcome, RunStatus};
use crate::network::PowerSystem;

/// Units that may saturate in the restriction for `p` percent: the
/// `round(p |G| / 100)` lowest by `cost / g_max`, ties to the lower id.
/// Units with `g_max = 0` rank last.
pub fn select_h(system: &PowerSystem, p: f64) -> Result<BTreeSet<usize>, BoundsError> {
    if !(0.0..=100.0).contains(&p) {
        return Err(BoundsError::InvalidPercent(p));
    }
    let n = system.n_generators();
    let size = ((p * n as f64 / 100.0) + 0.5).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let key = |i: usize| {
        let gen = &system.generators[i];
        if gen.g_max > 0.0 {
            (0, gen.cost / gen.g_max)
        } else {
            (1, 0.0)
        }
    };
    order.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
    });
    Ok(order.into_iter().take(size.min(n)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UbFromP,
    LbFromMaster,
    UbFromMaster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEvent {
    /// Seconds since the start, or a logical clock in deterministic mode.
    pub wall_s: f64,
    pub kind: EventKind,
    /// $/h; `+inf` for an infeasible restriction.
    pub value: f64,
    pub p: Option<f64>,
    pub alpha_mw: f64,
    pub cuts_added: usize,
    pub s_size: usize,
}

/// Outcome of one restricted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedRun {
    pub p: f64,
    pub saturating: Vec<usize>,
    pub status: String,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    /// Sorted by `wall_s`, ties by stream.
    pub events: Vec<BoundEvent>,
    pub lb: f64,
    pub ub: f64,
    /// `(ub - lb) / ub`; `+inf` while no finite upper bound exists.
    pub final_gap: f64,
    pub restricted: Vec<RestrictedRun>,
    /// Status of the unrestricted run, or the error that stopped it.
    pub full_status: String,
    /// Cost of the unrestricted run's dispatch.
    pub full_objective: f64,
}

impl BoundTrace {
    /// The trace in the convergence-log layout: one row per event with the
    /// running bounds.
    pub fn records(&self) -> Vec<IterationRecord> {
        let mut lb = f64::NEG_INFINITY;
        let mut ub = f64::INFINITY;
        self.events
            .iter()
            .enumerate()
            .map(|(k, e)| {
                match e.kind {
                    EventKind::LbFromMaster => lb = lb.max(e.value),
                    EventKind::UbFromP | EventKind::UbFromMaster => ub = ub.min(e.value),
                }
                IterationRecord {
                    iter: k,
                    wall_s: e.wall_s,
                    objective: e.value,
                    alpha_mw: e.alpha_mw,
                    cuts_added: e.cuts_added,
                    s_size: e.s_size,
                    lb: lb.is_finite().then_some(lb),
                    ub: ub.is_finite().then_some(ub),
                }
            })
            .collect()
    }
}

struct Tagged {
    stream: u8,
    event: BoundEvent,
}

/// Logical or wall clock shared by one stream.
struct Clock {
    start: Instant,
    deterministic: bool,
    ticks: usize,
}

impl Clock {
    fn now(&mut self) -> f64 {
        self.ticks += 1;
        if self.deterministic {
            self.ticks as f64
        } else {
            self.start.elapsed().as_secs_f64()
        }
    }
}

fn status_name(result: &Result<Outcome, crate::error::MethodError>) -> String {
    match result {
        Ok(o) => o.report.status.name().to_string(),
        Err(e) => format!("error: {e}"),
    }
}

/// Objective of a run if it produced a feasible dispatch, `+inf` otherwise.
fn upper_bound(result: &Result<Outcome, crate::error::MethodError>) -> f64 {
    match result {
        Ok(Outcome {
            dispatch: Some(d),
            report,
        }) if report.status == RunStatus::Optimal && d.feasible => d.objective,
        _ => f64::INFINITY,
    }
}

fn restricted_stream(
    system: &PowerSystem,
    config: &RunConfig,
    clock: &mut Clock,
    tx: &mpsc::Sender<Tagged>,
) -> Result<Vec<RestrictedRun>, BoundsError> {
    let mut runs = Vec::new();
    for &p in &config.p_schedule {
        let h = select_h(system, p)?;
        let result = solve_ccga_with(system, config, Some(&h), &mut |_| {});
        let value = upper_bound(&result);
        let (cuts, s_size) = result
            .as_ref()
            .map_or((0, 0), |o| (o.report.total_cuts, o.report.imported.len()));
        let _ = tx.send(Tagged {
            stream: 1,
            event: BoundEvent {
                wall_s: clock.now(),
                kind: EventKind::UbFromP,
                value,
                p: Some(p),
                alpha_mw: result
                    .as_ref()
                    .ok()
                    .and_then(|o| o.dispatch.as_ref())
                    .map_or(0.0, |d| d.max_violation_mw),
                cuts_added: cuts,
                s_size,
            },
        });
        runs.push(RestrictedRun {
            p,
            saturating: h.into_iter().collect(),
            status: status_name(&result),
            objective: value,
        });
    }
    Ok(runs)
}

fn full_stream(
    system: &PowerSystem,
    config: &RunConfig,
    clock: &mut Clock,
    tx: &mpsc::Sender<Tagged>,
) -> (String, f64) {
    let result = solve_ccga_with(system, config, None, &mut |record| {
        if let Some(lb) = record.lb {
            let _ = tx.send(Tagged {
                stream: 2,
                event: BoundEvent {
                    wall_s: clock.now(),
                    kind: EventKind::LbFromMaster,
                    value: lb,
                    p: Some(100.0),
                    alpha_mw: record.alpha_mw,
                    cuts_added: record.cuts_added,
                    s_size: record.s_size,
                },
            });
        }
    });
    let value = upper_bound(&result);
    if value.is_finite() {
        let _ = tx.send(Tagged {
            stream: 2,
            event: BoundEvent {
                wall_s: clock.now(),
                kind: EventKind::UbFromMaster,
                value,
                p: Some(100.0),
                alpha_mw: 0.0,
                cuts_added: 0,
                s_size: result.as_ref().map_or(0, |o| o.report.imported.len()),
            },
        });
    }
    (status_name(&result), value)
}

/// Runs both streams and merges their events.
///
/// In deterministic mode the streams run one after the other and each
/// stamps its events with its own tick counter, so the merged order does
/// not depend on scheduling.
pub fn run_bounds(system: &PowerSystem, config: &RunConfig) -> Result<BoundTrace, BoundsError> {
    config.validate()?;
    let start = Instant::now();
    let clock = || Clock {
        start,
        deterministic: config.deterministic,
        ticks: 0,
    };
    let (tx, rx) = mpsc::channel();
    let (restricted, (full_status, full_objective)) = if config.deterministic {
        let r = restricted_stream(system, config, &mut clock(), &tx);
        let f = full_stream(system, config, &mut clock(), &tx);
        (r?, f)
    } else {
        std::thread::scope(|scope| {
            let tx1 = tx.clone();
            let tx2 = tx.clone();
            let first = scope.spawn(move || restricted_stream(system, config, &mut clock(), &tx1));
            let second = scope.spawn(move || full_stream(system, config, &mut clock(), &tx2));
            let f = second.join().expect("bound stream panicked");
            let r = first.join().expect("bound stream panicked");
            r.map(|r| (r, f))
        })?
    };
    drop(tx);
    let mut tagged: Vec<Tagged> = rx.into_iter().collect();
    tagged.sort_by(|a, b| {
        a.event
            .wall_s
            .total_cmp(&b.event.wall_s)
            .then(a.stream.cmp(&b.stream))
    });
    let events: Vec<BoundEvent> = tagged.into_iter().map(|t| t.event).collect();
    let lb = events
        .iter()
        .filter(|e| e.kind == EventKind::LbFromMaster)
        .map(|e| e.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let ub = events
        .iter()
        .filter(|e| e.kind != EventKind::LbFromMaster)
        .map(|e| e.value)
        .fold(f64::INFINITY, f64::min);
    let final_gap = if ub.is_finite() && lb.is_finite() {
        (ub - lb) / ub
    } else {
        f64::INFINITY
    };
    Ok(BoundTrace {
        events,
        lb,
        ub,
        final_gap,
        restricted,
        full_status,
        full_objective,
    })
}
