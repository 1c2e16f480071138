//! MATPOWER case ingestion, the override sidecar, and result writers.
//!
//! Only the `bus`, `branch`, `gen` and `gencost` matrices and `baseMVA` are
//! read. Out-of-service branches and generators are dropped and buses are
//! renumbered `0..n` in file order.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CaseError;
use crate::methods::{DispatchState, RunReport};
use crate::network::{Bus, Generator, Line, PowerSystem};

/// Per-generator overrides that MATPOWER files cannot express.
///
/// Keys are internal generator ids (in-service generators in file order,
/// counted from 0).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sidecar {
    /// Nameplate capacity, MW. Defaults to `Pmax`.
    pub capacity: BTreeMap<usize, f64>,
    pub gamma: BTreeMap<usize, f64>,
    /// Replaces the default contingency list.
    pub contingencies: Option<Vec<usize>>,
}

impl Sidecar {
    pub fn load(path: &Path) -> Result<Self, CaseError> {
        let text = std::fs::read_to_string(path).map_err(|e| CaseError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn is_empty(&self) -> bool {
        self.capacity.is_empty() && self.gamma.is_empty() && self.contingencies.is_none()
    }
}

pub fn parse_case(path: &Path, config: &RunConfig) -> Result<PowerSystem, CaseError> {
    parse_case_with(path, config, &Sidecar::default())
}

pub fn parse_case_with(
    path: &Path,
    config: &RunConfig,
    sidecar: &Sidecar,
) -> Result<PowerSystem, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::io(path, e))?;
    parse_case_str(&text, config, sidecar)
}

// MATPOWER column indices
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const GEN_BUS: usize = 0;
const GEN_STATUS: usize = 7;
const PMAX: usize = 8;
const PMIN: usize = 9;
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_X: usize = 3;
const RATE_A: usize = 5;
const TAP: usize = 8;
const BR_STATUS: usize = 10;

pub fn parse_case_str(
    text: &str,
    config: &RunConfig,
    sidecar: &Sidecar,
) -> Result<PowerSystem, CaseError> {
    let base_mva = scalar(text, "baseMVA")?;
    if base_mva.is_nan() || base_mva <= 0.0 {
        return Err(CaseError::MalformedCase(format!(
            "baseMVA must be positive, got {base_mva}"
        )));
    }
    let bus = matrix(text, "bus", 3)?;
    let branch = matrix(text, "branch", 11)?;
    let gen = matrix(text, "gen", 10)?;
    let gencost = matrix(text, "gencost", 4)?;

    let mut index = HashMap::new();
    let mut buses = Vec::with_capacity(bus.len());
    let mut slack = None;
    for (k, row) in bus.iter().enumerate() {
        let id = as_id(row[BUS_I], "bus number")?;
        if index.insert(id, k).is_some() {
            return Err(CaseError::MalformedCase(format!(
                "duplicate bus number {id}"
            )));
        }
        if row[BUS_TYPE] == 3.0 && slack.is_none() {
            slack = Some(k);
        }
        buses.push(Bus {
            id: k,
            net_load: row[PD],
        });
    }
    let lookup = |v: f64, what: &str| -> Result<usize, CaseError> {
        let id = as_id(v, what)?;
        index
            .get(&id)
            .copied()
            .ok_or_else(|| CaseError::MalformedCase(format!("{what} refers to unknown bus {id}")))
    };

    let mut lines = Vec::new();
    for (k, row) in branch.iter().enumerate() {
        if row[BR_STATUS] <= 0.0 {
            continue;
        }
        let from_bus = lookup(row[F_BUS], "branch")?;
        let to_bus = lookup(row[T_BUS], "branch")?;
        let x = row[BR_X];
        if !(x > 0.0 && x.is_finite()) {
            return Err(CaseError::UnsupportedCase(format!(
                "branch {} has reactance {x}; the DC model needs x > 0",
                k + 1
            )));
        }
        let rate = row[RATE_A];
        if rate == 0.0 || !rate.is_finite() {
            return Err(CaseError::UnsupportedCase(format!(
                "branch {} has no finite rateA",
                k + 1
            )));
        }
        if rate < 0.0 {
            return Err(CaseError::MalformedCase(format!(
                "branch {} has negative rateA",
                k + 1
            )));
        }
        let tap = if row[TAP] == 0.0 { 1.0 } else { row[TAP] };
        lines.push(Line {
            id: lines.len(),
            from_bus,
            to_bus,
            susceptance: 1.0 / (x * tap),
            capacity: rate,
        });
    }

    if gencost.len() < gen.len() {
        return Err(CaseError::MalformedCase(format!(
            "{} generators but only {} gencost rows",
            gen.len(),
            gencost.len()
        )));
    }
    let mut generators = Vec::new();
    for (k, (row, cost_row)) in gen.iter().zip(&gencost).enumerate() {
        if row[GEN_STATUS] <= 0.0 {
            continue;
        }
        let id = generators.len();
        let bus_id = lookup(row[GEN_BUS], "generator")?;
        let (g_min, g_max) = (row[PMIN], row[PMAX]);
        if g_min < 0.0 || g_max < g_min {
            return Err(CaseError::UnsupportedCase(format!(
                "generator {} has limits [{g_min}, {g_max}]; need 0 <= Pmin <= Pmax",
                k + 1
            )));
        }
        let cost = linear_cost(cost_row, k)?;
        let capacity = sidecar.capacity.get(&id).copied().unwrap_or(g_max);
        let gamma = sidecar
            .gamma
            .get(&id)
            .copied()
            .unwrap_or(config.gamma_default);
        generators.push(Generator::new(
            id, bus_id, cost, g_min, g_max, capacity, gamma,
        ));
    }
    for &id in sidecar.capacity.keys().chain(sidecar.gamma.keys()) {
        if id >= generators.len() {
            return Err(CaseError::InvalidConfig(format!(
                "sidecar refers to generator {id}, case has {}",
                generators.len()
            )));
        }
    }

    let contingencies = match &sidecar.contingencies {
        Some(list) => list.clone(),
        None => generators
            .iter()
            .filter(|g| g.g_max > 0.0)
            .map(|g| g.id)
            .collect(),
    };
    let system = PowerSystem {
        buses,
        lines,
        generators,
        base_mva,
        contingencies,
        slack_bus: slack.unwrap_or(0),
    };
    if !system.is_connected() {
        return Err(CaseError::IslandedNetwork(
            "in-service branches do not connect every bus".into(),
        ));
    }
    system.validate()?;
    Ok(system)
}

fn as_id(v: f64, what: &str) -> Result<usize, CaseError> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(CaseError::MalformedCase(format!(
            "{what} {v} is not an integer"
        )))
    }
}

/// Linear coefficient of a polynomial cost row; higher-order terms are
/// dropped with a warning.
fn linear_cost(row: &[f64], k: usize) -> Result<f64, CaseError> {
    let model = row[0];
    if model != 2.0 {
        return Err(CaseError::UnsupportedCase(format!(
            "gencost row {} uses model {model}; only polynomial costs are supported",
            k + 1
        )));
    }
    let n = as_id(row[3], "gencost ncost")?;
    if row.len() < 4 + n {
        return Err(CaseError::MalformedCase(format!(
            "gencost row {} lists {n} coefficients but has {}",
            k + 1,
            row.len() - 4
        )));
    }
    let coeffs = &row[4..4 + n];
    if n >= 3 && coeffs[..n - 2].iter().any(|&c| c != 0.0) {
        log::warn!(
            "generator {}: nonlinear cost terms {:?} dropped",
            k + 1,
            &coeffs[..n - 2]
        );
    }
    Ok(if n >= 2 { coeffs[n - 2] } else { 0.0 })
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn scalar(text: &str, name: &str) -> Result<f64, CaseError> {
    let body = strip_comments(text);
    let key = format!("mpc.{name}");
    let start = body
        .find(&key)
        .ok_or_else(|| CaseError::MalformedCase(format!("missing mpc.{name}")))?;
    let rest = &body[start + key.len()..];
    let rest = rest
        .trim_start()
        .strip_prefix('=')
        .ok_or_else(|| CaseError::MalformedCase(format!("mpc.{name} has no value")))?;
    let value = rest.split(';').next().unwrap_or("").trim();
    value
        .parse()
        .map_err(|_| CaseError::MalformedCase(format!("mpc.{name} = {value} is not a number")))
}

/// Rows of `mpc.<name> = [ ... ];`, each with at least `min_cols` entries.
fn matrix(text: &str, name: &str, min_cols: usize) -> Result<Vec<Vec<f64>>, CaseError> {
    let body = strip_comments(text);
    let mut search = 0;
    let key = format!("mpc.{name}");
    let start = loop {
        let pos = body[search..]
            .find(&key)
            .map(|p| p + search)
            .ok_or_else(|| CaseError::MalformedCase(format!("missing mpc.{name}")))?;
        let after = &body[pos + key.len()..];
        // `mpc.gen` must not match `mpc.gencost`
        if after.trim_start().starts_with('=') {
            break pos + key.len();
        }
        search = pos + key.len();
    };
    let after = &body[start..];
    let open = after
        .find('[')
        .ok_or_else(|| CaseError::MalformedCase(format!("mpc.{name} is not a matrix")))?;
    let close = after[open..]
        .find(']')
        .ok_or_else(|| CaseError::MalformedCase(format!("mpc.{name} is not closed")))?;
    let inner = &after[open + 1..open + close];
    let mut rows = Vec::new();
    for chunk in inner.split([';', '\n']) {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let row = chunk
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(parse_number)
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| {
                CaseError::MalformedCase(format!("bad number in mpc.{name}: `{chunk}`"))
            })?;
        if row.len() < min_cols {
            return Err(CaseError::MalformedCase(format!(
                "mpc.{name} row `{chunk}` has {} columns, need {min_cols}",
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_number(token: &str) -> Option<f64> {
    match token {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => token.parse().ok(),
    }
}

/// Serializes a system as a MATPOWER case plus the sidecar needed to
/// reproduce it exactly with [`parse_case_with`].
pub fn write_case(system: &PowerSystem) -> (String, Sidecar) {
    let mut m = String::new();
    let _ = writeln!(m, "function mpc = scopf_case\nmpc.version = '2';");
    let _ = writeln!(m, "mpc.baseMVA = {};", system.base_mva);
    let _ = writeln!(m, "mpc.bus = [");
    for bus in &system.buses {
        let kind = if bus.id == system.slack_bus { 3 } else { 1 };
        let _ = writeln!(
            m,
            "\t{}\t{kind}\t{:?}\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;",
            bus.id + 1,
            bus.net_load
        );
    }
    let _ = writeln!(m, "];\nmpc.gen = [");
    for gen in &system.generators {
        let _ = writeln!(
            m,
            "\t{}\t0\t0\t0\t0\t1\t{}\t1\t{:?}\t{:?};",
            gen.bus + 1,
            system.base_mva,
            gen.g_max,
            gen.g_min
        );
    }
    let _ = writeln!(m, "];\nmpc.branch = [");
    for line in &system.lines {
        let _ = writeln!(
            m,
            "\t{}\t{}\t0\t{:?}\t0\t{:?}\t0\t0\t0\t0\t1\t-360\t360;",
            line.from_bus + 1,
            line.to_bus + 1,
            reactance_for(line.susceptance),
            line.capacity
        );
    }
    let _ = writeln!(m, "];\nmpc.gencost = [");
    for gen in &system.generators {
        let _ = writeln!(m, "\t2\t0\t0\t2\t{:?}\t0;", gen.cost);
    }
    let _ = writeln!(m, "];");
    let sidecar = Sidecar {
        capacity: system
            .generators
            .iter()
            .map(|g| (g.id, g.capacity))
            .collect(),
        gamma: system.generators.iter().map(|g| (g.id, g.gamma)).collect(),
        contingencies: Some(system.contingencies.clone()),
    };
    (m, sidecar)
}

/// A reactance whose reciprocal is exactly `b`, when one exists nearby.
fn reactance_for(b: f64) -> f64 {
    let x0 = 1.0 / b;
    let mut best = x0;
    let mut down = x0;
    let mut up = x0;
    for _ in 0..64 {
        for x in [down, up] {
            if 1.0 / x == b {
                return x;
            }
            if (1.0 / x - b).abs() < (1.0 / best - b).abs() {
                best = x;
            }
        }
        down = f64::from_bits(down.to_bits() - 1);
        up = f64::from_bits(up.to_bits() + 1);
    }
    best
}

#[derive(Serialize)]
struct ContingencySummary<'a> {
    contingency: usize,
    n_s: f64,
    /// Units sitting at their upper limit after the outage.
    at_limit: Vec<usize>,
    g_s: &'a [f64],
    imbalance_mw: f64,
    converged: bool,
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    method: &'a str,
    status: &'a str,
    objective: f64,
    best_bound: f64,
    feasible: bool,
    max_violation_mw: f64,
    wall_s: f64,
    iterations: usize,
    imported: &'a [usize],
    g: &'a [f64],
    contingencies: Vec<ContingencySummary<'a>>,
}

const LOG_HEADER: [&str; 8] = [
    "iter",
    "wall_s",
    "objective",
    "alpha_mw",
    "cuts_added",
    "S_size",
    "lb",
    "ub",
];

pub fn solution_json(
    report: &RunReport,
    dispatch: Option<&DispatchState>,
) -> Result<String, CaseError> {
    let empty: &[f64] = &[];
    let file = SolutionFile {
        method: &report.method,
        status: report.status.name(),
        objective: report.objective,
        best_bound: report.best_bound,
        feasible: dispatch.is_some_and(|d| d.feasible),
        max_violation_mw: dispatch.map_or(0.0, |d| d.max_violation_mw),
        wall_s: report.wall_s,
        iterations: report.iterations.len(),
        imported: &report.imported,
        g: dispatch.map_or(empty, |d| &d.g),
        contingencies: dispatch
            .map(|d| {
                d.responses
                    .iter()
                    .map(|r| ContingencySummary {
                        contingency: r.contingency,
                        n_s: r.n_s,
                        at_limit: r
                            .x_s
                            .iter()
                            .enumerate()
                            .filter(|&(i, &x)| !x && i != r.contingency)
                            .map(|(i, _)| i)
                            .collect(),
                        g_s: &r.g_s,
                        imbalance_mw: r.imbalance_mw,
                        converged: r.converged,
                    })
                    .collect()
            })
            .unwrap_or_default(),
    };
    // serde_json writes non-finite floats as null
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Convergence log as CSV; always has the header row.
pub fn convergence_csv(report: &RunReport) -> Result<String, CaseError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(LOG_HEADER)?;
    for r in &report.iterations {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CaseError::MalformedCase(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `solution.json` and `convergence.csv` into `dir`.
pub fn write_solution(
    report: &RunReport,
    dispatch: Option<&DispatchState>,
    dir: &Path,
) -> Result<(), CaseError> {
    std::fs::create_dir_all(dir).map_err(|e| CaseError::io(dir, e))?;
    let json_path = dir.join("solution.json");
    std::fs::write(&json_path, solution_json(report, dispatch)?)
        .map_err(|e| CaseError::io(&json_path, e))?;
    let csv_path = dir.join("convergence.csv");
    std::fs::write(&csv_path, convergence_csv(report)?).map_err(|e| CaseError::io(&csv_path, e))
}

/// Input format of the `screen` command: a nominal dispatch, optionally
/// with explicit post-contingency vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchFile {
    pub g: Vec<f64>,
    #[serde(default)]
    pub contingencies: Vec<StateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub contingency: usize,
    pub g_s: Vec<f64>,
}

pub fn read_dispatch(path: &Path) -> Result<DispatchFile, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
