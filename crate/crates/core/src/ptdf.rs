//! Power transfer distribution factors and line-limit screening.
//!
//! `K0` maps balanced nodal injections to branch flows. From it we build one
//! pair of cut structures per line that is shared by every contingency:
//! `K1 g_s + k2 >= 0` (flow above `-f_max`) and `K3 g_s + k4 >= 0` (flow below `f_max`).
//! `K0`, `K1` and `K3` are dimensionless; `k2` and `k4` are in MW.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CaseError, NetworkError, ScreenError};
use crate::network::{build_incidence, reduced_system, PowerSystem};

/// Computes `K0` by factorizing the reduced nodal susceptance matrix once.
/// The slack column is zero.
pub fn compute_ptdf(system: &PowerSystem) -> Result<DMatrix<f64>, NetworkError> {
    let n_bus = system.n_buses();
    let n_line = system.n_lines();
    if n_bus <= 1 {
        return Ok(DMatrix::zeros(n_line, n_bus));
    }
    let (s_red, a) = reduced_system(system);
    let a_red = a.remove_column(system.slack_bus);
    let b_red = a_red.transpose() * &s_red;
    let lu = b_red.lu();
    // B_red is symmetric, so K0_red^T = B_red^{-1} S_red^T.
    let kt = lu
        .solve(&s_red.transpose())
        .ok_or(NetworkError::SingularNetwork)?;
    if kt.iter().any(|v| !v.is_finite()) {
        return Err(NetworkError::SingularNetwork);
    }
    let k_red = kt.transpose();
    Ok(k_red.insert_column(system.slack_bus, 0.0))
}

/// `K0` together with the per-line cut structures.
#[derive(Debug, Clone, PartialEq)]
pub struct PtdfBundle {
    pub k0: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    /// `f_max - K0 d`, MW.
    pub k2: Vec<f64>,
    pub k3: DMatrix<f64>,
    /// `f_max + K0 d`, MW.
    pub k4: Vec<f64>,
    pub total_load_mw: f64,
}

pub fn build_cut_structures(system: &PowerSystem, k0: &DMatrix<f64>) -> PtdfBundle {
    let (_, b) = build_incidence(system);
    let k1 = k0 * &b;
    let k3 = -&k1;
    let d = nalgebra::DVector::from_vec(system.loads_mw());
    let k0d = k0 * d;
    let k2 = system
        .lines
        .iter()
        .map(|l| l.capacity - k0d[l.id])
        .collect();
    let k4 = system
        .lines
        .iter()
        .map(|l| l.capacity + k0d[l.id])
        .collect();
    PtdfBundle {
        k0: k0.clone(),
        k1,
        k2,
        k3,
        k4,
        total_load_mw: system.total_load_mw(),
    }
}

impl PtdfBundle {
    pub fn build(system: &PowerSystem) -> Result<Self, NetworkError> {
        let k0 = compute_ptdf(system)?;
        Ok(build_cut_structures(system, &k0))
    }

    pub fn n_lines(&self) -> usize {
        self.k1.nrows()
    }

    /// Branch flows in MW for a generator vector in MW.
    pub fn flows_mw(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n_lines())
            .map(|l| {
                let (plus, minus) = self.residuals(l, g);
                0.5 * (plus - minus)
            })
            .collect()
    }

    /// Residuals `(K1 g + k2, K3 g + k4)` of line `l` in MW, i.e.
    /// `(f_max + flow, f_max - flow)`.
    pub fn residuals(&self, l: usize, g: &[f64]) -> (f64, f64) {
        let mut plus = self.k2[l];
        let mut minus = self.k4[l];
        for (i, &x) in g.iter().enumerate() {
            plus += self.k1[(l, i)] * x;
            minus += self.k3[(l, i)] * x;
        }
        (plus, minus)
    }
}

/// Which of the two cut rows of a line is violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Flow above `+f_max`: the `K3 g + k4 >= 0` row.
    Forward,
    /// Flow below `-f_max`: the `K1 g + k2 >= 0` row.
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub contingency: usize,
    pub line: usize,
    pub alpha_mw: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationTable {
    /// Sorted by `alpha_mw` descending, then contingency id, then line id.
    pub entries: Vec<Violation>,
    pub alpha_max: f64,
    pub argmax_state: Option<usize>,
}

impl ViolationTable {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest violation per contingency.
    pub fn state_max(&self, contingency: usize) -> f64 {
        self.entries
            .iter()
            .filter(|v| v.contingency == contingency)
            .map(|v| v.alpha_mw)
            .fold(0.0, f64::max)
    }

    /// Tab-separated dump with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("contingency\tline\tdirection\talpha_mw\n");
        for v in &self.entries {
            let dir = match v.direction {
                Direction::Forward => "forward",
                Direction::Reverse => "reverse",
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\n",
                v.contingency, v.line, dir, v.alpha_mw
            ));
        }
        out
    }
}

/// Screens post-contingency dispatches `(s, g_s)` against every line limit.
///
/// Each `g_s` must be balanced to within `balance_tol_mw`.
pub fn screen(
    bundle: &PtdfBundle,
    states: &[(usize, Vec<f64>)],
    balance_tol_mw: f64,
) -> Result<ViolationTable, ScreenError> {
    let n_gen = bundle.k1.ncols();
    for (s, g_s) in states {
        if g_s.len() != n_gen {
            return Err(ScreenError::DimensionMismatch {
                contingency: *s,
                found: g_s.len(),
                expected: n_gen,
            });
        }
        let imbalance = g_s.iter().sum::<f64>() - bundle.total_load_mw;
        if imbalance.abs() > balance_tol_mw {
            return Err(ScreenError::UnbalancedDispatch {
                contingency: *s,
                imbalance_mw: imbalance,
            });
        }
    }

    let mut entries: Vec<Violation> = states
        .par_iter()
        .flat_map_iter(|(s, g_s)| {
            (0..bundle.n_lines()).filter_map(move |l| {
                let (plus, minus) = bundle.residuals(l, g_s);
                let worst = plus.min(minus);
                (worst < 0.0).then(|| Violation {
                    contingency: *s,
                    line: l,
                    alpha_mw: -worst,
                    direction: if minus <= plus {
                        Direction::Forward
                    } else {
                        Direction::Reverse
                    },
                })
            })
        })
        .collect();
    entries.sort_by(|a, b| {
        b.alpha_mw
            .total_cmp(&a.alpha_mw)
            .then(a.contingency.cmp(&b.contingency))
            .then(a.line.cmp(&b.line))
    });
    let alpha_max = entries.first().map_or(0.0, |v| v.alpha_mw);
    let argmax_state = entries.first().map(|v| v.contingency);
    Ok(ViolationTable {
        entries,
        alpha_max,
        argmax_state,
    })
}

/// Writes `K0` as CSV: one row per line, one column per bus.
pub fn write_ptdf_csv(k0: &DMatrix<f64>, path: &Path) -> Result<(), CaseError> {
    let file = std::fs::File::create(path).map_err(|e| CaseError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_ptdf(k0, &mut out).map_err(|e| CaseError::io(path, e))
}

pub fn write_ptdf<W: Write>(k0: &DMatrix<f64>, out: &mut W) -> std::io::Result<()> {
    let header: Vec<String> = (0..k0.ncols()).map(|b| format!("bus{b}")).collect();
    writeln!(out, "line,{}", header.join(","))?;
    for l in 0..k0.nrows() {
        let row: Vec<String> = k0.row(l).iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(out, "{l},{}", row.join(","))?;
    }
    out.flush()
}
