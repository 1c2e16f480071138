//! Backend-neutral MILP/LP model handle.
//!
//! Method drivers register named columns and rows on a [`ModelHandle`] and
//! call [`ModelHandle::solve`]. Rows and columns added after a solve are
//! pushed into the live backend instance on the next solve, so decomposition
//! loops re-solve warm without rebuilding the model.

use std::collections::{BTreeMap, HashMap};
use std::ffi::{c_void, CString};
use std::sync::atomic::{AtomicU64, Ordering};

use highs_sys::*;
use serde::{Deserialize, Serialize};

use crate::error::SolverError;

/// Environment variable that selects the solver backend.
pub const BACKEND_ENV: &str = "SCOPF_SOLVER";

const OPTION_BOOL: HighsInt = kHighsOptionTypeBool;
const OPTION_INT: HighsInt = kHighsOptionTypeInt;
const OPTION_DOUBLE: HighsInt = kHighsOptionTypeDouble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Row(pub(crate) usize);

impl Row {
    pub fn index(self) -> usize {
        self.0
    }
}

/// `(name, coefficients, sense, rhs)` of one row.
pub type RowSpec = (String, Vec<(Var, f64)>, Sense, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    OptimalWithinGap,
    Infeasible,
    TimeLimit,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Highs,
}

impl BackendKind {
    pub fn parse(name: &str) -> Result<Self, SolverError> {
        match name.to_ascii_lowercase().as_str() {
            "highs" => Ok(BackendKind::Highs),
            other => Err(SolverError::BackendUnavailable(other.to_string())),
        }
    }

    /// Backend named by `SCOPF_SOLVER`, HiGHS when unset.
    pub fn from_env() -> Result<Self, SolverError> {
        match std::env::var(BACKEND_ENV) {
            Ok(name) if !name.trim().is_empty() => Self::parse(name.trim()),
            _ => Ok(BackendKind::Highs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub mip_gap: f64,
    pub time_limit_s: Option<f64>,
    /// 0 lets the backend choose.
    pub threads: u32,
    pub seed: Option<i32>,
    pub verbose: bool,
    /// Backend options forwarded verbatim.
    pub options: BTreeMap<String, String>,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            mip_gap: 1e-4,
            time_limit_s: None,
            threads: 0,
            seed: None,
            verbose: false,
            options: BTreeMap::new(),
        }
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective of the incumbent; `+inf` when none exists.
    pub objective: f64,
    /// Proven bound on the optimum (equals `objective` for LPs).
    pub best_bound: f64,
    pub values: Vec<f64>,
    /// Row duals, only for pure LPs.
    pub duals: Option<Vec<f64>>,
    pub message: String,
}

impl SolveResult {
    pub fn value(&self, var: Var) -> f64 {
        self.values[var.0]
    }

    pub fn values_of(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.values[v.0]).collect()
    }

    pub fn dual(&self, row: Row) -> Option<f64> {
        self.duals.as_ref().map(|d| d[row.0])
    }

    pub fn has_solution(&self) -> bool {
        !self.values.is_empty() && self.objective.is_finite()
    }
}

/// Raw column/row data handed to a backend.
pub struct ColumnData {
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub integer: bool,
}

pub struct RowData<'a> {
    pub lower: f64,
    pub upper: f64,
    pub coeffs: &'a [(usize, f64)],
}

/// What a concrete solver must provide.
pub trait BackendModel {
    fn name(&self) -> &'static str;
    fn set_option(&mut self, name: &str, value: &str) -> Result<(), SolverError>;
    fn add_columns(&mut self, cols: &[ColumnData]) -> Result<(), SolverError>;
    fn add_rows(&mut self, rows: &[RowData<'_>]) -> Result<(), SolverError>;
    fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) -> Result<(), SolverError>;
    fn solve(&mut self) -> Result<SolveResult, SolverError>;
}

struct VarInfo {
    name: String,
    lower: f64,
    upper: f64,
    cost: f64,
    kind: VarKind,
}

struct PendingRow {
    lower: f64,
    upper: f64,
    coeffs: Vec<(usize, f64)>,
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// A model under construction, owned by one thread of control.
pub struct ModelHandle {
    id: u64,
    params: SolverParams,
    backend: Box<dyn BackendModel>,
    vars: Vec<VarInfo>,
    var_index: HashMap<String, Var>,
    row_names: Vec<String>,
    row_index: HashMap<String, Row>,
    flushed_cols: usize,
    pending_rows: Vec<PendingRow>,
    has_integer: bool,
}

impl std::fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelHandle")
            .field("id", &self.id)
            .field("backend", &self.backend.name())
            .field("vars", &self.vars.len())
            .field("rows", &self.row_names.len())
            .finish()
    }
}

impl ModelHandle {
    /// Creates an empty model on the backend selected by `SCOPF_SOLVER`.
    pub fn new(params: SolverParams) -> Result<Self, SolverError> {
        Self::with_backend(BackendKind::from_env()?, params)
    }

    pub fn with_backend(kind: BackendKind, params: SolverParams) -> Result<Self, SolverError> {
        let backend: Box<dyn BackendModel> = match kind {
            BackendKind::Highs => Box::new(HighsModel::new()?),
        };
        let mut model = ModelHandle {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            params: SolverParams::default(),
            backend,
            vars: Vec::new(),
            var_index: HashMap::new(),
            row_names: Vec::new(),
            row_index: HashMap::new(),
            flushed_cols: 0,
            pending_rows: Vec::new(),
            has_integer: false,
        };
        model.apply_params(params)?;
        Ok(model)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    fn apply_params(&mut self, params: SolverParams) -> Result<(), SolverError> {
        let b = &mut self.backend;
        b.set_option("output_flag", if params.verbose { "true" } else { "false" })?;
        b.set_option("mip_rel_gap", &params.mip_gap.to_string())?;
        if let Some(t) = params.time_limit_s {
            b.set_option("time_limit", &t.max(1e-3).to_string())?;
        }
        if params.threads > 0 {
            b.set_option("threads", &params.threads.to_string())?;
        }
        if let Some(seed) = params.seed {
            b.set_option("random_seed", &seed.to_string())?;
        }
        for (name, value) in &params.options {
            b.set_option(name, value)?;
        }
        self.params = params;
        Ok(())
    }

    /// Resets the wall-clock budget for the next solve.
    pub fn set_time_limit(&mut self, seconds: Option<f64>) -> Result<(), SolverError> {
        let value = seconds.map_or(f64::INFINITY, |t| t.max(1e-3));
        self.backend.set_option("time_limit", &format!("{value}"))?;
        self.params.time_limit_s = seconds;
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_names.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.var_index.get(name).copied()
    }

    pub fn row(&self, name: &str) -> Option<Row> {
        self.row_index.get(name).copied()
    }

    pub fn var_name(&self, var: Var) -> &str {
        &self.vars[var.0].name
    }

    pub fn add_var(
        &mut self,
        name: &str,
        lower: f64,
        upper: f64,
        cost: f64,
        kind: VarKind,
    ) -> Result<Var, SolverError> {
        if self.var_index.contains_key(name) {
            return Err(SolverError::DuplicateName(name.to_string()));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        if lower > upper {
            return Err(SolverError::ModelBuild(format!(
                "variable `{name}` has empty domain [{lower}, {upper}]"
            )));
        }
        let var = Var(self.vars.len());
        self.has_integer |= kind == VarKind::Binary;
        self.vars.push(VarInfo {
            name: name.to_string(),
            lower,
            upper,
            cost,
            kind,
        });
        self.var_index.insert(name.to_string(), var);
        Ok(var)
    }

    pub fn set_bounds(&mut self, var: Var, lower: f64, upper: f64) -> Result<(), SolverError> {
        let info = self
            .vars
            .get_mut(var.0)
            .ok_or_else(|| SolverError::UnknownVariable(format!("#{}", var.0)))?;
        info.lower = lower;
        info.upper = upper;
        if var.0 < self.flushed_cols {
            self.backend.set_bounds(var.0, lower, upper)?;
        }
        Ok(())
    }

    /// Registers `sum coeffs (sense) rhs` under a unique name.
    pub fn add_linear_constraint(
        &mut self,
        coeffs: &[(Var, f64)],
        sense: Sense,
        rhs: f64,
        name: &str,
    ) -> Result<Row, SolverError> {
        let (lower, upper) = match sense {
            Sense::Le => (f64::NEG_INFINITY, rhs),
            Sense::Ge => (rhs, f64::INFINITY),
            Sense::Eq => (rhs, rhs),
        };
        self.add_ranged_constraint(coeffs, lower, upper, name)
    }

    pub fn add_ranged_constraint(
        &mut self,
        coeffs: &[(Var, f64)],
        lower: f64,
        upper: f64,
        name: &str,
    ) -> Result<Row, SolverError> {
        if self.row_index.contains_key(name) {
            return Err(SolverError::DuplicateName(name.to_string()));
        }
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for &(var, value) in coeffs {
            if var.0 >= self.vars.len() {
                return Err(SolverError::UnknownVariable(format!("#{}", var.0)));
            }
            match merged.iter_mut().find(|(c, _)| *c == var.0) {
                Some(entry) => entry.1 += value,
                None => merged.push((var.0, value)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        let row = Row(self.row_names.len());
        self.row_names.push(name.to_string());
        self.row_index.insert(name.to_string(), row);
        self.pending_rows.push(PendingRow {
            lower,
            upper,
            coeffs: merged,
        });
        Ok(row)
    }

    /// Adds a batch of rows to a model that may already have been solved.
    /// Re-solving afterwards is equivalent to having had the rows from the
    /// start.
    pub fn add_rows_incremental(&mut self, rows: Vec<RowSpec>) -> Result<Vec<Row>, SolverError> {
        rows.into_iter()
            .map(|(name, coeffs, sense, rhs)| {
                self.add_linear_constraint(&coeffs, sense, rhs, &name)
            })
            .collect()
    }

    fn flush(&mut self) -> Result<(), SolverError> {
        if self.flushed_cols < self.vars.len() {
            let cols: Vec<ColumnData> = self.vars[self.flushed_cols..]
                .iter()
                .map(|v| ColumnData {
                    lower: v.lower,
                    upper: v.upper,
                    cost: v.cost,
                    integer: v.kind == VarKind::Binary,
                })
                .collect();
            self.backend.add_columns(&cols)?;
            self.flushed_cols = self.vars.len();
        }
        if !self.pending_rows.is_empty() {
            let rows: Vec<RowData<'_>> = self
                .pending_rows
                .iter()
                .map(|r| RowData {
                    lower: r.lower,
                    upper: r.upper,
                    coeffs: &r.coeffs,
                })
                .collect();
            self.backend.add_rows(&rows)?;
            self.pending_rows.clear();
        }
        Ok(())
    }

    /// Minimizes the registered objective.
    pub fn solve(&mut self) -> Result<SolveResult, SolverError> {
        self.flush()?;
        let mut result = self.backend.solve()?;
        if !self.has_integer && result.status == SolveStatus::OptimalWithinGap {
            result.best_bound = result.objective;
        } else {
            result.duals = None;
        }
        Ok(result)
    }
}

/// Owned HiGHS instance driven through the C API.
pub struct HighsModel {
    ptr: *mut c_void,
    has_integer: bool,
}

impl HighsModel {
    pub fn new() -> Result<Self, SolverError> {
        let ptr = unsafe { Highs_create() };
        if ptr.is_null() {
            return Err(SolverError::BackendUnavailable("highs".into()));
        }
        Ok(HighsModel {
            ptr,
            has_integer: false,
        })
    }

    fn check(status: HighsInt, what: &str) -> Result<(), SolverError> {
        if status == STATUS_ERROR {
            Err(SolverError::Backend(format!("{what} failed")))
        } else {
            Ok(())
        }
    }

    fn finite(v: f64) -> f64 {
        v.clamp(-1e30, 1e30)
    }
}

impl Drop for HighsModel {
    fn drop(&mut self) {
        unsafe { Highs_destroy(self.ptr) };
    }
}

impl BackendModel for HighsModel {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn set_option(&mut self, name: &str, value: &str) -> Result<(), SolverError> {
        let unknown = || SolverError::UnknownParameter(format!("{name}={value}"));
        let key = CString::new(name).map_err(|_| unknown())?;
        let mut kind: HighsInt = -1;
        if unsafe { Highs_getOptionType(self.ptr, key.as_ptr(), &mut kind) } != STATUS_OK {
            return Err(unknown());
        }
        let status = match kind {
            OPTION_BOOL => {
                let flag = match value.to_ascii_lowercase().as_str() {
                    "true" | "1" | "on" => 1,
                    "false" | "0" | "off" => 0,
                    _ => return Err(unknown()),
                };
                unsafe { Highs_setBoolOptionValue(self.ptr, key.as_ptr(), flag) }
            }
            OPTION_INT => {
                let v: HighsInt = value.parse().map_err(|_| unknown())?;
                unsafe { Highs_setIntOptionValue(self.ptr, key.as_ptr(), v) }
            }
            OPTION_DOUBLE => {
                let v: f64 = value.parse().map_err(|_| unknown())?;
                unsafe { Highs_setDoubleOptionValue(self.ptr, key.as_ptr(), v) }
            }
            _ => {
                let v = CString::new(value).map_err(|_| unknown())?;
                unsafe { Highs_setStringOptionValue(self.ptr, key.as_ptr(), v.as_ptr()) }
            }
        };
        if status == STATUS_OK {
            Ok(())
        } else {
            Err(unknown())
        }
    }

    fn add_columns(&mut self, cols: &[ColumnData]) -> Result<(), SolverError> {
        let first = unsafe { Highs_getNumCols(self.ptr) };
        let costs: Vec<f64> = cols.iter().map(|c| c.cost).collect();
        let lower: Vec<f64> = cols.iter().map(|c| Self::finite(c.lower)).collect();
        let upper: Vec<f64> = cols.iter().map(|c| Self::finite(c.upper)).collect();
        let starts = vec![0 as HighsInt; cols.len()];
        let status = unsafe {
            Highs_addCols(
                self.ptr,
                cols.len() as HighsInt,
                costs.as_ptr(),
                lower.as_ptr(),
                upper.as_ptr(),
                0,
                starts.as_ptr(),
                std::ptr::null(),
                std::ptr::null(),
            )
        };
        Self::check(status, "Highs_addCols")?;
        for (k, col) in cols.iter().enumerate() {
            if col.integer {
                self.has_integer = true;
                let status = unsafe {
                    Highs_changeColIntegrality(self.ptr, first + k as HighsInt, VAR_TYPE_INTEGER)
                };
                Self::check(status, "Highs_changeColIntegrality")?;
            }
        }
        Ok(())
    }

    fn add_rows(&mut self, rows: &[RowData<'_>]) -> Result<(), SolverError> {
        let lower: Vec<f64> = rows.iter().map(|r| Self::finite(r.lower)).collect();
        let upper: Vec<f64> = rows.iter().map(|r| Self::finite(r.upper)).collect();
        let mut starts = Vec::with_capacity(rows.len());
        let mut index = Vec::new();
        let mut value = Vec::new();
        for row in rows {
            starts.push(index.len() as HighsInt);
            for &(c, v) in row.coeffs {
                index.push(c as HighsInt);
                value.push(v);
            }
        }
        let status = unsafe {
            Highs_addRows(
                self.ptr,
                rows.len() as HighsInt,
                lower.as_ptr(),
                upper.as_ptr(),
                index.len() as HighsInt,
                starts.as_ptr(),
                index.as_ptr(),
                value.as_ptr(),
            )
        };
        Self::check(status, "Highs_addRows")
    }

    fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) -> Result<(), SolverError> {
        let status = unsafe {
            Highs_changeColBounds(
                self.ptr,
                col as HighsInt,
                Self::finite(lower),
                Self::finite(upper),
            )
        };
        Self::check(status, "Highs_changeColBounds")
    }

    fn solve(&mut self) -> Result<SolveResult, SolverError> {
        let run = unsafe { Highs_run(self.ptr) };
        let model_status = unsafe { Highs_getModelStatus(self.ptr) };
        if run == STATUS_ERROR && model_status != MODEL_STATUS_REACHED_TIME_LIMIT {
            return Ok(SolveResult {
                status: SolveStatus::Error,
                objective: f64::INFINITY,
                best_bound: f64::NEG_INFINITY,
                values: Vec::new(),
                duals: None,
                message: format!("Highs_run failed with model status {model_status}"),
            });
        }
        let n_cols = unsafe { Highs_getNumCols(self.ptr) } as usize;
        let n_rows = unsafe { Highs_getNumRows(self.ptr) } as usize;
        let mut primal_status: HighsInt = SOLUTION_STATUS_NONE;
        let key = CString::new("primal_solution_status").unwrap();
        unsafe { Highs_getIntInfoValue(self.ptr, key.as_ptr(), &mut primal_status) };
        let has_primal = primal_status == SOLUTION_STATUS_FEASIBLE;

        let (status, message) = match model_status {
            MODEL_STATUS_OPTIMAL => (SolveStatus::OptimalWithinGap, "optimal"),
            MODEL_STATUS_MODEL_EMPTY => (SolveStatus::OptimalWithinGap, "empty model"),
            MODEL_STATUS_INFEASIBLE => (SolveStatus::Infeasible, "infeasible"),
            MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE => {
                (SolveStatus::Infeasible, "unbounded or infeasible")
            }
            MODEL_STATUS_REACHED_TIME_LIMIT => (SolveStatus::TimeLimit, "time limit"),
            MODEL_STATUS_UNBOUNDED => (SolveStatus::Error, "unbounded"),
            _ => (SolveStatus::Error, "solver error"),
        };

        let mut values = Vec::new();
        let mut duals = None;
        let mut objective = f64::INFINITY;
        if model_status == MODEL_STATUS_MODEL_EMPTY {
            objective = 0.0;
            values = vec![0.0; n_cols];
        } else if has_primal {
            let mut col_value = vec![0.0; n_cols];
            let mut col_dual = vec![0.0; n_cols];
            let mut row_value = vec![0.0; n_rows];
            let mut row_dual = vec![0.0; n_rows];
            unsafe {
                Highs_getSolution(
                    self.ptr,
                    col_value.as_mut_ptr(),
                    col_dual.as_mut_ptr(),
                    row_value.as_mut_ptr(),
                    row_dual.as_mut_ptr(),
                )
            };
            objective = unsafe { Highs_getObjectiveValue(self.ptr) };
            values = col_value;
            if !self.has_integer && status == SolveStatus::OptimalWithinGap {
                duals = Some(row_dual);
            }
        }

        let best_bound = if self.has_integer {
            let mut bound = f64::NEG_INFINITY;
            let key = CString::new("mip_dual_bound").unwrap();
            unsafe { Highs_getDoubleInfoValue(self.ptr, key.as_ptr(), &mut bound) };
            if status == SolveStatus::Infeasible {
                f64::INFINITY
            } else {
                bound
            }
        } else if status == SolveStatus::OptimalWithinGap {
            objective
        } else if status == SolveStatus::Infeasible {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };

        Ok(SolveResult {
            status,
            objective,
            best_bound,
            values,
            duals,
            message: message.to_string(),
        })
    }
}
