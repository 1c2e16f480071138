use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CaseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ef,
    Bd,
    Bddc,
    Ccga,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ef => "ef",
            Method::Bd => "bd",
            Method::Bddc => "bddc",
            Method::Ccga => "ccga",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ef" => Ok(Method::Ef),
            "bd" => Ok(Method::Bd),
            "bddc" => Ok(Method::Bddc),
            "ccga" => Ok(Method::Ccga),
            other => Err(CaseError::InvalidConfig(format!(
                "unknown method `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigMMode {
    PerGenerator,
    Global,
}

impl FromStr for BigMMode {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_generator" | "per-generator" => Ok(BigMMode::PerGenerator),
            "global" => Ok(BigMMode::Global),
            other => Err(CaseError::InvalidConfig(format!(
                "unknown big-M mode `{other}`"
            ))),
        }
    }
}

/// Tunables shared by ingestion and every solution method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Primary response coefficient applied to every unit without an override.
    pub gamma_default: f64,
    /// Cut-selection divisor for states that carry disjunctions.
    pub beta1: f64,
    /// Cut-selection divisor for states without disjunctions.
    pub beta2: f64,
    /// Largest tolerated line overload, MW.
    pub eps_violation_mw: f64,
    /// Bisection tolerance on the post-contingency imbalance, MW.
    pub eps_binary_mw: f64,
    pub mip_gap: f64,
    /// Relative gap for the CCGA masters. Kept tight so the master
    /// objectives of successive rounds are comparable.
    pub master_mip_gap: f64,
    pub method: Method,
    /// Percentages for the restricted primal runs, ascending, below 100.
    pub p_schedule: Vec<f64>,
    pub time_limit_s: Option<f64>,
    pub big_m_mode: BigMMode,
    /// Solver threads; 0 lets the backend decide.
    pub threads: u32,
    /// Single-threaded, fixed seed, logical clock in logs.
    pub deterministic: bool,
    /// Safety stop for the decomposition loops.
    pub max_iterations: usize,
    /// Passed verbatim to the backend.
    pub solver_options: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma_default: 0.05,
            beta1: 5.0,
            beta2: 1.2,
            eps_violation_mw: 0.05,
            eps_binary_mw: 1e-10,
            mip_gap: 0.005,
            master_mip_gap: 1e-6,
            method: Method::Ccga,
            p_schedule: vec![0.0, 10.0, 50.0],
            time_limit_s: None,
            big_m_mode: BigMMode::PerGenerator,
            threads: 0,
            deterministic: false,
            max_iterations: 200,
            solver_options: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CaseError> {
        let bad = |msg: String| Err(CaseError::InvalidConfig(msg));
        if !(self.beta2 > 1.0 && self.beta1 >= self.beta2) {
            return bad(format!(
                "require beta1 >= beta2 > 1 (beta1 = {}, beta2 = {})",
                self.beta1, self.beta2
            ));
        }
        if !(self.mip_gap > 0.0 && self.mip_gap < 1.0) {
            return bad(format!("mip_gap must lie in (0, 1), got {}", self.mip_gap));
        }
        if !(self.master_mip_gap > 0.0 && self.master_mip_gap < 1.0) {
            return bad(format!(
                "master_mip_gap must lie in (0, 1), got {}",
                self.master_mip_gap
            ));
        }
        if !(self.eps_binary_mw > 0.0 && self.eps_binary_mw < self.eps_violation_mw) {
            return bad(format!(
                "require 0 < eps_binary_mw < eps_violation_mw ({} vs {})",
                self.eps_binary_mw, self.eps_violation_mw
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma_default) {
            return bad(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma_default
            ));
        }
        if let Some(t) = self.time_limit_s {
            if t.is_nan() || t <= 0.0 {
                return bad(format!("time limit must be positive, got {t}"));
            }
        }
        if self
            .p_schedule
            .windows(2)
            .any(|w| w[0] >= w[1] || w[0].is_nan())
            || self.p_schedule.iter().any(|p| !(0.0..100.0).contains(p))
        {
            return bad(format!(
                "p_schedule must be strictly ascending within [0, 100): {:?}",
                self.p_schedule
            ));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.gamma_default, 0.05);
        assert_eq!(cfg.beta1, 5.0);
        assert_eq!(cfg.beta2, 1.2);
        assert_eq!(cfg.eps_violation_mw, 0.05);
        assert_eq!(cfg.eps_binary_mw, 1e-10);
        assert_eq!(cfg.mip_gap, 0.005);
        assert_eq!(cfg.p_schedule, vec![0.0, 10.0, 50.0]);
    }

    #[test]
    fn rejects_beta_ordering() {
        let cfg = RunConfig {
            beta1: 1.0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            beta1: 1.1,
            beta2: 1.2,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_tolerance_ordering_and_gap() {
        let cfg = RunConfig {
            eps_binary_mw: 0.1,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            mip_gap: 0.0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            p_schedule: vec![10.0, 0.0],
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("CCGA".parse::<Method>().unwrap(), Method::Ccga);
        assert!("foo".parse::<Method>().is_err());
    }
}
