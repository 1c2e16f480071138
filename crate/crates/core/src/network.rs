//! Physical network data and the DC power flow matrices built from it.
//!
//! Quantities stored on the domain types are in MW (loads, limits, ratings)
//! and $/MWh (costs). Susceptances are per unit on `base_mva`, so the
//! angle-to-flow matrix maps radians to per-unit flows.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Net load in MW; negative values are net injections.
    pub net_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series susceptance, p.u.
    pub susceptance: f64,
    /// Thermal rating, MW.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    /// Linear cost, $/MWh.
    pub cost: f64,
    pub g_min: f64,
    pub g_max: f64,
    /// Nameplate capacity used to size the primary response.
    pub capacity: f64,
    pub gamma: f64,
    /// Always `gamma * capacity`.
    pub response_limit: f64,
}

impl Generator {
    pub fn new(
        id: usize,
        bus: usize,
        cost: f64,
        g_min: f64,
        g_max: f64,
        capacity: f64,
        gamma: f64,
    ) -> Self {
        Generator {
            id,
            bus,
            cost,
            g_min,
            g_max,
            capacity,
            gamma,
            response_limit: gamma * capacity,
        }
    }

    /// Recomputes the response limit after `gamma` or `capacity` changed.
    pub fn set_response(&mut self, capacity: f64, gamma: f64) {
        self.capacity = capacity;
        self.gamma = gamma;
        self.response_limit = gamma * capacity;
    }
}

/// Immutable description of the network, its units and the contingency set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystem {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub base_mva: f64,
    /// Generator ids whose individual loss must be survivable, in order.
    pub contingencies: Vec<usize>,
    pub slack_bus: usize,
}

impl PowerSystem {
    pub fn new(
        buses: Vec<Bus>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
        base_mva: f64,
        contingencies: Vec<usize>,
        slack_bus: usize,
    ) -> Result<Self, NetworkError> {
        let system = PowerSystem {
            buses,
            lines,
            generators,
            base_mva,
            contingencies,
            slack_bus,
        };
        system.validate()?;
        Ok(system)
    }

    /// Checks every structural invariant. Called by [`PowerSystem::new`].
    pub fn validate(&self) -> Result<(), NetworkError> {
        let n_bus = self.buses.len();
        for (position, bus) in self.buses.iter().enumerate() {
            if bus.id != position {
                return Err(NetworkError::NonContiguousBus {
                    position,
                    found: bus.id,
                });
            }
        }
        if self.slack_bus >= n_bus {
            return Err(NetworkError::UnknownSlack(self.slack_bus));
        }
        let mut touched = vec![false; n_bus];
        for (position, line) in self.lines.iter().enumerate() {
            let bad = |reason: &str| NetworkError::InvalidLine {
                line: position,
                reason: reason.to_string(),
            };
            if line.id != position {
                return Err(bad("ids must be contiguous"));
            }
            if line.from_bus >= n_bus || line.to_bus >= n_bus {
                return Err(bad("endpoint out of range"));
            }
            if line.from_bus == line.to_bus {
                return Err(bad("from_bus equals to_bus"));
            }
            if !(line.susceptance > 0.0 && line.susceptance.is_finite()) {
                return Err(bad("susceptance must be positive"));
            }
            if !(line.capacity > 0.0 && line.capacity.is_finite()) {
                return Err(bad("capacity must be positive and finite"));
            }
            touched[line.from_bus] = true;
            touched[line.to_bus] = true;
        }
        if let Some(bus) = touched.iter().position(|t| !t) {
            return Err(NetworkError::IsolatedBus(bus));
        }
        for (position, gen) in self.generators.iter().enumerate() {
            let bad = |reason: &str| NetworkError::InvalidGenerator {
                generator: position,
                reason: reason.to_string(),
            };
            if gen.id != position {
                return Err(bad("ids must be contiguous"));
            }
            if gen.bus >= n_bus {
                return Err(bad("bus out of range"));
            }
            if !(0.0 <= gen.g_min && gen.g_min <= gen.g_max && gen.g_max <= gen.capacity) {
                return Err(bad("requires 0 <= g_min <= g_max <= capacity"));
            }
            if !(0.0..=1.0).contains(&gen.gamma) {
                return Err(bad("gamma must lie in [0, 1]"));
            }
            if gen.response_limit != gen.gamma * gen.capacity {
                return Err(bad("response_limit must equal gamma * capacity"));
            }
        }
        if let Some(&bad) = self
            .contingencies
            .iter()
            .find(|&&s| s >= self.generators.len())
        {
            return Err(NetworkError::UnknownContingency(bad));
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.net_load).sum()
    }

    pub fn loads_mw(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.net_load).collect()
    }

    pub fn capacities_mw(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.capacity).collect()
    }

    /// Nodal injections `B g - d` in MW for a generator vector in MW.
    pub fn net_injection_mw(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = self.buses.iter().map(|b| -b.net_load).collect();
        for (gen, &p) in self.generators.iter().zip(g) {
            q[gen.bus] += p;
        }
        q
    }

    pub fn to_pu(&self, mw: f64) -> f64 {
        mw / self.base_mva
    }

    pub fn to_mw(&self, pu: f64) -> f64 {
        pu * self.base_mva
    }

    /// Whether the line graph spans every bus.
    pub fn is_connected(&self) -> bool {
        let n = self.n_buses();
        if n == 0 {
            return true;
        }
        let mut adjacency = vec![Vec::new(); n];
        for line in &self.lines {
            adjacency[line.from_bus].push(line.to_bus);
            adjacency[line.to_bus].push(line.from_bus);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(bus) = stack.pop() {
            for &next in &adjacency[bus] {
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Line-bus incidence (`+1` at the from bus, `-1` at the to bus) and the
/// bus-generator assignment matrix.
///
/// Nodal balance reads `B g - Aᵀ f = d`.
pub fn build_incidence(system: &PowerSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::zeros(system.n_lines(), system.n_buses());
    for line in &system.lines {
        a[(line.id, line.from_bus)] = 1.0;
        a[(line.id, line.to_bus)] = -1.0;
    }
    let mut b = DMatrix::zeros(system.n_buses(), system.n_generators());
    for gen in &system.generators {
        b[(gen.bus, gen.id)] += 1.0;
    }
    (a, b)
}

/// Angle-to-flow matrix: row `l` is `b_l (e_from - e_to)`, so `S θ` gives
/// per-unit branch flows for angles in radians.
pub fn build_angle_to_flow(system: &PowerSystem) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(system.n_lines(), system.n_buses());
    for line in &system.lines {
        s[(line.id, line.from_bus)] += line.susceptance;
        s[(line.id, line.to_bus)] -= line.susceptance;
    }
    s
}

/// Angle-to-flow matrix with the slack column removed, paired with the
/// incidence matrix.
pub fn reduced_system(system: &PowerSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = build_angle_to_flow(system);
    let (a, _) = build_incidence(system);
    (s.remove_column(system.slack_bus), a)
}
