use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const GRID_FORMAT_VERSION: u32 = 1;

pub type BusId = u32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    /// Reference active load in MW.
    #[serde(default)]
    pub load: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub r_max: f64,
    /// Linear cost, $/MWh.
    pub cost: f64,
    /// Droop participation for automatic primary response.
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl Generator {
    /// Dispatchable range `p_max - p_min`.
    pub fn capacity(&self) -> f64 {
        self.p_max - self.p_min
    }
}

/// Branch with from→to positive flow orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub from: BusId,
    pub to: BusId,
    /// Series susceptance in p.u.
    pub susceptance: f64,
    pub f_max: f64,
}

impl Line {
    pub fn f_min(&self) -> f64 {
        -self.f_max
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub version: u32,
    pub base_mva: f64,
    pub slack_bus: BusId,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub lines: Vec<Line>,
}

impl Network {
    pub fn from_json_str(s: &str, origin: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(s).map_err(|e| {
            Error::parse(format!("{origin}:{}:{}", e.line(), e.column()), e.to_string())
        })?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// Check every structural invariant, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.version != GRID_FORMAT_VERSION {
            errs.push(format!(
                "unsupported version {} (expected {GRID_FORMAT_VERSION})",
                self.version
            ));
        }
        if !(self.base_mva > 0.0) {
            errs.push("base_mva must be positive".into());
        }
        if self.buses.is_empty() {
            errs.push("bus list is empty".into());
        }
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                errs.push(format!("duplicate bus id {}", b.id));
            }
            if !(b.load >= 0.0) || !b.load.is_finite() {
                errs.push(format!("bus {}: load must be finite and >= 0", b.id));
            }
        }
        if !ids.contains(&self.slack_bus) {
            errs.push(format!("slack bus {} does not exist", self.slack_bus));
        }
        for g in &self.generators {
            if !ids.contains(&g.bus) {
                errs.push(format!("generator {}: bus {} does not exist", g.id, g.bus));
            }
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) || !g.p_max.is_finite() {
                errs.push(format!("generator {}: need 0 <= p_min <= p_max", g.id));
            }
            if !(0.0 <= g.r_max && g.r_max <= g.p_max) {
                errs.push(format!("generator {}: need 0 <= r_max <= p_max", g.id));
            }
            if !(g.gamma >= 0.0) {
                errs.push(format!("generator {}: gamma must be >= 0", g.id));
            }
            if !g.cost.is_finite() {
                errs.push(format!("generator {}: cost must be finite", g.id));
            }
        }
        for l in &self.lines {
            if !ids.contains(&l.from) || !ids.contains(&l.to) {
                errs.push(format!("line {}: endpoint does not exist", l.id));
            }
            if l.from == l.to {
                errs.push(format!("line {}: self loop", l.id));
            }
            if !(l.susceptance > 0.0) {
                errs.push(format!("line {}: susceptance must be > 0", l.id));
            }
            if !(l.f_max > 0.0) {
                errs.push(format!("line {}: f_max must be > 0", l.id));
            }
        }
        if errs.is_empty() && !self.is_connected() {
            errs.push("network is not connected".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    fn is_connected(&self) -> bool {
        let idx = self.bus_index();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for l in &self.lines {
            let (a, b) = (idx[&l.from], idx[&l.to]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_gens(&self) -> usize {
        self.generators.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    /// Bus id → position in `buses`.
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_index(&self) -> usize {
        self.bus_index()[&self.slack_bus]
    }

    /// Bus position of every generator.
    pub fn gen_bus_positions(&self) -> Vec<usize> {
        let idx = self.bus_index();
        self.generators.iter().map(|g| idx[&g.bus]).collect()
    }

    pub fn base_loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.load).collect()
    }

    pub fn p_min(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.p_min).collect()
    }

    pub fn p_max(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.p_max).collect()
    }

    pub fn r_max(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.r_max).collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.cost).collect()
    }

    pub fn f_max(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.f_max).collect()
    }

    /// SHA-256 of the compact JSON form; pins datasets to a grid.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("network serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    Network::from_json_str(&text, &path.display().to_string())
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, net.to_json_string())?;
    Ok(())
}
