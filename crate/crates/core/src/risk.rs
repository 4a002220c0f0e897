//! Monte-Carlo adverse-event assessment over daily load trajectories.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Network;
use crate::instance::{instance_seed, Instance};
use crate::models::{Dispatch, EdModel};

/// One dispatch every five minutes over a day.
pub const DEFAULT_HORIZON: usize = 288;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_scenarios: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Daily swing: `shape(t) = 1 − amplitude·cos(2πt/H)`.
    pub amplitude: f64,
    /// Per-scenario load level range.
    pub level_range: [f64; 2],
    /// Per-bus, per-step multiplicative noise.
    pub noise_sd: f64,
    /// Reserve requirement as a multiple of the largest unit.
    pub reserve_factor: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 20,
            horizon: DEFAULT_HORIZON,
            seed: 0,
            amplitude: 0.1,
            level_range: [0.95, 1.05],
            noise_sd: 0.02,
            reserve_factor: 1.5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_scenarios == 0 || self.horizon == 0 {
            errs.push("n_scenarios and horizon must be >= 1");
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            errs.push("amplitude must lie in [0, 1)");
        }
        let [lo, hi] = self.level_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            errs.push("level_range: need 0 < lo <= hi");
        }
        if !(self.noise_sd >= 0.0) || !(self.reserve_factor >= 0.0) {
            errs.push("noise_sd and reserve_factor must be >= 0");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

/// `scenarios[s][t]` is the instance of scenario `s` at step `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub horizon: usize,
    pub scenarios: Vec<Vec<Instance>>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

pub fn build_scenarios(net: &Network, cfg: &ScenarioConfig) -> Result<ScenarioSet> {
    cfg.validate()?;
    let base = net.base_loads();
    let ng = net.n_gens();
    let largest = net.p_max().into_iter().fold(0.0, f64::max);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let scenarios = (0..cfg.n_scenarios)
        .map(|s| {
            let seed = instance_seed(cfg.seed, s);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let [lo, hi] = cfg.level_range;
            let level = if lo == hi { lo } else { rng.gen_range(lo..hi) };
            (0..cfg.horizon)
                .map(|t| {
                    let shape = 1.0 - cfg.amplitude * (2.0 * PI * t as f64 / cfg.horizon as f64).cos();
                    let loads = base
                        .iter()
                        .map(|&d| (d * level * shape * (1.0 + noise.sample(&mut rng))).max(0.0))
                        .collect();
                    Instance {
                        loads,
                        reserve_req: cfg.reserve_factor * largest,
                        cost_scale: vec![1.0; ng],
                        pmax_scale: vec![1.0; ng],
                        rng_seed: seed,
                    }
                })
                .collect()
        })
        .collect();
    Ok(ScenarioSet {
        horizon: cfg.horizon,
        scenarios,
    })
}

/// Copy of `net` with the limit of line `id` replaced.
pub fn with_line_limit(net: &Network, id: &str, f_max: f64) -> Result<Network> {
    let mut out = net.clone();
    let line = out
        .lines
        .iter_mut()
        .find(|l| l.id == id)
        .ok_or_else(|| Error::Config(format!("no line {id}")))?;
    line.f_max = f_max;
    out.validate()?;
    Ok(out)
}

/// Event thresholds relative to total load and line limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub balance_rel: f64,
    pub thermal_rel: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            balance_rel: 1e-4,
            thermal_rel: 1e-3,
        }
    }
}

/// Event counts of one engine over a scenario set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineRun {
    pub engine: String,
    pub n_scenarios: usize,
    /// `balance[t]`: scenarios with a balance event at step `t`.
    pub balance: Vec<usize>,
    /// `thermal[t][l]`
    pub thermal: Vec<Vec<usize>>,
    /// `thermal_any[t]`: scenarios with any line overloaded at step `t`.
    pub thermal_any: Vec<usize>,
    pub seconds_per_scenario: Vec<f64>,
}

struct StepEvents {
    balance: bool,
    thermal: Vec<bool>,
}

fn step_events(ed: &EdModel, inst: &Instance, d: &Dispatch, thr: &Thresholds) -> StepEvents {
    let prm = ed.params(inst);
    let imbalance = (d.p.iter().sum::<f64>() - prm.total_load).abs();
    let xi = ed.thermal_slack(&prm, &d.p);
    StepEvents {
        balance: imbalance > thr.balance_rel * prm.total_load,
        thermal: xi.iter().zip(&ed.f_max).map(|(x, fm)| *x > thr.thermal_rel * fm).collect(),
    }
}

/// Evaluate `dispatch(s, t, instance)` on every scenario and step. Scenarios
/// run in parallel, steps in order.
pub fn run_engine<F>(ed: &EdModel, set: &ScenarioSet, thr: &Thresholds, engine: &str, dispatch: F) -> Result<EngineRun>
where
    F: Fn(usize, usize, &Instance) -> Result<Dispatch> + Sync,
{
    let per: Vec<(Vec<StepEvents>, f64)> = set
        .scenarios
        .par_iter()
        .enumerate()
        .map(|(s, steps)| {
            let t0 = Instant::now();
            let ev = steps
                .iter()
                .enumerate()
                .map(|(t, inst)| Ok(step_events(ed, inst, &dispatch(s, t, inst)?, thr)))
                .collect::<Result<Vec<_>>>()?;
            Ok((ev, t0.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let nl = ed.n_lines();
    let mut balance = vec![0; set.horizon];
    let mut thermal = vec![vec![0; nl]; set.horizon];
    let mut thermal_any = vec![0; set.horizon];
    for (ev, _) in &per {
        for (t, e) in ev.iter().enumerate() {
            balance[t] += usize::from(e.balance);
            thermal_any[t] += usize::from(e.thermal.iter().any(|&b| b));
            for (c, &hit) in thermal[t].iter_mut().zip(&e.thermal) {
                *c += usize::from(hit);
            }
        }
    }
    Ok(EngineRun {
        engine: engine.to_string(),
        n_scenarios: set.len(),
        balance,
        thermal,
        thermal_any,
        seconds_per_scenario: per.iter().map(|p| p.1).collect(),
    })
}

/// Per-step event probabilities of one engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskColumns {
    pub engine: String,
    pub balance: Vec<f64>,
    /// Any line overloaded.
    pub thermal_any: Vec<f64>,
    /// `thermal[t][l]`
    pub thermal: Vec<Vec<f64>>,
    pub mean_seconds_per_scenario: f64,
}

impl RiskColumns {
    fn from_run(run: &EngineRun) -> Self {
        let n = run.n_scenarios.max(1) as f64;
        Self {
            engine: run.engine.clone(),
            balance: run.balance.iter().map(|&c| c as f64 / n).collect(),
            thermal_any: run.thermal_any.iter().map(|&c| c as f64 / n).collect(),
            thermal: run
                .thermal
                .iter()
                .map(|row| row.iter().map(|&c| c as f64 / n).collect())
                .collect(),
            mean_seconds_per_scenario: crate::stats::mean(&run.seconds_per_scenario),
        }
    }

    /// Probability that line `l` is overloaded, averaged over steps.
    pub fn line_probability(&self, l: usize) -> f64 {
        crate::stats::mean(&self.thermal.iter().map(|row| row[l]).collect::<Vec<_>>())
    }

    pub fn max_balance(&self) -> f64 {
        self.balance.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub scenarios: usize,
    pub horizon: usize,
    pub lines: Vec<String>,
    pub thresholds: Thresholds,
    pub proxy: RiskColumns,
    pub oracle: Option<RiskColumns>,
}

impl RiskReport {
    pub fn new(lines: Vec<String>, thresholds: Thresholds, proxy: &EngineRun, oracle: Option<&EngineRun>) -> Result<Self> {
        let horizon = proxy.balance.len();
        if let Some(o) = oracle {
            if o.balance.len() != horizon || o.n_scenarios != proxy.n_scenarios {
                return Err(Error::ShapeMismatch {
                    expected: horizon,
                    got: o.balance.len(),
                });
            }
        }
        Ok(Self {
            scenarios: proxy.n_scenarios,
            horizon,
            lines,
            thresholds,
            proxy: RiskColumns::from_run(proxy),
            oracle: oracle.map(RiskColumns::from_run),
        })
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        let mut add = |prefix: &str| {
            cols.push(format!("{prefix}balance"));
            cols.push(format!("{prefix}thermal_any"));
            cols.extend(self.lines.iter().map(|l| format!("{prefix}thermal_{l}")));
        };
        add("");
        if self.oracle.is_some() {
            add("oracle_");
        }
        cols.join(",")
    }

    /// One row per step.
    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header();
        s.push('\n');
        for t in 0..self.horizon {
            let mut row = vec![t.to_string()];
            for c in std::iter::once(&self.proxy).chain(self.oracle.as_ref()) {
                row.push(c.balance[t].to_string());
                row.push(c.thermal_any[t].to_string());
                row.extend(c.thermal[t].iter().map(|v| v.to_string()));
            }
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}
