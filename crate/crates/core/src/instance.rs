//! Parametric instance sampling and dataset persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Network;
use crate::models::{Dispatch, EdModel, ScopfModel, ScopfSolution};

/// One input `x` of the parametric dispatch problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Per-bus load in MW.
    pub loads: Vec<f64>,
    pub reserve_req: f64,
    pub cost_scale: Vec<f64>,
    pub pmax_scale: Vec<f64>,
    pub rng_seed: u64,
}

impl Instance {
    /// Reference loads, no reserve requirement, unit scales.
    pub fn nominal(net: &Network) -> Self {
        Self {
            loads: net.base_loads(),
            reserve_req: 0.0,
            cost_scale: vec![1.0; net.n_gens()],
            pmax_scale: vec![1.0; net.n_gens()],
            rng_seed: 0,
        }
    }

    pub fn total_load(&self) -> f64 {
        self.loads.iter().sum()
    }

    pub fn p_max(&self, net: &Network) -> Vec<f64> {
        net.generators
            .iter()
            .zip(&self.pmax_scale)
            .map(|(g, s)| (g.p_max * s).max(g.p_min))
            .collect()
    }

    pub fn costs(&self, net: &Network) -> Vec<f64> {
        net.generators
            .iter()
            .zip(&self.cost_scale)
            .map(|(g, s)| g.cost * s)
            .collect()
    }

    /// Reserve capacities, capped by the scaled dispatchable range.
    pub fn r_max(&self, net: &Network) -> Vec<f64> {
        net.generators
            .iter()
            .zip(self.p_max(net))
            .map(|(g, pm)| g.r_max.min(pm - g.p_min))
            .collect()
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let mut errs = Vec::new();
        if self.loads.len() != net.n_buses() {
            errs.push(format!("expected {} loads, got {}", net.n_buses(), self.loads.len()));
        }
        if self.cost_scale.len() != net.n_gens() || self.pmax_scale.len() != net.n_gens() {
            errs.push("scale vectors must have one entry per generator".into());
        }
        if self.loads.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            errs.push("loads must be finite and >= 0".into());
        }
        if !(self.reserve_req >= 0.0) {
            errs.push("reserve_req must be >= 0".into());
        }
        if self
            .cost_scale
            .iter()
            .chain(&self.pmax_scale)
            .any(|&s| !(s > 0.0) || !s.is_finite())
        {
            errs.push("scales must be finite and > 0".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Global load multiplier range.
    pub gamma_range: [f64; 2],
    /// Standard deviation of the per-bus lognormal noise (mean 1).
    pub eta_sd: f64,
    /// Reserve requirement range as multiples of the largest unit.
    pub reserve_range: [f64; 2],
    pub cost_range: Option<[f64; 2]>,
    pub pmax_range: Option<[f64; 2]>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            gamma_range: [0.8, 1.2],
            eta_sd: 0.05,
            reserve_range: [1.0, 2.0],
            cost_range: None,
            pmax_range: None,
        }
    }
}

impl SamplerConfig {
    /// Adds cost and capacity perturbations and drops reserves.
    pub fn scopf() -> Self {
        Self {
            reserve_range: [0.0, 0.0],
            cost_range: Some([0.9, 1.1]),
            pmax_range: Some([0.9, 1.1]),
            ..Self::default()
        }
    }

    /// Loads only: no reserve requirement, no cost or capacity noise.
    pub fn loads_only() -> Self {
        Self {
            reserve_range: [0.0, 0.0],
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let ranges = [
            ("gamma_range", Some(self.gamma_range)),
            ("reserve_range", Some(self.reserve_range)),
            ("cost_range", self.cost_range),
            ("pmax_range", self.pmax_range),
        ];
        for (name, r) in ranges {
            if let Some([lo, hi]) = r {
                if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                    errs.push(format!("{name}: need 0 <= lo <= hi"));
                }
            }
        }
        if !(self.eta_sd >= 0.0) {
            errs.push("eta_sd must be >= 0".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Lognormal with mean 1 and standard deviation `sd`.
fn unit_lognormal(sd: f64) -> Option<LogNormal<f64>> {
    if sd == 0.0 {
        return None;
    }
    let sigma2 = (1.0 + sd * sd).ln();
    Some(LogNormal::new(-sigma2 / 2.0, sigma2.sqrt()).expect("valid lognormal"))
}

pub fn sample_instance(net: &Network, base_loads: &[f64], cfg: &SamplerConfig, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = uniform(&mut rng, cfg.gamma_range);
    let eta = unit_lognormal(cfg.eta_sd);
    let loads = base_loads
        .iter()
        .map(|&d| {
            let e = eta.as_ref().map_or(1.0, |dist| dist.sample(&mut rng));
            gamma * e * d
        })
        .collect();
    let largest = net.p_max().into_iter().fold(0.0, f64::max);
    let reserve_req = uniform(&mut rng, cfg.reserve_range) * largest;
    let ng = net.n_gens();
    let mut scales = |range: Option<[f64; 2]>| -> Vec<f64> {
        match range {
            Some(r) => (0..ng).map(|_| uniform(&mut rng, r)).collect(),
            None => vec![1.0; ng],
        }
    };
    let cost_scale = scales(cfg.cost_range);
    let pmax_scale = scales(cfg.pmax_range);
    Instance {
        loads,
        reserve_req,
        cost_scale,
        pmax_scale,
        rng_seed: seed,
    }
}

/// Scale reserve capacities to `α_r·p̄` with `α_r = 5‖p̄‖∞/‖p̄‖₁`, capped at 1.
pub fn set_reserve_capacities(net: &Network) -> Result<Network> {
    let pmax = net.p_max();
    let total: f64 = pmax.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateFleet);
    }
    let largest = pmax.iter().cloned().fold(0.0, f64::max);
    let alpha = (5.0 * largest / total).min(1.0);
    let mut out = net.clone();
    for g in &mut out.generators {
        g.r_max = alpha * g.p_max;
    }
    Ok(out)
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th instance drawn from a master seed.
pub fn instance_seed(master: u64, index: usize) -> u64 {
    splitmix64(master ^ splitmix64(index as u64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Ed,
    Dcopf,
    Scopf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_instances: usize,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    pub seed: u64,
    pub problem: ProblemKind,
    pub sampler: SamplerConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_instances: 100,
            split: [0.8, 0.1, 0.1],
            seed: 0,
            problem: ProblemKind::Ed,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Contiguous split with rounded proportions; the test set takes the rest.
    pub fn proportional(n: usize, frac: [f64; 3]) -> Self {
        let total: f64 = frac.iter().sum();
        let n_train = ((n as f64) * frac[0] / total).round() as usize;
        let n_val = (((n as f64) * frac[1] / total).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        Self {
            train: (0..n_train).collect(),
            val: (n_train..n_train + n_val).collect(),
            test: (n_train + n_val..n).collect(),
        }
    }

    fn parts(&self) -> [(&'static str, &Vec<usize>); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Oracle solution attached to an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub dispatch: Dispatch,
    /// Equality-row duals of the DC-OPF LP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duals: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scopf: Option<ScopfSolution>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub network_hash: String,
    pub config: DatasetConfig,
    pub instances: Vec<Instance>,
    pub labels: Vec<Option<Label>>,
    pub split: Split,
}

pub fn build_dataset(net: &Network, cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.n_instances == 0 {
        return Err(Error::Config("n_instances must be >= 1".into()));
    }
    cfg.sampler.validate()?;
    let base = net.base_loads();
    let instances: Vec<Instance> = (0..cfg.n_instances)
        .into_par_iter()
        .map(|i| sample_instance(net, &base, &cfg.sampler, instance_seed(cfg.seed, i)))
        .collect();
    Ok(Dataset {
        network_hash: net.content_hash(),
        config: cfg.clone(),
        labels: vec![None; instances.len()],
        split: Split::proportional(instances.len(), cfg.split),
        instances,
    })
}

fn label_one(ed: &EdModel, scopf: Option<&ScopfModel>, kind: ProblemKind, inst: &Instance) -> Result<Label> {
    Ok(match kind {
        ProblemKind::Ed => Label {
            dispatch: ed.solve_ed(inst)?,
            duals: None,
            scopf: None,
        },
        ProblemKind::Dcopf => {
            let (dispatch, z) = ed.solve_dcopf(inst)?;
            Label {
                dispatch,
                duals: Some(z),
                scopf: None,
            }
        }
        ProblemKind::Scopf => {
            let sol = scopf.expect("scopf model").solve_bruteforce(inst)?;
            Label {
                dispatch: sol.base_dispatch(),
                duals: None,
                scopf: Some(sol),
            }
        }
    })
}

/// Attach oracle labels; instances the oracle rejects as infeasible are
/// dropped and the split is re-indexed.
pub fn label_dataset(net: &Network, ds: &Dataset, ed: &EdModel) -> Result<Dataset> {
    if ds.network_hash != net.content_hash() {
        return Err(Error::Schema("dataset was generated for a different network".into()));
    }
    let scopf = match ds.config.problem {
        ProblemKind::Scopf => Some(ScopfModel::all_contingencies(ed.clone())?),
        _ => None,
    };
    let results: Vec<Result<Label>> = ds
        .instances
        .par_iter()
        .map(|inst| label_one(ed, scopf.as_ref(), ds.config.problem, inst))
        .collect();
    let mut remap = vec![None; ds.instances.len()];
    let mut out = Dataset {
        network_hash: ds.network_hash.clone(),
        config: ds.config.clone(),
        instances: Vec::new(),
        labels: Vec::new(),
        split: Split::default(),
    };
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(label) => {
                remap[i] = Some(out.instances.len());
                out.instances.push(ds.instances[i].clone());
                out.labels.push(Some(label));
            }
            Err(Error::Infeasible) => log::info!("instance {i} infeasible, dropped"),
            Err(e) => return Err(e),
        }
    }
    let keep = |idx: &Vec<usize>| idx.iter().filter_map(|&i| remap[i]).collect::<Vec<_>>();
    out.split = Split {
        train: keep(&ds.split.train),
        val: keep(&ds.split.val),
        test: keep(&ds.split.test),
    };
    Ok(out)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Instances (and labels) of one split part.
    pub fn part(&self, idx: &[usize]) -> Vec<(Instance, Option<Label>)> {
        idx.iter()
            .map(|&i| (self.instances[i].clone(), self.labels[i].clone()))
            .collect()
    }

    /// Write `train.jsonl`, `val.jsonl` and `test.jsonl` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, idx) in self.split.parts() {
            let mut w = BufWriter::new(File::create(dir.join(format!("{name}.jsonl")))?);
            let header = Header {
                format: DATASET_FORMAT.into(),
                part: name.into(),
                network_hash: self.network_hash.clone(),
                config: self.config.clone(),
                count: idx.len(),
            };
            serde_json::to_writer(&mut w, &header)?;
            w.write_all(b"\n")?;
            for &i in idx {
                let rec = Record {
                    index: i,
                    instance: self.instances[i].clone(),
                    label: self.labels[i].clone(),
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut header: Option<Header> = None;
        let mut records: Vec<(String, Record)> = Vec::new();
        for name in ["train", "val", "test"] {
            let path = dir.join(format!("{name}.jsonl"));
            let origin = path.display().to_string();
            let reader = BufReader::new(File::open(&path)?);
            let mut lines = reader.lines().enumerate();
            let Some((_, first)) = lines.next() else {
                return Err(Error::parse(format!("{origin}:1"), "missing header"));
            };
            let h: Header = serde_json::from_str(&first?)
                .map_err(|e| Error::parse(format!("{origin}:1:{}", e.column()), e.to_string()))?;
            if h.format != DATASET_FORMAT {
                return Err(Error::Schema(format!("{origin}: unknown format {}", h.format)));
            }
            if let Some(prev) = &header {
                if prev.network_hash != h.network_hash || prev.config != h.config {
                    return Err(Error::Schema(format!("{origin}: header disagrees with other parts")));
                }
            }
            let mut count = 0;
            for (ln, line) in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: Record = serde_json::from_str(&line).map_err(|e| {
                    Error::parse(format!("{origin}:{}:{}", ln + 1, e.column()), e.to_string())
                })?;
                records.push((name.to_string(), rec));
                count += 1;
            }
            if count != h.count {
                return Err(Error::Schema(format!("{origin}: header count {} but {count} records", h.count)));
            }
            header = Some(h);
        }
        let header = header.expect("three parts read");
        let n = records.len();
        let mut instances = vec![None; n];
        let mut labels = vec![None; n];
        let mut split = Split::default();
        for (part, rec) in records {
            if rec.index >= n || instances[rec.index].is_some() {
                return Err(Error::Schema(format!("bad or duplicate record index {}", rec.index)));
            }
            instances[rec.index] = Some(rec.instance);
            labels[rec.index] = rec.label;
            match part.as_str() {
                "train" => split.train.push(rec.index),
                "val" => split.val.push(rec.index),
                _ => split.test.push(rec.index),
            }
        }
        Ok(Dataset {
            network_hash: header.network_hash,
            config: header.config,
            instances: instances.into_iter().map(|i| i.expect("dense indices")).collect(),
            labels,
            split,
        })
    }
}

pub const DATASET_FORMAT: &str = "optproxy-dataset/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    part: String,
    network_hash: String,
    config: DatasetConfig,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    index: usize,
    instance: Instance,
    #[serde(default)]
    label: Option<Label>,
}
