//! Primal dispatch proxies: architectures, training regimes and evaluation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::instance::{instance_seed, sample_instance, Instance, Label, SamplerConfig};
use crate::models::{Dispatch, EdModel, EdParams};
use crate::nn::{batch_gradient, box_map, box_map_backward, default_hidden_width, minibatches, Activation, AdamState, Mlp, Tape};
use crate::repair::{
    equality_completion, equality_completion_backward, power_balance_repair, power_balance_repair_backward,
    reserve_repair, reserve_repair_backward, unrolled_correction, unrolled_correction_backward, BalanceTrace,
    CompletionInfo, CorrectionTrace, RepairContext, ReserveTrace,
};
use crate::stats::{mean, shifted_geomean};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Sigmoid bounds only.
    Naive,
    /// Residual unit completes the balance equation.
    Deepopf,
    /// Unrolled gradient correction of the violations.
    Dc3,
    /// Balance repair followed by reserve repair.
    E2elr,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [Self::Naive, Self::Deepopf, Self::Dc3, Self::E2elr];

    pub fn name(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Deepopf => "deepopf",
            Self::Dc3 => "dc3",
            Self::E2elr => "e2elr",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Supervised on oracle labels.
    Sl,
    /// Supervised plus Lagrangian penalties on the violations.
    Ld,
    /// Self-supervised on the penalized objective.
    Ssl,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sl => "sl",
            Self::Ld => "ld",
            Self::Ssl => "ssl",
        }
    }

    pub fn needs_labels(self) -> bool {
        !matches!(self, Self::Ssl)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sl" => Ok(Self::Sl),
            "ld" => Ok(Self::Ld),
            "ssl" => Ok(Self::Ssl),
            _ => Err(Error::Config(format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dc3Settings {
    pub train_steps: usize,
    pub infer_steps: usize,
    /// Step size as a fraction of `1/|G|`.
    pub step_scale: f64,
}

impl Default for Dc3Settings {
    fn default() -> Self {
        Self {
            train_steps: 50,
            infer_steps: 200,
            step_scale: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: Option<usize>,
    pub layer_norm: bool,
    pub dc3: Dc3Settings,
    /// Multiplier step size in the Lagrangian regime.
    pub ld_step: f64,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            lr_decay: 1.0,
            seed: 0,
            hidden_layers: 3,
            hidden_width: None,
            layer_norm: false,
            dc3: Dc3Settings::default(),
            ld_step: 0.1,
            checkpoint: None,
            checkpoint_every: None,
        }
    }
}

/// An MLP composed with one of the feasibility architectures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyModel {
    pub arch: Architecture,
    pub mlp: Mlp<f64>,
    pub features: FeatureMap,
    pub network_hash: String,
    pub dc3: Dc3Settings,
}

enum Stage {
    Naive,
    Deepopf(CompletionInfo<f64>, Vec<usize>),
    Dc3(CorrectionTrace<f64>),
    E2elr(BalanceTrace<f64>, ReserveTrace<f64>),
}

struct Forward {
    p: Vec<f64>,
    tape: Tape<f64>,
    stage: Stage,
}

/// Repair bounds for one instance.
pub fn repair_context(prm: &EdParams) -> Result<RepairContext<f64>> {
    RepairContext::new(prm.p_min.clone(), prm.p_max.clone(), prm.r_max.clone(), prm.total_load, prm.reserve)
}

impl ProxyModel {
    pub fn new(ed: &EdModel, arch: Architecture, cfg: &TrainConfig) -> Result<Self> {
        let features = FeatureMap::for_ed(&ed.net);
        let ng = ed.n_gens();
        let out = if arch == Architecture::Deepopf { ng - 1 } else { ng };
        if out == 0 {
            return Err(Error::Config("the residual architecture needs at least two units".into()));
        }
        let width = cfg.hidden_width.unwrap_or_else(|| default_hidden_width(features.dim().max(ng)));
        let mlp = Mlp::with_hidden(features.dim(), cfg.hidden_layers, width, out, Activation::Sigmoid, cfg.layer_norm, cfg.seed)?;
        Ok(Self {
            arch,
            mlp,
            features,
            network_hash: ed.net.content_hash(),
            dc3: cfg.dc3,
        })
    }

    fn check_network(&self, ed: &EdModel) -> Result<()> {
        if self.network_hash != ed.net.content_hash() {
            return Err(Error::Schema("model was trained on a different network".into()));
        }
        Ok(())
    }

    fn dc3_step(&self, ctx: &RepairContext<f64>) -> f64 {
        self.dc3.step_scale / ctx.n_gens() as f64
    }

    fn forward(&self, ctx: &RepairContext<f64>, x: &[f64], training: bool) -> Result<Forward> {
        let (s, tape) = self.mlp.forward(x)?;
        let (p, stage) = match self.arch {
            Architecture::Naive => (box_map(&s, &ctx.glb, &ctx.gub), Stage::Naive),
            Architecture::Deepopf => {
                let k = crate::repair::residual_generator(ctx);
                let others: Vec<usize> = (0..ctx.n_gens()).filter(|&g| g != k).collect();
                let lo: Vec<f64> = others.iter().map(|&g| ctx.glb[g]).collect();
                let hi: Vec<f64> = others.iter().map(|&g| ctx.gub[g]).collect();
                let (p, info) = equality_completion(&box_map(&s, &lo, &hi), ctx)?;
                (p, Stage::Deepopf(info, others))
            }
            Architecture::Dc3 => {
                let steps = if training { self.dc3.train_steps } else { self.dc3.infer_steps };
                let (p, tr) = unrolled_correction(&box_map(&s, &ctx.glb, &ctx.gub), ctx, steps, self.dc3_step(ctx));
                (p, Stage::Dc3(tr))
            }
            Architecture::E2elr => {
                let (pt, bt) = power_balance_repair(&box_map(&s, &ctx.glb, &ctx.gub), ctx)?;
                let (pc, _, rt) = reserve_repair(&pt, ctx);
                (pc, Stage::E2elr(bt, rt))
            }
        };
        Ok(Forward { p, tape, stage })
    }

    /// Parameter gradient for the cotangent `dp` of the final dispatch.
    fn backward(&self, fwd: Forward, ctx: &RepairContext<f64>, dp: &[f64]) -> Result<Vec<f64>> {
        let ds = match fwd.stage {
            Stage::Naive => box_map_backward(dp, &ctx.glb, &ctx.gub),
            Stage::Deepopf(info, others) => {
                let dpart = equality_completion_backward(&info, dp);
                let lo: Vec<f64> = others.iter().map(|&g| ctx.glb[g]).collect();
                let hi: Vec<f64> = others.iter().map(|&g| ctx.gub[g]).collect();
                box_map_backward(&dpart, &lo, &hi)
            }
            Stage::Dc3(tr) => box_map_backward(&unrolled_correction_backward(&tr, dp), &ctx.glb, &ctx.gub),
            Stage::E2elr(bt, rt) => {
                let dt = reserve_repair_backward(&rt, ctx, dp);
                box_map_backward(&power_balance_repair_backward(&bt, ctx, &dt), &ctx.glb, &ctx.gub)
            }
        };
        Ok(self.mlp.backward(fwd.tape, &ds)?.params)
    }

    /// Dispatch for one instance with reserves read out as `min(r̄, p̄ − p)`.
    pub fn predict(&self, ed: &EdModel, inst: &Instance) -> Result<Dispatch> {
        self.check_network(ed)?;
        let prm = ed.params(inst);
        let ctx = repair_context(&prm)?;
        let p = self.forward(&ctx, &self.features.features(inst)?, false)?.p;
        Ok(dispatch_from(ed, &prm, &ctx, p))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&s)?)
    }
}

fn dispatch_from(ed: &EdModel, prm: &EdParams, ctx: &RepairContext<f64>, p: Vec<f64>) -> Dispatch {
    Dispatch {
        r: ctx.reserves(&p),
        xi_th: ed.thermal_slack(prm, &p),
        objective: ed.model_objective(prm, &p),
        p,
    }
}

/// `‖p − p*‖²` and its gradient.
pub fn loss_supervised(p: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let r: Vec<f64> = p.iter().zip(target).map(|(a, b)| a - b).collect();
    (r.iter().map(|v| v * v).sum(), r.iter().map(|v| 2.0 * v).collect())
}

/// Gradient of `M_th‖ξ_th‖₁` with respect to `p`.
fn thermal_gradient(ed: &EdModel, prm: &EdParams, p: &[f64], weight: f64, out: &mut [f64]) {
    let flows = ed.flows(prm, p);
    for (l, &f) in flows.iter().enumerate() {
        let s = if f > ed.f_max[l] {
            weight
        } else if f < -ed.f_max[l] {
            -weight
        } else {
            continue;
        };
        for (g, o) in out.iter_mut().enumerate() {
            *o += s * ed.ptdf_g[(l, g)];
        }
    }
}

/// Gradient of the reserve shortfall with respect to `p`.
fn shortfall_gradient(prm: &EdParams, p: &[f64], weight: f64, out: &mut [f64]) {
    let avail: f64 = (0..p.len())
        .map(|g| prm.r_max[g].min((prm.p_max[g] - p[g]).max(0.0)))
        .sum();
    if prm.reserve - avail <= 0.0 {
        return;
    }
    for g in 0..p.len() {
        let head = prm.p_max[g] - p[g];
        if head < prm.r_max[g] && head > 0.0 {
            out[g] += weight;
        }
    }
}

/// Penalized objective `c·p + M_th‖ξ_th‖₁ + M_pb(|1ᵀp − 1ᵀd| + box excess) + M_r ξ_r`
/// and its gradient. On balanced, reserve-feasible outputs it equals the dispatch
/// model objective.
pub fn loss_selfsup(ed: &EdModel, prm: &EdParams, p: &[f64]) -> (f64, Vec<f64>) {
    let mut g = prm.cost.clone();
    thermal_gradient(ed, prm, p, ed.pen.m_th, &mut g);
    let mismatch = p.iter().sum::<f64>() - prm.total_load;
    if mismatch != 0.0 {
        let s = ed.pen.m_pb * mismatch.signum();
        g.iter_mut().for_each(|v| *v += s);
    }
    shortfall_gradient(prm, p, ed.pen.m_r, &mut g);
    let boxv = box_violation(prm, p);
    for (i, v) in g.iter_mut().enumerate() {
        if p[i] < prm.p_min[i] {
            *v -= ed.pen.m_pb;
        } else if p[i] > prm.p_max[i] {
            *v += ed.pen.m_pb;
        }
    }
    (ed.penalized_objective(prm, p) + ed.pen.m_pb * boxv, g)
}

/// Total distance of `p` outside its limits.
pub fn box_violation(prm: &EdParams, p: &[f64]) -> f64 {
    (0..p.len())
        .map(|g| (prm.p_min[g] - p[g]).max(0.0) + (p[g] - prm.p_max[g]).max(0.0))
        .sum()
}

/// Multipliers of the Lagrangian-dual regime: `lambda` prices the balance
/// equation, `nu` the reserve requirement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdState {
    pub lambda: f64,
    pub nu: f64,
    pub step: f64,
}

impl LdState {
    pub fn new(step: f64) -> Self {
        Self {
            lambda: 0.0,
            nu: 0.0,
            step,
        }
    }
}

/// `λ ← λ + ρ·mean|h|`, `ν ← max(0, ν + ρ·mean shortfall)`.
pub fn ld_update(ld: &LdState, mean_balance: f64, mean_shortfall: f64) -> LdState {
    LdState {
        lambda: ld.lambda + ld.step * mean_balance,
        nu: (ld.nu + ld.step * mean_shortfall).max(0.0),
        step: ld.step,
    }
}

/// `‖p − p*‖² + λ|1ᵀp − 1ᵀd| + ν ξ_r` and its gradient.
pub fn loss_lagrangian(p: &[f64], target: &[f64], ld: &LdState, prm: &EdParams) -> (f64, Vec<f64>) {
    let (mut loss, mut g) = loss_supervised(p, target);
    let h = p.iter().sum::<f64>() - prm.total_load;
    loss += ld.lambda * h.abs();
    if h != 0.0 {
        let s = ld.lambda * h.signum();
        g.iter_mut().for_each(|v| *v += s);
    }
    let avail: f64 = (0..p.len())
        .map(|i| prm.r_max[i].min((prm.p_max[i] - p[i]).max(0.0)))
        .sum();
    loss += ld.nu * (prm.reserve - avail).max(0.0);
    shortfall_gradient(prm, p, ld.nu, &mut g);
    (loss, g)
}

/// Where training instances come from.
pub enum TrainData<'a> {
    Labeled { instances: &'a [Instance], labels: &'a [Label] },
    Unlabeled(&'a [Instance]),
    /// Fresh instances for every minibatch (self-supervised only).
    Stream { sampler: SamplerConfig, batches_per_epoch: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ld: Option<LdState>,
}

struct Sample {
    prm: EdParams,
    ctx: RepairContext<f64>,
    x: Vec<f64>,
    target: Option<Vec<f64>>,
}

fn make_sample(ed: &EdModel, fm: &FeatureMap, inst: &Instance, target: Option<Vec<f64>>) -> Result<Sample> {
    let prm = ed.params(inst);
    Ok(Sample {
        ctx: repair_context(&prm)?,
        x: fm.features(inst)?,
        prm,
        target,
    })
}

fn sample_loss(model: &ProxyModel, ed: &EdModel, s: &Sample, regime: Regime, ld: &LdState) -> Result<(f64, Vec<f64>)> {
    let fwd = model.forward(&s.ctx, &s.x, true)?;
    let target = || {
        s.target
            .as_deref()
            .ok_or_else(|| Error::Config(format!("regime {regime} needs labels")))
    };
    let (loss, dp) = match regime {
        Regime::Sl => loss_supervised(&fwd.p, target()?),
        Regime::Ld => loss_lagrangian(&fwd.p, target()?, ld, &s.prm),
        Regime::Ssl => loss_selfsup(ed, &s.prm, &fwd.p),
    };
    Ok((loss, model.backward(fwd, &s.ctx, &dp)?))
}

const STREAM_SALT: u64 = 0x5EED_57EA_u64;

/// Train `model` in place; returns the per-epoch loss history.
pub fn train(ed: &EdModel, model: &mut ProxyModel, data: TrainData<'_>, regime: Regime, cfg: &TrainConfig) -> Result<Vec<TrainRecord>> {
    model.check_network(ed)?;
    let fixed: Option<Vec<Sample>> = match &data {
        TrainData::Labeled { instances, labels } => {
            if instances.len() != labels.len() {
                return Err(Error::ShapeMismatch {
                    expected: instances.len(),
                    got: labels.len(),
                });
            }
            Some(
                instances
                    .par_iter()
                    .zip(labels.par_iter())
                    .map(|(i, l)| make_sample(ed, &model.features, i, Some(l.dispatch.p.clone())))
                    .collect::<Result<_>>()?,
            )
        }
        TrainData::Unlabeled(instances) => {
            if regime.needs_labels() {
                return Err(Error::Config(format!("regime {regime} needs labels")));
            }
            Some(
                instances
                    .par_iter()
                    .map(|i| make_sample(ed, &model.features, i, None))
                    .collect::<Result<_>>()?,
            )
        }
        TrainData::Stream { .. } => {
            if regime.needs_labels() {
                return Err(Error::Config(format!("regime {regime} needs labels")));
            }
            None
        }
    };
    if fixed.as_ref().is_some_and(|s| s.is_empty()) {
        return Err(Error::Config("no training instances".into()));
    }
    let base = ed.net.base_loads();
    let mut adam = AdamState::new(model.mlp.n_params(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ld = LdState::new(cfg.ld_step);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut streamed = 0usize;
    for epoch in 0..cfg.epochs {
        let (mut total, mut count) = (0.0, 0usize);
        let mut step = |model: &mut ProxyModel, batch: &[&Sample]| -> Result<()> {
            let m = &*model;
            let (loss, grad) = batch_gradient(m.mlp.n_params(), batch, |s| sample_loss(m, ed, s, regime, &ld))?;
            adam.step(model.mlp.params_mut(), &grad);
            total += loss * batch.len() as f64;
            count += batch.len();
            Ok(())
        };
        match (&fixed, &data) {
            (Some(samples), _) => {
                for idx in minibatches(samples.len(), cfg.batch_size, &mut rng) {
                    let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
                    step(model, &batch)?;
                }
            }
            (None, TrainData::Stream { sampler, batches_per_epoch }) => {
                for _ in 0..*batches_per_epoch {
                    let samples: Vec<Sample> = (0..cfg.batch_size.max(1))
                        .map(|k| {
                            let inst = sample_instance(&ed.net, &base, sampler, instance_seed(cfg.seed ^ STREAM_SALT, streamed + k));
                            make_sample(ed, &model.features, &inst, None)
                        })
                        .collect::<Result<_>>()?;
                    streamed += samples.len();
                    let batch: Vec<&Sample> = samples.iter().collect();
                    step(model, &batch)?;
                }
            }
            (None, _) => unreachable!("fixed data always has samples"),
        }
        adam.lr *= cfg.lr_decay;
        let loss = total / count.max(1) as f64;
        if regime == Regime::Ld {
            let samples = fixed.as_ref().expect("labeled data");
            let viol: Vec<(f64, f64)> = samples
                .par_iter()
                .map(|s| {
                    let p = model.forward(&s.ctx, &s.x, true)?.p;
                    let h = (p.iter().sum::<f64>() - s.prm.total_load).abs();
                    Ok((h, (s.prm.reserve - s.ctx.available_reserve(&p)).max(0.0)))
                })
                .collect::<Result<_>>()?;
            let n = viol.len() as f64;
            ld = ld_update(&ld, viol.iter().map(|v| v.0).sum::<f64>() / n, viol.iter().map(|v| v.1).sum::<f64>() / n);
        }
        log::debug!("{} {} epoch {epoch}: loss {loss:.6}", model.arch, regime);
        history.push(TrainRecord {
            epoch,
            loss,
            ld: (regime == Regime::Ld).then(|| ld.clone()),
        });
        if let (Some(path), Some(every)) = (&cfg.checkpoint, cfg.checkpoint_every) {
            if every > 0 && (epoch + 1) % every == 0 {
                model.save(path)?;
            }
        }
    }
    if !model.mlp.is_finite() {
        return Err(Error::DivergenceDetected("non-finite parameters".into()));
    }
    if let Some(path) = &cfg.checkpoint {
        model.save(path)?;
    }
    Ok(history)
}

/// Per-instance evaluation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub oracle: f64,
    pub objective: f64,
    pub penalized: f64,
    pub gap: f64,
    pub balance_violation: f64,
    pub reserve_violation: f64,
    pub thermal_violation: f64,
    pub box_violation: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub architecture: String,
    pub regime: String,
    pub n: usize,
    pub mean_gap: f64,
    pub geomean_gap: f64,
    pub max_gap: f64,
    pub feasibility_rate: f64,
    pub mean_balance_violation: f64,
    pub max_balance_violation: f64,
    pub geomean_balance_violation: f64,
    pub mean_reserve_violation: f64,
    pub max_reserve_violation: f64,
    pub mean_thermal_violation: f64,
    pub max_thermal_violation: f64,
    pub inference_seconds: f64,
    pub records: Vec<InstanceRecord>,
}

/// Shift for geometric means of relative gaps.
pub const GAP_SHIFT: f64 = 0.01;

pub const EVAL_CSV_HEADER: &str = "architecture,regime,n,mean_gap,geomean_gap,max_gap,feasibility_rate,mean_balance_violation,max_balance_violation,mean_reserve_violation,max_reserve_violation,mean_thermal_violation,max_thermal_violation";

impl EvalReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.architecture,
            self.regime,
            self.n,
            self.mean_gap,
            self.geomean_gap,
            self.max_gap,
            self.feasibility_rate,
            self.mean_balance_violation,
            self.max_balance_violation,
            self.mean_reserve_violation,
            self.max_reserve_violation,
            self.mean_thermal_violation,
            self.max_thermal_violation
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{EVAL_CSV_HEADER}\n{}\n", self.csv_row())
    }
}

/// Score dispatches against oracle objectives. `items` pairs each instance
/// with its optimal objective; `preds` holds one dispatch per item.
pub fn evaluate_dispatches(ed: &EdModel, items: &[(Instance, f64)], preds: &[Vec<f64>], architecture: &str, regime: &str) -> Result<EvalReport> {
    if items.len() != preds.len() {
        return Err(Error::ShapeMismatch {
            expected: items.len(),
            got: preds.len(),
        });
    }
    let records: Vec<InstanceRecord> = items
        .par_iter()
        .zip(preds.par_iter())
        .enumerate()
        .map(|(index, ((inst, oracle), p))| {
            let prm = ed.params(inst);
            let balance = (p.iter().sum::<f64>() - prm.total_load).abs();
            let reserve = ed.reserve_shortfall(&prm, p);
            let thermal: f64 = ed.thermal_slack(&prm, p).iter().sum();
            let boxv = box_violation(&prm, p);
            let penalized = ed.penalized_objective(&prm, p) + ed.pen.m_pb * boxv;
            let feasible = balance <= 1e-9 * (1.0 + prm.total_load)
                && reserve <= 1e-9 * (1.0 + prm.reserve)
                && boxv <= 1e-9 * (1.0 + prm.p_max.iter().sum::<f64>());
            InstanceRecord {
                index,
                oracle: *oracle,
                objective: ed.model_objective(&prm, p),
                penalized,
                gap: (penalized - oracle) / oracle.abs().max(f64::MIN_POSITIVE),
                balance_violation: balance,
                reserve_violation: reserve,
                thermal_violation: thermal,
                box_violation: boxv,
                feasible,
            }
        })
        .collect();
    let col = |f: fn(&InstanceRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let maxv = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let gaps = col(|r| r.gap);
    let bal = col(|r| r.balance_violation);
    let res = col(|r| r.reserve_violation);
    let th = col(|r| r.thermal_violation);
    let n = records.len();
    Ok(EvalReport {
        architecture: architecture.to_string(),
        regime: regime.to_string(),
        n,
        mean_gap: mean(&gaps),
        geomean_gap: shifted_geomean(&gaps.iter().map(|g| g.max(0.0)).collect::<Vec<_>>(), GAP_SHIFT),
        max_gap: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        feasibility_rate: records.iter().filter(|r| r.feasible).count() as f64 / n.max(1) as f64,
        mean_balance_violation: mean(&bal),
        max_balance_violation: maxv(&bal),
        geomean_balance_violation: shifted_geomean(&bal, ed.net.base_mva),
        mean_reserve_violation: mean(&res),
        max_reserve_violation: maxv(&res),
        mean_thermal_violation: mean(&th),
        max_thermal_violation: maxv(&th),
        inference_seconds: 0.0,
        records,
    })
}

/// Predict every item with `model` and score against the oracle objectives.
pub fn evaluate(ed: &EdModel, model: &ProxyModel, items: &[(Instance, f64)], regime: &str) -> Result<EvalReport> {
    let t0 = Instant::now();
    let preds: Vec<Vec<f64>> = items
        .par_iter()
        .map(|(inst, _)| model.predict(ed, inst).map(|d| d.p))
        .collect::<Result<_>>()?;
    let secs = t0.elapsed().as_secs_f64();
    let mut rep = evaluate_dispatches(ed, items, &preds, model.arch.name(), regime)?;
    rep.inference_seconds = secs;
    Ok(rep)
}
