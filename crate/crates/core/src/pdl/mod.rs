//! Primal-dual learning for equality-constrained parametric problems.

mod bs;
mod scopf;

pub use bs::{bs_layer, bs_layer_backward, bs_layer_backward_implicit, bs_readout, BsResult, BS_ITERATIONS};
pub use scopf::{
    penalty_baseline_train, pdl_scopf_eval, pdl_scopf_train, scopf_slack_gradient, scopf_slacks, ScopfEvalReport,
    ScopfInput, ScopfInstanceRecord, ScopfProblem, ScopfTrace, SignalGradient,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::instance_seed;
use crate::nn::{batch_gradient, default_hidden_width, Activation, AdamState, Mlp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdlConfig {
    /// Initial penalty coefficient.
    pub rho: f64,
    pub rho_max: f64,
    /// Penalty growth factor.
    pub alpha: f64,
    /// Required violation reduction per outer iteration.
    pub tau: f64,
    pub outer_iterations: usize,
    pub inner_steps: usize,
    /// Dual regression steps per outer iteration; defaults to `inner_steps`.
    pub dual_steps: Option<usize>,
    pub minibatch: usize,
    /// Fresh instances used to measure the maximum violation.
    pub violation_batch: usize,
    pub lr_primal: f64,
    pub lr_dual: f64,
    pub hidden_layers: usize,
    pub hidden_width: Option<usize>,
    pub layer_norm: bool,
    pub seed: u64,
}

impl Default for PdlConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            rho_max: 1e4,
            alpha: 10.0,
            tau: 0.5,
            outer_iterations: 20,
            inner_steps: 2000,
            dual_steps: None,
            minibatch: 8,
            violation_batch: 64,
            lr_primal: 1e-3,
            lr_dual: 1e-3,
            hidden_layers: 2,
            hidden_width: None,
            layer_norm: false,
            seed: 0,
        }
    }
}

impl PdlConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.rho > 0.0 && self.rho <= self.rho_max) {
            errs.push("need 0 < rho <= rho_max");
        }
        if !(self.alpha > 1.0) {
            errs.push("alpha must exceed 1");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            errs.push("tau must lie in (0, 1)");
        }
        if self.minibatch == 0 || self.violation_batch == 0 {
            errs.push("batch sizes must be >= 1");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

/// A parametric problem `min f_x(y) s.t. h_x(y) = 0` with a decoder from raw
/// network outputs to `(f, h)`.
pub trait PdlProblem: Sync {
    type Input: Send + Sync;
    type Trace: Send;

    fn sample(&self, seed: u64) -> Result<Self::Input>;
    fn feature_dim(&self) -> usize;
    fn features(&self, x: &Self::Input) -> Result<Vec<f64>>;
    fn output_dim(&self) -> usize;
    fn output_activation(&self) -> Activation;
    fn n_constraints(&self) -> usize;
    /// Unit of the dual network outputs.
    fn dual_scale(&self) -> f64 {
        1.0
    }
    /// Objective and equality residuals of raw output `y`.
    fn forward(&self, x: &Self::Input, y: &[f64]) -> Result<(f64, Vec<f64>, Self::Trace)>;
    /// Gradient with respect to `y` for cotangents of `f` and `h`.
    fn backward(&self, x: &Self::Input, trace: Self::Trace, df: f64, dh: &[f64]) -> Result<Vec<f64>>;
}

/// `f + λᵀh + (ρ/2)·1ᵀh²` with its gradient with respect to `h`.
pub fn alm_value(f: f64, h: &[f64], lambda: &[f64], rho: f64) -> (f64, Vec<f64>) {
    let mut v = f;
    let mut dh = Vec::with_capacity(h.len());
    for (&hi, &li) in h.iter().zip(lambda) {
        v += li * hi + 0.5 * rho * hi * hi;
        dh.push(li + rho * hi);
    }
    (v, dh)
}

/// Augmented Lagrangian of raw output `y` and its gradient with respect to `y`.
pub fn alm_loss<P: PdlProblem>(problem: &P, x: &P::Input, y: &[f64], lambda: &[f64], rho: f64) -> Result<(f64, Vec<f64>)> {
    let (f, h, tr) = problem.forward(x, y)?;
    let (v, dh) = alm_value(f, &h, lambda, rho);
    Ok((v, problem.backward(x, tr, 1.0, &dh)?))
}

/// One outer iteration of the log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    /// Penalty used during this iteration.
    pub rho: f64,
    /// Penalty after the schedule update.
    pub rho_next: f64,
    pub v_prev: Option<f64>,
    pub v: f64,
    pub primal_loss: f64,
    pub dual_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdlState {
    pub primal: Mlp<f64>,
    pub dual: Mlp<f64>,
    pub rho: f64,
    /// Last measured maximum violation.
    pub v: f64,
    pub history: Vec<OuterRecord>,
}

impl PdlState {
    pub fn new<P: PdlProblem>(problem: &P, cfg: &PdlConfig) -> Result<Self> {
        let (primal, dual) = networks(problem, cfg)?;
        Ok(Self {
            primal,
            dual,
            rho: cfg.rho,
            v: 0.0,
            history: Vec::new(),
        })
    }

    pub fn multipliers<P: PdlProblem>(&self, problem: &P, x: &P::Input) -> Result<Vec<f64>> {
        multipliers(&self.dual, problem, x)
    }
}

fn networks<P: PdlProblem>(problem: &P, cfg: &PdlConfig) -> Result<(Mlp<f64>, Mlp<f64>)> {
    let din = problem.feature_dim();
    let width = cfg
        .hidden_width
        .unwrap_or_else(|| default_hidden_width(din.max(problem.output_dim())));
    let primal = Mlp::with_hidden(din, cfg.hidden_layers, width, problem.output_dim(), problem.output_activation(), cfg.layer_norm, cfg.seed)?;
    let mut dual = Mlp::with_hidden(din, cfg.hidden_layers, width, problem.n_constraints(), Activation::Identity, cfg.layer_norm, cfg.seed ^ 0xD0A1)?;
    dual.zero_output_layer();
    Ok((primal, dual))
}

fn multipliers<P: PdlProblem>(dual: &Mlp<f64>, problem: &P, x: &P::Input) -> Result<Vec<f64>> {
    let s = problem.dual_scale();
    Ok(dual.predict(&problem.features(x)?)?.iter().map(|v| v * s).collect())
}

/// Independent, reproducible instance streams.
struct Streams {
    seed: u64,
    counters: [usize; 3],
}

const PRIMAL: usize = 0;
const DUAL: usize = 1;
const CHECK: usize = 2;
const SALTS: [u64; 3] = [0x9A1_0001, 0x9A1_0002, 0x9A1_0003];

impl Streams {
    fn new(seed: u64) -> Self {
        Self { seed, counters: [0; 3] }
    }

    fn batch<P: PdlProblem>(&mut self, problem: &P, which: usize, n: usize) -> Result<Vec<P::Input>> {
        let start = self.counters[which];
        self.counters[which] += n;
        (start..start + n)
            .map(|i| problem.sample(instance_seed(self.seed ^ SALTS[which], i)))
            .collect()
    }
}

fn primal_step<P: PdlProblem>(problem: &P, primal: &mut Mlp<f64>, adam: &mut AdamState<f64>, batch: &[P::Input], lambdas: &[Vec<f64>], rho: f64) -> Result<f64> {
    let items: Vec<(&P::Input, &Vec<f64>)> = batch.iter().zip(lambdas).collect();
    let net = &*primal;
    let (loss, grad) = batch_gradient(net.n_params(), &items, |(x, lam)| {
        let (y, tape) = net.forward(&problem.features(x)?)?;
        let (v, dy) = alm_loss(problem, x, &y, lam, rho)?;
        Ok((v, net.backward(tape, &dy)?.params))
    })?;
    adam.step(primal.params_mut(), &grad);
    Ok(loss)
}

/// Maximum `‖h‖∞` of the primal network over `batch`.
pub fn max_violation<P: PdlProblem>(problem: &P, primal: &Mlp<f64>, batch: &[P::Input]) -> Result<f64> {
    let mut v: f64 = 0.0;
    for x in batch {
        let y = primal.predict(&problem.features(x)?)?;
        let (_, h, _) = problem.forward(x, &y)?;
        for hi in h {
            if !hi.is_finite() {
                return Err(Error::NonFiniteViolation);
            }
            v = v.max(hi.abs());
        }
    }
    Ok(v)
}

/// Mean squared residual of the dual regression `D(x) − target`.
fn dual_regression_loss<P: PdlProblem>(problem: &P, dual: &Mlp<f64>, batch: &[(P::Input, Vec<f64>)]) -> Result<(f64, Vec<f64>)> {
    let s = problem.dual_scale();
    batch_gradient(dual.n_params(), batch, |(x, target)| {
        let (out, tape) = dual.forward(&problem.features(x)?)?;
        let mut loss = 0.0;
        let dy: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(&o, &t)| {
                let r = o * s - t;
                loss += 0.5 * r * r;
                r * s
            })
            .collect();
        Ok((loss, dual.backward(tape, &dy)?.params))
    })
}

/// Dual targets `D_old(x) + ρ·h(P(x))`.
fn dual_targets<P: PdlProblem>(problem: &P, primal: &Mlp<f64>, dual_old: &Mlp<f64>, batch: Vec<P::Input>, rho: f64) -> Result<Vec<(P::Input, Vec<f64>)>> {
    batch
        .into_iter()
        .map(|x| {
            let y = primal.predict(&problem.features(&x)?)?;
            let (_, h, _) = problem.forward(&x, &y)?;
            let lam = multipliers(dual_old, problem, &x)?;
            let t = lam.iter().zip(&h).map(|(l, hi)| l + rho * hi).collect();
            Ok((x, t))
        })
        .collect()
}

/// Next penalty: grow by `alpha` (capped) iff the violation did not shrink
/// by the factor `tau`.
pub fn next_rho(cfg: &PdlConfig, rho: f64, v_prev: Option<f64>, v: f64) -> f64 {
    match v_prev {
        Some(vp) if v > cfg.tau * vp => (cfg.alpha * rho).min(cfg.rho_max),
        _ => rho,
    }
}

pub fn pdl_train<P: PdlProblem>(problem: &P, cfg: &PdlConfig) -> Result<PdlState> {
    cfg.validate()?;
    let mut state = PdlState::new(problem, cfg)?;
    let mut streams = Streams::new(cfg.seed);
    let mut adam_p = AdamState::new(state.primal.n_params(), cfg.lr_primal);
    let mut adam_d = AdamState::new(state.dual.n_params(), cfg.lr_dual);
    let mut v_prev: Option<f64> = None;
    for it in 0..cfg.outer_iterations {
        let rho = state.rho;
        let mut primal_loss = 0.0;
        for _ in 0..cfg.inner_steps {
            let batch = streams.batch(problem, PRIMAL, cfg.minibatch)?;
            let lambdas = batch
                .iter()
                .map(|x| multipliers(&state.dual, problem, x))
                .collect::<Result<Vec<_>>>()?;
            primal_loss = primal_step(problem, &mut state.primal, &mut adam_p, &batch, &lambdas, rho)?;
        }
        let dual_old = state.dual.clone();
        let mut dual_loss = 0.0;
        for _ in 0..cfg.dual_steps.unwrap_or(cfg.inner_steps) {
            let batch = streams.batch(problem, DUAL, cfg.minibatch)?;
            let items = dual_targets(problem, &state.primal, &dual_old, batch, rho)?;
            let (loss, grad) = dual_regression_loss(problem, &state.dual, &items)?;
            adam_d.step(state.dual.params_mut(), &grad);
            dual_loss = loss;
        }
        let check = streams.batch(problem, CHECK, cfg.violation_batch)?;
        let v = max_violation(problem, &state.primal, &check)?;
        let rho_next = next_rho(cfg, rho, v_prev, v);
        log::debug!("pdl outer {it}: rho {rho} v {v:.3e} primal {primal_loss:.4} dual {dual_loss:.4}");
        state.history.push(OuterRecord {
            iteration: it,
            rho,
            rho_next,
            v_prev,
            v,
            primal_loss,
            dual_loss,
        });
        state.rho = rho_next;
        state.v = v;
        v_prev = Some(v);
    }
    if !state.primal.is_finite() || !state.dual.is_finite() {
        return Err(Error::DivergenceDetected("non-finite network parameters".into()));
    }
    Ok(state)
}

/// Audit of a recorded penalty schedule; returns the first inconsistency.
pub fn audit_rho_schedule(cfg: &PdlConfig, history: &[OuterRecord]) -> std::result::Result<(), String> {
    for (i, r) in history.iter().enumerate() {
        if r.rho_next < r.rho {
            return Err(format!("iteration {i}: rho decreased"));
        }
        if r.rho_next > cfg.rho_max || r.rho > cfg.rho_max {
            return Err(format!("iteration {i}: rho above rho_max"));
        }
        let grew = r.rho_next > r.rho;
        let violated = r.v_prev.is_some_and(|vp| r.v > cfg.tau * vp);
        if grew && !violated {
            return Err(format!("iteration {i}: rho grew without a violation increase"));
        }
        if violated && !grew && r.rho < cfg.rho_max {
            return Err(format!("iteration {i}: violation did not raise rho"));
        }
        if let Some(next) = history.get(i + 1) {
            if next.rho != r.rho_next {
                return Err(format!("iteration {}: rho does not continue the schedule", i + 1));
            }
        }
    }
    Ok(())
}

/// Primal network trained on `f + ρ·1ᵀ|h|` with a fixed `ρ` and no dual
/// network. Runs as many primal steps as [`pdl_train`].
pub fn penalty_train<P: PdlProblem>(problem: &P, cfg: &PdlConfig) -> Result<(Mlp<f64>, Vec<f64>)> {
    cfg.validate()?;
    let (mut primal, _) = networks(problem, cfg)?;
    let mut streams = Streams::new(cfg.seed);
    let mut adam = AdamState::new(primal.n_params(), cfg.lr_primal);
    let mut losses = Vec::with_capacity(cfg.outer_iterations);
    for _ in 0..cfg.outer_iterations {
        let mut last = 0.0;
        for _ in 0..cfg.inner_steps {
            let batch = streams.batch(problem, PRIMAL, cfg.minibatch)?;
            let net = &primal;
            let (loss, grad) = batch_gradient(net.n_params(), &batch, |x| {
                let (y, tape) = net.forward(&problem.features(x)?)?;
                let (f, h, tr) = problem.forward(x, &y)?;
                let (v, dh) = penalty_value(f, &h, cfg.rho);
                let dy = problem.backward(x, tr, 1.0, &dh)?;
                Ok((v, net.backward(tape, &dy)?.params))
            })?;
            adam.step(primal.params_mut(), &grad);
            last = loss;
        }
        losses.push(last);
    }
    if !primal.is_finite() {
        return Err(Error::DivergenceDetected("non-finite network parameters".into()));
    }
    Ok((primal, losses))
}

/// `f + ρ·1ᵀ|h|` with its gradient with respect to `h`.
pub fn penalty_value(f: f64, h: &[f64], rho: f64) -> (f64, Vec<f64>) {
    let v = f + rho * h.iter().map(|x| x.abs()).sum::<f64>();
    (v, h.iter().map(|x| rho * x.signum() * f64::from(u8::from(*x != 0.0))).collect())
}

/// `min y² s.t. y = x` for `x ~ U[0, 1]`; the optimum is `y = x` with
/// multiplier `−2x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyProblem;

impl PdlProblem for ToyProblem {
    type Input = f64;
    type Trace = f64;

    fn sample(&self, seed: u64) -> Result<f64> {
        Ok(ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..1.0))
    }
    fn feature_dim(&self) -> usize {
        1
    }
    fn features(&self, x: &f64) -> Result<Vec<f64>> {
        Ok(vec![*x])
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn output_activation(&self) -> Activation {
        Activation::Identity
    }
    fn n_constraints(&self) -> usize {
        1
    }
    fn forward(&self, x: &f64, y: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        Ok((y[0] * y[0], vec![y[0] - x], y[0]))
    }
    fn backward(&self, _x: &f64, y: f64, df: f64, dh: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![df * 2.0 * y + dh[0]])
    }
}
