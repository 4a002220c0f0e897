//! Reduced security-constrained dispatch as a primal-dual learning problem.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bs::{bs_layer, bs_layer_backward, bs_layer_backward_implicit, BsResult, BS_ITERATIONS};
use super::{pdl_train, penalty_train, PdlConfig, PdlProblem, PdlState};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::instance::{sample_instance, splitmix64, Instance, SamplerConfig};
use crate::models::{EdParams, ScopfModel, ScopfSlacks};
use crate::nn::{box_map, box_map_backward, Activation, Mlp};
use crate::primal::repair_context;
use crate::repair::{power_balance_repair, power_balance_repair_backward, BalanceTrace, RepairContext};

/// Thermal slacks of the base case and every monitored contingency.
pub fn scopf_slacks(model: &ScopfModel, prm: &EdParams, p: &[f64], p_k: &[Vec<f64>]) -> ScopfSlacks {
    model.slacks(prm, p, p_k)
}

fn excess_sign(f: f64, fm: f64) -> f64 {
    if f > fm {
        1.0
    } else if f < -fm {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of `weight·Σ‖ξ‖₁` with respect to the base dispatch and every
/// generator-contingency dispatch.
pub fn scopf_slack_gradient(model: &ScopfModel, prm: &EdParams, p: &[f64], p_k: &[Vec<f64>], weight: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let ed = &model.ed;
    let (ng, nl) = (ed.n_gens(), ed.n_lines());
    let fm = &ed.f_max;
    let mut dp = vec![0.0; ng];
    let add_row = |out: &mut [f64], l: usize, s: f64| {
        for (g, o) in out.iter_mut().enumerate() {
            *o += s * ed.ptdf_g[(l, g)];
        }
    };
    let base = ed.flows(prm, p);
    for l in 0..nl {
        let s = excess_sign(base[l], fm[l]);
        if s != 0.0 {
            add_row(&mut dp, l, weight * s);
        }
    }
    for (&e, col) in model.k_line.iter().zip(model.lodf_columns()) {
        for l in 0..nl {
            if l == e {
                continue;
            }
            let s = excess_sign(base[l] + col[l] * base[e], fm[l]);
            if s != 0.0 {
                add_row(&mut dp, l, weight * s);
                add_row(&mut dp, e, weight * s * col[l]);
            }
        }
    }
    let dpk = p_k
        .iter()
        .map(|pk| {
            let flows = ed.flows(prm, pk);
            let mut d = vec![0.0; ng];
            for l in 0..nl {
                let s = excess_sign(flows[l], fm[l]);
                if s != 0.0 {
                    add_row(&mut d, l, weight * s);
                }
            }
            d
        })
        .collect();
    (dp, dpk)
}

/// One sampled instance with its derived bounds.
pub struct ScopfInput {
    pub inst: Instance,
    pub prm: EdParams,
    pub ctx: RepairContext<f64>,
}

pub struct ScopfTrace {
    balance: BalanceTrace<f64>,
    pub p: Vec<f64>,
    pub contingencies: Vec<BsResult>,
}

/// How the decoder differentiates the contingency dispatches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalGradient {
    /// `n_k` held at its forward value.
    Frozen,
    /// `n_k` re-solved, so `h_k` has zero gradient while the search is interior.
    #[default]
    Implicit,
}

/// Decoder: sigmoid bounds, base balance repair, binary-search response per
/// generator outage. Residuals `h` are the contingency balance mismatches.
pub struct ScopfProblem {
    pub model: ScopfModel,
    pub features: FeatureMap,
    pub sampler: SamplerConfig,
    pub bs_iterations: usize,
    pub signal_gradient: SignalGradient,
    base_loads: Vec<f64>,
    gamma: Vec<f64>,
}

impl ScopfProblem {
    pub fn new(model: ScopfModel, sampler: SamplerConfig) -> Self {
        let net = &model.ed.net;
        Self {
            features: FeatureMap::for_scopf(net),
            base_loads: net.base_loads(),
            gamma: net.generators.iter().map(|g| g.gamma).collect(),
            sampler,
            bs_iterations: BS_ITERATIONS,
            signal_gradient: SignalGradient::default(),
            model,
        }
    }

    pub fn input(&self, inst: &Instance) -> Result<ScopfInput> {
        let prm = self.model.ed.params(inst);
        Ok(ScopfInput {
            ctx: repair_context(&prm)?,
            prm,
            inst: inst.clone(),
        })
    }

    fn decode(&self, x: &ScopfInput, y: &[f64]) -> Result<ScopfTrace> {
        let p_hat = box_map(y, &x.ctx.glb, &x.ctx.gub);
        let (p, balance) = power_balance_repair(&p_hat, &x.ctx)?;
        let contingencies = self
            .model
            .k_gen
            .iter()
            .map(|&k| bs_layer(&p, k, &self.gamma, &x.prm, self.bs_iterations))
            .collect();
        Ok(ScopfTrace { balance, p, contingencies })
    }

    /// Base dispatch and contingency responses of a primal network.
    pub fn predict(&self, primal: &Mlp<f64>, inst: &Instance) -> Result<ScopfTrace> {
        let x = self.input(inst)?;
        let y = primal.predict(&self.features.features(inst)?)?;
        self.decode(&x, &y)
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
}

impl PdlProblem for ScopfProblem {
    type Input = ScopfInput;
    type Trace = ScopfTrace;

    fn sample(&self, seed: u64) -> Result<ScopfInput> {
        let mut s = seed;
        for _ in 0..64 {
            let inst = sample_instance(&self.model.ed.net, &self.base_loads, &self.sampler, s);
            match self.input(&inst) {
                Ok(x) if power_balance_repair(&x.ctx.glb, &x.ctx).is_ok() => return Ok(x),
                _ => s = splitmix64(s),
            }
        }
        Err(Error::Config("sampler keeps producing loads outside the fleet range".into()))
    }

    fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    fn features(&self, x: &ScopfInput) -> Result<Vec<f64>> {
        self.features.features(&x.inst)
    }

    fn output_dim(&self) -> usize {
        self.model.ed.n_gens()
    }

    fn output_activation(&self) -> Activation {
        Activation::Sigmoid
    }

    fn n_constraints(&self) -> usize {
        self.model.k_gen.len()
    }

    fn dual_scale(&self) -> f64 {
        self.model.ed.net.costs().into_iter().fold(1.0, f64::max)
    }

    fn forward(&self, x: &ScopfInput, y: &[f64]) -> Result<(f64, Vec<f64>, ScopfTrace)> {
        let tr = self.decode(x, y)?;
        let p_k: Vec<Vec<f64>> = tr.contingencies.iter().map(|c| c.p.clone()).collect();
        let sl = self.model.slacks(&x.prm, &tr.p, &p_k);
        let f = self.model.objective(&x.prm, &tr.p, &sl);
        let h = tr.contingencies.iter().map(|c| c.residual).collect();
        Ok((f, h, tr))
    }

    fn backward(&self, x: &ScopfInput, tr: ScopfTrace, df: f64, dh: &[f64]) -> Result<Vec<f64>> {
        let p_k: Vec<Vec<f64>> = tr.contingencies.iter().map(|c| c.p.clone()).collect();
        let (mut dp, dpk) = scopf_slack_gradient(&self.model, &x.prm, &tr.p, &p_k, df * self.model.ed.pen.m_scopf);
        for (d, c) in dp.iter_mut().zip(&x.prm.cost) {
            *d += df * c;
        }
        for ((res, dk), &dhk) in tr.contingencies.iter().zip(&dpk).zip(dh) {
            let g: Vec<f64> = dk.iter().map(|v| v + dhk).collect();
            let back = match self.signal_gradient {
                SignalGradient::Frozen => bs_layer_backward(res, &g),
                SignalGradient::Implicit => bs_layer_backward_implicit(res, &self.gamma, &x.prm, &g),
            };
            for (d, v) in dp.iter_mut().zip(back) {
                *d += v;
            }
        }
        let dphat = power_balance_repair_backward(&tr.balance, &x.ctx, &dp);
        Ok(box_map_backward(&dphat, &x.ctx.glb, &x.ctx.gub))
    }
}

pub fn pdl_scopf_train(problem: &ScopfProblem, cfg: &PdlConfig) -> Result<PdlState> {
    pdl_train(problem, cfg)
}

/// Penalty baseline: same decoder, no dual network, `ρ` fixed at `cfg.rho`.
pub fn penalty_baseline_train(problem: &ScopfProblem, cfg: &PdlConfig) -> Result<Mlp<f64>> {
    penalty_train(problem, cfg).map(|(m, _)| m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopfInstanceRecord {
    pub index: usize,
    pub oracle: f64,
    pub penalized: f64,
    pub gap: f64,
    /// `|h_k|` per generator contingency, MW.
    pub violations: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopfEvalReport {
    pub n: usize,
    pub mean_gap: f64,
    pub max_gap: f64,
    /// Largest contingency balance violation, MW.
    pub max_violation: f64,
    pub max_violation_pu: f64,
    /// `(generator, max |h_k|)` in MW.
    pub per_contingency: Vec<(usize, f64)>,
    pub max_base_imbalance: f64,
    pub inference_seconds: f64,
    pub records: Vec<ScopfInstanceRecord>,
}

impl ScopfEvalReport {
    pub fn violation_csv(&self) -> String {
        let mut s = String::from("generator,max_violation_mw\n");
        for (g, v) in &self.per_contingency {
            s.push_str(&format!("{g},{v}\n"));
        }
        s
    }
}

/// Score a primal network against oracle objectives.
pub fn pdl_scopf_eval(problem: &ScopfProblem, primal: &Mlp<f64>, test: &[(Instance, f64)]) -> Result<ScopfEvalReport> {
    let t0 = Instant::now();
    let traces: Vec<ScopfTrace> = test
        .par_iter()
        .map(|(inst, _)| problem.predict(primal, inst))
        .collect::<Result<_>>()?;
    let secs = t0.elapsed().as_secs_f64();
    let model = &problem.model;
    let mut base_imb: f64 = 0.0;
    let records: Vec<ScopfInstanceRecord> = test
        .iter()
        .zip(&traces)
        .enumerate()
        .map(|(index, ((inst, oracle), tr))| {
            let prm = model.ed.params(inst);
            let p_k: Vec<Vec<f64>> = tr.contingencies.iter().map(|c| c.p.clone()).collect();
            let penalized = model.penalized_objective(&prm, &tr.p, &p_k);
            base_imb = base_imb.max((tr.p.iter().sum::<f64>() - prm.total_load).abs());
            ScopfInstanceRecord {
                index,
                oracle: *oracle,
                penalized,
                gap: (penalized - oracle) / oracle.abs().max(f64::MIN_POSITIVE),
                violations: tr.contingencies.iter().map(|c| c.residual.abs()).collect(),
            }
        })
        .collect();
    let per_contingency: Vec<(usize, f64)> = model
        .k_gen
        .iter()
        .enumerate()
        .map(|(j, &g)| (g, records.iter().map(|r| r.violations[j]).fold(0.0, f64::max)))
        .collect();
    let max_violation = per_contingency.iter().map(|v| v.1).fold(0.0, f64::max);
    let gaps: Vec<f64> = records.iter().map(|r| r.gap).collect();
    Ok(ScopfEvalReport {
        n: records.len(),
        mean_gap: crate::stats::mean(&gaps),
        max_gap: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        max_violation,
        max_violation_pu: max_violation / model.ed.net.base_mva,
        per_contingency,
        max_base_imbalance: base_imb,
        inference_seconds: secs,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::models::EdModel;
    use super::super::bs::bs_readout;
    use crate::scalar::dot;
    use crate::nn::grad_check;

    fn problem() -> ScopfProblem {
        let ed = EdModel::new(cases::scopf3()).unwrap();
        ScopfProblem::new(ScopfModel::all_contingencies(ed).unwrap(), SamplerConfig::scopf())
    }

    #[test]
    fn frozen_decoder_gradient_matches_fd() {
        let mut pb = problem();
        pb.signal_gradient = SignalGradient::Frozen;
        let x = pb.sample(3).unwrap();
        let lam = [2.0, -1.0, 0.5];
        let y = [0.3, 0.45, 0.2];
        let (_, _, tr0) = pb.forward(&x, &y).unwrap();
        let signals: Vec<f64> = tr0.contingencies.iter().map(|c| c.n).collect();
        // signals held at their forward values, as in the backward pass
        let f = |yy: &[f64]| {
            let t = pb.decode(&x, yy).unwrap();
            let mut p_k = Vec::new();
            let mut h = Vec::new();
            for (&k, &n) in pb.model.k_gen.iter().zip(&signals) {
                let r = bs_readout(&t.p, k, pb.gamma(), &x.prm, n);
                h.push(r.residual);
                p_k.push(r.p);
            }
            let sl = pb.model.slacks(&x.prm, &t.p, &p_k);
            vec![pb.model.objective(&x.prm, &t.p, &sl) + dot(&lam, &h)]
        };
        let b = |yy: &[f64], ct: &[f64]| {
            let (_, _, tr) = pb.forward(&x, yy).unwrap();
            let dh: Vec<f64> = lam.iter().map(|l| l * ct[0]).collect();
            pb.backward(&x, tr, ct[0], &dh).unwrap()
        };
        let r = grad_check(f, b, &y, 1e-6, 1e-4);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn implicit_decoder_gradient_matches_fd() {
        let mut pb = problem();
        pb.bs_iterations = 60;
        let x = pb.sample(3).unwrap();
        let lam = [2.0, -1.0, 0.5];
        let y = [0.3, 0.45, 0.2];
        let f = |yy: &[f64]| {
            let (f, h, _) = pb.forward(&x, yy).unwrap();
            vec![f + dot(&lam, &h)]
        };
        let b = |yy: &[f64], ct: &[f64]| {
            let (_, _, tr) = pb.forward(&x, yy).unwrap();
            let dh: Vec<f64> = lam.iter().map(|l| l * ct[0]).collect();
            pb.backward(&x, tr, ct[0], &dh).unwrap()
        };
        let r = grad_check(f, b, &y, 1e-6, 1e-4);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn untrained_base_balance_is_exact() {
        let pb = problem();
        let net = Mlp::with_hidden(pb.feature_dim(), 2, 8, 3, Activation::Sigmoid, false, 1).unwrap();
        for s in 0..20 {
            let x = pb.sample(s).unwrap();
            let tr = pb.predict(&net, &x.inst).unwrap();
            let d = x.prm.total_load;
            assert!((tr.p.iter().sum::<f64>() - d).abs() <= 1e-9 * (1.0 + d));
            assert!(tr.contingencies.iter().all(|c| c.p[c.gen] == 0.0));
        }
    }

    #[test]
    fn uncongested_slacks_are_zero() {
        let pb = problem();
        let x = pb.sample(0).unwrap();
        let p = vec![x.prm.total_load / 3.0; 3];
        let sl = scopf_slacks(&pb.model, &x.prm, &p, &[]);
        assert!(sl.total() == 0.0);
    }
}
