//! Dual optimization proxy for the parametric DC-OPF LP.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::instance::Instance;
use crate::lp::StandardLp;
use crate::models::EdModel;
use crate::nn::{batch_gradient, default_hidden_width, minibatches, Activation, AdamState, EpochRecord, Mlp};
use crate::scalar::{dot, neg, pos, Scalar};
use crate::stats::Summary;

/// A dual-feasible point of `min cᵀy s.t. Ay = b, l ≤ y ≤ u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution<T> {
    pub z: Vec<T>,
    pub z_l: Vec<T>,
    pub z_u: Vec<T>,
    pub dual_objective: T,
}

impl<T: Scalar> DualSolution<T> {
    /// `max |Aᵀz + z_l − z_u − c|`
    pub fn equality_residual(&self, lp: &StandardLp<T>) -> T {
        let atz = lp.a.tmatvec(&self.z);
        (0..lp.n_cols()).fold(T::zero(), |m, j| {
            m.max((atz[j] + self.z_l[j] - self.z_u[j] - lp.c[j]).abs())
        })
    }

    pub fn signs_ok(&self) -> bool {
        self.z_l.iter().chain(&self.z_u).all(|&v| v >= T::zero())
    }
}

fn reduced_costs<T: Scalar>(z_hat: &[T], lp: &StandardLp<T>) -> Result<Vec<T>> {
    if z_hat.len() != lp.n_rows() {
        return Err(Error::ShapeMismatch {
            expected: lp.n_rows(),
            got: z_hat.len(),
        });
    }
    let atz = lp.a.tmatvec(z_hat);
    Ok(lp.c.iter().zip(&atz).map(|(&c, &a)| c - a).collect())
}

/// Complete `ẑ` with the bound duals that maximize the dual objective:
/// `z_l = |c − Aᵀẑ|⁺`, `z_u = |c − Aᵀẑ|⁻`.
pub fn completion_lp<T: Scalar>(z_hat: &[T], lp: &StandardLp<T>) -> Result<DualSolution<T>> {
    let d = reduced_costs(z_hat, lp)?;
    let z_l: Vec<T> = d.iter().map(|&v| pos(v)).collect();
    let z_u: Vec<T> = d.iter().map(|&v| neg(v)).collect();
    let dual_objective = lp.dual_objective(z_hat, &z_l, &z_u);
    Ok(DualSolution {
        z: z_hat.to_vec(),
        z_l,
        z_u,
        dual_objective,
    })
}

/// Gradient of the completed dual objective with respect to `ẑ`, scaled by
/// `cot`. Columns with a zero reduced cost take the lower-bound branch.
pub fn completion_backward<T: Scalar>(z_hat: &[T], lp: &StandardLp<T>, cot: T) -> Result<Vec<T>> {
    let d = reduced_costs(z_hat, lp)?;
    let active: Vec<T> = (0..lp.n_cols())
        .map(|j| if d[j] >= T::zero() { lp.l[j] } else { lp.u[j] })
        .collect();
    let a_act = lp.a.matvec(&active);
    Ok(lp.b.iter().zip(&a_act).map(|(&b, &v)| cot * (b - v)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: Option<usize>,
    pub layer_norm: bool,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            hidden_layers: 2,
            hidden_width: None,
            layer_norm: false,
        }
    }
}

/// Maps loads to equality duals of the DC-OPF LP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualProxy {
    pub mlp: Mlp<f64>,
    pub features: FeatureMap,
    /// Network outputs are multiplied by this price scale.
    pub dual_scale: f64,
    pub network_hash: String,
}

impl DualProxy {
    pub fn new(ed: &EdModel, cfg: &DualConfig) -> Result<Self> {
        let features = FeatureMap::for_loads(&ed.net);
        let n_out = 1 + ed.n_lines();
        let width = cfg.hidden_width.unwrap_or_else(|| default_hidden_width(features.dim().max(n_out)));
        let mlp = Mlp::with_hidden(features.dim(), cfg.hidden_layers, width, n_out, Activation::Identity, cfg.layer_norm, cfg.seed)?;
        let dual_scale = ed.net.costs().into_iter().fold(0.0, f64::max).max(1.0);
        Ok(Self {
            mlp,
            features,
            dual_scale,
            network_hash: ed.net.content_hash(),
        })
    }

    pub fn predict_z(&self, inst: &Instance) -> Result<Vec<f64>> {
        let y = self.mlp.predict(&self.features.features(inst)?)?;
        Ok(y.iter().map(|v| v * self.dual_scale).collect())
    }

    pub fn dual(&self, ed: &EdModel, inst: &Instance) -> Result<DualSolution<f64>> {
        let lp = ed.build_dcopf_lp(&ed.params(inst))?.lp;
        completion_lp(&self.predict_z(inst)?, &lp)
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

/// Self-supervised training: maximize the mean completed dual objective.
pub fn train_doplp(ed: &EdModel, instances: &[Instance], cfg: &DualConfig) -> Result<(DualProxy, Vec<EpochRecord>)> {
    if instances.is_empty() {
        return Err(Error::Config("no training instances".into()));
    }
    let mut proxy = DualProxy::new(ed, cfg)?;
    let lps: Vec<StandardLp<f64>> = instances
        .par_iter()
        .map(|inst| ed.build_dcopf_lp(&ed.params(inst)).map(|e| e.lp))
        .collect::<Result<_>>()?;
    let xs: Vec<Vec<f64>> = instances
        .iter()
        .map(|inst| proxy.features.features(inst))
        .collect::<Result<_>>()?;
    let scale = {
        let load: f64 = ed.net.base_loads().iter().sum();
        (load * proxy.dual_scale).max(1.0)
    };
    let mut adam = AdamState::new(proxy.mlp.n_params(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in minibatches(instances.len(), cfg.batch_size, &mut rng) {
            let mlp = &proxy.mlp;
            let ds = proxy.dual_scale;
            let (loss, grad) = batch_gradient(mlp.n_params(), &batch, |&i| {
                let (y, tape) = mlp.forward(&xs[i])?;
                let z: Vec<f64> = y.iter().map(|v| v * ds).collect();
                let sol = completion_lp(&z, &lps[i])?;
                let gz = completion_backward(&z, &lps[i], -1.0 / scale)?;
                let gy: Vec<f64> = gz.iter().map(|g| g * ds).collect();
                Ok((-sol.dual_objective / scale, mlp.backward(tape, &gy)?.params))
            })?;
            adam.step(proxy.mlp.params_mut(), &grad);
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        let loss = total / count as f64;
        log::debug!("doplp epoch {epoch}: loss {loss:.6}");
        history.push(EpochRecord { epoch, loss });
    }
    if !proxy.mlp.is_finite() {
        return Err(Error::DivergenceDetected("non-finite dual network parameters".into()));
    }
    Ok((proxy, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualGapRecord {
    pub index: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub ratio: f64,
    pub equality_residual: f64,
    pub dual_feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualGapReport {
    pub summary: Summary,
    pub dual_infeasible: usize,
    pub records: Vec<DualGapRecord>,
}

/// Geometric-mean shift for dual-gap ratios.
pub const DUAL_GAP_SHIFT: f64 = 0.01;

impl DualGapReport {
    pub fn to_csv(&self) -> String {
        let s = &self.summary;
        format!(
            "n,min,geomean,p99,max,dual_infeasible\n{},{},{},{},{},{}\n",
            s.n, s.min, s.geomean, s.p99, s.max, self.dual_infeasible
        )
    }
}

/// Dual-gap ratios `(Z* − D̂)/|Z*|` of predicted duals against known primal
/// optima. `items` pairs each instance with its optimal objective.
pub fn eval_dual_gap<F>(ed: &EdModel, items: &[(Instance, f64)], predict: F) -> Result<DualGapReport>
where
    F: Fn(&Instance) -> Result<Vec<f64>> + Sync,
{
    let records: Vec<DualGapRecord> = items
        .par_iter()
        .enumerate()
        .map(|(index, (inst, z_star))| {
            let lp = ed.build_dcopf_lp(&ed.params(inst))?.lp;
            let sol = completion_lp(&predict(inst)?, &lp)?;
            let res = sol.equality_residual(&lp);
            let tol = 1e-9 * (1.0 + dot(&lp.c, &lp.c).sqrt());
            Ok(DualGapRecord {
                index,
                primal_objective: *z_star,
                dual_objective: sol.dual_objective,
                ratio: (z_star - sol.dual_objective) / z_star.abs().max(f64::MIN_POSITIVE),
                equality_residual: res,
                dual_feasible: res <= tol && sol.signs_ok(),
            })
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    Ok(DualGapReport {
        summary: Summary::of(&ratios, DUAL_GAP_SHIFT),
        dual_infeasible: records.iter().filter(|r| !r.dual_feasible).count(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::linalg::DenseMatrix;
    use crate::nn::grad_check;

    fn lp2() -> StandardLp<f64> {
        // min 2x₁ − 2x₂  s.t. 0·x = 0, 0 ≤ x ≤ 1
        StandardLp::new(
            DenseMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap(),
            vec![0.0],
            vec![2.0, -2.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn completion_splits_reduced_costs() {
        let sol = completion_lp(&[0.0], &lp2()).unwrap();
        assert_eq!(sol.z_l, vec![2.0, 0.0]);
        assert_eq!(sol.z_u, vec![0.0, 2.0]);
        assert_eq!(sol.dual_objective, -2.0);
        assert_eq!(sol.equality_residual(&lp2()), 0.0);
    }

    #[test]
    fn oracle_duals_close_the_gap() {
        let ed = EdModel::new(cases::case3()).unwrap();
        let inst = Instance::nominal(&ed.net);
        let (disp, z) = ed.solve_dcopf(&inst).unwrap();
        let lp = ed.build_dcopf_lp(&ed.params(&inst)).unwrap().lp;
        let sol = completion_lp(&z, &lp).unwrap();
        assert!((sol.dual_objective - disp.objective).abs() <= 1e-7 * disp.objective.abs());
    }

    #[test]
    fn backward_matches_fd() {
        let ed = EdModel::new(cases::case3()).unwrap();
        let lp = ed.build_dcopf_lp(&ed.params(&Instance::nominal(&ed.net))).unwrap().lp;
        let f = |z: &[f64]| vec![completion_lp(z, &lp).unwrap().dual_objective];
        let b = |z: &[f64], ct: &[f64]| completion_backward(z, &lp, ct[0]).unwrap();
        let r = grad_check(f, b, &[13.0, -2.5, 4.0, 1.5], 1e-5, 1e-5);
        assert!(r.passed(), "{r:?}");
        assert!(completion_backward(&[1.0; 4], &lp, 0.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_reduced_cost_takes_lower_branch() {
        // d = 0 at ẑ = 2: gradient is b − A·l = 1 − 0
        let lp = StandardLp::new(
            DenseMatrix::from_rows(&[vec![1.0]]).unwrap(),
            vec![1.0],
            vec![2.0],
            vec![0.0],
            vec![3.0],
        )
        .unwrap();
        assert_eq!(completion_backward(&[2.0], &lp, 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn untrained_proxy_is_dual_feasible() {
        let ed = EdModel::new(cases::case3()).unwrap();
        let proxy = DualProxy::new(&ed, &DualConfig::default()).unwrap();
        let inst = Instance::nominal(&ed.net);
        let (disp, _) = ed.solve_dcopf(&inst).unwrap();
        let rep = eval_dual_gap(&ed, &[(inst, disp.objective)], |i| proxy.predict_z(i)).unwrap();
        assert_eq!(rep.dual_infeasible, 0);
        assert!(rep.records[0].ratio >= -1e-7);
    }

    #[test]
    fn f32_completion() {
        let lp = StandardLp::<f32>::new(
            DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            vec![1.0],
            vec![1.0, 3.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let sol = completion_lp(&[1.0f32], &lp).unwrap();
        assert_eq!(sol.dual_objective, 1.0);
        assert!(sol.signs_ok());
    }
}
