//! Binary search over the system signal of the primary response.

use serde::{Deserialize, Serialize};

use crate::models::EdParams;

pub const BS_ITERATIONS: usize = 20;

/// Contingency dispatch after losing unit `gen`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsResult {
    pub gen: usize,
    pub p: Vec<f64>,
    pub n: f64,
    /// Units pinned at their upper limit.
    pub rho: Vec<bool>,
    /// `1ᵀp_k − 1ᵀd`; negative when the survivors cannot cover the load.
    pub residual: f64,
}

fn readout(p: &[f64], k: usize, gamma: &[f64], prm: &EdParams, n: f64) -> (Vec<f64>, Vec<bool>, f64) {
    let mut out = vec![0.0; p.len()];
    let mut rho = vec![false; p.len()];
    for i in 0..p.len() {
        if i == k {
            continue;
        }
        let want = p[i] + n * gamma[i] * (prm.p_max[i] - prm.p_min[i]);
        if want > prm.p_max[i] {
            rho[i] = true;
            out[i] = prm.p_max[i];
        } else {
            out[i] = want;
        }
    }
    let e = out.iter().sum::<f64>() - prm.total_load;
    (out, rho, e)
}

/// Contingency dispatch at a given signal `n`.
pub fn bs_readout(p: &[f64], k: usize, gamma: &[f64], prm: &EdParams, n: f64) -> BsResult {
    let (pk, rho, e) = readout(p, k, gamma, prm, n);
    BsResult {
        gen: k,
        p: pk,
        n,
        rho,
        residual: e,
    }
}

/// Find the signal `n ∈ [0, 1]` balancing the contingency dispatch
/// `p_{k,i} = min(p_i + n γ_i p̈_i, p̄_i)`, `p_{k,k} = 0`.
///
/// Endpoints are tested first so `n = 0` and `n = 1` are returned exactly;
/// otherwise `t` bisection steps are taken, moving down when the survivors
/// over-produce and up otherwise.
pub fn bs_layer(p: &[f64], k: usize, gamma: &[f64], prm: &EdParams, t: usize) -> BsResult {
    let finish = |n: f64| bs_readout(p, k, gamma, prm, n);
    if readout(p, k, gamma, prm, 0.0).2 >= 0.0 {
        return finish(0.0);
    }
    if readout(p, k, gamma, prm, 1.0).2 <= 0.0 {
        return finish(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut n = 0.5;
    for _ in 0..t.max(1) {
        let e = readout(p, k, gamma, prm, n).2;
        if e > 0.0 {
            hi = n;
        } else {
            lo = n;
        }
        n = 0.5 * (lo + hi);
    }
    finish(n)
}

/// Gradient with respect to the base dispatch with `n` held at its forward
/// value: saturated and outaged units pass nothing back.
pub fn bs_layer_backward(res: &BsResult, grad: &[f64]) -> Vec<f64> {
    grad.iter()
        .enumerate()
        .map(|(i, &g)| if i == res.gen || res.rho[i] { 0.0 } else { g })
        .collect()
}

/// Gradient with respect to the base dispatch with `n` re-solved by the
/// search. Inside `(0, 1)` the balance `e(p, n) = 0` holds, so
/// `∂n/∂p_j = −1/Σ_U γ_i p̈_i` for every free survivor `j ∈ U`; at either
/// end of the range this reduces to [`bs_layer_backward`].
pub fn bs_layer_backward_implicit(res: &BsResult, gamma: &[f64], prm: &EdParams, grad: &[f64]) -> Vec<f64> {
    let free = |i: usize| i != res.gen && !res.rho[i];
    let slope: f64 = (0..grad.len())
        .filter(|&i| free(i))
        .map(|i| gamma[i] * (prm.p_max[i] - prm.p_min[i]))
        .sum();
    if res.n <= 0.0 || res.n >= 1.0 || slope <= 0.0 {
        return bs_layer_backward(res, grad);
    }
    let through_n: f64 = (0..grad.len())
        .filter(|&i| free(i))
        .map(|i| grad[i] * gamma[i] * (prm.p_max[i] - prm.p_min[i]))
        .sum::<f64>()
        / slope;
    (0..grad.len())
        .map(|i| if free(i) { grad[i] - through_n } else { 0.0 })
        .collect()
}
