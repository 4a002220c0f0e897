//! Differentiable feasibility layers for the dispatch proxies.
//!
//! Every layer works on one sample and returns a trace of the discrete
//! decisions it took; the backward functions reuse those decisions, so at
//! kinks they return the one-sided derivative of the branch the forward
//! pass chose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sum, Scalar};

/// Per-instance bounds the repair layers need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairContext<T> {
    pub glb: Vec<T>,
    pub gub: Vec<T>,
    pub rbar: Vec<T>,
    pub total_load: T,
    pub reserve: T,
}

impl<T: Scalar> RepairContext<T> {
    pub fn new(glb: Vec<T>, gub: Vec<T>, rbar: Vec<T>, total_load: T, reserve: T) -> Result<Self> {
        let ctx = Self {
            glb,
            gub,
            rbar,
            total_load,
            reserve,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn n_gens(&self) -> usize {
        self.glb.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.glb.len();
        for len in [self.gub.len(), self.rbar.len()] {
            if len != n {
                return Err(Error::ShapeMismatch { expected: n, got: len });
            }
        }
        let mut errs = Vec::new();
        for g in 0..n {
            if !(self.glb[g] <= self.gub[g]) {
                errs.push(format!("unit {g}: glb > gub"));
            }
            if !(self.rbar[g] >= T::zero() && self.rbar[g] <= self.gub[g] - self.glb[g]) {
                errs.push(format!("unit {g}: need 0 <= rbar <= gub - glb"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Reserve a dispatch can offer: `Σ min(r̄, ḡ − p)`.
    pub fn available_reserve(&self, p: &[T]) -> T {
        (0..p.len()).fold(T::zero(), |s, g| {
            s + self.rbar[g].min((self.gub[g] - p[g]).max(T::zero()))
        })
    }

    /// Maximal reserve allocation for a dispatch.
    pub fn reserves(&self, p: &[T]) -> Vec<T> {
        (0..p.len())
            .map(|g| self.rbar[g].min((self.gub[g] - p[g]).max(T::zero())))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceTrace<T> {
    pub branch: Branch,
    pub zeta: T,
    /// `dζ/dp̂_j`, identical for every coordinate.
    pub dzeta: T,
    p_hat: Vec<T>,
}

/// Scale all units proportionally toward their upper (or lower) limits until
/// total output equals total load.
pub fn power_balance_repair<T: Scalar>(p_hat: &[T], ctx: &RepairContext<T>) -> Result<(Vec<T>, BalanceTrace<T>)> {
    let n = ctx.n_gens();
    if p_hat.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: p_hat.len() });
    }
    let (lo, hi) = (sum(&ctx.glb), sum(&ctx.gub));
    let d = ctx.total_load;
    if d < lo || d > hi {
        return Err(Error::InfeasibleLoad {
            load: d.as_f64(),
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let s = sum(p_hat);
    let (branch, zeta, dzeta, target) = if s < d {
        let gap = hi - s;
        let z = (d - s) / gap;
        (Branch::Up, z, -(T::one() - z) / gap, &ctx.gub)
    } else {
        let gap = s - lo;
        let (z, dz) = if gap > T::zero() {
            let z = (s - d) / gap;
            (z, (T::one() - z) / gap)
        } else {
            (T::zero(), T::zero())
        };
        (Branch::Down, z, dz, &ctx.glb)
    };
    let p = p_hat
        .iter()
        .zip(target)
        .map(|(&ph, &t)| (T::one() - zeta) * ph + zeta * t)
        .collect();
    Ok((
        p,
        BalanceTrace {
            branch,
            zeta,
            dzeta,
            p_hat: p_hat.to_vec(),
        },
    ))
}

pub fn power_balance_repair_backward<T: Scalar>(trace: &BalanceTrace<T>, ctx: &RepairContext<T>, grad: &[T]) -> Vec<T> {
    let target = match trace.branch {
        Branch::Up => &ctx.gub,
        Branch::Down => &ctx.glb,
    };
    let coupling = (0..grad.len()).fold(T::zero(), |s, i| s + grad[i] * (target[i] - trace.p_hat[i]));
    grad.iter()
        .map(|&g| (T::one() - trace.zeta) * g + trace.dzeta * coupling)
        .collect()
}

/// Which term of `min(Δ_R, Δ↑, Δ↓)` set the shift, or `None` when no shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftLimit {
    None,
    Shortage,
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReserveTrace<T> {
    /// Membership in the set of units that can still offer full reserve.
    pub up_set: Vec<bool>,
    pub delta: T,
    pub delta_r: T,
    pub delta_up: T,
    pub delta_down: T,
    pub alpha_up: T,
    pub alpha_down: T,
    pub limit: ShiftLimit,
    /// Reserve still missing after the repair.
    pub shortfall: T,
    p_tilde: Vec<T>,
}

fn threshold<T: Scalar>(ctx: &RepairContext<T>, g: usize) -> T {
    ctx.gub[g] - ctx.rbar[g]
}

/// Shift output from units that lose reserve to units that can absorb it,
/// keeping total output fixed.
pub fn reserve_repair<T: Scalar>(p_tilde: &[T], ctx: &RepairContext<T>) -> (Vec<T>, Vec<T>, ReserveTrace<T>) {
    let n = ctx.n_gens();
    let up_set: Vec<bool> = (0..n).map(|g| p_tilde[g] <= threshold(ctx, g)).collect();
    let mut delta_up = T::zero();
    let mut delta_down = T::zero();
    for g in 0..n {
        let t = threshold(ctx, g);
        if up_set[g] {
            delta_up += t - p_tilde[g];
        } else {
            delta_down += p_tilde[g] - t;
        }
    }
    let delta_r = ctx.reserve - ctx.available_reserve(p_tilde);
    let (mut delta, mut limit) = (delta_r, ShiftLimit::Shortage);
    if delta_up < delta {
        delta = delta_up;
        limit = ShiftLimit::Up;
    }
    if delta_down < delta {
        delta = delta_down;
        limit = ShiftLimit::Down;
    }
    if delta <= T::zero() {
        delta = T::zero();
        limit = ShiftLimit::None;
    }
    let alpha_up = if delta_up > T::zero() { delta / delta_up } else { T::zero() };
    let alpha_down = if delta_down > T::zero() { delta / delta_down } else { T::zero() };
    let p_check: Vec<T> = (0..n)
        .map(|g| {
            let t = threshold(ctx, g);
            if up_set[g] {
                p_tilde[g] + alpha_up * (t - p_tilde[g])
            } else {
                p_tilde[g] - alpha_down * (p_tilde[g] - t)
            }
        })
        .collect();
    let r_check = ctx.reserves(&p_check);
    let shortfall = (ctx.reserve - sum(&r_check)).max(T::zero());
    (
        p_check,
        r_check,
        ReserveTrace {
            up_set,
            delta,
            delta_r,
            delta_up,
            delta_down,
            alpha_up,
            alpha_down,
            limit,
            shortfall,
            p_tilde: p_tilde.to_vec(),
        },
    )
}

pub fn reserve_repair_backward<T: Scalar>(trace: &ReserveTrace<T>, ctx: &RepairContext<T>, grad: &[T]) -> Vec<T> {
    let n = grad.len();
    let up = &trace.up_set;
    // d(term)/dp̃_j for the binding term of the min
    let d_delta = |j: usize| -> T {
        match trace.limit {
            ShiftLimit::None => T::zero(),
            ShiftLimit::Shortage | ShiftLimit::Down => {
                if up[j] {
                    T::zero()
                } else {
                    T::one()
                }
            }
            ShiftLimit::Up => {
                if up[j] {
                    -T::one()
                } else {
                    T::zero()
                }
            }
        }
    };
    let mut a = T::zero();
    let mut b = T::zero();
    for g in 0..n {
        let t = threshold(ctx, g);
        if up[g] {
            a += grad[g] * (t - trace.p_tilde[g]);
        } else {
            b += grad[g] * (trace.p_tilde[g] - t);
        }
    }
    (0..n)
        .map(|j| {
            let dd = d_delta(j);
            let mut out = if up[j] {
                grad[j] * (T::one() - trace.alpha_up)
            } else {
                grad[j] * (T::one() - trace.alpha_down)
            };
            if trace.delta_up > T::zero() {
                let d_up = if up[j] { -T::one() } else { T::zero() };
                out += a * (dd - trace.alpha_up * d_up) / trace.delta_up;
            }
            if trace.delta_down > T::zero() {
                let d_down = if up[j] { T::zero() } else { T::one() };
                out -= b * (dd - trace.alpha_down * d_down) / trace.delta_down;
            }
            out
        })
        .collect()
}

/// Generator that absorbs the balance residual: the one with the largest
/// upper limit.
pub fn residual_generator<T: Scalar>(ctx: &RepairContext<T>) -> usize {
    (0..ctx.n_gens())
        .fold(0, |best, g| if ctx.gub[g] > ctx.gub[best] { g } else { best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionInfo<T> {
    pub residual: usize,
    /// How far the residual unit ends up outside its limits.
    pub bound_violation: T,
}

/// Insert the residual unit so that total output equals total load.
/// `partial` holds every other unit in order.
pub fn equality_completion<T: Scalar>(partial: &[T], ctx: &RepairContext<T>) -> Result<(Vec<T>, CompletionInfo<T>)> {
    let n = ctx.n_gens();
    if partial.len() + 1 != n {
        return Err(Error::ShapeMismatch { expected: n - 1, got: partial.len() });
    }
    let k = residual_generator(ctx);
    let mut p = Vec::with_capacity(n);
    p.extend_from_slice(&partial[..k]);
    p.push(ctx.total_load - sum(partial));
    p.extend_from_slice(&partial[k..]);
    let v = (p[k] - ctx.gub[k]).max(T::zero()) + (ctx.glb[k] - p[k]).max(T::zero());
    Ok((p, CompletionInfo { residual: k, bound_violation: v }))
}

pub fn equality_completion_backward<T: Scalar>(info: &CompletionInfo<T>, grad: &[T]) -> Vec<T> {
    let k = info.residual;
    grad.iter()
        .enumerate()
        .filter(|&(g, _)| g != k)
        .map(|(_, &v)| v - grad[k])
        .collect()
}

/// `½(1ᵀp − D)² + ½ max(0, R − Σ min(r̄, ḡ − p))²`
pub fn violation<T: Scalar>(p: &[T], ctx: &RepairContext<T>) -> T {
    let r = sum(p) - ctx.total_load;
    let s = (ctx.reserve - ctx.available_reserve(p)).max(T::zero());
    T::of(0.5) * (r * r + s * s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CorrectionStep<T> {
    eta: T,
    /// Units that stayed strictly inside the box.
    free: Vec<bool>,
    /// Units whose reserve is limited by headroom.
    reserve_mask: Vec<bool>,
    short: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTrace<T> {
    steps: Vec<CorrectionStep<T>>,
    /// Violation before the first step and after every step.
    pub violations: Vec<T>,
}

/// Projected gradient descent on [`violation`] with a fixed step budget.
/// A step that would increase the violation is halved (up to ten times) and
/// otherwise skipped.
pub fn unrolled_correction<T: Scalar>(p_hat: &[T], ctx: &RepairContext<T>, steps: usize, step_size: T) -> (Vec<T>, CorrectionTrace<T>) {
    let n = p_hat.len();
    let mut p = p_hat.to_vec();
    let mut v = violation(&p, ctx);
    let mut trace = CorrectionTrace {
        steps: Vec::with_capacity(steps),
        violations: vec![v],
    };
    for _ in 0..steps {
        let r = sum(&p) - ctx.total_load;
        let s = ctx.reserve - ctx.available_reserve(&p);
        let short = s > T::zero();
        let reserve_mask: Vec<bool> = (0..n)
            .map(|g| ctx.gub[g] - p[g] < ctx.rbar[g] && p[g] < ctx.gub[g])
            .collect();
        let grad: Vec<T> = (0..n)
            .map(|g| r + if short && reserve_mask[g] { s } else { T::zero() })
            .collect();
        let mut eta = step_size;
        let mut accepted = None;
        for _ in 0..=10 {
            let mut free = vec![true; n];
            let cand: Vec<T> = (0..n)
                .map(|g| {
                    let u = p[g] - eta * grad[g];
                    if u <= ctx.glb[g] {
                        free[g] = false;
                        ctx.glb[g]
                    } else if u >= ctx.gub[g] {
                        free[g] = false;
                        ctx.gub[g]
                    } else {
                        u
                    }
                })
                .collect();
            let vc = violation(&cand, ctx);
            if vc <= v {
                accepted = Some((cand, vc, free));
                break;
            }
            eta *= T::of(0.5);
        }
        match accepted {
            Some((cand, vc, free)) => {
                p = cand;
                v = vc;
                trace.steps.push(CorrectionStep { eta, free, reserve_mask, short });
            }
            None => trace.steps.push(CorrectionStep {
                eta: T::zero(),
                free: vec![true; n],
                reserve_mask,
                short,
            }),
        }
        trace.violations.push(v);
    }
    (p, trace)
}

pub fn unrolled_correction_backward<T: Scalar>(trace: &CorrectionTrace<T>, grad: &[T]) -> Vec<T> {
    let mut g = grad.to_vec();
    for st in trace.steps.iter().rev() {
        let w: Vec<T> = g
            .iter()
            .zip(&st.free)
            .map(|(&v, &f)| if f { v } else { T::zero() })
            .collect();
        let total = sum(&w);
        let masked = (0..w.len()).fold(T::zero(), |s, i| if st.reserve_mask[i] { s + w[i] } else { s });
        g = (0..w.len())
            .map(|i| {
                let mut out = w[i] - st.eta * total;
                if st.short && st.reserve_mask[i] {
                    out -= st.eta * masked;
                }
                out
            })
            .collect();
    }
    g
}
