//! Bounded-variable revised primal simplex.
//!
//! Solves `min cᵀy  s.t.  A y = b,  l ≤ y ≤ u` with every bound finite, and
//! returns the matching dual `(z, z_l, z_u)` of
//! `max bᵀz + lᵀz_l − uᵀz_u  s.t.  Aᵀz + z_l − z_u = c,  z_l, z_u ≥ 0`.
//!
//! Phase 1 starts from an all-artificial basis; artificials are then frozen at
//! zero for phase 2. The basis inverse is kept as an LU factorization plus a
//! product-form eta file, refactorized every [`REFACTOR_EVERY`] pivots.
//! Dantzig pricing is used until a run of degenerate pivots is seen, after
//! which Bland's rule takes over until the objective moves again.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Lu};
use crate::scalar::{dot, Scalar};

pub const REFACTOR_EVERY: usize = 50;
const DEGENERATE_RUN: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardLp<T> {
    pub a: DenseMatrix<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub l: Vec<T>,
    pub u: Vec<T>,
    #[serde(default)]
    pub row_names: Vec<String>,
    #[serde(default)]
    pub col_names: Vec<String>,
}

impl<T: Scalar> StandardLp<T> {
    pub fn new(a: DenseMatrix<T>, b: Vec<T>, c: Vec<T>, l: Vec<T>, u: Vec<T>) -> Result<Self> {
        let lp = Self {
            a,
            b,
            c,
            l,
            u,
            row_names: Vec::new(),
            col_names: Vec::new(),
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn n_rows(&self) -> usize {
        self.a.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.a.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.a.rows(), self.a.cols());
        for (len, want) in [
            (self.b.len(), m),
            (self.c.len(), n),
            (self.l.len(), n),
            (self.u.len(), n),
        ] {
            if len != want {
                return Err(Error::ShapeMismatch {
                    expected: want,
                    got: len,
                });
            }
        }
        let mut errs = Vec::new();
        for j in 0..n {
            if !self.l[j].is_finite() || !self.u[j].is_finite() {
                errs.push(format!("column {j}: bounds must be finite"));
            } else if self.l[j] > self.u[j] {
                errs.push(format!("column {j}: lower bound above upper bound"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn objective(&self, y: &[T]) -> T {
        dot(&self.c, y)
    }

    /// `bᵀz + lᵀz_l − uᵀz_u`
    pub fn dual_objective(&self, z: &[T], z_l: &[T], z_u: &[T]) -> T {
        dot(&self.b, z) + dot(&self.l, z_l) - dot(&self.u, z_u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub y: Vec<T>,
    pub z: Vec<T>,
    pub z_l: Vec<T>,
    pub z_u: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

impl<T: Scalar> LpSolution<T> {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            y: Vec::new(),
            z: Vec::new(),
            z_l: Vec::new(),
            z_u: Vec::new(),
            objective: T::nan(),
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Eta<T> {
    row: usize,
    col: Vec<T>,
}

struct Engine<'a, T> {
    lp: &'a StandardLp<T>,
    m: usize,
    n: usize,
    cols: Vec<Vec<T>>,
    art_sign: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    cost: Vec<T>,
    x: Vec<T>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    lu: Option<Lu<T>>,
    etas: Vec<Eta<T>>,
    iterations: usize,
    max_iterations: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn new(lp: &'a StandardLp<T>) -> Self {
        let (m, n) = (lp.n_rows(), lp.n_cols());
        let cols: Vec<Vec<T>> = (0..n).map(|j| lp.a.column(j)).collect();
        let mut x = Vec::with_capacity(n + m);
        for j in 0..n {
            // start at the bound closest to zero
            let v = if lp.l[j].abs() <= lp.u[j].abs() {
                lp.l[j]
            } else {
                lp.u[j]
            };
            x.push(v);
        }
        let mut resid = lp.b.clone();
        for j in 0..n {
            if x[j] != T::zero() {
                for (r, &a) in resid.iter_mut().zip(&cols[j]) {
                    *r -= a * x[j];
                }
            }
        }
        let art_sign: Vec<T> = resid
            .iter()
            .map(|&r| if r >= T::zero() { T::one() } else { -T::one() })
            .collect();
        x.extend(resid.iter().map(|r| r.abs()));
        let mut state: Vec<VarState> = (0..n)
            .map(|j| {
                if x[j] == lp.l[j] {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                }
            })
            .collect();
        state.extend((0..m).map(VarState::Basic));
        let mut lo = lp.l.clone();
        lo.extend(std::iter::repeat_n(T::zero(), m));
        let mut hi = lp.u.clone();
        hi.extend(std::iter::repeat_n(T::infinity(), m));
        let mut cost = vec![T::zero(); n];
        cost.extend(std::iter::repeat_n(T::one(), m));
        Self {
            lp,
            m,
            n,
            cols,
            art_sign,
            lo,
            hi,
            cost,
            x,
            basis: (n..n + m).collect(),
            state,
            lu: None,
            etas: Vec::new(),
            iterations: 0,
            max_iterations: 50 * (m + n) + 1000,
        }
    }

    fn column(&self, j: usize) -> Vec<T> {
        if j < self.n {
            self.cols[j].clone()
        } else {
            let mut e = vec![T::zero(); self.m];
            e[j - self.n] = self.art_sign[j - self.n];
            e
        }
    }

    fn column_dot(&self, j: usize, v: &[T]) -> T {
        if j < self.n {
            dot(&self.cols[j], v)
        } else {
            self.art_sign[j - self.n] * v[j - self.n]
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = DenseMatrix::zeros(m, m);
        for (i, &k) in self.basis.iter().enumerate() {
            let col = self.column(k);
            for r in 0..m {
                bmat[(r, i)] = col[r];
            }
        }
        self.lu = Some(Lu::factor(&bmat).map_err(|_| {
            Error::NumericalFailure("basis matrix became singular".into())
        })?);
        self.etas.clear();
        // recompute basic values from the nonbasic ones
        let mut rhs = self.lp.b.clone();
        for j in 0..self.n + self.m {
            if matches!(self.state[j], VarState::Basic(_)) || self.x[j] == T::zero() {
                continue;
            }
            let xj = self.x[j];
            if j < self.n {
                for (r, &a) in rhs.iter_mut().zip(&self.cols[j]) {
                    *r -= a * xj;
                }
            } else {
                rhs[j - self.n] -= self.art_sign[j - self.n] * xj;
            }
        }
        let xb = self.ftran(&rhs);
        for (i, &k) in self.basis.iter().enumerate() {
            self.x[k] = xb[i];
        }
        Ok(())
    }

    fn ftran(&self, v: &[T]) -> Vec<T> {
        let mut y = self.lu.as_ref().expect("factored").solve(v);
        for eta in &self.etas {
            let yr = y[eta.row] / eta.col[eta.row];
            for (i, yi) in y.iter_mut().enumerate() {
                if i != eta.row {
                    *yi -= eta.col[i] * yr;
                }
            }
            y[eta.row] = yr;
        }
        y
    }

    fn btran(&self, c: &[T]) -> Vec<T> {
        let mut v = c.to_vec();
        for eta in self.etas.iter().rev() {
            let mut s = v[eta.row];
            for (i, &vi) in v.iter().enumerate() {
                if i != eta.row {
                    s -= eta.col[i] * vi;
                }
            }
            v[eta.row] = s / eta.col[eta.row];
        }
        self.lu.as_ref().expect("factored").solve_transpose(&v)
    }

    fn duals(&self) -> Vec<T> {
        let cb: Vec<T> = self.basis.iter().map(|&k| self.cost[k]).collect();
        self.btran(&cb)
    }

    fn run_phase(&mut self) -> Result<PhaseOutcome> {
        let opt_tol = T::opt_tol();
        let piv_tol = T::pivot_tol() * T::of(100.0);
        let feas_tol = T::feas_tol();
        let mut bland = false;
        let mut degenerate = 0usize;
        self.refactor()?;
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::NumericalFailure(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }
            if self.etas.len() >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let pi = self.duals();

            // pricing
            let mut entering: Option<(usize, T)> = None;
            for j in 0..self.n + self.m {
                let dir = match self.state[j] {
                    VarState::Basic(_) => continue,
                    _ if self.lo[j] == self.hi[j] => continue,
                    VarState::AtLower => T::one(),
                    VarState::AtUpper => -T::one(),
                };
                let d = self.cost[j] - self.column_dot(j, &pi);
                let gain = -d * dir;
                if gain > opt_tol {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| gain > best.abs()) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((j, _)) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };
            let dir = if self.state[j] == VarState::AtLower {
                T::one()
            } else {
                -T::one()
            };
            let w = self.ftran(&self.column(j));

            // ratio test: x_B(θ) = x_B − dir·θ·w
            let mut theta = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, bool, T)> = None; // (row, to_upper, |alpha|)
            for i in 0..self.m {
                let k = self.basis[i];
                let alpha = dir * w[i];
                let (t, to_upper) = if alpha > piv_tol {
                    ((self.x[k] - self.lo[k]) / alpha, false)
                } else if alpha < -piv_tol {
                    if self.hi[k].is_infinite() {
                        continue;
                    }
                    ((self.hi[k] - self.x[k]) / -alpha, true)
                } else {
                    continue;
                };
                let t = t.max(T::zero());
                let better = match leave {
                    None => t < theta || (t == theta && !theta.is_finite()),
                    Some((r, _, amag)) => {
                        if t < theta {
                            true
                        } else if t == theta {
                            if bland {
                                k < self.basis[r]
                            } else {
                                alpha.abs() > amag
                            }
                        } else {
                            false
                        }
                    }
                };
                if better || (leave.is_none() && t <= theta) {
                    theta = t;
                    leave = Some((i, to_upper, alpha.abs()));
                }
            }
            if !theta.is_finite() {
                return Ok(PhaseOutcome::Unbounded);
            }

            self.x[j] += dir * theta;
            for i in 0..self.m {
                let k = self.basis[i];
                self.x[k] -= dir * theta * w[i];
            }
            match leave {
                Some((r, to_upper, _)) => {
                    let k = self.basis[r];
                    if to_upper {
                        self.x[k] = self.hi[k];
                        self.state[k] = VarState::AtUpper;
                    } else {
                        self.x[k] = self.lo[k];
                        self.state[k] = VarState::AtLower;
                    }
                    self.basis[r] = j;
                    self.state[j] = VarState::Basic(r);
                    self.etas.push(Eta { row: r, col: w });
                }
                None => {
                    // bound flip
                    self.state[j] = if dir > T::zero() {
                        self.x[j] = self.hi[j];
                        VarState::AtUpper
                    } else {
                        self.x[j] = self.lo[j];
                        VarState::AtLower
                    };
                }
            }

            if theta <= feas_tol {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        }
    }

    fn infeasibility(&self) -> T {
        (self.n..self.n + self.m).fold(T::zero(), |s, j| s + self.x[j])
    }
}

/// Solve a box-constrained standard-form LP to optimality.
pub fn simplex_solve<T: Scalar>(lp: &StandardLp<T>) -> Result<LpSolution<T>> {
    lp.validate()?;
    let mut eng = Engine::new(lp);
    let (m, n) = (eng.m, eng.n);

    // phase 1
    match eng.run_phase()? {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::Unbounded => {
            return Err(Error::NumericalFailure("phase 1 unbounded".into()))
        }
    }
    let bscale = lp.b.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    if eng.infeasibility() > T::feas_tol() * T::of(100.0) * bscale {
        return Ok(LpSolution::without_point(LpStatus::Infeasible, eng.iterations));
    }

    // phase 2: freeze artificials at zero
    for j in n..n + m {
        eng.hi[j] = T::zero();
        eng.cost[j] = T::zero();
        if !matches!(eng.state[j], VarState::Basic(_)) {
            eng.x[j] = T::zero();
            eng.state[j] = VarState::AtLower;
        }
    }
    eng.cost[..n].copy_from_slice(&lp.c);
    match eng.run_phase()? {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::Unbounded => {
            return Ok(LpSolution::without_point(LpStatus::Unbounded, eng.iterations))
        }
    }
    eng.refactor()?;

    let y: Vec<T> = (0..n)
        .map(|j| eng.x[j].max(lp.l[j]).min(lp.u[j]))
        .collect();
    let z = eng.duals();
    let mut z_l = vec![T::zero(); n];
    let mut z_u = vec![T::zero(); n];
    for j in 0..n {
        if matches!(eng.state[j], VarState::Basic(_)) {
            continue;
        }
        let d = lp.c[j] - dot(&eng.cols[j], &z);
        if d > T::zero() {
            z_l[j] = d;
        } else {
            z_u[j] = -d;
        }
    }
    let objective = lp.objective(&y);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        y,
        z,
        z_l,
        z_u,
        objective,
        iterations: eng.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(b: f64) -> StandardLp<f64> {
        StandardLp::new(
            DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            vec![b],
            vec![1.0, 2.0],
            vec![0.0, 0.0],
            vec![10.0, 5.0],
        )
        .unwrap()
    }

    #[test]
    fn two_var_balance() {
        let sol = simplex_solve(&toy(8.0)).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.y[0] - 8.0).abs() < 1e-12 && sol.y[1].abs() < 1e-12);
        assert!((sol.objective - 8.0).abs() < 1e-12);
        assert!((sol.z[0] - 1.0).abs() < 1e-12);
        // x2 sits at its lower bound with reduced cost 1
        assert!((sol.z_l[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_shortfall_is_infeasible() {
        let sol = simplex_solve(&toy(30.0)).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn crossed_bounds_rejected() {
        let mut lp = toy(1.0);
        lp.l[0] = 11.0;
        assert!(matches!(simplex_solve(&lp), Err(Error::Validation(_))));
    }

    #[test]
    fn f32_solve() {
        let lp = StandardLp::<f32>::new(
            DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            vec![8.0],
            vec![1.0, 2.0],
            vec![0.0, 0.0],
            vec![10.0, 5.0],
        )
        .unwrap();
        let sol = simplex_solve(&lp).unwrap();
        assert!((sol.objective - 8.0).abs() < 1e-4);
    }

    #[test]
    fn strong_duality_and_complementarity() {
        // min -x0 - 2x1 + x2 ; x0 + x1 + x2 = 4 ; x0 - x1 = 0.5
        let lp = StandardLp::<f64>::new(
            DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![1.0, -1.0, 0.0]]).unwrap(),
            vec![4.0, 0.5],
            vec![-1.0, -2.0, 1.0],
            vec![0.0, 0.0, 0.0],
            vec![3.0, 3.0, 3.0],
        )
        .unwrap();
        let s = simplex_solve(&lp).unwrap();
        let d = lp.dual_objective(&s.z, &s.z_l, &s.z_u);
        assert!((s.objective - d).abs() <= 1e-9 * (1.0 + s.objective.abs()));
        for j in 0..3 {
            assert!(s.z_l[j] * (s.y[j] - lp.l[j]) < 1e-9);
            assert!(s.z_u[j] * (lp.u[j] - s.y[j]) < 1e-9);
        }
        let resid = lp.a.matvec(&s.y);
        for (r, b) in resid.iter().zip(&lp.b) {
            assert!((r - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_redundant_rows() {
        // duplicated row forces an artificial to stay basic at zero
        let lp = StandardLp::<f64>::new(
            DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap(),
            vec![3.0, 6.0],
            vec![1.0, 3.0],
            vec![0.0, 0.0],
            vec![2.0, 2.0],
        )
        .unwrap();
        let s = simplex_solve(&lp).unwrap();
        assert!((s.objective - 5.0).abs() < 1e-9, "{}", s.objective);
        let d = lp.dual_objective(&s.z, &s.z_l, &s.z_u);
        assert!((s.objective - d).abs() < 1e-9);
    }
}
