use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::linalg::DenseMatrix;
use crate::lp::{simplex_solve, LpBuilder, LpStatus, Sense};
use crate::models::{Dispatch, EdModel, EdParams};
use crate::scalar::dot;

pub const DEFAULT_PATTERN_BUDGET: u128 = 1 << 12;

/// Response of the fleet to the loss of one generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContingencyDispatch {
    pub gen: usize,
    /// Post-contingency dispatch, zero at `gen`.
    pub p: Vec<f64>,
    /// System response signal in `[0, 1]`.
    pub n: f64,
    /// Units pinned at their upper limit.
    pub rho: Vec<bool>,
    pub xi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineContingency {
    pub line: usize,
    pub xi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopfSolution {
    pub p: Vec<f64>,
    pub xi_base: Vec<f64>,
    pub gen_contingencies: Vec<ContingencyDispatch>,
    pub line_contingencies: Vec<LineContingency>,
    pub objective: f64,
}

impl ScopfSolution {
    pub fn base_dispatch(&self) -> Dispatch {
        Dispatch {
            p: self.p.clone(),
            r: vec![0.0; self.p.len()],
            xi_th: self.xi_base.clone(),
            objective: self.objective,
        }
    }
}

/// Thermal slacks of the base case and of every studied contingency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopfSlacks {
    pub base: Vec<f64>,
    pub gen: Vec<Vec<f64>>,
    pub line: Vec<Vec<f64>>,
}

impl ScopfSlacks {
    pub fn total(&self) -> f64 {
        self.base.iter().sum::<f64>()
            + self.gen.iter().flatten().sum::<f64>()
            + self.line.iter().flatten().sum::<f64>()
    }
}

/// Security-constrained dispatch with generator and line outages.
#[derive(Clone, Debug)]
pub struct ScopfModel {
    pub ed: EdModel,
    pub k_gen: Vec<usize>,
    pub k_line: Vec<usize>,
    /// `lodf_cols[j]` is the LODF column of `k_line[j]`.
    lodf_cols: Vec<Vec<f64>>,
    pub budget: u128,
}

fn excess(f: f64, fm: f64) -> f64 {
    (f - fm).max(0.0) + (-fm - f).max(0.0)
}

impl ScopfModel {
    pub fn new(ed: EdModel, k_gen: Vec<usize>, k_line: Vec<usize>) -> Result<Self> {
        let ng = ed.n_gens();
        if let Some(&g) = k_gen.iter().find(|&&g| g >= ng) {
            return Err(Error::Config(format!("generator contingency {g} out of range")));
        }
        let lodf_cols = k_line
            .iter()
            .map(|&k| ed.sens.lodf_column(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ed,
            k_gen,
            k_line,
            lodf_cols,
            budget: DEFAULT_PATTERN_BUDGET,
        })
    }

    /// Every generator outage and every non-islanding line outage.
    pub fn all_contingencies(ed: EdModel) -> Result<Self> {
        let k_gen = (0..ed.n_gens()).collect();
        let k_line = ed.sens.contingency_lines();
        Self::new(ed, k_gen, k_line)
    }

    /// LODF column of every monitored line outage, in `k_line` order.
    pub fn lodf_columns(&self) -> &[Vec<f64>] {
        &self.lodf_cols
    }

    pub fn n_gen_contingencies(&self) -> usize {
        self.k_gen.len()
    }

    /// Flow coefficients on `p` and the constant term of every monitored
    /// line after losing line `k_line[j]`.
    fn line_outage_map(&self, prm: &EdParams, j: usize) -> (DenseMatrix<f64>, Vec<f64>) {
        let e = self.k_line[j];
        let col = &self.lodf_cols[j];
        let (nl, ng) = (self.ed.n_lines(), self.ed.n_gens());
        let mut coef = DenseMatrix::zeros(nl, ng);
        let mut cst = vec![0.0; nl];
        for l in 0..nl {
            if l == e {
                continue;
            }
            for g in 0..ng {
                coef[(l, g)] = self.ed.ptdf_g[(l, g)] + col[l] * self.ed.ptdf_g[(e, g)];
            }
            cst[l] = prm.load_flow[l] + col[l] * prm.load_flow[e];
        }
        (coef, cst)
    }

    /// Slacks implied by a base dispatch and its contingency dispatches.
    pub fn slacks(&self, prm: &EdParams, p: &[f64], p_k: &[Vec<f64>]) -> ScopfSlacks {
        let base_flow = self.ed.flows(prm, p);
        let fm = &self.ed.f_max;
        let base = base_flow.iter().zip(fm).map(|(&f, &m)| excess(f, m)).collect();
        let gen = p_k
            .iter()
            .map(|pk| {
                self.ed
                    .flows(prm, pk)
                    .iter()
                    .zip(fm)
                    .map(|(&f, &m)| excess(f, m))
                    .collect()
            })
            .collect();
        let line = self
            .k_line
            .iter()
            .zip(&self.lodf_cols)
            .map(|(&e, col)| {
                (0..fm.len())
                    .map(|l| {
                        if l == e {
                            0.0
                        } else {
                            excess(base_flow[l] + col[l] * base_flow[e], fm[l])
                        }
                    })
                    .collect()
            })
            .collect();
        ScopfSlacks { base, gen, line }
    }

    /// `cᵀp + M Σ‖ξ‖₁`
    pub fn objective(&self, prm: &EdParams, p: &[f64], slacks: &ScopfSlacks) -> f64 {
        dot(&prm.cost, p) + self.ed.pen.m_scopf * slacks.total()
    }

    /// Objective with base and contingency balance mismatches priced at `M_pb`.
    pub fn penalized_objective(&self, prm: &EdParams, p: &[f64], p_k: &[Vec<f64>]) -> f64 {
        let sl = self.slacks(prm, p, p_k);
        let mismatch = (p.iter().sum::<f64>() - prm.total_load).abs()
            + p_k
                .iter()
                .map(|pk| (pk.iter().sum::<f64>() - prm.total_load).abs())
                .sum::<f64>();
        self.objective(prm, p, &sl) + self.ed.pen.m_pb * mismatch
    }

    fn n_pattern_bits(&self) -> usize {
        self.k_gen.len() * (self.ed.n_gens().saturating_sub(1))
    }

    /// Exact optimum by solving the LP restriction for every saturation
    /// pattern of the primary response.
    pub fn solve_bruteforce(&self, inst: &Instance) -> Result<ScopfSolution> {
        let bits = self.n_pattern_bits();
        let patterns: u128 = if bits >= 127 { u128::MAX } else { 1u128 << bits };
        if patterns > self.budget {
            return Err(Error::BudgetExceeded {
                patterns,
                budget: self.budget,
            });
        }
        let prm = self.ed.params(inst);
        let mut best: Option<ScopfSolution> = None;
        for mask in 0..patterns {
            if let Some(sol) = self.solve_pattern(inst, &prm, mask)? {
                if best.as_ref().is_none_or(|b| sol.objective < b.objective - 1e-12) {
                    best = Some(sol);
                }
            }
        }
        best.ok_or(Error::Infeasible)
    }

    fn solve_pattern(&self, inst: &Instance, prm: &EdParams, mask: u128) -> Result<Option<ScopfSolution>> {
        let ed = &self.ed;
        let (ng, nl) = (ed.n_gens(), ed.n_lines());
        let gammas: Vec<f64> = ed.net.generators.iter().map(|g| g.gamma).collect();
        let pdd: Vec<f64> = (0..ng).map(|g| prm.p_max[g] - prm.p_min[g]).collect();
        let m = ed.pen.m_scopf;
        let cap = prm.p_max.iter().sum::<f64>() + prm.total_load;
        let mut bld = LpBuilder::new();
        let p: Vec<usize> = (0..ng)
            .map(|g| bld.add_var(format!("p[{g}]"), prm.p_min[g], prm.p_max[g], prm.cost[g]))
            .collect();
        bld.add_row("balance", p.iter().map(|&j| (j, 1.0)).collect(), Sense::Eq, prm.total_load);

        // returns the slack column pairs of one monitored case
        let monitor = |bld: &mut LpBuilder, tag: &str, coefs: Vec<Vec<(usize, f64)>>, cst: &[f64], skip: Option<usize>| {
            let mut cols = Vec::with_capacity(nl);
            for l in 0..nl {
                if Some(l) == skip {
                    cols.push(None);
                    continue;
                }
                let f = bld.add_var(format!("{tag}f[{l}]"), -ed.f_max[l], ed.f_max[l], 0.0);
                let xp = bld.add_var(format!("{tag}xi+[{l}]"), 0.0, cap, m);
                let xm = bld.add_var(format!("{tag}xi-[{l}]"), 0.0, cap, m);
                let mut row = coefs[l].clone();
                row.extend([(f, -1.0), (xp, -1.0), (xm, 1.0)]);
                bld.add_row(format!("{tag}flow[{l}]"), row, Sense::Eq, cst[l]);
                cols.push(Some((xp, xm)));
            }
            cols
        };

        let base_coefs: Vec<Vec<(usize, f64)>> = (0..nl)
            .map(|l| (0..ng).map(|g| (p[g], ed.ptdf_g[(l, g)])).collect())
            .collect();
        let base_xi = monitor(&mut bld, "", base_coefs, &prm.load_flow, None);

        let mut bit = 0;
        let mut gen_cols = Vec::new();
        for &k in &self.k_gen {
            let n = bld.add_var(format!("n[{k}]"), 0.0, 1.0, 0.0);
            let mut pk = vec![None; ng];
            let mut rho = vec![false; ng];
            for i in 0..ng {
                if i == k {
                    continue;
                }
                let saturated = mask & (1u128 << bit) != 0;
                bit += 1;
                rho[i] = saturated;
                let col = if saturated {
                    let c = bld.add_var(format!("p[{k},{i}]"), prm.p_max[i], prm.p_max[i], 0.0);
                    bld.add_row(
                        format!("apr_sat[{k},{i}]"),
                        vec![(p[i], 1.0), (n, gammas[i] * pdd[i])],
                        Sense::Ge,
                        prm.p_max[i],
                    );
                    c
                } else {
                    let c = bld.add_var(format!("p[{k},{i}]"), prm.p_min[i], prm.p_max[i], 0.0);
                    bld.add_row(
                        format!("apr[{k},{i}]"),
                        vec![(c, 1.0), (p[i], -1.0), (n, -gammas[i] * pdd[i])],
                        Sense::Eq,
                        0.0,
                    );
                    c
                };
                pk[i] = Some(col);
            }
            bld.add_row(
                format!("balance[{k}]"),
                pk.iter().flatten().map(|&j| (j, 1.0)).collect(),
                Sense::Eq,
                prm.total_load,
            );
            let coefs: Vec<Vec<(usize, f64)>> = (0..nl)
                .map(|l| {
                    (0..ng)
                        .filter_map(|g| pk[g].map(|c| (c, ed.ptdf_g[(l, g)])))
                        .collect()
                })
                .collect();
            let xi = monitor(&mut bld, &format!("k{k}:"), coefs, &prm.load_flow, None);
            gen_cols.push((k, n, pk, rho, xi));
        }

        let mut line_cols = Vec::new();
        for j in 0..self.k_line.len() {
            let (coef, cst) = self.line_outage_map(prm, j);
            let coefs: Vec<Vec<(usize, f64)>> = (0..nl)
                .map(|l| (0..ng).map(|g| (p[g], coef[(l, g)])).collect())
                .collect();
            let e = self.k_line[j];
            let xi = monitor(&mut bld, &format!("e{e}:"), coefs, &cst, Some(e));
            line_cols.push((e, xi));
        }

        let lp = bld.build()?;
        let sol = simplex_solve(&lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Ok(None),
            LpStatus::Unbounded => return Err(Error::Unbounded),
        }
        let read_xi = |cols: &Vec<Option<(usize, usize)>>| -> Vec<f64> {
            cols.iter()
                .map(|c| c.map_or(0.0, |(a, b)| sol.y[a] + sol.y[b]))
                .collect()
        };
        let _ = inst;
        Ok(Some(ScopfSolution {
            p: p.iter().map(|&j| sol.y[j]).collect(),
            xi_base: read_xi(&base_xi),
            gen_contingencies: gen_cols
                .iter()
                .map(|(k, n, pk, rho, xi)| ContingencyDispatch {
                    gen: *k,
                    p: pk.iter().map(|c| c.map_or(0.0, |j| sol.y[j])).collect(),
                    n: sol.y[*n],
                    rho: rho.clone(),
                    xi: read_xi(xi),
                })
                .collect(),
            line_contingencies: line_cols
                .iter()
                .map(|(e, xi)| LineContingency {
                    line: *e,
                    xi: read_xi(xi),
                })
                .collect(),
            objective: sol.objective,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    fn fixture() -> ScopfModel {
        ScopfModel::all_contingencies(EdModel::new(cases::scopf3()).unwrap()).unwrap()
    }

    #[test]
    fn no_contingencies_reduces_to_ed() {
        let ed = EdModel::new(cases::scopf3()).unwrap();
        let m = ScopfModel::new(ed.clone(), vec![], vec![]).unwrap();
        let inst = Instance::nominal(&ed.net);
        let s = m.solve_bruteforce(&inst).unwrap();
        let d = ed.solve_ed(&inst).unwrap();
        assert!((s.objective - d.objective).abs() < 1e-7 * d.objective.abs());
    }

    #[test]
    fn security_costs_more_than_ed() {
        let m = fixture();
        let inst = Instance::nominal(&m.ed.net);
        let s = m.solve_bruteforce(&inst).unwrap();
        let d = m.ed.solve_ed(&inst).unwrap();
        assert!(s.objective >= d.objective - 1e-9);
        for c in &s.gen_contingencies {
            assert_eq!(c.p[c.gen], 0.0);
            assert!((c.p.iter().sum::<f64>() - inst.total_load()).abs() < 1e-8);
            assert!((0.0..=1.0).contains(&c.n));
        }
    }

    #[test]
    fn responses_follow_droop_rule() {
        let m = fixture();
        let inst = Instance::nominal(&m.ed.net);
        let prm = m.ed.params(&inst);
        let s = m.solve_bruteforce(&inst).unwrap();
        for c in &s.gen_contingencies {
            for i in 0..3 {
                if i == c.gen {
                    continue;
                }
                let g = &m.ed.net.generators[i];
                let want = (s.p[i] + c.n * g.gamma * (prm.p_max[i] - prm.p_min[i])).min(prm.p_max[i]);
                assert!((c.p[i] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn two_unit_symmetric_outage() {
        let mut net = cases::scopf3();
        net.generators.truncate(2);
        for g in &mut net.generators {
            g.p_max = 10.0;
            g.gamma = 1.0;
            g.cost = 1.0;
        }
        net.buses[1].load = 10.0;
        net.buses[2].load = 0.0;
        let ed = EdModel::new(net).unwrap();
        let m = ScopfModel::new(ed, vec![0], vec![]).unwrap();
        let inst = Instance::nominal(&m.ed.net);
        let s = m.solve_bruteforce(&inst).unwrap();
        let c = &s.gen_contingencies[0];
        assert!((c.p[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn overloaded_contingency_is_priced() {
        let mut net = cases::scopf3();
        for l in &mut net.lines {
            l.f_max = 1000.0;
        }
        let loose = ScopfModel::all_contingencies(EdModel::new(net.clone()).unwrap()).unwrap();
        let inst = Instance::nominal(&net);
        let s = loose.solve_bruteforce(&inst).unwrap();
        let total = |s: &ScopfSolution| {
            s.xi_base.iter().sum::<f64>()
                + s.gen_contingencies.iter().flat_map(|c| c.xi.iter()).sum::<f64>()
                + s.line_contingencies.iter().flat_map(|c| c.xi.iter()).sum::<f64>()
        };
        assert_eq!(total(&s), 0.0);
        for l in &mut net.lines {
            l.f_max = 5.0;
        }
        let tight = ScopfModel::all_contingencies(EdModel::new(net).unwrap()).unwrap();
        let s = tight.solve_bruteforce(&inst).unwrap();
        assert!(total(&s) > 0.0);
        let prm = tight.ed.params(&inst);
        let pk: Vec<Vec<f64>> = s.gen_contingencies.iter().map(|c| c.p.clone()).collect();
        let sl = tight.slacks(&prm, &s.p, &pk);
        assert!((sl.total() - total(&s)).abs() < 1e-6);
        assert!((tight.objective(&prm, &s.p, &sl) - s.objective).abs() < 1e-6 * s.objective);
    }

    #[test]
    fn budget_is_enforced() {
        let mut m = fixture();
        m.budget = 8;
        let inst = Instance::nominal(&m.ed.net);
        assert!(matches!(
            m.solve_bruteforce(&inst),
            Err(Error::BudgetExceeded { patterns: 64, budget: 8 })
        ));
    }
}
