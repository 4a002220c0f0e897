use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Network, SensitivityMatrices};
use crate::instance::Instance;
use crate::linalg::DenseMatrix;
use crate::lp::{simplex_solve, LpBuilder, LpStatus, Sense, StandardLp};
use crate::scalar::dot;

/// Violation prices in $/MWh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Penalties {
    /// Thermal-limit slack.
    pub m_th: f64,
    /// Power-balance mismatch.
    pub m_pb: f64,
    /// Reserve shortfall.
    pub m_r: f64,
    /// Contingency thermal slack in the security-constrained model.
    pub m_scopf: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Self {
            m_th: 1500.0,
            m_pb: 10_000.0,
            m_r: 1100.0,
            m_scopf: 1500.0,
        }
    }
}

/// A primal dispatch decision with its thermal slacks and objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub xi_th: Vec<f64>,
    pub objective: f64,
}

/// Instance-specific data for one dispatch problem.
#[derive(Clone, Debug)]
pub struct EdParams {
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub r_max: Vec<f64>,
    pub cost: Vec<f64>,
    pub loads: Vec<f64>,
    pub total_load: f64,
    pub reserve: f64,
    /// Flows caused by the loads alone, `PTDF · d`.
    pub load_flow: Vec<f64>,
}

/// Grid-level data shared by every instance: sensitivities, limits, prices.
#[derive(Clone, Debug)]
pub struct EdModel {
    pub net: Network,
    pub sens: SensitivityMatrices,
    /// PTDF columns at the generator buses (lines × gens).
    pub ptdf_g: DenseMatrix<f64>,
    pub f_max: Vec<f64>,
    pub pen: Penalties,
}

/// Column layout of the economic-dispatch LP.
#[derive(Clone, Debug)]
pub struct EdLp {
    pub lp: StandardLp<f64>,
    pub p: Range<usize>,
    pub r: Range<usize>,
    pub f: Range<usize>,
    pub xi_pos: Range<usize>,
    pub xi_neg: Range<usize>,
}

fn span(start: usize, len: usize) -> Range<usize> {
    start..start + len
}

impl EdModel {
    pub fn new(net: Network) -> Result<Self> {
        Self::with_penalties(net, Penalties::default())
    }

    pub fn with_penalties(net: Network, pen: Penalties) -> Result<Self> {
        let sens = SensitivityMatrices::for_network(&net)?;
        let buses = net.gen_bus_positions();
        let nl = net.n_lines();
        let mut ptdf_g = DenseMatrix::zeros(nl, net.n_gens());
        for l in 0..nl {
            for (g, &b) in buses.iter().enumerate() {
                ptdf_g[(l, g)] = sens.ptdf[(l, b)];
            }
        }
        let f_max = net.f_max();
        Ok(Self {
            net,
            sens,
            ptdf_g,
            f_max,
            pen,
        })
    }

    pub fn n_gens(&self) -> usize {
        self.net.n_gens()
    }

    pub fn n_lines(&self) -> usize {
        self.net.n_lines()
    }

    pub fn params(&self, inst: &Instance) -> EdParams {
        let p_max = inst.p_max(&self.net);
        EdParams {
            p_min: self.net.p_min(),
            r_max: inst.r_max(&self.net),
            cost: inst.costs(&self.net),
            total_load: inst.total_load(),
            reserve: inst.reserve_req,
            load_flow: self.sens.flows(&inst.loads),
            loads: inst.loads.clone(),
            p_max,
        }
    }

    /// Line flows for dispatch `p`.
    pub fn flows(&self, prm: &EdParams, p: &[f64]) -> Vec<f64> {
        let mut f = self.ptdf_g.matvec(p);
        for (fl, lf) in f.iter_mut().zip(&prm.load_flow) {
            *fl -= lf;
        }
        f
    }

    /// Per-line excess over the thermal limit in either direction.
    pub fn thermal_slack(&self, prm: &EdParams, p: &[f64]) -> Vec<f64> {
        self.flows(prm, p)
            .iter()
            .zip(&self.f_max)
            .map(|(&f, &fm)| (f - fm).max(0.0) + (-fm - f).max(0.0))
            .collect()
    }

    /// `c·p + M_th ‖ξ_th‖₁`
    pub fn model_objective(&self, prm: &EdParams, p: &[f64]) -> f64 {
        dot(&prm.cost, p) + self.pen.m_th * self.thermal_slack(prm, p).iter().sum::<f64>()
    }

    /// Reserve shortfall `max(0, R − Σ min(r̄, max(0, p̄ − p)))`.
    pub fn reserve_shortfall(&self, prm: &EdParams, p: &[f64]) -> f64 {
        let avail: f64 = (0..p.len())
            .map(|g| prm.r_max[g].min((prm.p_max[g] - p[g]).max(0.0)))
            .sum();
        (prm.reserve - avail).max(0.0)
    }

    /// Objective with every violation priced in.
    pub fn penalized_objective(&self, prm: &EdParams, p: &[f64]) -> f64 {
        let mismatch = (p.iter().sum::<f64>() - prm.total_load).abs();
        self.model_objective(prm, p)
            + self.pen.m_pb * mismatch
            + self.pen.m_r * self.reserve_shortfall(prm, p)
    }

    fn add_network_block(&self, bld: &mut LpBuilder, prm: &EdParams, p: &Range<usize>, soft: bool) -> (Range<usize>, Range<usize>, Range<usize>) {
        let (ng, nl) = (self.n_gens(), self.n_lines());
        let f0 = bld.n_vars();
        for l in 0..nl {
            bld.add_var(format!("f[{l}]"), -self.f_max[l], self.f_max[l], 0.0);
        }
        let f = span(f0, nl);
        let (mut xi_pos, mut xi_neg) = (f0 + nl..f0 + nl, f0 + nl..f0 + nl);
        if soft {
            let cap = prm.p_max.iter().sum::<f64>() + prm.loads.iter().sum::<f64>();
            let s = bld.n_vars();
            for l in 0..nl {
                bld.add_var(format!("xi+[{l}]"), 0.0, cap, self.pen.m_th);
            }
            for l in 0..nl {
                bld.add_var(format!("xi-[{l}]"), 0.0, cap, self.pen.m_th);
            }
            xi_pos = span(s, nl);
            xi_neg = span(s + nl, nl);
        }
        for l in 0..nl {
            let mut coefs: Vec<(usize, f64)> = (0..ng)
                .filter(|&g| self.ptdf_g[(l, g)] != 0.0)
                .map(|g| (p.start + g, self.ptdf_g[(l, g)]))
                .collect();
            coefs.push((f.start + l, -1.0));
            if soft {
                coefs.push((xi_pos.start + l, -1.0));
                coefs.push((xi_neg.start + l, 1.0));
            }
            bld.add_row(format!("flow[{l}]"), coefs, Sense::Eq, prm.load_flow[l]);
        }
        (f, xi_pos, xi_neg)
    }

    fn add_ed_core(&self, bld: &mut LpBuilder, prm: &EdParams, cost: bool) -> (Range<usize>, Range<usize>) {
        let ng = self.n_gens();
        let p0 = bld.n_vars();
        for g in 0..ng {
            let c = if cost { prm.cost[g] } else { 0.0 };
            bld.add_var(format!("p[{g}]"), prm.p_min[g], prm.p_max[g], c);
        }
        let r0 = bld.n_vars();
        for g in 0..ng {
            bld.add_var(format!("r[{g}]"), 0.0, prm.r_max[g], 0.0);
        }
        let (p, r) = (span(p0, ng), span(r0, ng));
        bld.add_row("balance", p.clone().map(|j| (j, 1.0)).collect(), Sense::Eq, prm.total_load);
        bld.add_row("reserve", r.clone().map(|j| (j, 1.0)).collect(), Sense::Ge, prm.reserve);
        for g in 0..ng {
            bld.add_row(
                format!("headroom[{g}]"),
                vec![(p.start + g, 1.0), (r.start + g, 1.0)],
                Sense::Le,
                prm.p_max[g],
            );
        }
        (p, r)
    }

    /// Economic dispatch with reserves and penalized thermal slacks.
    pub fn build_ed_lp(&self, prm: &EdParams) -> Result<EdLp> {
        let mut bld = LpBuilder::new();
        let (p, r) = self.add_ed_core(&mut bld, prm, true);
        let (f, xi_pos, xi_neg) = self.add_network_block(&mut bld, prm, &p, true);
        Ok(EdLp {
            lp: bld.build()?,
            p,
            r,
            f,
            xi_pos,
            xi_neg,
        })
    }

    pub fn solve_ed(&self, inst: &Instance) -> Result<Dispatch> {
        let prm = self.params(inst);
        let ed = self.build_ed_lp(&prm)?;
        let sol = simplex_solve(&ed.lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(Error::Infeasible),
            LpStatus::Unbounded => return Err(Error::Unbounded),
        }
        let p = sol.y[ed.p.clone()].to_vec();
        let xi_th = ed
            .xi_pos
            .clone()
            .zip(ed.xi_neg.clone())
            .map(|(a, b)| sol.y[a] + sol.y[b])
            .collect();
        Ok(Dispatch {
            r: sol.y[ed.r.clone()].to_vec(),
            p,
            xi_th,
            objective: sol.objective,
        })
    }

    /// DC-OPF: balance plus hard flow limits, no reserves.
    ///
    /// Columns are `[p; f]`, rows are `[balance; flow definitions]`; there are
    /// no slack columns.
    pub fn build_dcopf_lp(&self, prm: &EdParams) -> Result<EdLp> {
        let ng = self.n_gens();
        let mut bld = LpBuilder::new();
        for g in 0..ng {
            bld.add_var(format!("p[{g}]"), prm.p_min[g], prm.p_max[g], prm.cost[g]);
        }
        let p = span(0, ng);
        bld.add_row("balance", p.clone().map(|j| (j, 1.0)).collect(), Sense::Eq, prm.total_load);
        let (f, xi_pos, xi_neg) = self.add_network_block(&mut bld, prm, &p, false);
        Ok(EdLp {
            lp: bld.build()?,
            p,
            r: ng..ng,
            f,
            xi_pos,
            xi_neg,
        })
    }

    /// Solve DC-OPF, returning the dispatch and the equality duals.
    pub fn solve_dcopf(&self, inst: &Instance) -> Result<(Dispatch, Vec<f64>)> {
        let prm = self.params(inst);
        let lp = self.build_dcopf_lp(&prm)?;
        let sol = simplex_solve(&lp.lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(Error::Infeasible),
            LpStatus::Unbounded => return Err(Error::Unbounded),
        }
        let p = sol.y[lp.p.clone()].to_vec();
        Ok((
            Dispatch {
                r: vec![0.0; p.len()],
                xi_th: vec![0.0; self.n_lines()],
                p,
                objective: sol.objective,
            },
            sol.z,
        ))
    }

    /// Closest economic-dispatch-feasible point to `p_hat` in the L1 norm.
    pub fn projection_repair(&self, inst: &Instance, p_hat: &[f64]) -> Result<Dispatch> {
        let ng = self.n_gens();
        if p_hat.len() != ng {
            return Err(Error::ShapeMismatch {
                expected: ng,
                got: p_hat.len(),
            });
        }
        if p_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite prediction".into()));
        }
        let prm = self.params(inst);
        let mut bld = LpBuilder::new();
        let (p, r) = self.add_ed_core(&mut bld, &prm, false);
        let (_, xi_pos, xi_neg) = self.add_network_block(&mut bld, &prm, &p, true);
        // thermal slacks are free in the projection apart from a tie-breaking weight
        let mut lp_cols = Vec::new();
        for g in 0..ng {
            let span_g = (prm.p_max[g] - prm.p_min[g]) + (p_hat[g].abs() + prm.p_max[g].abs());
            let tp = bld.add_var(format!("t+[{g}]"), 0.0, span_g, 1.0);
            let tm = bld.add_var(format!("t-[{g}]"), 0.0, span_g, 1.0);
            bld.add_row(
                format!("dist[{g}]"),
                vec![(p.start + g, 1.0), (tp, -1.0), (tm, 1.0)],
                Sense::Eq,
                p_hat[g],
            );
            lp_cols.push((tp, tm));
        }
        let mut lp = bld.build()?;
        for j in xi_pos.clone().chain(xi_neg.clone()) {
            lp.c[j] = 1e-6;
        }
        let sol = simplex_solve(&lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(Error::Infeasible),
            LpStatus::Unbounded => return Err(Error::Unbounded),
        }
        let mut pv = sol.y[p.clone()].to_vec();
        // snap coordinates that did not move back to the exact input
        for g in 0..ng {
            let (tp, tm) = lp_cols[g];
            if sol.y[tp] == 0.0 && sol.y[tm] == 0.0 {
                pv[g] = p_hat[g];
            }
        }
        let xi_th = self.thermal_slack(&prm, &pv);
        Ok(Dispatch {
            r: sol.y[r].to_vec(),
            objective: self.model_objective(&prm, &pv),
            p: pv,
            xi_th,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::{Bus, Generator, Line};

    /// Two generators on one bus, fed to a load bus over a roomy line.
    fn two_gen(p_max: [f64; 2], r_max: [f64; 2]) -> EdModel {
        let gen = |id: &str, pm: f64, rm: f64, c: f64| Generator {
            id: id.into(),
            bus: 1,
            p_min: 0.0,
            p_max: pm,
            r_max: rm,
            cost: c,
            gamma: 1.0,
        };
        let net = Network {
            version: 1,
            base_mva: 100.0,
            slack_bus: 1,
            buses: vec![Bus { id: 1, load: 0.0 }, Bus { id: 2, load: 8.0 }],
            generators: vec![gen("g1", p_max[0], r_max[0], 1.0), gen("g2", p_max[1], r_max[1], 2.0)],
            lines: vec![Line {
                id: "l".into(),
                from: 1,
                to: 2,
                susceptance: 10.0,
                f_max: 100.0,
            }],
        };
        EdModel::new(net).unwrap()
    }

    fn inst(model: &EdModel, load: f64, reserve: f64) -> Instance {
        let mut i = Instance::nominal(&model.net);
        i.loads = vec![0.0, load];
        i.reserve_req = reserve;
        i
    }

    #[test]
    fn cheapest_unit_serves_load() {
        let m = two_gen([10.0, 5.0], [0.0, 0.0]);
        let d = m.solve_ed(&inst(&m, 8.0, 0.0)).unwrap();
        assert!((d.p[0] - 8.0).abs() < 1e-9 && d.p[1].abs() < 1e-9);
        assert!((d.objective - 8.0).abs() < 1e-9);
    }

    #[test]
    fn reserve_fills_headroom() {
        let m = two_gen([10.0, 5.0], [4.0, 4.0]);
        let d = m.solve_ed(&inst(&m, 8.0, 6.0)).unwrap();
        // g1 offers its 2 MW of headroom, g2 its full 4 MW
        assert!((d.r.iter().sum::<f64>() - 6.0).abs() < 1e-9);
        assert!((d.p[0] - 8.0).abs() < 1e-9, "{:?}", d);
        assert!((d.r[0] - 2.0).abs() < 1e-9 && (d.r[1] - 4.0).abs() < 1e-9);
        assert!((d.objective - 8.0).abs() < 1e-9);
    }

    #[test]
    fn load_at_capacity() {
        let m = two_gen([10.0, 5.0], [4.0, 4.0]);
        let d = m.solve_ed(&inst(&m, 15.0, 0.0)).unwrap();
        assert!((d.p[0] - 10.0).abs() < 1e-9 && (d.p[1] - 5.0).abs() < 1e-9);
        assert!(d.r.iter().all(|&r| r.abs() < 1e-9));
        assert!(matches!(m.solve_ed(&inst(&m, 15.0, 1.0)), Err(Error::Infeasible)));
        assert!(matches!(m.solve_ed(&inst(&m, 16.0, 0.0)), Err(Error::Infeasible)));
    }

    #[test]
    fn thermal_slack_is_priced() {
        let mut m = two_gen([10.0, 5.0], [0.0, 0.0]);
        m.net.lines[0].f_max = 5.0;
        let m = EdModel::new(m.net).unwrap();
        let d = m.solve_ed(&inst(&m, 8.0, 0.0)).unwrap();
        assert!((d.xi_th[0] - 3.0).abs() < 1e-9);
        assert!((d.objective - (8.0 + 3.0 * 1500.0)).abs() < 1e-6);
    }

    #[test]
    fn dcopf_matches_ed_when_uncongested() {
        let m = EdModel::new(cases::case30()).unwrap();
        let i = Instance::nominal(&m.net);
        let ed = m.solve_ed(&i).unwrap();
        let (dc, _) = m.solve_dcopf(&i).unwrap();
        assert!((ed.objective - dc.objective).abs() < 1e-7 * ed.objective);
        assert!(ed.xi_th.iter().all(|&x| x < 1e-9));
    }

    #[test]
    fn dcopf_without_transfer_capacity_is_infeasible() {
        let mut m = two_gen([10.0, 5.0], [0.0, 0.0]);
        m.net.lines[0].f_max = 1e-3;
        let m = EdModel::new(m.net).unwrap();
        assert!(matches!(m.solve_dcopf(&inst(&m, 8.0, 0.0)), Err(Error::Infeasible)));
    }

    #[test]
    fn case3_is_congested_under_dcopf() {
        let m = EdModel::new(cases::case3()).unwrap();
        let i = Instance::nominal(&m.net);
        let (dc, z) = m.solve_dcopf(&i).unwrap();
        let prm = m.params(&i);
        let f = m.flows(&prm, &dc.p);
        assert!(f.iter().zip(&m.f_max).any(|(f, fm)| (f.abs() - fm).abs() < 1e-6));
        // congestion makes the expensive unit run
        assert!(dc.p[1] > 1.0);
        assert_eq!(z.len(), 1 + m.n_lines());
    }

    #[test]
    fn projection_keeps_feasible_points() {
        let m = two_gen([10.0, 5.0], [4.0, 4.0]);
        let i = inst(&m, 8.0, 2.0);
        let d = m.projection_repair(&i, &[5.0, 3.0]).unwrap();
        assert_eq!(d.p, vec![5.0, 3.0]);
    }

    #[test]
    fn projection_restores_balance() {
        let m = EdModel::new(cases::case30()).unwrap();
        let i = Instance::nominal(&m.net);
        let d = m.projection_repair(&i, &[0.0; 6]).unwrap();
        assert!((d.p.iter().sum::<f64>() - i.total_load()).abs() < 1e-8);
        // the L1 distance to zero is exactly the load
        let opt = m.solve_ed(&i).unwrap();
        let dist: f64 = d.p.iter().map(|v| v.abs()).sum();
        let dist_opt: f64 = opt.p.iter().map(|v| v.abs()).sum();
        assert!(dist <= dist_opt + 1e-8);
    }
}
