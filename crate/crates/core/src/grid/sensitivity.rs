use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Network;
use crate::linalg::{DenseMatrix, Lu};

/// Denominator threshold below which a line outage islands the grid.
pub const RADIAL_TOL: f64 = 1e-9;

/// Linear DC sensitivities of line flows.
///
/// `ptdf[(l, b)]` is the MW flow on line `l` (from→to positive) for 1 MW
/// injected at bus `b` and withdrawn at the slack bus. `lodf[(l, k)]` is the
/// fraction of line `k`'s pre-outage flow that shows up on line `l` after `k`
/// trips.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SensitivityMatrices {
    pub ptdf: DenseMatrix<f64>,
    pub lodf: Option<DenseMatrix<f64>>,
    /// Lines whose outage islands part of the network.
    pub radial_lines: Vec<usize>,
}

pub fn compute_ptdf(net: &Network) -> Result<SensitivityMatrices> {
    let n = net.n_buses();
    let idx = net.bus_index();
    let slack = net.slack_index();
    let mut bbus = DenseMatrix::<f64>::zeros(n, n);
    let mut bf = DenseMatrix::<f64>::zeros(net.n_lines(), n);
    for (l, line) in net.lines.iter().enumerate() {
        let (f, t) = (idx[&line.from], idx[&line.to]);
        let b = line.susceptance;
        bbus[(f, f)] += b;
        bbus[(t, t)] += b;
        bbus[(f, t)] -= b;
        bbus[(t, f)] -= b;
        bf[(l, f)] = b;
        bf[(l, t)] = -b;
    }
    let keep: Vec<usize> = (0..n).filter(|&b| b != slack).collect();
    let mut ptdf = DenseMatrix::zeros(net.n_lines(), n);
    if !keep.is_empty() {
        let bred = bbus.select(&keep, &keep);
        let lu = Lu::factor(&bred).map_err(|_| Error::SingularTopology)?;
        let binv = lu.inverse();
        let bf_red = bf.select(&(0..net.n_lines()).collect::<Vec<_>>(), &keep);
        let red = bf_red.matmul(&binv)?;
        for l in 0..net.n_lines() {
            for (j, &b) in keep.iter().enumerate() {
                ptdf[(l, b)] = red[(l, j)];
            }
        }
    }
    Ok(SensitivityMatrices {
        ptdf,
        lodf: None,
        radial_lines: Vec::new(),
    })
}

/// Fill in the LODF matrix. Radial lines get an all-zero column (apart from
/// the `-1` diagonal) and are listed in `radial_lines`.
pub fn compute_lodf(sens: &SensitivityMatrices, net: &Network) -> Result<SensitivityMatrices> {
    let idx = net.bus_index();
    let nl = net.n_lines();
    let ptdf = &sens.ptdf;
    let mut lodf = DenseMatrix::zeros(nl, nl);
    let mut radial = Vec::new();
    for (k, line) in net.lines.iter().enumerate() {
        let (f, t) = (idx[&line.from], idx[&line.to]);
        let self_share = ptdf[(k, f)] - ptdf[(k, t)];
        let denom = 1.0 - self_share;
        if denom.abs() < RADIAL_TOL {
            radial.push(k);
            lodf[(k, k)] = -1.0;
            continue;
        }
        for l in 0..nl {
            lodf[(l, k)] = if l == k {
                -1.0
            } else {
                (ptdf[(l, f)] - ptdf[(l, t)]) / denom
            };
        }
    }
    Ok(SensitivityMatrices {
        ptdf: sens.ptdf.clone(),
        lodf: Some(lodf),
        radial_lines: radial,
    })
}

impl SensitivityMatrices {
    pub fn for_network(net: &Network) -> Result<Self> {
        compute_lodf(&compute_ptdf(net)?, net)
    }

    /// Line flows for a nodal net-injection vector.
    pub fn flows(&self, injection: &[f64]) -> Vec<f64> {
        self.ptdf.matvec(injection)
    }

    /// Column `k` of the LODF matrix, refusing islanding outages.
    pub fn lodf_column(&self, k: usize) -> Result<Vec<f64>> {
        let lodf = self
            .lodf
            .as_ref()
            .ok_or_else(|| Error::Config("LODF not computed".into()))?;
        if self.radial_lines.contains(&k) {
            return Err(Error::RadialLine(k));
        }
        Ok(lodf.column(k))
    }

    /// Line outages that can be studied without islanding.
    pub fn contingency_lines(&self) -> Vec<usize> {
        (0..self.ptdf.rows())
            .filter(|k| !self.radial_lines.contains(k))
            .collect()
    }
}

/// Nodal injections `G p - d` for a per-generator dispatch.
pub fn injections(net: &Network, p: &[f64], loads: &[f64]) -> Vec<f64> {
    let mut inj: Vec<f64> = loads.iter().map(|d| -d).collect();
    for (g, &b) in net.gen_bus_positions().iter().enumerate() {
        inj[b] += p[g];
    }
    inj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::{Bus, Line};

    fn two_bus() -> Network {
        let mut net = cases::case3();
        net.buses = vec![Bus { id: 1, load: 0.0 }, Bus { id: 2, load: 5.0 }];
        net.generators.truncate(1);
        net.generators[0].bus = 1;
        net.lines = vec![Line {
            id: "l12".into(),
            from: 1,
            to: 2,
            susceptance: 10.0,
            f_max: 100.0,
        }];
        net.slack_bus = 1;
        net.validate().unwrap();
        net
    }

    /// 3-bus triangle, unit susceptances everywhere, slack at bus 1.
    fn triangle() -> Network {
        let mut net = cases::case3();
        for l in &mut net.lines {
            l.susceptance = 1.0;
        }
        net
    }

    /// Dense angle-formulation DC power flow: solve B θ = P with θ_slack = 0.
    fn angle_flows(net: &Network, inj: &[f64]) -> Vec<f64> {
        let idx = net.bus_index();
        let n = net.n_buses();
        let slack = net.slack_index();
        let mut b = DenseMatrix::zeros(n, n);
        for l in &net.lines {
            let (f, t) = (idx[&l.from], idx[&l.to]);
            b[(f, f)] += l.susceptance;
            b[(t, t)] += l.susceptance;
            b[(f, t)] -= l.susceptance;
            b[(t, f)] -= l.susceptance;
        }
        // replace slack row with θ_slack = 0
        for j in 0..n {
            b[(slack, j)] = 0.0;
        }
        b[(slack, slack)] = 1.0;
        let mut rhs = inj.to_vec();
        rhs[slack] = 0.0;
        let theta = Lu::factor(&b).unwrap().solve(&rhs);
        net.lines
            .iter()
            .map(|l| l.susceptance * (theta[idx[&l.from]] - theta[idx[&l.to]]))
            .collect()
    }

    #[test]
    fn two_bus_ptdf() {
        let s = compute_ptdf(&two_bus()).unwrap();
        assert_eq!(s.ptdf.row(0), &[0.0, -1.0]);
    }

    #[test]
    fn zero_injection_zero_flow() {
        let net = cases::case30();
        let s = compute_ptdf(&net).unwrap();
        assert!(s.flows(&vec![0.0; 30]).iter().all(|&f| f == 0.0));
    }

    #[test]
    fn triangle_split_two_thirds() {
        let net = triangle();
        let s = compute_ptdf(&net).unwrap();
        // lines: 1→2, 1→3, 2→3; 1 MW in at bus 2, out at slack bus 1.
        let col: Vec<f64> = (0..3).map(|l| s.ptdf[(l, 1)]).collect();
        assert!((col[0] + 2.0 / 3.0).abs() < 1e-12, "{col:?}");
        assert!((col[1] + 1.0 / 3.0).abs() < 1e-12);
        assert!((col[2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn slack_column_is_exactly_zero() {
        let net = cases::case30();
        let s = compute_ptdf(&net).unwrap();
        let slack = net.slack_index();
        assert!(s.ptdf.column(slack).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_bus_outage_is_radial() {
        let net = two_bus();
        let s = SensitivityMatrices::for_network(&net).unwrap();
        assert!(matches!(s.lodf_column(0), Err(Error::RadialLine(0))));
        assert!(s.contingency_lines().is_empty());
    }

    #[test]
    fn triangle_lodf_matches_reduced_network() {
        let net = triangle();
        let s = SensitivityMatrices::for_network(&net).unwrap();
        let lodf = s.lodf.as_ref().unwrap();
        // Outage of 1→2 pushes all of its flow through 1→3→2.
        assert!((lodf[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((lodf[(2, 0)] + 1.0).abs() < 1e-12);
        // Compare with PTDF recomputed on the 2-line network.
        let mut reduced = net.clone();
        reduced.lines.remove(0);
        let inj = [0.0, 0.7, -0.7];
        let base = s.flows(&inj);
        let post = angle_flows(&reduced, &inj);
        assert!((base[1] + lodf[(1, 0)] * base[0] - post[0]).abs() < 1e-12);
        assert!((base[2] + lodf[(2, 0)] * base[0] - post[1]).abs() < 1e-12);
        for k in 0..3 {
            assert_eq!(lodf[(k, k)], -1.0);
        }
    }

    #[test]
    fn case30_radial_lines() {
        let net = cases::case30();
        let s = SensitivityMatrices::for_network(&net).unwrap();
        let names: Vec<_> = s
            .radial_lines
            .iter()
            .map(|&k| (net.lines[k].from, net.lines[k].to))
            .collect();
        assert_eq!(names, vec![(9, 11), (12, 13), (25, 26)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn balanced(raw: Vec<f64>) -> Vec<f64> {
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            raw.iter().map(|v| v - mean).collect()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn ptdf_matches_angle_power_flow(raw in prop::collection::vec(-50.0f64..50.0, 30)) {
                let net = cases::case30();
                let s = compute_ptdf(&net).unwrap();
                let inj = balanced(raw);
                let a = s.flows(&inj);
                let b = angle_flows(&net, &inj);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()));
                }
            }

            #[test]
            fn lodf_zeroes_outaged_line(raw in prop::collection::vec(-50.0f64..50.0, 30)) {
                let net = cases::case30();
                let s = SensitivityMatrices::for_network(&net).unwrap();
                let inj = balanced(raw);
                let f = s.flows(&inj);
                for k in s.contingency_lines() {
                    let col = s.lodf_column(k).unwrap();
                    let post_k = f[k] + f[k] * col[k];
                    prop_assert!(post_k.abs() <= 1e-8);
                    // and the other lines match a power flow on the reduced grid
                    let mut reduced = net.clone();
                    reduced.lines.remove(k);
                    let post = angle_flows(&reduced, &inj);
                    let mut j = 0;
                    for l in 0..net.n_lines() {
                        if l == k { continue; }
                        prop_assert!((f[l] + f[k] * col[l] - post[j]).abs() <= 1e-8 * (1.0 + post[j].abs()));
                        j += 1;
                    }
                }
            }
        }
    }
}
