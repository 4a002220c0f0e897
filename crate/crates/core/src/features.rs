//! Network inputs derived from an instance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Network;
use crate::instance::Instance;

/// Which instance parameters a proxy sees.
///
/// Loads enter as `d/d_base − 1` at buses with a nonzero base load, the
/// reserve requirement as a fraction of the largest unit, and cost and
/// capacity scales as offsets from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub load_buses: Vec<usize>,
    pub base_loads: Vec<f64>,
    pub reserve_unit: Option<f64>,
    pub scales: bool,
    pub n_gens: usize,
}

impl FeatureMap {
    fn loads(net: &Network) -> (Vec<usize>, Vec<f64>) {
        let base = net.base_loads();
        let buses = (0..base.len()).filter(|&b| base[b] > 0.0).collect();
        (buses, base)
    }

    /// Loads and reserve requirement.
    pub fn for_ed(net: &Network) -> Self {
        let (load_buses, base_loads) = Self::loads(net);
        let largest = net.p_max().into_iter().fold(0.0, f64::max);
        Self {
            load_buses,
            base_loads,
            reserve_unit: Some(largest.max(f64::MIN_POSITIVE)),
            scales: false,
            n_gens: net.n_gens(),
        }
    }

    /// Loads only.
    pub fn for_loads(net: &Network) -> Self {
        let (load_buses, base_loads) = Self::loads(net);
        Self {
            load_buses,
            base_loads,
            reserve_unit: None,
            scales: false,
            n_gens: net.n_gens(),
        }
    }

    /// Loads, costs and capacities.
    pub fn for_scopf(net: &Network) -> Self {
        Self {
            scales: true,
            ..Self::for_loads(net)
        }
    }

    pub fn dim(&self) -> usize {
        self.load_buses.len() + usize::from(self.reserve_unit.is_some()) + if self.scales { 2 * self.n_gens } else { 0 }
    }

    pub fn features(&self, inst: &Instance) -> Result<Vec<f64>> {
        if inst.loads.len() != self.base_loads.len() {
            return Err(Error::ShapeMismatch {
                expected: self.base_loads.len(),
                got: inst.loads.len(),
            });
        }
        let mut x = Vec::with_capacity(self.dim());
        x.extend(self.load_buses.iter().map(|&b| inst.loads[b] / self.base_loads[b] - 1.0));
        if let Some(unit) = self.reserve_unit {
            x.push(inst.reserve_req / unit);
        }
        if self.scales {
            x.extend(inst.cost_scale.iter().map(|s| s - 1.0));
            x.extend(inst.pmax_scale.iter().map(|s| s - 1.0));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn nominal_loads_map_to_zero() {
        let net = cases::case3();
        let fm = FeatureMap::for_ed(&net);
        assert_eq!(fm.dim(), 3);
        let mut inst = Instance::nominal(&net);
        inst.reserve_req = 100.0;
        assert_eq!(fm.features(&inst).unwrap(), vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn scopf_features_include_scales() {
        let net = cases::scopf3();
        let fm = FeatureMap::for_scopf(&net);
        assert_eq!(fm.dim(), 2 + 6);
        let mut inst = Instance::nominal(&net);
        inst.cost_scale[1] = 1.1;
        let x = fm.features(&inst).unwrap();
        assert!((x[3] - 0.1).abs() < 1e-12);
    }
}
