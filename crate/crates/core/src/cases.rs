//! Grids bundled with the crate.

use std::path::Path;

use crate::error::Result;
use crate::grid::{load_network, Network};

const CASE3: &str = include_str!("../data/case3.json");
const CASE30: &str = include_str!("../data/case30.json");
const SCOPF3: &str = include_str!("../data/scopf3.json");

/// 3 buses, 2 generators, one congestion-prone line (1→3).
pub fn case3() -> Network {
    Network::from_json_str(CASE3, "case3.json").expect("bundled case3 is valid")
}

/// IEEE 30-bus topology with a six-unit fleet sized for reserve studies.
pub fn case30() -> Network {
    Network::from_json_str(CASE30, "case30.json").expect("bundled case30 is valid")
}

/// 3-bus, 3-unit fixture with low droop so N-1 security binds.
pub fn scopf3() -> Network {
    Network::from_json_str(SCOPF3, "scopf3.json").expect("bundled scopf3 is valid")
}

pub fn by_name(name: &str) -> Option<Network> {
    match name {
        "case3" => Some(case3()),
        "case30" => Some(case30()),
        "scopf3" => Some(scopf3()),
        _ => None,
    }
}

/// Bundled case name or a path to a grid file.
pub fn resolve(name_or_path: &str) -> Result<Network> {
    match by_name(name_or_path) {
        Some(net) => Ok(net),
        None => load_network(Path::new(name_or_path)),
    }
}
