//! Static grid model and DC sensitivity factors.

mod network;
mod sensitivity;

pub use network::{
    load_network, save_network, Bus, BusId, Generator, Line, Network, GRID_FORMAT_VERSION,
};
pub use sensitivity::{
    compute_lodf, compute_ptdf, injections, SensitivityMatrices, RADIAL_TOL,
};
