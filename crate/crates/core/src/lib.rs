//! Optimization proxies for parametric power-dispatch problems.

pub mod cases;
pub mod dual;
pub mod error;
pub mod features;
pub mod grid;
pub mod instance;
pub mod linalg;
pub mod lp;
pub mod models;
pub mod nn;
pub mod pdl;
pub mod primal;
pub mod repair;
pub mod risk;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MlpF64 = nn::Mlp<f64>;
pub type MlpF32 = nn::Mlp<f32>;
pub type StandardLpF64 = lp::StandardLp<f64>;
pub type StandardLpF32 = lp::StandardLp<f32>;
pub type LpSolutionF64 = lp::LpSolution<f64>;
pub type RepairContextF64 = repair::RepairContext<f64>;
pub type RepairContextF32 = repair::RepairContext<f32>;
pub type DualSolutionF64 = dual::DualSolution<f64>;
