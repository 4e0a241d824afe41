//! Accelerated generation of perception-failure scenarios.
//!
//! A small parking-garage traffic simulator drives background vehicles (BVs)
//! around an autonomous vehicle (AV) whose perception is a binned surrogate
//! detector. Failure windows recorded in the ordinary environment are cut
//! down to the states of the BVs that mattered, a per-decision-point route
//! model is fit to them, and the model is switched in for those BVs at run
//! time to raise the rate of perception failures.
//!
//! Module map: [`network`] maps and geometry queries, [`sim`] traffic
//! stepping, [`perception`] the surrogate detector, [`recorder`] logs and
//! failure-scenario extraction, [`policy`] the route model, [`envgen`] run
//! time switching, [`eval`] Monte Carlo evaluation, [`cli`] the driver.

pub mod cli;
pub mod envgen;
pub mod error;
pub mod eval;
pub mod geom;
pub mod network;
pub mod perception;
pub mod policy;
pub mod recorder;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
