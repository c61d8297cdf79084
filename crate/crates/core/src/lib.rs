//! Minimum disparity estimation of the offspring parameter of a controlled
//! branching process.
//!
//! The pipeline runs from a simulated (or observed) family tree, through the
//! nonparametric maximum likelihood estimate of the offspring law, to the
//! minimizer of a disparity between that estimate and a parametric family.
//! Likelihood (LD), Hellinger (HD) and negative exponential (NED) disparities
//! are provided, together with robustness diagnostics and a Monte Carlo
//! harness.

pub mod cbp;
pub mod disparity;
pub mod dist;
pub mod error;
pub mod mc;
pub mod mde;
pub mod npmle;
pub mod robust;

pub use cbp::{simulate, simulate_family, FamilyTree, TreeTotals};
pub use disparity::{disparity_gradient, disparity_value, Disparity};
pub use dist::{
    ContaminationSpec, ControlLaw, ControlSpec, OffspringFamily, Pmf, Poisson, ThetaDomain,
};
pub use error::{Error, Result};
pub use mde::{minimize, MdeResult, MinimizeOptions};
pub use npmle::npmle;
