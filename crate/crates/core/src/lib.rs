//! Equilibrium quality lines for matching-for-teams problems and
//! Wasserstein barycenters of discrete measures.
//!
//! Two solution routes are provided:
//!
//! * a primal route that builds the coupling linear program over the
//!   per-population plans `γ_i` and solves it with the sparse revised simplex
//!   in [`lp`] ([`barycenter`]);
//! * a dual route for quadratic costs that maximizes the concave, nonsmooth
//!   dual objective over transfer potentials with L-BFGS ([`dual`]), using
//!   lifted kd-tree queries ([`kdtree`]) for the c-transforms, and recovers
//!   the barycenter density from an ε-active set by constrained least squares
//!   ([`reconstruct`]).
//!
//! [`localization`] bounds the barycenter support before the quality grid is
//! discretized, and [`gaussian`] provides closed-form Gaussian barycenters for
//! validation.

pub mod barycenter;
pub mod dual;
pub mod error;
pub mod gaussian;
pub mod kdtree;
pub mod localization;
pub mod lp;
pub mod measure;
pub mod reconstruct;

pub use error::{Error, Result};
pub use measure::{CostKind, CostSpec, DiscreteMeasure, Grid, PointSet, SubGrid, TransportPlan};
