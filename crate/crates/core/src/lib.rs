//! Shooting and global-bifurcation analysis for axisymmetric tip-growth models.
//!
//! Meridian curves are parameterized by arclength `s` and described by the
//! normal angle `ρ = cos φ` and the distance `r` from the symmetry axis. A
//! solution starts at the tip (`ρ = 1`, `r = 0`) and is classified by how it
//! leaves the physically meaningful region:
//!
//! * **A**: `ρ` reaches `0` while `ρ' < 0` (the surface turns back over itself),
//! * **B**: `ρ` attains a local minimum with `ρ > 0` (the surface folds inward),
//! * **X**: neither happens and the curve approaches a cylinder of finite radius.
//!
//! Modules:
//! * [`integrate`]: adaptive Dormand–Prince integrator with dense output and events.
//! * [`toy`]: the two-dimensional model with a prescribed growth profile `g`.
//! * [`classify`]: trajectory classification, bisection for the critical parameter and scans.
//! * [`bats`]: the five-dimensional ballistic ageing thin-shell model.
//! * [`shape`]: profile reconstruction, curvatures and the tip umbilical check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bats;
pub mod classify;
pub mod integrate;
pub mod shape;
pub mod toy;

pub use classify::{Classification, Tag};
pub use integrate::{integrate, Direction, EventSpec, IntegratorConfig, Quadrature, Trajectory};
