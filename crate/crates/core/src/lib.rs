//! Deterministic sectional solver for the continuous coagulation and
//! collisional breakage equation (CCBE) with singular, symmetric collision
//! rates.
//!
//! Collisions at rate `phi(v, v')` destroy both colliders; a fraction
//! `E(v, v')` of collisions produces a merged particle `v + v'`
//! (coagulation), the complementary fraction `E1 = 1 - E` shatters the pair
//! into a power-law fragment cloud with daughter distribution
//! `P(v | v'; v'') = (theta + 2) v^theta / (v' + v'')^(1 + theta)`.
//! The solver works on the truncated volume domain `(1/n, n)` in one of two
//! modes: the conservative truncation (`tau = 1`) suppresses every collision
//! whose merged volume would leave the domain, while the non-conservative
//! truncation (`tau = 0`) lets such collisions proceed and books the
//! destroyed volume in an explicit `lost_mass` account. Fragment volume
//! falling below the resolved mesh is booked in `subgrid_mass`, so the triple
//! `(resolved mass, lost_mass, subgrid_mass)` is conserved to round-off by
//! construction and every run can be audited against that identity.
//!
//! The crate is organised as a pipeline:
//!
//! * [`kernel`]: rate model (collision rate, efficiency, daughter law) and
//!   the admissibility checker for the singular-kernel hypotheses;
//! * [`grid`]: geometric volume mesh and truncation bookkeeping;
//! * [`testfn`]: the closed-form test functions used by weak-form audits;
//! * [`operators`]: precomputed pair tables and the sectional right-hand
//!   side (number conserving within each breakage event, volume exact);
//! * [`integrator`]: fixed RK4 and adaptive RK23 steppers with positivity
//!   rejection;
//! * [`diagnostics`]: moment series, balance audits, growth bounds,
//!   weak-form residuals, equicontinuity and cross-grid distances;
//! * [`scenario`]: TOML scenario files, initial data, validation;
//! * [`runner`]: end-to-end runs and grid refinement studies.
//!
//! Everything is deterministic: identical inputs produce bitwise identical
//! trajectories, reports and serialised outputs on a given target.

// Validation guards are written as negated comparisons (`!(x > y)`) on
// purpose: NaN must fail them, and the suggested `x <= y` would let it pass.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod kernel;
pub mod operators;
pub mod runner;
pub mod scenario;
pub mod testfn;

pub use error::{Error, Result};
