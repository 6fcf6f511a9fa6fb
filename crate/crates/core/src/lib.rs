//! Rigorous lower bounds for the domains of definition of generating
//! functions of symplectic maps.
//!
//! The crate stacks four layers of machinery:
//!
//! * [`interval`] — outward-rounded interval arithmetic, the atom of rigor;
//! * [`polyalg`] — truncated multivariate polynomial algebra (arithmetic,
//!   composition, inversion, calculus, range bounding);
//! * [`taylormodel`] — Taylor models: polynomial reference part plus a
//!   rigorous remainder interval, closed under arithmetic, intrinsics and
//!   antiderivation;
//! * [`flows`] — a verified Picard integrator producing flow enclosures of
//!   ODEs together with first-derivative (variational) enclosures.
//!
//! On top of those, [`symplectic`] builds generator types from symmetric
//! matrices and the associated gradient maps and potentials, and
//! [`certify`] turns first-derivative enclosures into machine-checked
//! invertibility certificates over boxes, including a search for maximal
//! certified boxes.

pub mod certify;
pub mod flows;
pub mod interval;
pub mod polyalg;
pub mod symplectic;
pub mod taylormodel;

pub use interval::{BoxDomain, Interval, IntervalError};
