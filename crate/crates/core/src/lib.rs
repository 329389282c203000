//! Stratified convex analysis over finite probability spaces.
//!
//! Everything in this crate is organised around a [`space::StratifiedSpace`]:
//! a finite probability space carrying two nested partitions, a fine one
//! (the coordinate atoms of the module) and a coarse one (the atoms of the
//! conditioning algebra). Scalars are one extended-real value per coarse
//! atom, module elements are one real per fine atom, and every construction
//! (seminorms, convex bodies, convex functions) acts blockwise per coarse
//! atom.
//!
//! The main subsystems:
//!
//! * [`scalar`] — the ordered algebra of per-atom extended reals, with the
//!   gluing, lattice, generalized-inverse and sign operations.
//! * [`module`] — module elements and functionals, the seminorm catalogue
//!   (conditional p-norms, finite suprema, concatenations, weighted
//!   coordinate sups), operator bounds and functional decomposition.
//! * [`sets`] — stratified convex bodies, gauge functionals, and the random
//!   distance to a body.
//! * [`separation`] — stratified hyperplane separation certificates,
//!   separator normalization, neighborhood separation and the banding probe
//!   for the open-but-not-closed positive-minimum set.
//! * [`fenchel`] — stratified convex functions, conjugation, biconjugation,
//!   affine minorants, event classification and closures.
//! * [`risk`] — the conditional entropic risk measure demo.
//! * [`harness`] — seeded instance generators, suite runners and
//!   machine-readable reports, backing the `stratcvx` CLI.

pub mod event;
pub mod fenchel;
pub mod geom;
pub mod harness;
pub mod lp;
pub mod module;
pub mod risk;
pub mod scalar;
pub mod separation;
pub mod sets;
pub mod space;

pub use event::Event;
pub use scalar::{RandomScalar, Xr};
pub use space::{Partition, StratifiedSpace};
