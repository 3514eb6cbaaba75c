//! Exact computation of the density of primes `p` for which a fixed rational
//! point on an elliptic curve over ℚ reduces to a point of order coprime to a
//! square-free integer `m`.
//!
//! The crate has three layers:
//!
//! * closed-form layer — exact Haar measures of kernel-class sets in
//!   `GL₂(ℤ_ℓ)` ([`classmeasure`]) and the per-prime / composite density
//!   formulas built from them ([`density`]), all in arbitrary-precision
//!   rational arithmetic;
//! * oracle layer — exhaustive enumeration of `GL₂(ℤ/ℓⁿℤ)` ([`modmat`]) and
//!   of finite subgroups of `(ℤ/mⁿℤ)² ⋊ GL₂(ℤ/mⁿℤ)` ([`arboreal`]), used to
//!   cross-check every closed form at small levels;
//! * empirical layer — a prime sweep that reduces the curve and point mod
//!   `p`, computes exact point orders by baby-step/giant-step in the Hasse
//!   interval, and reports the observed proportion ([`empirical`]).
//!
//! Quadratic characters attached to discriminants (Jacobi symbols, the
//! determinant characters `ε_d`, and the sign character `ψ` on `GL₂(𝔽₂)`)
//! live in [`characters`].

pub mod arboreal;
pub mod characters;
pub mod classmeasure;
pub mod density;
pub mod empirical;
pub mod modmat;
pub mod rational;

pub use arboreal::{ArborealLevelGroup, GroupElement, KummerAssumptions, PrimeComponent};
pub use characters::{psi, QuadraticFieldData, Sign, ZClass};
pub use classmeasure::{ClassConstraint, ClassMeasureTable, DEFAULT_ENUM_BOUND};
pub use density::{DensityBreakdown, SerreDensityInput};
pub use empirical::{CurveConfig, CurveModP, CurveOverQ, EmpiricalReport, RationalPoint};
pub use modmat::{KernelClass, ResidueMatrix};
pub use rational::ExactRational;
