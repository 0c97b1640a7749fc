//! Spectral engine for the matrix Hill operator `-y'' + V(x) y = λ y` on the
//! line, where `V` is a real symmetric 1-periodic 2×2 matrix potential.
//!
//! The crate computes the 4×4 monodromy matrix, the trace invariants
//! `μ₁ = Tr M / 4`, `μ₂ = Tr M² / 4`, the branch function
//! `ρ = (μ₂ + 1)/2 − μ₁²`, the two-valued Lyapunov function
//! `Δ = μ₁ ± √ρ`, periodic/anti-periodic determinants `D±`, band/gap
//! structure and resonances (zeros of `ρ`).
//!
//! Exactly solvable models (free operator, constant `aJ`, the δ-comb
//! `aJ + γ δ_per J₁` and its smoothed family) live in [`closedform`] and act
//! as oracles for the generic propagation path.
//!
//! ```
//! use matrix_hill::{potential::PotentialSpec, HillOperator};
//!
//! let spec = PotentialSpec::parse_str(r#"{"smooth":{"builtin":"constant_diag","a":3.0}}"#).unwrap();
//! let op = HillOperator::from_spec(&spec, Default::default());
//! let data = op.lyapunov_at(num_complex::Complex64::new(12.0, 0.0)).unwrap();
//! assert!(data.rho.im.abs() < 1e-12);
//! ```

pub mod closedform;
pub mod contour;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod monodromy;
pub mod par;
pub mod potential;
pub mod report;
pub mod roots;
pub mod special;
pub mod spectrum;
pub mod verify;

pub use error::{HillError, Result};
pub use lyapunov::{HillOperator, LyapunovData};
pub use monodromy::{PropagationConfig, StateMatrix};
pub use potential::{NormalizedPotential, PotentialSpec};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
