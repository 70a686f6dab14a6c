//! Joint deblurring and low-light enhancement by unrolled augmented-Lagrangian
//! optimization.
//!
//! A blurry low-light observation is modeled as `X = H ⊗ (R ⊙ L)` where `H`
//! is a blur kernel, `R` a reflectance image and `L` a smooth illuminance map.
//! The solver splits the joint objective with auxiliary variables `P ≈ R`,
//! `Q ≈ L`, `Z ≈ I` (the latent sharp image) and runs a fixed number of
//! unrolled blocks. Each block performs seven updates in order: `P`, `R`,
//! `Q`, `L`, `Z`, `I`, then the three Lagrange multipliers. The `P`/`Q`/`Z`
//! updates are proximal steps whose regularizers are pluggable
//! [`priors::DataOperator`]s; `R`, `L` and the multipliers are closed-form;
//! `I` is a circulant least-squares solve evaluated in the Fourier domain.
//!
//! The companion modules provide synthetic degradation ([`degrade`]), the
//! final illuminance-enhancement/recomposition stage ([`enhance`]),
//! full-reference quality metrics ([`metrics`]) and procedural test scenes
//! ([`scenes`]).

pub mod conv;
pub mod degrade;
pub mod enhance;
mod error;
pub mod fft;
pub mod image;
pub mod kernel;
pub mod metrics;
pub mod priors;
pub mod scenes;
pub mod solver;

pub use error::{CoreError, Result};
pub use image::{Illuminance, Image};
pub use kernel::Kernel;
