//! Stochastic mechanics of the free, spinless relativistic particle.
//!
//! A positive-energy Klein-Gordon solution `φ = exp(R + iS/ħ)` drives a
//! Markov diffusion in a fixed Lorentz frame whose diffusion coefficient
//! varies with `∂S/∂t`. The quadratic variation of the driving local
//! martingale plays the role of proper time, and a random time change maps
//! the process into the proper-time domain, where the diffusion coefficient
//! becomes the constant `ħ/m`.
//!
//! Modules, bottom-up:
//!
//! * [`wave`]: plane waves, superpositions, admissibility residuals.
//! * [`kinematics`]: forward drift, diffusion, current/osmotic drifts, proper-time rate.
//! * [`sde`]: Euler-Maruyama path ensembles with accumulated quadratic variation.
//! * [`time_change`]: stopping times, the τ-domain process, invariant-measure identities.
//! * [`stats`]: hypothesis-style checks (Wiener law, Knight independence, densities, PT3).
//! * [`fokker_planck`]: 1D periodic finite-volume cross-check of the density evolution.
//! * [`config`] and [`export`]: experiment description and file formats.

pub mod config;
pub mod error;
pub mod export;
pub mod fokker_planck;
pub mod kinematics;
pub mod sde;
pub mod stats;
pub mod time_change;
pub mod vec3;
pub mod wave;

pub use error::{Error, Result};
pub use vec3::Vec3;
pub use wave::{PhysicalConstants, PlaneWaveSpec, WaveField};
