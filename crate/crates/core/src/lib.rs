//! Nighttime lens flare formation and self-supervised joint flare removal.
//!
//! The crate has two halves. The forward half ([`formation`]) turns a clean
//! night image into a flared one by adding a scattered glow around each light
//! source and a reflective ghost at the point-symmetric position about the
//! optical center. The inverse half recovers a flare-free estimate from a
//! single flared frame without any training data:
//!
//! ```text
//! R ──► light::extract_light_mask ──► M_s
//!        │                           │
//!        │        ostpm::derive_ghost_mask ──► M_r ──► ostpm::inpaint ──► y
//!        │
//!        └──► solver::run: fit  ŷ = clamp~(D + BOL(R·M_s ∗ k) + light map)  to y
//! ```
//!
//! All intensities are linear light in `[0, 1]`, stored as `f64`.

pub mod conv;
pub mod error;
pub mod formation;
pub mod image;
pub mod io;
pub mod kernel;
pub mod light;
pub mod metrics;
pub mod ostpm;
pub mod pipeline;
pub mod psf;
pub mod rng;
pub mod scenes;
pub mod solver;

pub use error::{FlareError, Result};
pub use image::{ImageBuffer, Mask};
pub use kernel::FlareKernel;
