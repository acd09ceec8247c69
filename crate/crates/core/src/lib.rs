//! Multichannel virtual-sensing active noise control.
//!
//! Feedforward controllers are trained against virtual error sensors,
//! auxiliary filters then learn the physical-sensor field, and in the control
//! stage the controllers adapt on the physical sensors alone. The control
//! update is either the adjoint (filtered-error) LMS or the filtered-reference
//! LMS baseline; [`complexity`] counts what each costs per sample.

pub mod acoustics;
pub mod adaptive;
pub mod complexity;
pub mod dsp;
pub mod error;
pub mod export;
pub mod pipeline;
pub mod presets;
pub mod seed;
pub mod snapshot;

pub use error::{Error, Result};
