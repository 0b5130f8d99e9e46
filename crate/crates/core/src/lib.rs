//! Photovoltaic human-activity recognition core.
//!
//! Everything here is pure computation over in-memory values: stream
//! synchronization, low-pass filtering, overlapping windows, relative
//! features, a transformer classifier with hand-written gradients, the
//! evaluation protocols and a synthetic signal generator. File formats, the
//! command line and parallel execution live in the `solstep` crate.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod error;
pub mod features;
pub mod filter;
pub mod harness;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod synthgen;
pub mod window;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// ADC reference voltage of the sensing board.
pub const V_REF: f64 = 3.3;
/// Largest value a 10-bit converter can report.
pub const ADC_MAX: u16 = 1023;
/// Nominal scan rate of the wearable devices.
pub const DEFAULT_RATE_HZ: f64 = 23.1;

/// Seeded generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
