//! Sketching toolkit for q->p operator norms of dense matrices.
//!
//! The crate is organized around four layers:
//!
//! - [`dense`], [`exponent`], [`rng`]: dense matrix/vector arithmetic,
//!   norm-index algebra with an explicit infinity, and seeded sampling.
//! - [`oracles`]: ground-truth norms, either exact (column/row maxima, sign
//!   enumeration, power iteration) or bracketed by deterministic epsilon-nets.
//! - [`embed`]: randomized linear maps used as sketch building blocks
//!   (subspace embeddings, Gaussian l2->lp embeddings, p-stable and
//!   max-stability vector sketches) plus their calibration constants.
//! - [`sketch`] and [`lab`]: the matrix sketching families themselves
//!   (linear, streamable, mergeable) and the planted-distribution experiments
//!   that probe how much a sketch dimension can distinguish.
//!
//! ```
//! use qpnorm::sketch::{plan, Family, PlanOptions, Sketcher};
//! use qpnorm::{Exponent, Matrix, SeededRng};
//!
//! // Sketch a 12x12 matrix down to 12 x 3 block-sign combinations, stream
//! // one entry update, and estimate the inf->2 norm from the state alone.
//! let mut rng = SeededRng::new(7);
//! let a = qpnorm::rng::sample_gaussian_matrix(&mut rng, 12, 12, 1.0)?;
//! let opts = PlanOptions { block: 4, ..PlanOptions::default() };
//! let desc = plan(Family::BlockcolInfToQ, 12, 12, Exponent::TWO, Exponent::TWO, 42, &opts)?;
//! let sk = Sketcher::new(&desc)?;
//! let mut state = sk.apply(&a)?;
//! sk.update(&mut state, 0, 5, 2.5)?;
//! let estimate = sk.estimate(&state)?;
//!
//! // The block-sign estimator never overestimates the exact norm.
//! let updated = {
//!     let mut m = a.clone();
//!     m.set(0, 5, m.get(0, 5) + 2.5);
//!     m
//! };
//! let exact = qpnorm::oracles::norm_infty_to_p_exact(&updated, Exponent::TWO)?;
//! assert!(estimate.value <= exact * (1.0 + 1e-12));
//! # Ok::<(), qpnorm::Error>(())
//! ```

pub mod dense;
pub mod embed;
pub mod error;
pub mod exponent;
pub mod lab;
pub mod net;
pub mod oracles;
pub mod rng;
pub mod sketch;
mod svd;

pub use dense::{lp_norm, Matrix, Vector};
pub use error::{Error, Result};
pub use exponent::Exponent;
pub use rng::SeededRng;
