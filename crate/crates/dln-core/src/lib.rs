//! Style-controllable sequence generation built around domain-specific
//! layer-norm parameters.
//!
//! Two generators share every weight of a layer-normalized LSTM decoder
//! except the per-gate layer-norm gain/shift vectors. The source domain
//! trains on paired feature-vector/description data, the target domain on
//! unpaired sentence reconstruction; new styles plug in as extra layer-norm
//! sets plus vocabulary extension rows. The crate also carries the
//! numeric core (manual reverse-mode gradients, Adam, clipping, a
//! finite-difference checker), greedy/beam decoding, the evaluation metrics
//! and a deterministic synthetic data generator.

pub mod checkpoint;
pub mod classifier;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod lnlstm;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod store;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use error::{DlnError, Result};
pub use tensor::{Scalar, Tensor};
