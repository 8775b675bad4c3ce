//! Face anti-spoofing posed as visual question answering, at desk scale.
//!
//! Synthetic visual features pass through a globally aware connector into a
//! small causal decoder that answers "Is this photo of a real person?" with
//! a judgment followed by an interpretation. Training mixes the two answer
//! parts with a lopsided loss; fake-sample captions are filtered by spoof
//! keywords; evaluation runs cross-domain protocols and reports HTER and AUC.
//!
//! ```
//! use spoofvqa::metrics::{compute_auc, ScoredSample};
//! use spoofvqa::scf::Label;
//!
//! let s = vec![
//!     ScoredSample::new(0.9, Label::Real, "a"),
//!     ScoredSample::new(0.2, Label::Fake, "a"),
//! ];
//! assert_eq!(compute_auc(&s).unwrap(), 100.0);
//! ```

pub mod answer_lm;
pub mod container;
pub mod error;
pub mod gac;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
pub mod pipeline;
pub mod protocol;
pub mod rng;
pub mod scf;
pub mod synth;
pub mod tensor;
pub mod vocab;

pub use error::{Error, Result};
