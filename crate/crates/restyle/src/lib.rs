//! Label-free text style transfer at desk scale.
//!
//! The pipeline trains a small encoder/decoder transformer together with a
//! "style extractor" stack on unlabeled adjacent-sentence pairs: the extractor
//! reads the sentence preceding a target, pools it into a fixed-width style
//! vector, and the decoder reconstructs the target from a corrupted input
//! conditioned on that vector plus sampled add/delete-rate ranges. At
//! inference time a handful of exemplar sentences per class define a direction
//! in style space, and transfers move the input's own style vector along it.
//!
//! Modules follow the pipeline stages:
//!
//! * [`corpus`] — review-line preprocessing, synthetic style corpora,
//!   adjacent-pair extraction, and the word-level vocabulary.
//! * [`corruption`] — drop/replace/shuffle noise, add/delete rates, and the
//!   stochastic tuning-range sampler.
//! * [`model`] — the three transformer stacks, style fusion, loss, and
//!   decoding.
//! * [`training`] — the joint reconstruction training loop.
//! * [`inference`] — exemplar-based transfer, completion, shortening, and
//!   random augmentation.
//! * [`eval`] — oracle classifiers, BLEU, G-score, and style-space
//!   separation.

pub mod corpus;
pub mod corruption;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod rng;
pub mod training;

pub use error::RestyleError;

/// Token ids after vocabulary lookup; the unit every stage operates on.
pub type TokenSeq = Vec<usize>;
