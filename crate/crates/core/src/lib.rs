//! Roman Urdu microtext sentiment toolkit.
//!
//! Pieces, bottom to top:
//!
//! - [`textnorm`]: phonetic normalization of noisy Roman Urdu microtext.
//! - [`corpus`]: vocabularies and labeled-dataset ingestion/splitting.
//! - [`embed`]: from-scratch CBOW, subword skip-gram, and GloVe trainers
//!   with lookup, document pooling, and nearest-neighbour queries.
//! - [`features`] / [`shallow`]: TF-IDF and the Naive Bayes / Logistic
//!   Regression / linear SVM baselines.
//! - [`net`]: the multi-channel GRU classifier (three embedding channels,
//!   three GRUs each, optional Bi-GRU, max-over-time pooling) with exact
//!   backpropagation through time.
//! - [`train`]: rMSprop, early stopping with patience, checkpointing, and
//!   multi-class evaluation.
//!
//! The numeric core is generic over the scalar type via [`Scalar`]
//! (`f32`/`f64`); the `*32`/`*64` aliases below pick a concrete precision.
//! `f64` is the reference configuration; gradient checks run there.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod features;
pub mod mat;
pub mod net;
pub mod scalar;
pub mod shallow;
pub mod textnorm;
pub mod train;

pub use error::{Error, Result};
pub use mat::Mat;
pub use scalar::{cast, Scalar};

pub type Mat32 = Mat<f32>;
pub type Mat64 = Mat<f64>;
pub type EmbeddingMatrix32 = embed::EmbeddingMatrix<f32>;
pub type EmbeddingMatrix64 = embed::EmbeddingMatrix<f64>;
pub type TfidfModel32 = features::TfidfModel<f32>;
pub type TfidfModel64 = features::TfidfModel<f64>;
pub type ShallowModel32 = shallow::ShallowModel<f32>;
pub type ShallowModel64 = shallow::ShallowModel<f64>;
pub type HybridModel32 = net::HybridModel<f32>;
pub type HybridModel64 = net::HybridModel<f64>;
