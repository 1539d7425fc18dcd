//! ratekit: representation learning for ratemaking at desk scale.
//!
//! The crate splits predictive modeling in two: a representation stage that
//! turns non-vectorial inputs (sequences, text, image grids, spatial point
//! patterns) into fixed-length embedding vectors, and a regression stage
//! (a GLM) that consumes them. Modules:
//!
//! * [`tensor`] / [`rng`] — dense arrays, numeric kernels, seeded randomness
//! * [`nn`] — layers, backpropagation, SGD, gradient checking
//! * [`dimred`] — standardization and PCA
//! * [`autoencode`] — bottleneck and convolutional autoencoders
//! * [`sequence`] — simple RNN with backpropagation through time
//! * [`text`] — vocabulary, word2vec, document centroids
//! * [`geo`] — spatial grids, data cuboids, regional autoencoder
//! * [`glm`] — exponential-family regression via IRLS
//! * [`evaluate`] — intrinsic (cosine) and extrinsic (deviance) evaluation
//! * [`embedding`] — the shared id -> vector table and its file format

pub mod autoencode;
pub mod dimred;
pub mod embedding;
pub mod error;
pub mod evaluate;
pub mod geo;
pub mod glm;
pub mod nn;
pub mod pnm;
pub mod rng;
pub mod sequence;
pub mod serial;
pub mod tensor;
pub mod text;

pub use embedding::EmbeddingTable;
pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::Tensor;
