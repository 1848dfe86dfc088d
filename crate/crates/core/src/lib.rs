//! Activity recognition from grayscale and depth video using features
//! learned by a stacked Independent Subspace Analysis network, encoded as
//! bag-of-visual-words histograms and classified with an RBF-kernel SVM.

pub mod classifier;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod isa;
pub mod linalg;
pub mod model_io;
pub mod patch_sampling;
pub mod rng;
pub mod synthetic;
pub mod video_io;
pub mod vocabulary;
pub mod whitening;

pub use error::{Error, Result};
