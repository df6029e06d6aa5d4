//! Linear-chain, semi-Markov and weak semi-Markov CRFs for span chunking.
//!
//! All three models share one representation: a directed acyclic lattice
//! whose root-to-leaf paths are exactly the admissible labelings of a
//! sentence. Inference, training and decoding run over that lattice.
//!
//! ```
//! use segcrf::{corpus::Split, lattice::ModelKind, synth, training};
//!
//! let train = synth::separable_corpus(40, 1, Split::Train);
//! let config = training::TrainConfig::new(ModelKind::Weak);
//! let model = training::train(&train, &config, None).unwrap();
//! let sentence = segcrf::text::tokenize("see the cat later");
//! let spans = model.predict_chars(&sentence).unwrap();
//! assert_eq!(spans.len(), 1);
//! ```

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod inference;
pub mod lattice;
pub mod model;
pub mod optim;
pub mod synth;
pub mod text;
pub mod training;

pub use error::{Error, Result};
pub use lattice::ModelKind;
pub use model::Model;
