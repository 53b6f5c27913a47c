//! Tweet sentiment classification with convolutional networks trained in
//! three phases: skip-gram word embeddings, distant supervision on
//! emoticon-labeled tweets, then supervised training on gold labels.
//!
//! ```
//! use tweetcnn::textprep::{preprocess, weak_label, WeakLabel};
//!
//! let tokens = preprocess("Loving it @bob http://x.co :)");
//! assert_eq!(tokens.joined(), "loving it <user> <url> :)");
//! let (label, rest) = weak_label(&tokens).unwrap();
//! assert_eq!(label, WeakLabel::Positive);
//! assert_eq!(rest.joined(), "loving it <user> <url>");
//! ```

pub mod config;
pub mod embed;
mod error;
pub mod metrics;
pub mod model_io;
pub mod network;
pub mod nncore;
pub mod optim;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod textprep;
pub mod vocab;

pub use error::{Error, Result};
pub use model_io::{Model, Prediction};
pub use network::{ArchName, ArchitectureSpec, NetworkParams};
pub use pipeline::{Sentiment, TrainConfig};
pub use vocab::Vocabulary;
