//! Any-to-one voice conversion built on discrete and soft speech units.
//!
//! The pipeline has three stages: a content encoder turns backbone
//! features into speech units, an acoustic model maps unit sequences to
//! target-speaker log-mel frames, and a Griffin-Lim vocoder renders audio.
//! Two content encoders are provided. The discrete encoder quantizes each
//! frame to its nearest k-means centroid. The soft encoder instead
//! predicts, per frame, a distribution over those discrete units through a
//! temperature-scaled cosine softmax against a trainable embedding table,
//! keeping information that hard assignment throws away.
//!
//! The [`eval`] module carries the objective metric battery used to
//! compare the two: WER/PER with a per-symbol breakdown, speaker
//! verification EER over cosine-scored trial sets, and MOS aggregation.
//!
//! Everything is deterministic under a seed: clustering, training,
//! trial sampling and synthesis all reproduce bit-identically.

pub mod acoustic;
pub mod adam;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod mat;
pub mod soft;
pub mod tensor;
pub mod types;
pub mod units;

pub use acoustic::{convert, AcousticParams, ContentEncoder};
pub use adam::TrainConfig;
pub use error::{Error, Result};
pub use manifest::{parse_manifest, Manifest, ManifestRecord};
pub use mat::Mat;
pub use soft::{encode_soft, train_soft_encoder, SoftEncoderParams};
pub use tensor::{read_tensor, write_tensor, TensorKind};
pub use types::{FeatureSequence, SoftUnitSequence, UnitSequence};
pub use units::{encode_discrete, kmeans_fit, speaker_normalize, Codebook};
