//! Quantized min-sum LDPC decoding with trainable weights, boosted training
//! on uncorrectable error patterns, and Monte-Carlo evaluation.

pub mod boost;
pub mod channel;
pub mod code;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod parallel;
pub mod quant;
pub mod train;
pub mod weights;

pub use channel::{ChannelKind, ChannelSpec, LlrFrame};
pub use code::{Protograph, TannerGraph};
pub use decoder::{CheckRule, DecodeTrace, Decoder, DecoderConfig, Workspace};
pub use error::{Error, Result};
pub use quant::Quantizer;
pub use weights::{SharingMode, WeightSet};
