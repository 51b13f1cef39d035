//! Sample compression for SPNs: simplex nets, leaf codecs, the network
//! encoder/decoder and the binary message format.

pub mod bits;
pub mod leaf;
pub mod simplex;
pub mod spn;
pub mod wire;

pub use bits::BitString;
pub use leaf::{
    categorical_bit_budget, leaf_decode_categorical, leaf_decode_gaussian, leaf_encode_categorical,
    leaf_encode_gaussian, GaussianCodecConfig,
};
pub use simplex::quantize_simplex;
pub use spn::{
    spn_decode, spn_encode, CodecParams, CodecVariant, CompressedMessage, CompressionBudget, MessageLayout,
};
