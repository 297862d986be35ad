//! Residual compression: the stochastic fixed-interval quantizer, canonical
//! Huffman coding under an `R x d` bit budget, and Top-L sparsification.

mod bits;
pub mod huffman;
mod quantizer;
mod sparse;

pub use bits::{BitReader, BitWriter};
pub use huffman::{entropy_decode, entropy_encode, payload_bits, CodeTable, EncodedPayload};
pub use quantizer::{
    dequantize, quantize, quantize_levels, select_interval, IntervalChoice, QuantizedResidual, QuantizerConfig,
    MAX_REFINEMENT,
};
pub use sparse::{top_l, SparseResidual};
