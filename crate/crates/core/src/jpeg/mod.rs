//! JPEG quantization machinery: base tables and quality scaling, the
//! tiled quantization map, marker-level bitstream parsing, and the
//! degradation simulator.

mod dct;
mod parse;
mod qmap;
mod qtable;
mod sim;

pub use dct::{fdct8x8, idct8x8, quantize_dequantize};
pub use parse::{
    parse_jpeg_metadata, serialize_dqt_segment, serialize_sof0_segment, serialize_test_jpeg,
    ComponentInfo, JpegMetadata,
};
pub use qmap::{
    build_qmap, pad_to_block_multiple, pad_to_multiple, stack_image_and_qmap, unpad, OriginalSize,
    QuantMap,
};
pub use qtable::{
    dezigzag, ijg_base_tables, scale_qtable, scaled_ijg_tables, zigzag, Precision, QuantTable,
    ZIGZAG,
};
pub use sim::{compress_simulate, Subsampling};
