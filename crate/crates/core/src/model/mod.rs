//! The mapping network `f_θ`, the higher-order network that emits `θ`, and
//! the checkpoint format that carries both.

mod checkpoint;
mod encoder;
mod image;
mod mapping;

pub use checkpoint::{Checkpoint, OptimizerSnapshot, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encoder::{ConvTrunkSpec, EncoderMode, EncoderSpec, HofInput, HofModel};
pub use image::InputImage;
pub use mapping::{
    mapping_forward, mapping_forward_tape, pack, unpack, LayerWeights, MappingNet, MappingNetSpec,
    MappingOutput, TangentPlane, WeightVector, DEGENERATE_DIRECTION,
};

pub use checkpoint::write_atomic;
pub(crate) use mapping::sphere_tensor;
