//! Bundled graph fixtures: the strided ResNet stem and residual block,
//! an EfficientNet-style strided block, and the full micro-ResNet used
//! by the training harness. The JSON files under `fixtures/` are the
//! source of truth; they are embedded so library users get them without
//! a file path.

use super::ir::LayerGraph;

pub const RESNET_STEM_JSON: &str = include_str!("../../fixtures/resnet_stem.json");
pub const RESNET_BLOCK_JSON: &str = include_str!("../../fixtures/resnet_block.json");
pub const EFFICIENTNET_BLOCK_JSON: &str = include_str!("../../fixtures/efficientnet_block.json");
pub const MICRO_RESNET_JSON: &str = include_str!("../../fixtures/micro_resnet.json");

pub fn resnet_stem() -> LayerGraph {
    LayerGraph::parse(RESNET_STEM_JSON).expect("bundled fixture is valid")
}

pub fn resnet_block() -> LayerGraph {
    LayerGraph::parse(RESNET_BLOCK_JSON).expect("bundled fixture is valid")
}

pub fn efficientnet_block() -> LayerGraph {
    LayerGraph::parse(EFFICIENTNET_BLOCK_JSON).expect("bundled fixture is valid")
}

pub fn micro_resnet() -> LayerGraph {
    LayerGraph::parse(MICRO_RESNET_JSON).expect("bundled fixture is valid")
}
