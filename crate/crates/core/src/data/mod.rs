//! Cube and ground-truth files, labeled pixel extraction, balanced splits
//! and synthetic cubes.

mod cube;
mod ground_truth;
mod split;
mod synth;

pub use cube::{
    header_path_for, load_cube, parse_index_list, reduce_bands, sidecar_path_for, write_cube,
    write_reduced, CubeHeader, HsiCube, DTYPE_F32_LE, LAYOUT_BIP,
};
pub use ground_truth::{load_ground_truth, write_ground_truth, GroundTruth};
pub use split::{balanced_split, to_pixels, DatasetSplits, LabeledPixels, SplitSizes, MIN_CLASS_SIZE};
pub use synth::{baseline, class_mean, planted_offset, synth_cube, SynthSpec, PLANTED_OFFSET};
