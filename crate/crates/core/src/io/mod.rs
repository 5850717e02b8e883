//! Weight archives, datasets, depth rendering and text reports.

pub mod archive;
pub mod dataset;
pub mod render;
pub mod report;
pub mod synth;

pub use archive::{decode_archive, encode_archive, load_weights, read_header, save_weights};
pub use dataset::{
    load_sample, read_depth, read_rgb, write_depth, write_rgb_png, Dataset, DatasetManifest, DepthEncoding,
    ManifestEntry,
};
pub use render::{render_depth, Colormap};
pub use report::KvReport;
pub use synth::{generate_synthetic_dataset, generate_synthetic_dataset_with, Scene, SynthOptions};
