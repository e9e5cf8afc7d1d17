//! Dataset assembly, synthetic generation and dataset summaries.

pub mod assemble;
pub mod noise;
pub mod stats;
pub mod synth;

pub use assemble::{assemble_camo_coco, AssemblySpec};
pub use stats::{dataset_statistics, DatasetStatistics};
pub use synth::{render_sample, synth_generate, synth_samples, ShapeFamily, SynthSpec};
