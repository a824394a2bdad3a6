//! Parcel-grouped splits, pixel-set sampling, sequence assembly and batching.

pub mod batch;
pub mod pixelset;
pub mod sequence;
pub mod split;

pub use batch::{stack_chips, stack_sequences, Chip, ChipBatch, SampleBatch, SequenceBatch};
pub use pixelset::{sample_pixel_set, PixelSet};
pub use sequence::{assemble_sequence, observation_seed, subsample_indices, SequenceSample};
pub use split::{make_kfold, make_split_plan, make_test_split, ParcelInfo, SplitPlan};
