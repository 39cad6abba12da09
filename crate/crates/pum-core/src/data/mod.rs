//! Synthetic data with known ground truth, CSV ingestion and subsampling.

mod subsample;
mod synthetic;
mod table;

pub use subsample::{subsample, SubsampleMode};
pub use synthetic::{generate_synthetic, sample_choice, SyntheticSpec};
pub use table::{load_csv, write_csv, AlternativeColumns, CsvSchema, LoadOptions, LoadedDataset, Scaler};
