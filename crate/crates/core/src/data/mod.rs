//! Ingestion, transforms, windowing, chronological splits and synthetic data.

mod frame;
mod split;
mod synthetic;
mod transform;
mod window;

pub use frame::{load_csv, sidecar_path, CsvOptions, SeriesFrame};
pub use split::{chronological_split, SplitSpec};
pub use synthetic::{
    generate_synthetic, random_edge_pattern, random_sparse_precision, random_var_coefficients,
    sample_gaussian, GroundTruth, SyntheticData, SyntheticKind, SyntheticSpec, VAR_COUPLING,
};
pub use transform::{
    apply_transform, invert_transform, replay_transforms, row_mean_std, FittedTransform,
    ForecastInverter, TransformKind,
};
pub use window::{make_windows, WindowedDataset, TEMPORAL_FEATURES};
