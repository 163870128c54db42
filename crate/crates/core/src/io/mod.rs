//! On-disk formats: trajectories, manifests, rasters and basin grids.

pub mod basin;
pub mod manifest;
pub mod raster;
pub mod trajectory;

pub use basin::{parse_basin_grid, BasinGrid, BasinPanel};
pub use manifest::{
    image_file_name, load_dataset, load_dataset_with, Dataset, ExtrinsicsEntry, Manifest, SensorEntry, SensorFrames,
    MANIFEST_FILE,
};
pub use trajectory::{format_trajectory, load_trajectory, parse_trajectory, save_trajectory};
