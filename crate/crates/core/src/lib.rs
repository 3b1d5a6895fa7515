//! Decomposes a solid triangle mesh into axis-aligned boxes that can be
//! printed at the same time on several printers.
//!
//! The pipeline is: optional mirror-symmetry split, orientation for minimal
//! overhang, voxel grid classification, greedy block growth from seeds,
//! gap resolution, and finally clipping the mesh to every block.

pub mod batch;
pub mod blocks;
pub mod clip;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod mesh;
pub mod meta;
pub mod preprocess;
pub mod resolve;

pub use clip::{clip_to_box, cut_by_plane, point_in_mesh, ClipMode, ClipResult, Plane};
pub use error::{Error, Result};
pub use mesh::{
    aabb_of, load_mesh, measure, validate_watertight, write_binary_stl, Aabb, MeshFormat, MeshMeasures,
    TriangleMesh, Vec3, WatertightReport,
};
pub use batch::{parse_config, run_batch, BatchManifest, Baseline, PrinterConfig};
pub use blocks::{Block, Direction, GrowthOption, ObjectiveParams};
pub use grid::{Granularity, Grid};
pub use meta::{
    estimate_time, recursive_symmetry_baseline, run_metaheuristic, run_pipeline_once, Decomposition, Part, RunPlan,
};
