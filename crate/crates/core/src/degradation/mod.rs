//! Synthetic cameras, multi-camera datasets and blind kernel estimation.

mod camera;
mod corpus;
mod estimate;
mod kernel;
mod lab;

pub use camera::{
    blur_downsample, degrade, make_camera_profile, make_camera_profile_sized, CameraProfile, CameraSpec,
    DEFAULT_KERNEL_SIZE,
};
pub use corpus::{synthetic_corpus, synthetic_scene};
pub use estimate::{estimate_kernel, KernelEstimate};
pub use kernel::{kernel_distance, Kernel, KernelSpec};
pub use lab::{build_lab, render_pairs, train_test_split, write_lab, LabDomain, ORACLE_DIR};
