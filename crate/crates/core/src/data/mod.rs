//! Core value types: images, samples, datasets and their on-disk layout.

mod dataset;
mod image;
mod patch;

pub use dataset::{
    load_dataset, load_domain_split, write_split, Dataset, DatasetRole, PairedSample, Split, UnpairedSample,
    HR_DIR, LR_DIR,
};
pub use image::{rgb_to_y, ColorSpace, DomainTag, Image};
pub use patch::{augment, augment_with, extract_lr_patch, extract_patch, Dihedral};
