//! Upsamplers with domain-invariant attention, cycle downsamplers, PatchGAN
//! discriminators and the frozen feature extractors used by the perceptual
//! loss.

mod arch;
mod checkpoint;
mod components;
mod discriminator;
mod downsampler;
mod extractor;
mod model;
mod upsampler;

pub use arch::{ArchConfig, Preset};
pub use checkpoint::{Archive, ARCHIVE_MAGIC};
pub use components::{component_labels, ComponentThresholds};
pub use discriminator::{DiscInput, Discriminator};
pub use downsampler::{Downsampler, ResBlock};
pub use extractor::{FeatureExtractor, IdentityExtractor, RandomConvExtractor, EXTRACTOR_SEED};
pub use model::{build_dia, copy_module, ModelState, SourceModel};
pub use upsampler::{mix, ComponentMasks, Hourglass, MaskGenerator, UpsampleVars, Upsampler, COMPONENTS};

use crate::nn::ParamId;

/// A network built from stored parameters.
pub trait Module: Sized {
    /// Every parameter id the network reads, in a fixed order. Aliased ids
    /// appear once per use.
    fn params(&self) -> Vec<ParamId>;

    /// The same network reading parameter `f(id)` wherever it read `id`.
    fn remap(&self, f: &mut dyn FnMut(ParamId) -> ParamId) -> Self;
}

/// `ids` without repeats, first occurrence kept.
pub fn unique(ids: impl IntoIterator<Item = ParamId>) -> Vec<ParamId> {
    let mut seen = std::collections::HashSet::new();
    ids.into_iter().filter(|id| seen.insert(*id)).collect()
}
