use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{unique, ArchConfig, DiscInput, Discriminator, Downsampler, Module, Upsampler};
use crate::data::Image;
use crate::nn::{ParamId, ParamStore};
use crate::{Error, Result};

/// The pretrained source upsampler in its own store (parameter names `u.*`).
#[derive(Clone, Debug, PartialEq)]
pub struct SourceModel {
    pub arch: ArchConfig,
    pub store: ParamStore,
    pub upsampler: Upsampler,
}

impl SourceModel {
    /// A randomly initialised source model.
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let upsampler = Upsampler::new(&mut store, "u", arch, &mut rng);
        Ok(SourceModel {
            arch: arch.clone(),
            store,
            upsampler,
        })
    }

    pub fn super_resolve(&self, lr: &Image) -> Result<Image> {
        self.upsampler.super_resolve(&self.store, lr)
    }

    pub fn checksum(&self) -> String {
        self.store.checksum(&self.upsampler.params())
    }
}

fn renamed(name: &str, prefix: &str) -> String {
    match name.find('.') {
        Some(i) => format!("{prefix}{}", &name[i..]),
        None => format!("{prefix}.{name}"),
    }
}

/// Copies the parameters of `m` from `src` into `dst`, renaming the leading
/// name segment to `prefix`. Aliasing inside `m` is preserved.
pub fn copy_module<M: Module>(dst: &mut ParamStore, src: &ParamStore, m: &M, prefix: &str) -> M {
    let mut map = HashMap::new();
    m.remap(&mut |id| {
        *map.entry(id)
            .or_insert_with(|| dst.add(renamed(src.name(id), prefix), src.get(id).clone()))
    })
}

/// Like [`copy_module`] within one store; ids found in `preset` are mapped
/// as given instead of copied.
fn duplicate<M: Module>(store: &mut ParamStore, m: &M, prefix: &str, preset: &HashMap<ParamId, ParamId>) -> M {
    let mut map = preset.clone();
    m.remap(&mut |id| {
        *map.entry(id).or_insert_with(|| {
            let t = store.get(id).clone();
            let name = renamed(store.name(id), prefix);
            store.add(name, t)
        })
    })
}

fn shapes<M: Module>(store: &ParamStore, m: &M) -> Vec<[usize; 4]> {
    m.params().iter().map(|&id| store.get(id).shape()).collect()
}

/// Points the mask generators of `u_s` and `u_t` at one new parameter set
/// (`dia.*`) copied from `pretrained`'s mask generator. The previous mask
/// parameters stay in the store unused.
pub fn build_dia(store: &mut ParamStore, u_s: &mut Upsampler, u_t: &mut Upsampler, pretrained: &Upsampler) -> Result<()> {
    let reference = shapes(store, pretrained);
    for (name, u) in [("u_s", &*u_s), ("u_t", &*u_t)] {
        if shapes(store, u) != reference || u.scale != pretrained.scale {
            return Err(Error::shape(format!("{name} is not structurally identical to the pretrained upsampler")));
        }
    }
    if store.iter().any(|(_, n, _)| n.starts_with("dia.")) {
        return Err(Error::invalid("store already holds a `dia` mask generator"));
    }
    let shared = duplicate(store, &pretrained.masks, "dia", &HashMap::new());
    u_s.masks = shared.clone();
    u_t.masks = shared;
    Ok(())
}

/// Everything the dual-branch trainer owns, in one parameter store:
/// `u_s0` (frozen), `u_s`, `u_t`, `d_s`, `d_t` and four discriminators.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub arch: ArchConfig,
    pub dia: bool,
    pub store: ParamStore,
    pub u_s0: Upsampler,
    pub u_s: Upsampler,
    pub u_t: Upsampler,
    pub d_s: Downsampler,
    pub d_t: Downsampler,
    pub disc_inter_s: Discriminator,
    pub disc_inter_t: Discriminator,
    pub disc_intra_s: Discriminator,
    pub disc_intra_t: Discriminator,
}

impl ModelState {
    /// `u_s` and `u_t` start as copies of the pretrained source model. With
    /// `dia`, their mask generators alias one shared copy.
    pub fn new(source: &SourceModel, dia: bool, seed: u64) -> Result<Self> {
        let arch = source.arch.clone();
        arch.validate()?;
        let mut store = ParamStore::new();
        let u_s0 = copy_module(&mut store, &source.store, &source.upsampler, "u_s0");
        let mut preset = HashMap::new();
        if dia {
            let shared = duplicate(&mut store, &u_s0.masks, "dia", &HashMap::new());
            preset.extend(u_s0.masks.params().into_iter().zip(shared.params()));
        }
        let u_s = duplicate(&mut store, &u_s0, "u_s", &preset);
        let u_t = duplicate(&mut store, &u_s0, "u_t", &preset);

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD0_5A3F);
        let d_s = Downsampler::new(&mut store, "d_s", &arch, &mut rng);
        let d_t = Downsampler::new(&mut store, "d_t", &arch, &mut rng);
        let w = arch.disc_width;
        let disc_inter_s = Discriminator::new(&mut store, "disc_inter_s", DiscInput::Y, w, &mut rng);
        let disc_inter_t = Discriminator::new(&mut store, "disc_inter_t", DiscInput::Y, w, &mut rng);
        let disc_intra_s = Discriminator::new(&mut store, "disc_intra_s", DiscInput::Rgb, w, &mut rng);
        let disc_intra_t = Discriminator::new(&mut store, "disc_intra_t", DiscInput::Rgb, w, &mut rng);
        Ok(ModelState {
            arch,
            dia,
            store,
            u_s0,
            u_s,
            u_t,
            d_s,
            d_t,
            disc_inter_s,
            disc_inter_t,
            disc_intra_s,
            disc_intra_t,
        })
    }

    /// Trainable generator parameters: both upsamplers and both downsamplers.
    pub fn generator_params(&self) -> Vec<ParamId> {
        unique(
            self.u_s
                .params()
                .into_iter()
                .chain(self.u_t.params())
                .chain(self.d_s.params())
                .chain(self.d_t.params()),
        )
    }

    pub fn discriminators(&self) -> [&Discriminator; 4] {
        [&self.disc_inter_s, &self.disc_inter_t, &self.disc_intra_s, &self.disc_intra_t]
    }

    pub fn discriminator_params(&self) -> Vec<ParamId> {
        unique(self.discriminators().iter().flat_map(|d| d.params()))
    }

    pub fn frozen_params(&self) -> Vec<ParamId> {
        self.u_s0.params()
    }

    /// Mask-generator ids of `u_s` followed by those of `u_t` that differ.
    pub fn mask_params(&self) -> Vec<ParamId> {
        unique(self.u_s.mask_params().into_iter().chain(self.u_t.mask_params()))
    }

    pub fn checksum(&self, ids: &[ParamId]) -> String {
        self.store.checksum(ids)
    }

    /// Target-branch inference, the deployed model.
    pub fn super_resolve(&self, lr: &Image) -> Result<Image> {
        self.u_t.super_resolve(&self.store, lr)
    }

    /// The target upsampler alone, as a standalone model.
    pub fn target_model(&self) -> SourceModel {
        let mut store = ParamStore::new();
        let upsampler = copy_module(&mut store, &self.store, &self.u_t, "u");
        SourceModel {
            arch: self.arch.clone(),
            store,
            upsampler,
        }
    }
}
