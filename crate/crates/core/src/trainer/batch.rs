use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::{augment, extract_lr_patch, extract_patch, Dihedral, Image, PairedSample, UnpairedSample};
use crate::nn::Tensor;
use crate::{Error, Result};

/// Rng streams. Source-Only continues the pretraining stream, so its first
/// `pretrain_iters` batches are exactly those that produced `u_s0`.
pub const STREAM_SOURCE: u64 = 1;
pub const STREAM_TARGET: u64 = 2;
pub const STREAM_DADA: u64 = 3;

/// Independent generator for one iteration of one stream. Resuming needs no
/// rng state, only the iteration counter.
pub fn iteration_rng(seed: u64, stream: u64, iteration: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.to_le_bytes());
    h.update(iteration.to_le_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&h.finalize());
    ChaCha8Rng::from_seed(key)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedBatch {
    pub lr: Tensor,
    pub hr: Tensor,
}

/// `n` random pairs, each cropped to an aligned patch and augmented.
pub fn sample_pairs(pairs: &[PairedSample], n: usize, lr_patch: usize, scale: usize, rng: &mut impl Rng) -> Result<PairedBatch> {
    if pairs.is_empty() {
        return Err(Error::Dataset("no paired samples to draw from".into()));
    }
    let mut patches = Vec::with_capacity(n);
    for _ in 0..n {
        let s = &pairs[rng.random_range(0..pairs.len())];
        if s.scale() != scale {
            return Err(Error::Dataset(format!("sample `{}` has scale {}, expected {scale}", s.id, s.scale())));
        }
        let p = extract_patch(s, lr_patch, rng)?;
        patches.push(augment(&p, rng));
    }
    Ok(PairedBatch {
        lr: Image::batch_to_tensor(&patches.iter().map(|p| &p.lr).collect::<Vec<_>>()),
        hr: Image::batch_to_tensor(&patches.iter().map(|p| &p.hr).collect::<Vec<_>>()),
    })
}

/// `n` random LR patches with random dihedral transforms.
pub fn sample_lr(images: &[UnpairedSample], n: usize, lr_patch: usize, rng: &mut impl Rng) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::Dataset("no target images to draw from".into()));
    }
    let mut patches = Vec::with_capacity(n);
    for _ in 0..n {
        let s = &images[rng.random_range(0..images.len())];
        let p = extract_lr_patch(s, lr_patch, rng)?;
        patches.push(Dihedral::random(rng).apply(&p.lr));
    }
    Ok(Image::batch_to_tensor(&patches.iter().collect::<Vec<_>>()))
}

/// One adaptation batch: source pairs and unrelated target LR patches.
#[derive(Clone, Debug, PartialEq)]
pub struct DadaBatch {
    pub source_lr: Tensor,
    pub source_hr: Tensor,
    pub target_lr: Tensor,
}

impl DadaBatch {
    pub fn sample(
        source: &[PairedSample],
        target: &[UnpairedSample],
        n: usize,
        lr_patch: usize,
        scale: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let s = sample_pairs(source, n, lr_patch, scale, rng)?;
        let target_lr = sample_lr(target, n, lr_patch, rng)?;
        Ok(DadaBatch {
            source_lr: s.lr,
            source_hr: s.hr,
            target_lr,
        })
    }
}
