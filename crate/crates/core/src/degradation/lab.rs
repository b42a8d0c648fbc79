//! Multi-camera datasets rendered from one HR corpus.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{degrade, CameraProfile};
use crate::data::{write_split, Image, PairedSample, Split, HR_DIR, LR_DIR};
use crate::{Error, Result};

/// Directory, next to `train` and `test`, holding the target training pairs
/// for the Target-Only oracle. Loaders of the training split never see it.
pub const ORACLE_DIR: &str = "oracle";

/// One camera's view of the corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct LabDomain {
    pub name: String,
    pub train: Vec<PairedSample>,
    pub test: Vec<PairedSample>,
}

/// Sorted train and test index lists: `round(n · train_fraction)` indices
/// drawn by a seeded shuffle go to train.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid(format!("train fraction must lie in [0, 1], got {train_fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_fraction).round() as usize;
    let (mut train, mut test) = (idx[..n_train].to_vec(), idx[n_train..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Every image of `hrs` through `profile`, with ids `img000`, `img001`, ...
pub fn render_pairs(hrs: &[Image], profile: &CameraProfile, seed: u64) -> Result<Vec<PairedSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    hrs.iter()
        .enumerate()
        .map(|(i, hr)| {
            let hr = hr.clone().with_tag(Some(profile.name.clone()));
            let lr = degrade(&hr, profile, &mut rng)?;
            PairedSample::new(lr, hr, format!("img{i:03}"))
        })
        .collect()
}

/// Renders the corpus through every camera. All cameras share one
/// train/test split of the scenes; noise streams differ per camera.
pub fn build_lab(hrs: &[Image], profiles: &[CameraProfile], train_fraction: f64, seed: u64) -> Result<Vec<LabDomain>> {
    if hrs.is_empty() {
        return Err(Error::Dataset("HR corpus is empty".into()));
    }
    let (train_idx, test_idx) = train_test_split(hrs.len(), train_fraction, seed)?;
    profiles
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let pairs = render_pairs(hrs, p, seed.wrapping_add(1 + k as u64))?;
            Ok(LabDomain {
                name: p.name.as_str().to_string(),
                train: train_idx.iter().map(|&i| pairs[i].clone()).collect(),
                test: test_idx.iter().map(|&i| pairs[i].clone()).collect(),
            })
        })
        .collect()
}

/// Writes every domain under `root`. Domains listed in `unpaired` get an
/// LR-only training split; their training pairs go to [`ORACLE_DIR`].
pub fn write_lab(root: &Path, domains: &[LabDomain], unpaired: &[&str]) -> Result<()> {
    for d in domains {
        let hidden = unpaired.contains(&d.name.as_str());
        write_split(root, &d.name, Split::Train, &d.train, !hidden)?;
        write_split(root, &d.name, Split::Test, &d.test, true)?;
        if hidden {
            let dir = root.join(&d.name).join(ORACLE_DIR);
            for s in &d.train {
                s.lr.save_png(&dir.join(LR_DIR).join(format!("{}.png", s.id)))?;
                s.hr.save_png(&dir.join(HR_DIR).join(format!("{}.png", s.id)))?;
            }
        }
    }
    Ok(())
}
