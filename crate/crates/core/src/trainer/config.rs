use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::losses::LossWeights;
use crate::networks::{ArchConfig, ComponentThresholds, Discriminator};
use crate::nn::hex_digest;
use crate::{Error, Result};

/// Ablation switches. Every combination is valid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toggles {
    pub inter_aa: bool,
    pub intra_aa: bool,
    pub dia: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            inter_aa: true,
            intra_aa: true,
            dia: true,
        }
    }
}

impl Toggles {
    /// Full model and the three single-switch-off variants.
    pub fn ablation_rows() -> [(&'static str, Toggles); 4] {
        let full = Toggles::default();
        [
            ("full", full),
            ("no_inter_aa", Toggles { inter_aa: false, ..full }),
            ("no_intra_aa", Toggles { intra_aa: false, ..full }),
            ("no_dia", Toggles { dia: false, ..full }),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub scale: usize,
    /// LR patch side; HR patches are `lr_patch · scale`.
    pub lr_patch: usize,
    /// Source pairs and target images per batch.
    pub batch_pairs: usize,
    /// Adam step size of the adaptation loop.
    pub learning_rate: f64,
    /// Adam step size of supervised training (pretraining and baselines).
    pub pretrain_learning_rate: f64,
    pub adam_betas: (f64, f64),
    /// DADA iterations.
    pub max_iters: u64,
    /// Supervised source iterations that produce the frozen source model.
    pub pretrain_iters: u64,
    pub weights: LossWeights,
    pub toggles: Toggles,
    pub seed: u64,
    /// Checkpoint and evaluation period, in DADA iterations.
    pub eval_every: u64,
    /// Weight of the mask supervision during pretraining.
    pub mask_weight: f64,
    pub thresholds: ComponentThresholds,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scale: 4,
            lr_patch: 12,
            batch_pairs: 4,
            learning_rate: 1e-4,
            pretrain_learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            max_iters: 500,
            pretrain_iters: 2000,
            weights: LossWeights::default(),
            toggles: Toggles::default(),
            seed: 0,
            eval_every: 100,
            mask_weight: 0.1,
            thresholds: ComponentThresholds::default(),
            d_steps: 1,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| Err(Error::Config {
            path: path.to_string(),
            message,
        });
        if self.batch_pairs < 1 {
            return bad("batch_pairs", "must be >= 1".into());
        }
        if self.max_iters < 1 {
            return bad("max_iters", "must be >= 1".into());
        }
        if self.eval_every < 1 {
            return bad("eval_every", "must be >= 1".into());
        }
        if self.d_steps < 1 {
            return bad("d_steps", "must be >= 1".into());
        }
        for (path, lr) in [("learning_rate", self.learning_rate), ("pretrain_learning_rate", self.pretrain_learning_rate)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(path, format!("must be positive, got {lr}"));
            }
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("adam_betas", format!("must lie in [0, 1), got ({b1}, {b2})"));
        }
        if self.mask_weight < 0.0 {
            return bad("mask_weight", "must be >= 0".into());
        }
        if self.arch.scale != self.scale {
            return bad("arch.scale", format!("{} differs from scale {}", self.arch.scale, self.scale));
        }
        self.arch.validate().map_err(|e| Error::Config {
            path: "arch".into(),
            message: e.to_string(),
        })?;
        self.weights.validate().map_err(|e| Error::Config {
            path: "weights".into(),
            message: e.to_string(),
        })?;
        let hr = self.lr_patch * self.scale;
        if self.lr_patch < 2 || Discriminator::logit_dims(hr, hr).is_none() {
            return bad("lr_patch", format!("HR patch {hr} is too small for the discriminators"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serialises"));
        hex_digest(h)
    }

    /// Hash of the fields that determine the pretrained source model.
    pub fn pretrain_hash(&self) -> String {
        let key = serde_json::json!({
            "scale": self.scale,
            "lr_patch": self.lr_patch,
            "batch_pairs": self.batch_pairs,
            "pretrain_learning_rate": self.pretrain_learning_rate,
            "adam_betas": self.adam_betas,
            "pretrain_iters": self.pretrain_iters,
            "seed": self.seed,
            "mask_weight": self.mask_weight,
            "thresholds": self.thresholds,
            "arch": self.arch,
        });
        let mut h = Sha256::new();
        h.update(key.to_string().as_bytes());
        hex_digest(h)
    }
}
