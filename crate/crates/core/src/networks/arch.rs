use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Capacity presets. `Desk` trains in CPU-minutes; `PaperLike` approaches
/// the published widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    PaperLike,
}

/// Widths and depths of every network family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub scale: usize,
    /// Upsampler feature channels.
    pub up_width: usize,
    /// Number of stride-2 levels in the hourglass.
    pub hourglass_depth: usize,
    pub mask_width: usize,
    pub down_width: usize,
    pub down_blocks: usize,
    pub disc_width: usize,
}

impl ArchConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => ArchConfig {
                scale: 4,
                up_width: 16,
                hourglass_depth: 1,
                mask_width: 8,
                down_width: 8,
                down_blocks: 8,
                disc_width: 8,
            },
            Preset::PaperLike => ArchConfig {
                scale: 4,
                up_width: 64,
                hourglass_depth: 3,
                mask_width: 32,
                down_width: 64,
                down_blocks: 8,
                disc_width: 64,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 || !self.scale.is_power_of_two() {
            return Err(Error::invalid(format!(
                "scale must be a power of two >= 2 (stride-2 downsampling), got {}",
                self.scale
            )));
        }
        for (name, v) in [
            ("up_width", self.up_width),
            ("mask_width", self.mask_width),
            ("down_width", self.down_width),
            ("disc_width", self.disc_width),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of stride-2 stages in the downsampler.
    pub fn down_stages(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig::preset(Preset::Desk)
    }
}
