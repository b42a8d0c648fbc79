//! Directory-layout ingestion.
//!
//! ```text
//! <root>/<domain>/{train,test}/LR/<id>.png
//! <root>/<domain>/{train,test}/HR/<id>.png   (paired domains only)
//! ```
//!
//! Sample ids are file stems; an LR/HR pair shares its stem.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DomainTag, Image};
use crate::{Error, Result};

pub const LR_DIR: &str = "LR";
pub const HR_DIR: &str = "HR";

#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub lr: Image,
    pub hr: Image,
    pub id: String,
}

impl PairedSample {
    /// Checks `hr = lr × scale` in both spatial dims and returns the scale.
    pub fn new(lr: Image, hr: Image, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        pair_scale(&lr, &hr, &id)?;
        Ok(PairedSample { lr, hr, id })
    }

    pub fn scale(&self) -> usize {
        self.hr.width() / self.lr.width()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnpairedSample {
    pub lr: Image,
    pub id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Paired,
    Unpaired,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Samples of one domain split, sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Paired {
        domain: Option<DomainTag>,
        scale: usize,
        samples: Vec<PairedSample>,
    },
    Unpaired {
        domain: Option<DomainTag>,
        samples: Vec<UnpairedSample>,
    },
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Paired { samples, .. } => samples.len(),
            Dataset::Unpaired { samples, .. } => samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> Option<&DomainTag> {
        match self {
            Dataset::Paired { domain, .. } | Dataset::Unpaired { domain, .. } => domain.as_ref(),
        }
    }

    pub fn paired(&self) -> Option<&[PairedSample]> {
        match self {
            Dataset::Paired { samples, .. } => Some(samples),
            Dataset::Unpaired { .. } => None,
        }
    }

    /// LR-only view; paired datasets drop their HR.
    pub fn lr_only(&self) -> Vec<UnpairedSample> {
        match self {
            Dataset::Paired { samples, .. } => samples
                .iter()
                .map(|s| UnpairedSample {
                    lr: s.lr.clone(),
                    id: s.id.clone(),
                })
                .collect(),
            Dataset::Unpaired { samples, .. } => samples.clone(),
        }
    }

    pub fn into_paired(self) -> Result<Vec<PairedSample>> {
        match self {
            Dataset::Paired { samples, .. } => Ok(samples),
            Dataset::Unpaired { .. } => Err(Error::Dataset("expected a paired dataset".into())),
        }
    }
}

fn pair_scale(lr: &Image, hr: &Image, id: &str) -> Result<usize> {
    let mismatch = || {
        Error::Dataset(format!(
            "sample `{id}`: HR {}x{} is not an integer multiple of LR {}x{}",
            hr.width(),
            hr.height(),
            lr.width(),
            lr.height()
        ))
    };
    if lr.width() == 0 || lr.height() == 0 || hr.width() % lr.width() != 0 {
        return Err(mismatch());
    }
    let scale = hr.width() / lr.width();
    if scale == 0 || hr.height() != lr.height() * scale {
        return Err(mismatch());
    }
    Ok(scale)
}

fn png_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

/// Loads one split directory (the one holding `LR/` and optionally `HR/`).
/// The device tag is the name of the split's parent directory.
pub fn load_dataset(split_dir: &Path, role: DatasetRole) -> Result<Dataset> {
    let domain = split_dir
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .and_then(|n| DomainTag::new(n).ok());
    let lr_dir = split_dir.join(LR_DIR);
    if !lr_dir.is_dir() {
        return Err(Error::Dataset(format!("missing LR directory {}", lr_dir.display())));
    }
    let lr_files = png_stems(&lr_dir)?;
    match role {
        DatasetRole::Unpaired => {
            let samples = lr_files
                .into_iter()
                .map(|(id, path)| {
                    Ok(UnpairedSample {
                        lr: Image::load_png(&path)?.with_tag(domain.clone()),
                        id,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Dataset::Unpaired { domain, samples })
        }
        DatasetRole::Paired => {
            let hr_dir = split_dir.join(HR_DIR);
            if !hr_dir.is_dir() {
                return Err(Error::Dataset(format!("missing HR directory {}", hr_dir.display())));
            }
            let hr_files = png_stems(&hr_dir)?;
            for (id, path) in &hr_files {
                if !lr_files.iter().any(|(l, _)| l == id) {
                    return Err(Error::Dataset(format!(
                        "HR file {} has no LR counterpart",
                        path.display()
                    )));
                }
            }
            let mut samples = Vec::with_capacity(lr_files.len());
            let mut scale = None;
            for (id, lr_path) in lr_files {
                let hr_path = hr_dir.join(format!("{id}.png"));
                if !hr_path.is_file() {
                    return Err(Error::Dataset(format!(
                        "LR file {} has no HR counterpart (expected {})",
                        lr_path.display(),
                        hr_path.display()
                    )));
                }
                let lr = Image::load_png(&lr_path)?.with_tag(domain.clone());
                let hr = Image::load_png(&hr_path)?.with_tag(domain.clone());
                let s = pair_scale(&lr, &hr, &id)?;
                match scale {
                    None => scale = Some(s),
                    Some(prev) if prev != s => {
                        return Err(Error::Dataset(format!(
                            "sample `{id}` has scale {s}, earlier samples have {prev}"
                        )))
                    }
                    _ => {}
                }
                samples.push(PairedSample { lr, hr, id });
            }
            Ok(Dataset::Paired {
                domain,
                scale: scale.unwrap_or(1),
                samples,
            })
        }
    }
}

/// `load_dataset(<root>/<domain>/<split>, role)`.
pub fn load_domain_split(root: &Path, domain: &str, split: Split, role: DatasetRole) -> Result<Dataset> {
    load_dataset(&root.join(domain).join(split.dir_name()), role)
}

/// Writes samples in the documented layout under `<root>/<domain>/<split>`.
/// `write_hr = false` produces an unpaired split.
pub fn write_split(root: &Path, domain: &str, split: Split, samples: &[PairedSample], write_hr: bool) -> Result<()> {
    let dir = root.join(domain).join(split.dir_name());
    for s in samples {
        s.lr.save_png(&dir.join(LR_DIR).join(format!("{}.png", s.id)))?;
        if write_hr {
            s.hr.save_png(&dir.join(HR_DIR).join(format!("{}.png", s.id)))?;
        }
    }
    Ok(())
}
