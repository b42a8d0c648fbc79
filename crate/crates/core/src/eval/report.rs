use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{psnr_y_with_border, ssim_with_border, DEFAULT_BORDER};
use crate::data::{Image, PairedSample};
use crate::losses::perceptual_loss;
use crate::networks::{FeatureExtractor, ModelState, SourceModel};
use crate::{Error, Result};

/// Anything that maps an LR image to an SR image.
pub trait SuperResolver {
    fn super_resolve(&self, lr: &Image) -> Result<Image>;
}

impl SuperResolver for SourceModel {
    fn super_resolve(&self, lr: &Image) -> Result<Image> {
        SourceModel::super_resolve(self, lr)
    }
}

impl SuperResolver for ModelState {
    fn super_resolve(&self, lr: &Image) -> Result<Image> {
        ModelState::super_resolve(self, lr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    pub psnr_y: f64,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceptual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub domain: String,
    pub n_images: usize,
    pub psnr_y: f64,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceptual: Option<f64>,
    /// Pixels cropped from each side before scoring.
    pub border: usize,
    pub per_image: Vec<ImageScore>,
}

pub struct EvalOptions<'a> {
    pub border: usize,
    pub perceptual: Option<&'a dyn FeatureExtractor>,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        EvalOptions {
            border: DEFAULT_BORDER,
            perceptual: None,
        }
    }
}

/// Scores `model` on every pair of `test`, in id order. SR outputs are
/// clamped to `[0, 1]` by the model before scoring.
pub fn evaluate(
    model: &dyn SuperResolver,
    test: &[PairedSample],
    domain: &str,
    model_id: &str,
    opts: &EvalOptions<'_>,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Dataset(format!("no test images for domain `{domain}`")));
    }
    let mut order: Vec<&PairedSample> = test.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut per_image = Vec::with_capacity(order.len());
    for s in order {
        let sr = model.super_resolve(&s.lr)?;
        per_image.push(ImageScore {
            id: s.id.clone(),
            psnr_y: psnr_y_with_border(&sr, &s.hr, opts.border)?,
            ssim: ssim_with_border(&sr, &s.hr, opts.border)?,
            perceptual: opts.perceptual.map(|e| perceptual_loss(&sr, &s.hr, e)).transpose()?,
        });
    }
    let n = per_image.len() as f64;
    let perceptual = opts
        .perceptual
        .map(|_| per_image.iter().map(|s| s.perceptual.unwrap_or(0.0)).sum::<f64>() / n);
    Ok(EvalReport {
        model_id: model_id.to_string(),
        domain: domain.to_string(),
        n_images: per_image.len(),
        psnr_y: per_image.iter().map(|s| s.psnr_y).sum::<f64>() / n,
        ssim: per_image.iter().map(|s| s.ssim).sum::<f64>() / n,
        perceptual,
        border: opts.border,
        per_image,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    model_id: &'a str,
    domain: &'a str,
    id: &'a str,
    psnr_y: f64,
    ssim: f64,
    perceptual: Option<f64>,
}

impl EvalReport {
    /// One row per image and a final `mean` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.per_image {
            w.serialize(CsvRow {
                model_id: &self.model_id,
                domain: &self.domain,
                id: &s.id,
                psnr_y: s.psnr_y,
                ssim: s.ssim,
                perceptual: s.perceptual,
            })?;
        }
        w.serialize(CsvRow {
            model_id: &self.model_id,
            domain: &self.domain,
            id: "mean",
            psnr_y: self.psnr_y,
            ssim: self.ssim,
            perceptual: self.perceptual,
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Models (rows, by training domain) against test sets (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossDeviceMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<EvalReport>>,
}

impl CrossDeviceMatrix {
    pub fn psnr_grid(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|r| r.iter().map(|c| c.psnr_y).collect()).collect()
    }

    pub fn ssim_grid(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|r| r.iter().map(|c| c.ssim).collect()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["model_domain", "test_domain", "psnr_y", "ssim", "n_images"])?;
        for (r, row) in self.rows.iter().zip(&self.cells) {
            for (c, cell) in self.cols.iter().zip(row) {
                w.write_record([
                    r.as_str(),
                    c.as_str(),
                    &cell.psnr_y.to_string(),
                    &cell.ssim.to_string(),
                    &cell.n_images.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Evaluates every model on every test set.
pub fn cross_device_matrix(
    models: &[(&str, &dyn SuperResolver)],
    test_sets: &[(&str, &[PairedSample])],
    opts: &EvalOptions<'_>,
) -> Result<CrossDeviceMatrix> {
    let mut cells = Vec::with_capacity(models.len());
    for (name, model) in models {
        let row = test_sets
            .iter()
            .map(|(domain, set)| evaluate(*model, set, domain, name, opts))
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    Ok(CrossDeviceMatrix {
        rows: models.iter().map(|(n, _)| n.to_string()).collect(),
        cols: test_sets.iter().map(|(n, _)| n.to_string()).collect(),
        cells,
    })
}
