use std::path::Path;

use crate::networks::{Archive, ArchConfig, SourceModel};
use crate::nn::{Adam, ParamStore, Tensor};
use crate::{Error, Result};

pub(crate) const MODEL_PREFIX: &str = "model/";

/// Moments under `{prefix}m/{param}` and `{prefix}v/{param}`, the step
/// count under `{prefix}steps`.
pub(crate) fn save_adam(archive: &mut Archive, prefix: &str, adam: &Adam, store: &ParamStore) {
    archive.insert(format!("{prefix}steps"), Tensor::scalar(adam.steps as f64));
    for (&id, (m, v)) in &adam.moments {
        archive.insert(format!("{prefix}m/{}", store.name(id)), m.clone());
        archive.insert(format!("{prefix}v/{}", store.name(id)), v.clone());
    }
}

pub(crate) fn load_adam(archive: &Archive, prefix: &str, store: &ParamStore, lr: f64, betas: (f64, f64)) -> Result<Adam> {
    let steps = archive
        .get(&format!("{prefix}steps"))
        .ok_or_else(|| Error::Checkpoint(format!("missing `{prefix}steps`")))?;
    let mut adam = Adam::new(lr, betas);
    adam.steps = steps.item() as u64;
    let m_prefix = format!("{prefix}m/");
    for (name, m) in &archive.tensors {
        let Some(param) = name.strip_prefix(&m_prefix) else { continue };
        let id = store
            .find(param)
            .ok_or_else(|| Error::Checkpoint(format!("optimizer state for unknown parameter `{param}`")))?;
        let v = archive
            .get(&format!("{prefix}v/{param}"))
            .ok_or_else(|| Error::Checkpoint(format!("missing second moment for `{param}`")))?;
        if m.shape() != store.get(id).shape() || v.shape() != m.shape() {
            return Err(Error::Checkpoint(format!("optimizer state shape mismatch for `{param}`")));
        }
        adam.moments.insert(id, (m.clone(), v.clone()));
    }
    Ok(adam)
}

pub(crate) fn arch_meta(arch: &ArchConfig) -> serde_json::Value {
    serde_json::json!({ "arch": arch })
}

pub(crate) fn arch_from_meta(archive: &Archive) -> Result<ArchConfig> {
    let v = archive
        .meta
        .get("arch")
        .ok_or_else(|| Error::Checkpoint("archive metadata has no architecture".into()))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Checkpoint(format!("bad architecture metadata: {e}")))
}

/// Writes a standalone upsampler.
pub fn save_model(model: &SourceModel, config_hash: &str, iteration: u64, path: &Path) -> Result<()> {
    let mut a = Archive::new(config_hash, iteration);
    a.meta = arch_meta(&model.arch);
    a.insert_store(MODEL_PREFIX, &model.store);
    a.write(path)
}

/// Reads a file written by [`save_model`]. Returns the model and the config
/// hash it was trained under.
pub fn load_model(path: &Path) -> Result<(SourceModel, String)> {
    let a = Archive::read(path)?;
    model_from_archive(&a).map(|m| (m, a.config_hash.clone()))
}

pub(crate) fn model_from_archive(a: &Archive) -> Result<SourceModel> {
    let arch = arch_from_meta(a)?;
    let mut m = SourceModel::new(&arch, 0)?;
    a.load_store(MODEL_PREFIX, &mut m.store)?;
    Ok(m)
}
