use serde::{Deserialize, Serialize};

use super::batch::{iteration_rng, sample_pairs, STREAM_SOURCE, STREAM_TARGET};
use super::state::{arch_meta, load_adam, model_from_archive, save_adam, MODEL_PREFIX};
use super::TrainConfig;
use crate::data::PairedSample;
use crate::losses::gw_loss_var;
use crate::networks::{component_labels, unique, Archive, Module, SourceModel};
use crate::nn::{Adam, Graph, Tensor};
use crate::{Error, Result};

/// Losses of one supervised iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedRecord {
    pub iter: u64,
    pub content: f64,
    pub mask: f64,
    pub total: f64,
}

/// Paired training of a single upsampler: GW content loss plus L1 between
/// the attention masks and soft component labels of the HR patch.
///
/// Used to pretrain `u_s0` and for the Source-Only and Target-Only baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedTrainer {
    pub config: TrainConfig,
    pub model: SourceModel,
    pub adam: Adam,
    pub iteration: u64,
    pub stream: u64,
}

impl SupervisedTrainer {
    pub fn new(config: &TrainConfig, stream: u64) -> Result<Self> {
        config.validate()?;
        Ok(SupervisedTrainer {
            config: config.clone(),
            model: SourceModel::new(&config.arch, config.seed)?,
            adam: Adam::new(config.pretrain_learning_rate, config.adam_betas),
            iteration: 0,
            stream,
        })
    }

    pub fn step(&mut self, pairs: &[PairedSample]) -> Result<SupervisedRecord> {
        let c = &self.config;
        let mut rng = iteration_rng(c.seed, self.stream, self.iteration);
        let batch = sample_pairs(pairs, c.batch_pairs, c.lr_patch, c.scale, &mut rng)?;
        let ids = unique(self.model.upsampler.params());
        let (record, grads) = {
            let mut g = Graph::with_trainable(&self.model.store, ids.iter().copied());
            let x = g.constant(batch.lr);
            let out = self.model.upsampler.forward(&mut g, x);
            let content = gw_loss_var(&mut g, out.sr, &batch.hr);
            let labels = component_labels(&batch.hr, &c.thresholds);
            let ones = Tensor::full(labels.shape(), 1.0);
            let mask = g.weighted_l1(out.masks, labels, ones);
            let total = g.weighted_sum(vec![(content, 1.0), (mask, c.mask_weight)]);
            let record = SupervisedRecord {
                iter: self.iteration,
                content: g.value(content).item(),
                mask: g.value(mask).item(),
                total: g.value(total).item(),
            };
            for (term, v) in [("content", record.content), ("mask", record.mask)] {
                if !v.is_finite() {
                    return Err(Error::NonFinite { term: term.into() });
                }
            }
            (record, g.backward(total).params)
        };
        self.adam.step(&mut self.model.store, &grads, &ids);
        self.iteration += 1;
        Ok(record)
    }

    /// `iters` further steps.
    pub fn run(&mut self, pairs: &[PairedSample], iters: u64) -> Result<Vec<SupervisedRecord>> {
        (0..iters).map(|_| self.step(pairs)).collect()
    }

    pub fn to_archive(&self, config_hash: &str) -> Archive {
        let mut a = Archive::new(config_hash, self.iteration);
        a.meta = arch_meta(&self.model.arch);
        a.meta["stream"] = self.stream.into();
        a.insert_store(MODEL_PREFIX, &self.model.store);
        save_adam(&mut a, "opt/", &self.adam, &self.model.store);
        a
    }

    pub fn from_archive(config: &TrainConfig, a: &Archive) -> Result<Self> {
        let model = model_from_archive(a)?;
        if model.arch != config.arch {
            return Err(Error::Checkpoint("archive architecture differs from the config".into()));
        }
        let stream = a
            .meta
            .get("stream")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Checkpoint("archive has no rng stream".into()))?;
        let adam = load_adam(a, "opt/", &model.store, config.pretrain_learning_rate, config.adam_betas)?;
        Ok(SupervisedTrainer {
            config: config.clone(),
            model,
            adam,
            iteration: a.iteration,
            stream,
        })
    }
}

/// `pretrain_iters` supervised steps on source pairs.
pub fn pretrain_source(config: &TrainConfig, source: &[PairedSample]) -> Result<(SourceModel, Vec<SupervisedRecord>)> {
    train_supervised(config, source, STREAM_SOURCE, config.pretrain_iters)
}

/// The pretrained source model and the Source-Only baseline, which continues
/// the same supervised run for `max_iters` more steps.
pub fn source_baselines(config: &TrainConfig, source: &[PairedSample]) -> Result<(SourceModel, SourceModel)> {
    let mut t = SupervisedTrainer::new(config, STREAM_SOURCE)?;
    t.run(source, config.pretrain_iters)?;
    let pretrained = t.model.clone();
    t.run(source, config.max_iters)?;
    Ok((pretrained, t.model))
}

/// The Target-Only oracle: supervised training on target pairs with the
/// Source-Only budget.
pub fn target_only(config: &TrainConfig, target: &[PairedSample]) -> Result<SourceModel> {
    train_supervised(config, target, STREAM_TARGET, config.pretrain_iters + config.max_iters).map(|(m, _)| m)
}

/// A fresh model trained for `iters` steps on `pairs`.
pub fn train_supervised(
    config: &TrainConfig,
    pairs: &[PairedSample],
    stream: u64,
    iters: u64,
) -> Result<(SourceModel, Vec<SupervisedRecord>)> {
    let mut t = SupervisedTrainer::new(config, stream)?;
    let log = t.run(pairs, iters)?;
    Ok((t.model, log))
}
