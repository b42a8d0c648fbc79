use std::collections::BTreeMap;

use super::batch::{iteration_rng, DadaBatch, STREAM_DADA};
use super::state::{arch_meta, arch_from_meta, load_adam, save_adam, MODEL_PREFIX};
use super::TrainConfig;
use crate::data::{Image, PairedSample, UnpairedSample};
use crate::losses::{adv_d_loss_var, adv_g_loss_var, gw_loss_var, perceptual_loss_var, weighted_total, LossReport, TERM_NAMES};
use crate::networks::{unique, Archive, Discriminator, ModelState, Module, RandomConvExtractor, SourceModel};
use crate::nn::{Adam, Graph, ParamId, Tensor, Var};
use crate::{Error, Result};

/// Targets for the target branch on one target LR input.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabel {
    /// `u_s(x_t)`, used as a constant.
    pub content_target: Image,
    /// `u_s0(x_t)`.
    pub perceptual_target: Image,
}

/// Raw (unclamped) outputs, as the training pass sees them.
pub fn make_pseudo_labels(model: &ModelState, x_t: &Image) -> Result<PseudoLabel> {
    let x = x_t.to_tensor();
    Ok(PseudoLabel {
        content_target: Image::from_tensor(&model.u_s.infer(&model.store, &x), 0)?,
        perceptual_target: Image::from_tensor(&model.u_s0.infer(&model.store, &x), 0)?,
    })
}

/// The four SR batches of a generator pass, detached.
#[derive(Clone, Debug, PartialEq)]
pub struct SrOutputs {
    /// `u_s(x_s)`
    pub ss: Tensor,
    /// `u_s(x_t)`
    pub st: Tensor,
    /// `u_t(x_s)`
    pub ts: Tensor,
    /// `u_t(x_t)`
    pub tt: Tensor,
}

/// Result of one generator forward/backward without an update.
#[derive(Debug)]
pub struct GeneratorPass {
    pub report: LossReport,
    pub grads: BTreeMap<ParamId, Tensor>,
    pub outputs: SrOutputs,
}

/// Discriminator losses, in inter_s, inter_t, intra_s, intra_t order.
pub type DiscLosses = [Option<f64>; 4];

/// Dual-branch trainer: one generator update then `d_steps` updates of every
/// enabled discriminator, per iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct DadaTrainer {
    pub config: TrainConfig,
    pub model: ModelState,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    pub iteration: u64,
    extractor: RandomConvExtractor,
}

impl DadaTrainer {
    pub fn new(config: &TrainConfig, source: &SourceModel) -> Result<Self> {
        config.validate()?;
        if source.arch != config.arch {
            return Err(Error::invalid("source model architecture differs from the config"));
        }
        Ok(DadaTrainer {
            config: config.clone(),
            model: ModelState::new(source, config.toggles.dia, config.seed)?,
            gen_opt: Adam::new(config.learning_rate, config.adam_betas),
            disc_opt: Adam::new(config.learning_rate, config.adam_betas),
            iteration: 0,
            extractor: RandomConvExtractor::new(),
        })
    }

    /// The batch for the current iteration.
    pub fn sample_batch(&self, source: &[PairedSample], target: &[UnpairedSample]) -> Result<DadaBatch> {
        let c = &self.config;
        let mut rng = iteration_rng(c.seed, STREAM_DADA, self.iteration);
        DadaBatch::sample(source, target, c.batch_pairs, c.lr_patch, c.scale, &mut rng)
    }

    /// Enabled generator-side games as `(term index, discriminator, fake)`.
    /// Fakes index `[ss, st, ts, tt]`.
    fn generator_games(&self) -> Vec<(usize, &Discriminator, usize)> {
        let m = &self.model;
        let t = self.config.toggles;
        let mut games = Vec::new();
        if t.inter_aa {
            games.push((4, &m.disc_inter_s, 1));
            games.push((5, &m.disc_inter_t, 2));
        }
        if t.intra_aa {
            games.push((6, &m.disc_intra_s, 2));
            games.push((7, &m.disc_intra_t, 1));
        }
        games
    }

    /// Enabled discriminator games as `(slot, discriminator, real, fake)`.
    fn discriminator_games(&self) -> Vec<(usize, &Discriminator, usize, usize)> {
        let m = &self.model;
        let t = self.config.toggles;
        let mut games = Vec::new();
        if t.inter_aa {
            games.push((0, &m.disc_inter_s, 0, 1));
            games.push((1, &m.disc_inter_t, 3, 2));
        }
        if t.intra_aa {
            games.push((2, &m.disc_intra_s, 0, 2));
            games.push((3, &m.disc_intra_t, 3, 1));
        }
        games
    }

    /// Generator objective with per-term `coefficients` (in [`TERM_NAMES`]
    /// order) and its gradients w.r.t. the generator parameters. Nothing is
    /// updated.
    pub fn generator_pass(&self, batch: &DadaBatch, coefficients: &[f64; 8]) -> Result<GeneratorPass> {
        let m = &self.model;
        let mut g = Graph::with_trainable(&m.store, m.generator_params());
        let xs = g.constant(batch.source_lr.clone());
        let xt = g.constant(batch.target_lr.clone());
        let ss = m.u_s.forward(&mut g, xs).sr;
        let st = m.u_s.forward(&mut g, xt).sr;
        let ts = m.u_t.forward(&mut g, xs).sr;
        let tt = m.u_t.forward(&mut g, xt).sr;

        let con_s = gw_loss_var(&mut g, ss, &batch.source_hr);
        let pseudo = g.value(st).clone();
        let con_t = gw_loss_var(&mut g, tt, &pseudo);
        let reference = m.u_s0.infer(&m.store, &batch.target_lr);
        let vgg = perceptual_loss_var(&mut g, tt, &reference, &self.extractor);
        let paths = [(&m.d_s, ss, xs), (&m.d_s, st, xt), (&m.d_t, ts, xs), (&m.d_t, tt, xt)];
        let cycles: Vec<(Var, f64)> = paths
            .into_iter()
            .map(|(d, sr, lr)| {
                let back = d.forward(&mut g, sr);
                (g.l1(back, lr), 0.25)
            })
            .collect();
        let rec = g.weighted_sum(cycles);

        let mut terms: [Option<Var>; 8] = [Some(con_s), Some(con_t), Some(rec), Some(vgg), None, None, None, None];
        let fakes = [ss, st, ts, tt];
        for (slot, disc, fake) in self.generator_games() {
            terms[slot] = Some(adv_g_loss_var(&mut g, disc, fakes[fake]));
        }
        let values = terms.map(|t| t.map(|v| g.value(v).item()));
        for (name, v) in TERM_NAMES.iter().zip(values) {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(Error::NonFinite { term: name.to_string() });
            }
        }
        let mut report = LossReport {
            con_s: values[0].unwrap_or(0.0),
            con_t: values[1].unwrap_or(0.0),
            rec: values[2].unwrap_or(0.0),
            vgg: values[3].unwrap_or(0.0),
            inter_s_g: values[4],
            inter_t_g: values[5],
            intra_s_g: values[6],
            intra_t_g: values[7],
            ..LossReport::default()
        };
        report.total = weighted_total(&report, coefficients)?;
        let weighted: Vec<(Var, f64)> = terms
            .iter()
            .zip(coefficients)
            .filter_map(|(t, &c)| t.map(|v| (v, c)))
            .collect();
        let root = g.weighted_sum(weighted);
        let grads = g.backward(root).params;
        let outputs = SrOutputs {
            ss: g.value(ss).clone(),
            st: pseudo,
            ts: g.value(ts).clone(),
            tt: g.value(tt).clone(),
        };
        Ok(GeneratorPass { report, grads, outputs })
    }

    /// One generator update with the configured weights.
    pub fn generator_phase(&mut self, batch: &DadaBatch) -> Result<(LossReport, SrOutputs)> {
        let pass = self.generator_pass(batch, &self.config.weights.coefficients())?;
        let ids = self.model.generator_params();
        self.gen_opt.step(&mut self.model.store, &pass.grads, &ids);
        Ok((pass.report, pass.outputs))
    }

    /// `d_steps` updates of the enabled discriminators against fixed
    /// generator outputs. Returns the losses of the last update, measured
    /// before it was applied.
    pub fn discriminator_phase(&mut self, outputs: &SrOutputs) -> Result<DiscLosses> {
        let mut losses: DiscLosses = [None; 4];
        let ids = {
            let games = self.discriminator_games();
            unique(games.iter().flat_map(|(_, d, _, _)| d.params()))
        };
        if ids.is_empty() {
            return Ok(losses);
        }
        const NAMES: [&str; 4] = ["inter_s_d", "inter_t_d", "intra_s_d", "intra_t_d"];
        for _ in 0..self.config.d_steps {
            let grads = {
                let mut g = Graph::with_trainable(&self.model.store, ids.iter().copied());
                let outs = [&outputs.ss, &outputs.st, &outputs.ts, &outputs.tt].map(|t| g.constant(t.clone()));
                let mut terms = Vec::new();
                for (slot, disc, real, fake) in self.discriminator_games() {
                    let l = adv_d_loss_var(&mut g, disc, outs[real], outs[fake]);
                    let v = g.value(l).item();
                    if !v.is_finite() {
                        return Err(Error::NonFinite { term: NAMES[slot].into() });
                    }
                    losses[slot] = Some(v);
                    terms.push((l, 1.0));
                }
                let root = g.weighted_sum(terms);
                g.backward(root).params
            };
            self.disc_opt.step(&mut self.model.store, &grads, &ids);
        }
        Ok(losses)
    }

    /// One full iteration on `batch`.
    pub fn step(&mut self, batch: &DadaBatch) -> Result<LossReport> {
        let (mut report, outputs) = self.generator_phase(batch)?;
        let [a, b, c, d] = self.discriminator_phase(&outputs)?;
        report.inter_s_d = a;
        report.inter_t_d = b;
        report.intra_s_d = c;
        report.intra_t_d = d;
        self.iteration += 1;
        Ok(report)
    }

    /// Samples the current iteration's batch and steps on it.
    pub fn train_iteration(&mut self, source: &[PairedSample], target: &[UnpairedSample]) -> Result<LossReport> {
        let batch = self.sample_batch(source, target)?;
        self.step(&batch)
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new(self.config.hash(), self.iteration);
        a.meta = arch_meta(&self.model.arch);
        a.insert_store(MODEL_PREFIX, &self.model.store);
        save_adam(&mut a, "gen_opt/", &self.gen_opt, &self.model.store);
        save_adam(&mut a, "disc_opt/", &self.disc_opt, &self.model.store);
        a
    }

    /// Restores a trainer saved under the same config.
    pub fn from_archive(config: &TrainConfig, a: &Archive) -> Result<Self> {
        if a.config_hash != config.hash() {
            return Err(Error::Config {
                path: "resume".into(),
                message: format!("checkpoint config hash {} does not match {}", a.config_hash, config.hash()),
            });
        }
        let arch = arch_from_meta(a)?;
        let placeholder = SourceModel::new(&arch, 0)?;
        let mut t = DadaTrainer::new(config, &placeholder)?;
        a.load_store(MODEL_PREFIX, &mut t.model.store)?;
        t.gen_opt = load_adam(a, "gen_opt/", &t.model.store, config.learning_rate, config.adam_betas)?;
        t.disc_opt = load_adam(a, "disc_opt/", &t.model.store, config.learning_rate, config.adam_betas)?;
        t.iteration = a.iteration;
        Ok(t)
    }
}
