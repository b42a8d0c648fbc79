use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batch::STREAM_SOURCE;
use super::state::{load_model, save_model};
use super::{DadaTrainer, SupervisedTrainer, TrainConfig};
use crate::data::{load_dataset, DatasetRole, PairedSample, Split, UnpairedSample, HR_DIR};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::losses::LossReport;
use crate::networks::{Archive, SourceModel};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const PRETRAINED_FILE: &str = "pretrained.ckpt";
pub const PRETRAIN_STATE_FILE: &str = "pretrain_state.ckpt";
pub const PRETRAIN_LOG: &str = "pretrain_log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const EVAL_LOG: &str = "eval_log.jsonl";
/// The final target upsampler, loadable with [`super::load_model`].
pub const MODEL_FILE: &str = "model.ckpt";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: u64,
    pub elapsed_s: f64,
    #[serde(flatten)]
    pub report: LossReport,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from `checkpoint.ckpt` if it exists.
    pub resume: bool,
    /// Stop (and checkpoint) once this many iterations are done.
    pub stop_after: Option<u64>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub trainer: DadaTrainer,
    /// Records written by this invocation.
    pub log: Vec<LogRecord>,
    /// Target-test scores of `u_t`, if the target domain has a test split.
    pub evaluation: Option<EvalReport>,
    pub completed: bool,
}

/// Paired training split of a domain directory.
pub fn load_source_train(domain_dir: &Path) -> Result<Vec<PairedSample>> {
    load_dataset(&domain_dir.join(Split::Train.dir_name()), DatasetRole::Paired)?.into_paired()
}

/// LR images of a domain's training split. HR files, if any, are ignored.
pub fn load_target_train(domain_dir: &Path) -> Result<Vec<UnpairedSample>> {
    Ok(load_dataset(&domain_dir.join(Split::Train.dir_name()), DatasetRole::Unpaired)?.lr_only())
}

/// Paired test split, or `None` when the domain has no test HR.
pub fn load_test(domain_dir: &Path) -> Result<Option<Vec<PairedSample>>> {
    let dir = domain_dir.join(Split::Test.dir_name());
    if !dir.join(HR_DIR).is_dir() {
        return Ok(None);
    }
    load_dataset(&dir, DatasetRole::Paired)?.into_paired().map(Some)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn write_line<T: Serialize>(f: &mut File, path: &Path, record: &T) -> Result<()> {
    let line = serde_json::to_string(record)?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Keeps the lines whose `iter` is below `iteration`.
fn truncate_log(path: &Path, iteration: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line)?;
        if v.get("iter").and_then(|i| i.as_u64()).is_some_and(|i| i < iteration) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept).map_err(|e| Error::io(path, e))
}

fn append(path: &Path) -> Result<File> {
    OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))
}

/// Loads `pretrained.ckpt` from `out_dir` if it was produced under the same
/// pretraining settings, otherwise pretrains and writes it.
pub fn load_or_pretrain(config: &TrainConfig, source: &[PairedSample], out_dir: &Path) -> Result<SourceModel> {
    let path = out_dir.join(PRETRAINED_FILE);
    let hash = config.pretrain_hash();
    if path.exists() {
        let (model, stored) = load_model(&path)?;
        if stored == hash && model.arch == config.arch {
            log::info!("reusing {}", path.display());
            return Ok(model);
        }
        log::warn!("{} was trained under other settings; pretraining again", path.display());
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join(PRETRAIN_LOG);
    let mut log = create(&log_path)?;
    let mut t = SupervisedTrainer::new(config, STREAM_SOURCE)?;
    while t.iteration < config.pretrain_iters {
        let rec = t.step(source)?;
        write_line(&mut log, &log_path, &rec)?;
        if t.iteration % config.eval_every == 0 || t.iteration == config.pretrain_iters {
            t.to_archive(&hash).write(&out_dir.join(PRETRAIN_STATE_FILE))?;
        }
    }
    save_model(&t.model, &hash, t.iteration, &path)?;
    Ok(t.model)
}

fn save_checkpoint(trainer: &DadaTrainer, elapsed: f64, path: &Path) -> Result<()> {
    let mut a = trainer.to_archive();
    a.meta["elapsed_s"] = elapsed.into();
    a.write(path)
}

/// Pretrains or loads `u_s0`, runs the adaptation loop to `max_iters` with
/// periodic checkpoints and evaluations, and writes the final target model
/// and report. A non-finite loss stops the run with an error, leaving the
/// last checkpoint in place.
pub fn run_experiment(
    config: &TrainConfig,
    source_dir: &Path,
    target_dir: &Path,
    out_dir: &Path,
    opts: RunOptions,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let hash = config.hash();
    let cfg_path = out_dir.join(CONFIG_FILE);
    let cfg_json = serde_json::json!({ "config_hash": hash, "config": config });
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg_json)?).map_err(|e| Error::io(&cfg_path, e))?;

    let source = load_source_train(source_dir)?;
    let target = load_target_train(target_dir)?;
    let test = load_test(target_dir)?;
    let domain = target_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "target".into());

    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    let log_path = out_dir.join(TRAIN_LOG);
    let eval_path = out_dir.join(EVAL_LOG);
    let (mut trainer, prior_elapsed) = if opts.resume && ckpt_path.exists() {
        let a = Archive::read(&ckpt_path)?;
        let t = DadaTrainer::from_archive(config, &a)?;
        let elapsed = a.meta.get("elapsed_s").and_then(|v| v.as_f64()).unwrap_or(0.0);
        log::info!("resuming at iteration {}", t.iteration);
        (t, elapsed)
    } else {
        if opts.resume {
            log::warn!("no checkpoint in {}; starting from scratch", out_dir.display());
        }
        let pretrained = load_or_pretrain(config, &source, out_dir)?;
        (DadaTrainer::new(config, &pretrained)?, 0.0)
    };
    let (mut log, mut eval_log) = if trainer.iteration > 0 {
        truncate_log(&log_path, trainer.iteration)?;
        truncate_log(&eval_path, trainer.iteration + 1)?;
        (append(&log_path)?, append(&eval_path)?)
    } else {
        (create(&log_path)?, create(&eval_path)?)
    };

    let start = Instant::now();
    let elapsed = || prior_elapsed + start.elapsed().as_secs_f64();
    let mut records = Vec::new();
    let mut saved_at = trainer.iteration;
    while trainer.iteration < config.max_iters && opts.stop_after.is_none_or(|s| trainer.iteration < s) {
        let iter = trainer.iteration;
        let report = trainer.train_iteration(&source, &target)?;
        let rec = LogRecord {
            iter,
            elapsed_s: elapsed(),
            report,
        };
        write_line(&mut log, &log_path, &rec)?;
        records.push(rec);
        if trainer.iteration % config.eval_every == 0 || trainer.iteration == config.max_iters {
            save_checkpoint(&trainer, elapsed(), &ckpt_path)?;
            saved_at = trainer.iteration;
            if let Some(test) = &test {
                let r = evaluate(&trainer.model, test, &domain, "dada", &EvalOptions::default())?;
                let line = serde_json::json!({ "iter": trainer.iteration, "psnr_y": r.psnr_y, "ssim": r.ssim });
                write_line(&mut eval_log, &eval_path, &line)?;
            }
        }
    }
    if saved_at != trainer.iteration {
        save_checkpoint(&trainer, elapsed(), &ckpt_path)?;
    }

    let completed = trainer.iteration >= config.max_iters;
    let mut evaluation = None;
    if completed {
        save_model(&trainer.model.target_model(), &hash, trainer.iteration, &out_dir.join(MODEL_FILE))?;
        if let Some(test) = &test {
            let r = evaluate(&trainer.model, test, &domain, "dada", &EvalOptions::default())?;
            r.write_json(&out_dir.join(REPORT_JSON))?;
            r.write_csv(&out_dir.join(REPORT_CSV))?;
            evaluation = Some(r);
        }
    }
    Ok(ExperimentOutcome {
        trainer,
        log: records,
        evaluation,
        completed,
    })
}
