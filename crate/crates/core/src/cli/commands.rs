use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::data::{load_dataset, DatasetRole, Image, PairedSample};
use crate::degradation::{build_lab, estimate_kernel, kernel_distance, synthetic_corpus, write_lab, CameraSpec, Kernel, ORACLE_DIR};
use crate::eval::{cross_device_matrix, difference_map, CrossDeviceMatrix, EvalOptions, SuperResolver};
use crate::networks::{RandomConvExtractor, SourceModel};
use crate::plot;
use crate::trainer::{
    load_model, load_or_pretrain, load_source_train, load_test, run_experiment, save_model, target_only,
    ExperimentOutcome, LogRecord, RunOptions, SupervisedRecord, SupervisedTrainer, MODEL_FILE, PRETRAINED_FILE,
    PRETRAIN_LOG, PRETRAIN_STATE_FILE, TRAIN_LOG,
};
use crate::networks::Archive;
use crate::{Error, Result};

pub const LAB_FILE: &str = "lab.json";
/// True camera kernel, written next to each domain's splits.
pub const KERNEL_FILE: &str = "kernel.txt";
pub const SOURCE_ONLY_FILE: &str = "source_only.ckpt";
pub const TARGET_ONLY_FILE: &str = "target_only.ckpt";
pub const EVAL_DIR: &str = "eval";
pub const KERNEL_DIR: &str = "kernels";
pub const PLOT_DIR: &str = "plots";
pub const MATRIX_JSON: &str = "matrix.json";
pub const KERNEL_REPORT: &str = "kernels.json";
pub const RUNS_FILE: &str = "runs.json";

/// What `prepare-data` wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabManifest {
    pub config_hash: String,
    pub source: String,
    pub target: String,
    pub cameras: Vec<CameraSpec>,
    /// Domains whose training HR is kept out of `train/`.
    pub hidden: Vec<String>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// PNG files of `dir`, sorted by name.
fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Renders the HR corpus through every configured camera and writes one
/// domain tree per camera under `data.root`. The target's training HR goes
/// to the oracle directory.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<LabManifest> {
    let syn = cfg.data.synthetic.as_ref().ok_or_else(|| Error::Config {
        path: "data.synthetic".into(),
        message: "prepare-data needs a synthetic section".into(),
    })?;
    let hrs = match &syn.corpus_dir {
        Some(dir) => list_pngs(dir)?.iter().map(|p| Image::load_png(p)).collect::<Result<Vec<_>>>()?,
        None => synthetic_corpus(syn.count, syn.size, syn.seed),
    };
    if hrs.is_empty() {
        return Err(Error::Dataset("HR corpus is empty".into()));
    }
    let profiles = syn.cameras.iter().map(CameraSpec::build).collect::<Result<Vec<_>>>()?;
    let domains = build_lab(&hrs, &profiles, syn.train_fraction, syn.seed)?;
    let root = &cfg.data.root;
    for d in &domains {
        let dir = root.join(&d.name);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    }
    let hidden = vec![cfg.data.target.clone()];
    write_lab(root, &domains, &[cfg.data.target.as_str()])?;
    for p in &profiles {
        write_text(&root.join(p.name.as_str()).join(KERNEL_FILE), &p.kernel.to_text_grid())?;
    }
    let manifest = LabManifest {
        config_hash: cfg.hash(),
        source: cfg.data.source.clone(),
        target: cfg.data.target.clone(),
        cameras: syn.cameras.clone(),
        hidden,
        train_ids: domains[0].train.iter().map(|s| s.id.clone()).collect(),
        test_ids: domains[0].test.iter().map(|s| s.id.clone()).collect(),
    };
    write_json(&root.join(LAB_FILE), &manifest)?;
    Ok(manifest)
}

/// Target training pairs for the Target-Only oracle: the oracle directory
/// if present, else a paired training split.
pub fn load_target_pairs(cfg: &ExperimentConfig) -> Result<Vec<PairedSample>> {
    let dir = cfg.target_dir();
    let oracle = dir.join(ORACLE_DIR);
    if oracle.is_dir() {
        return load_dataset(&oracle, DatasetRole::Paired)?.into_paired();
    }
    load_source_train(&dir)
}

#[derive(Debug)]
pub struct Pretrained {
    pub pretrained: SourceModel,
    pub source_only: Option<SourceModel>,
    pub target_only: Option<SourceModel>,
}

/// Writes `pretrained.ckpt` and, with `baselines`, the Source-Only model
/// (the pretraining run continued for `max_iters` steps) and the
/// Target-Only oracle.
pub fn pretrain(cfg: &ExperimentConfig, baselines: bool) -> Result<Pretrained> {
    let train = &cfg.train;
    let source = load_source_train(&cfg.source_dir())?;
    mkdir(&cfg.out)?;
    let pretrained = load_or_pretrain(train, &source, &cfg.out)?;
    if !baselines {
        return Ok(Pretrained {
            pretrained,
            source_only: None,
            target_only: None,
        });
    }
    let hash = cfg.hash();
    let state = Archive::read(&cfg.out.join(PRETRAIN_STATE_FILE))?;
    let mut t = SupervisedTrainer::from_archive(train, &state)?;
    if t.iteration != train.pretrain_iters || t.model.checksum() != pretrained.checksum() {
        return Err(Error::Checkpoint(format!("{PRETRAIN_STATE_FILE} does not match {PRETRAINED_FILE}")));
    }
    t.run(&source, train.max_iters)?;
    save_model(&t.model, &hash, t.iteration, &cfg.out.join(SOURCE_ONLY_FILE))?;
    let target = load_target_pairs(cfg)?;
    let oracle = target_only(train, &target)?;
    save_model(&oracle, &hash, train.pretrain_iters + train.max_iters, &cfg.out.join(TARGET_ONLY_FILE))?;
    Ok(Pretrained {
        pretrained,
        source_only: Some(t.model),
        target_only: Some(oracle),
    })
}

/// Runs every ablation row into `out/<row>/`. The rows share one pretrained
/// source model.
pub fn train_dada(cfg: &ExperimentConfig, resume: bool) -> Result<Vec<(String, ExperimentOutcome)>> {
    let rows = cfg.ablation_rows()?;
    let source = load_source_train(&cfg.source_dir())?;
    mkdir(&cfg.out)?;
    load_or_pretrain(&cfg.train, &source, &cfg.out)?;
    let shared = cfg.out.join(PRETRAINED_FILE);
    let mut outcomes = Vec::new();
    let mut summary = serde_json::Map::new();
    for (name, toggles) in rows {
        let dir = cfg.out.join(&name);
        mkdir(&dir)?;
        fs::copy(&shared, dir.join(PRETRAINED_FILE)).map_err(|e| Error::io(&shared, e))?;
        let row_cfg = cfg.row_config(toggles);
        log::info!("ablation row `{name}`");
        let outcome = run_experiment(&row_cfg, &cfg.source_dir(), &cfg.target_dir(), &dir, RunOptions {
            resume,
            stop_after: None,
        })?;
        summary.insert(
            name.clone(),
            serde_json::json!({
                "config_hash": row_cfg.hash(),
                "toggles": toggles,
                "psnr_y": outcome.evaluation.as_ref().map(|r| r.psnr_y),
                "ssim": outcome.evaluation.as_ref().map(|r| r.ssim),
            }),
        );
        outcomes.push((name, outcome));
    }
    write_json(&cfg.out.join(RUNS_FILE), &serde_json::json!({ "config_hash": cfg.hash(), "runs": summary }))?;
    Ok(outcomes)
}

/// Checkpoints under `out`: the baselines and one DADA model per finished
/// ablation row, in that order.
pub fn discover_models(cfg: &ExperimentConfig) -> Result<Vec<(String, PathBuf)>> {
    let mut found = Vec::new();
    for (name, file) in [("source_only", SOURCE_ONLY_FILE), ("target_only", TARGET_ONLY_FILE)] {
        let p = cfg.out.join(file);
        if p.exists() {
            found.push((name.to_string(), p));
        }
    }
    for (row, _) in cfg.ablation_rows()? {
        let p = cfg.out.join(&row).join(MODEL_FILE);
        if p.exists() {
            found.push((format!("dada_{row}"), p));
        }
    }
    Ok(found)
}

fn load_models(cfg: &ExperimentConfig, models: &[(String, PathBuf)]) -> Result<Vec<(String, SourceModel)>> {
    let list = if models.is_empty() { discover_models(cfg)? } else { models.to_vec() };
    if list.is_empty() {
        return Err(Error::Checkpoint(format!(
            "no checkpoints under {}; run pretrain --baselines or train-dada first",
            cfg.out.display()
        )));
    }
    list.into_iter()
        .map(|(name, path)| {
            if !path.exists() {
                return Err(Error::Checkpoint(format!("missing checkpoint {}", path.display())));
            }
            Ok((name, load_model(&path)?.0))
        })
        .collect()
}

/// Domains under `data.root` that have a paired test split, sorted.
pub fn test_domains(cfg: &ExperimentConfig) -> Result<Vec<(String, Vec<PairedSample>)>> {
    let root = &cfg.data.root;
    let mut names: Vec<String> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut out = Vec::new();
    for n in names {
        if let Some(test) = load_test(&root.join(&n))? {
            out.push((n, test));
        }
    }
    if out.is_empty() {
        return Err(Error::Dataset(format!("no domain under {} has a test split", root.display())));
    }
    Ok(out)
}

/// Scores every model on every test domain. Writes one CSV and JSON per
/// cell plus the whole matrix to `out/eval/`.
pub fn eval(cfg: &ExperimentConfig, models: &[(String, PathBuf)]) -> Result<CrossDeviceMatrix> {
    let models = load_models(cfg, models)?;
    let domains = test_domains(cfg)?;
    let extractor = RandomConvExtractor::new();
    let opts = EvalOptions {
        border: cfg.metrics.border,
        perceptual: cfg.metrics.perceptual.then_some(&extractor as _),
    };
    let refs: Vec<(&str, &dyn SuperResolver)> = models.iter().map(|(n, m)| (n.as_str(), m as _)).collect();
    let sets: Vec<(&str, &[PairedSample])> = domains.iter().map(|(n, s)| (n.as_str(), s.as_slice())).collect();
    let matrix = cross_device_matrix(&refs, &sets, &opts)?;
    let dir = cfg.out.join(EVAL_DIR);
    mkdir(&dir)?;
    for row in &matrix.cells {
        for cell in row {
            let stem = format!("{}__{}", cell.model_id, cell.domain);
            cell.write_csv(&dir.join(format!("{stem}.csv")))?;
            cell.write_json(&dir.join(format!("{stem}.json")))?;
        }
    }
    matrix.write_json(&dir.join(MATRIX_JSON))?;
    matrix.write_csv(&dir.join("matrix.csv"))?;
    write_text(&dir.join("config_hash.txt"), &format!("{}\n", cfg.hash()))?;
    Ok(matrix)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    /// `hr` for the ground-truth HR, otherwise the model name.
    pub from: String,
    pub image: String,
    /// L2 distance to the camera's true kernel, when known.
    pub distance: Option<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub config_hash: String,
    pub domain: String,
    pub records: Vec<KernelRecord>,
}

impl KernelReport {
    /// Images where `a`'s estimate is strictly closer to the truth than `b`'s,
    /// and the number of images compared.
    pub fn closer_count(&self, a: &str, b: &str) -> (usize, usize) {
        let dist = |from: &str, img: &str| {
            self.records.iter().find(|r| r.from == from && r.image == img).and_then(|r| r.distance)
        };
        let mut wins = 0;
        let mut total = 0;
        for r in self.records.iter().filter(|r| r.from == a) {
            if let (Some(da), Some(db)) = (r.distance, dist(b, &r.image)) {
                total += 1;
                wins += usize::from(da < db);
            }
        }
        (wins, total)
    }
}

/// True kernel of a domain, if `prepare-data` wrote one.
pub fn true_kernel(cfg: &ExperimentConfig, domain: &str) -> Result<Option<Kernel>> {
    let p = cfg.data.root.join(domain).join(KERNEL_FILE);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Kernel::from_text_grid(&text).map(Some)
}

/// Estimates the kernel of one explicit HR/LR pair into `out/kernels/`.
pub fn estimate_pair(cfg: &ExperimentConfig, hr: &Path, lr: &Path) -> Result<Kernel> {
    let (hr, lr) = (Image::load_png(hr)?, Image::load_png(lr)?);
    let k = &cfg.kernel;
    let est = estimate_kernel(&hr, &lr, k.size, cfg.train.scale, k.iters, k.tol)?;
    let dir = cfg.out.join(KERNEL_DIR);
    mkdir(&dir)?;
    write_text(&dir.join("pair.txt"), &est.kernel.to_text_grid())?;
    write_json(&dir.join("pair.json"), &est)?;
    plot::kernel_heatmap(&est.kernel, 8).save_png(&dir.join("pair.png"))?;
    Ok(est.kernel)
}

/// For the first `kernel.max_images` target test images, estimates the
/// kernel linking the LR to the true HR and to each model's SR, and measures
/// each against the camera's true kernel.
pub fn estimate_kernels(cfg: &ExperimentConfig, models: &[(String, PathBuf)]) -> Result<KernelReport> {
    let models = load_models(cfg, models).or_else(|e| if models.is_empty() { Ok(Vec::new()) } else { Err(e) })?;
    let domain = cfg.data.target.clone();
    let mut test = load_test(&cfg.target_dir())?
        .ok_or_else(|| Error::Dataset(format!("domain `{domain}` has no test split")))?;
    test.sort_by(|a, b| a.id.cmp(&b.id));
    test.truncate(cfg.kernel.max_images.max(1));
    let truth = true_kernel(cfg, &domain)?;
    let dir = cfg.out.join(KERNEL_DIR).join(&domain);
    mkdir(&dir)?;
    if let Some(t) = &truth {
        write_text(&dir.join("true.txt"), &t.to_text_grid())?;
    }
    let k = &cfg.kernel;
    let mut records = Vec::new();
    for s in &test {
        let mut hrs: Vec<(String, Image)> = vec![("hr".into(), s.hr.clone())];
        for (name, m) in &models {
            hrs.push((name.clone(), m.super_resolve(&s.lr)?));
        }
        for (from, hr) in hrs {
            let est = estimate_kernel(&hr, &s.lr, k.size, cfg.train.scale, k.iters, k.tol)?;
            let file = format!("{}__{}.txt", s.id, from);
            write_text(&dir.join(&file), &est.kernel.to_text_grid())?;
            records.push(KernelRecord {
                distance: truth.as_ref().map(|t| kernel_distance(&est.kernel, t)).transpose()?,
                from,
                image: s.id.clone(),
                relative_residual: est.relative_residual,
                iterations: est.iterations,
                file,
            });
        }
    }
    let report = KernelReport {
        config_hash: cfg.hash(),
        domain,
        records,
    };
    write_json(&cfg.out.join(KERNEL_DIR).join(KERNEL_REPORT), &report)?;
    Ok(report)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Files written by [`plot`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotFiles {
    pub loss_curves: Vec<PathBuf>,
    pub difference_maps: Vec<PathBuf>,
    pub kernel_heatmaps: Vec<PathBuf>,
    pub matrices: Vec<PathBuf>,
}

/// Loss curves per run, LR/SR/HR/difference panels per model, kernel
/// heatmaps and the cross-device PSNR matrix, under `out/plots/`. Missing
/// evaluation and kernel results are computed first. Each PNG has a `.txt`
/// sidecar naming its panels.
pub fn plot(cfg: &ExperimentConfig) -> Result<PlotFiles> {
    let dir = cfg.out.join(PLOT_DIR);
    mkdir(&dir)?;
    let mut files = PlotFiles::default();

    let mut curves: Vec<(String, PathBuf, bool)> = Vec::new();
    if cfg.out.join(PRETRAIN_LOG).exists() {
        curves.push(("pretrain".into(), cfg.out.join(PRETRAIN_LOG), false));
    }
    for (row, _) in cfg.ablation_rows()? {
        let p = cfg.out.join(&row).join(TRAIN_LOG);
        if p.exists() {
            curves.push((row, p, true));
        }
    }
    if curves.is_empty() {
        return Err(Error::Dataset(format!("no training logs under {}", cfg.out.display())));
    }
    for (name, path, dada) in curves {
        let (labels, series): (Vec<String>, Vec<Vec<(f64, f64)>>) = if dada {
            let recs: Vec<LogRecord> = read_jsonl(&path)?;
            let mut cols: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
            for r in &recs {
                for (label, v) in r.report.named_values() {
                    let label = label.to_string();
                    let i = match cols.iter().position(|(l, _)| *l == label) {
                        Some(i) => i,
                        None => {
                            cols.push((label, Vec::new()));
                            cols.len() - 1
                        }
                    };
                    cols[i].1.push((r.iter as f64, v));
                }
            }
            cols.into_iter().unzip()
        } else {
            let recs: Vec<SupervisedRecord> = read_jsonl(&path)?;
            let pts = |f: fn(&SupervisedRecord) -> f64| recs.iter().map(|r| (r.iter as f64, f(r))).collect();
            (
                vec!["content".into(), "mask".into(), "total".into()],
                vec![pts(|r| r.content), pts(|r| r.mask), pts(|r| r.total)],
            )
        };
        let png = dir.join(format!("loss_{name}.png"));
        plot::loss_panels(&series, 480, 120).save_png(&png)?;
        write_text(&png.with_extension("txt"), &(labels.join("\n") + "\n"))?;
        files.loss_curves.push(png);
    }

    let models = load_models(cfg, &[])?;
    let mut test = load_test(&cfg.target_dir())?
        .ok_or_else(|| Error::Dataset(format!("domain `{}` has no test split", cfg.data.target)))?;
    test.sort_by(|a, b| a.id.cmp(&b.id));
    let sample = &test[0];
    for (name, m) in &models {
        let sr = m.super_resolve(&sample.lr)?;
        let diff = difference_map(&sr, &sample.hr)?;
        let png = dir.join(format!("diff_{name}.png"));
        plot::side_by_side(&[&sample.lr, &sr, &sample.hr, &diff.display], 4).save_png(&png)?;
        write_text(
            &png.with_extension("txt"),
            &format!("{}: lr, sr ({name}), hr, |hr - sr| / max\nmean |hr - sr| = {}\n", sample.id, diff.mean()),
        )?;
        files.difference_maps.push(png);
    }

    let report_path = cfg.out.join(KERNEL_DIR).join(KERNEL_REPORT);
    let report: KernelReport = match read_json::<KernelReport>(&report_path) {
        Ok(r) if r.config_hash == cfg.hash() => r,
        _ => estimate_kernels(cfg, &[])?,
    };
    let kdir = cfg.out.join(KERNEL_DIR).join(&report.domain);
    let mut kernels: Vec<(String, Kernel)> = Vec::new();
    if let Some(t) = true_kernel(cfg, &report.domain)? {
        kernels.push((format!("{}_true", report.domain), t));
    }
    if let Some(first) = report.records.first().map(|r| r.image.clone()) {
        for r in report.records.iter().filter(|r| r.image == first) {
            let p = kdir.join(&r.file);
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            kernels.push((format!("{}_{}", r.image, r.from), Kernel::from_text_grid(&text)?));
        }
    }
    for (name, k) in kernels {
        let png = dir.join(format!("kernel_{name}.png"));
        plot::kernel_heatmap(&k, 8).save_png(&png)?;
        write_text(&png.with_extension("txt"), &format!("{name}\n"))?;
        files.kernel_heatmaps.push(png);
    }

    let matrix_path = cfg.out.join(EVAL_DIR).join(MATRIX_JSON);
    let matrix: CrossDeviceMatrix = match read_json(&matrix_path) {
        Ok(m) => m,
        Err(_) => eval(cfg, &[])?,
    };
    let png = dir.join("matrix_psnr.png");
    plot::heatmap(&matrix.psnr_grid(), 24).save_png(&png)?;
    let mut legend = format!("rows: {}\ncols: {}\n", matrix.rows.join(", "), matrix.cols.join(", "));
    for (r, row) in matrix.rows.iter().zip(matrix.psnr_grid()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        legend.push_str(&format!("{r}: {}\n", cells.join(" ")));
    }
    write_text(&png.with_extension("txt"), &legend)?;
    files.matrices.push(png);
    Ok(files)
}
