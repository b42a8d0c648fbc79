use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dada::cli::{ExperimentConfig, Overrides, LAB_FILE};
use dada::degradation::{degrade, synthetic_corpus, CameraSpec, KernelSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CONFIG: &str = r#"
out = "out"

[train]
pretrain_iters = 6
max_iters = 4
eval_every = 2
batch_pairs = 2

[data]
root = "lab"
source = "aniso"
target = "iso"

[data.synthetic]
count = 5
size = 64
train_fraction = 0.8
seed = 3

[[data.synthetic.cameras]]
name = "aniso"
kernel = { kind = "aniso_gauss", sigma_x = 3.0, sigma_y = 1.0, angle_deg = 0.0 }

[[data.synthetic.cameras]]
name = "iso"
kernel = { kind = "iso_gauss", sigma = 0.8 }
noise_sigma = 0.01

[kernel]
iters = 300
max_images = 1
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

fn dada(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dada"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "exit {:?}: {stderr}", out.status.code());
    String::from_utf8(out.stdout).unwrap()
}

fn png_bytes(p: &Path) -> Vec<u8> {
    image::open(p).unwrap().to_rgb8().into_raw()
}

/// All files under `dir` with their contents, sorted by relative path.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn prepare_data_splits_hides_target_hr_and_matches_degrade() {
    let tmp = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("count = 5", "count = 30");
    let cfg = write_config(tmp.path(), &text);
    ok(dada(&cfg, &["prepare-data"]));
    let lab = tmp.path().join("lab");
    let count = |d: &str| fs::read_dir(lab.join(d)).map(|r| r.count()).unwrap_or(0);
    for dom in ["aniso", "iso"] {
        assert_eq!(count(&format!("{dom}/train/LR")), 24);
        assert_eq!(count(&format!("{dom}/test/LR")), 6);
        assert_eq!(count(&format!("{dom}/test/HR")), 6);
    }
    assert_eq!(count("aniso/train/HR"), 24);
    assert!(!lab.join("iso/train/HR").exists());
    assert_eq!(count("iso/oracle/HR"), 24);

    // Re-render every image: camera k draws its noise from seed + 1 + k, in
    // corpus order.
    let hrs = synthetic_corpus(30, 64, 3);
    let specs = [
        CameraSpec {
            name: "aniso".into(),
            kernel: KernelSpec::AnisoGauss { sigma_x: 3.0, sigma_y: 1.0, angle_deg: 0.0 },
            kernel_size: 25,
            scale: 4,
            noise_sigma: 0.0,
        },
        CameraSpec {
            name: "iso".into(),
            kernel: KernelSpec::IsoGauss { sigma: 0.8 },
            kernel_size: 25,
            scale: 4,
            noise_sigma: 0.01,
        },
    ];
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(lab.join(LAB_FILE)).unwrap()).unwrap();
    let test_ids: Vec<&str> = manifest["test_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for (k, spec) in specs.iter().enumerate() {
        let profile = spec.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3 + 1 + k as u64);
        for (i, hr) in hrs.iter().enumerate() {
            let lr = degrade(hr, &profile, &mut rng).unwrap();
            let id = format!("img{i:03}");
            let split = if test_ids.contains(&id.as_str()) { "test" } else { "train" };
            let file = lab.join(&spec.name).join(split).join("LR").join(format!("{id}.png"));
            assert_eq!(png_bytes(&file), lr.to_u8(), "{}", file.display());
        }
    }

    let first = tree(&lab);
    ok(dada(&cfg, &["prepare-data"]));
    assert_eq!(tree(&lab), first);
}

#[test]
fn empty_corpus_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let text = CONFIG.replace("count = 5", "corpus_dir = \"empty\"");
    let out = dada(&write_config(tmp.path(), &text), &["prepare-data"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn config_errors_exit_2_with_the_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (CONFIG.replace("[train]", "[train]\nwarmup = 3"), "train.warmup"),
        (CONFIG.replace("max_iters = 4", "max_iters = \"four\""), "train.max_iters"),
        (CONFIG.replace("max_iters = 4", "max_iters = 0"), "train.max_iters"),
        (CONFIG.replace("sigma = 0.8", "sigma = 0.8, width = 2"), "data.synthetic.cameras[1].kernel"),
        (CONFIG.replace("target = \"iso\"", "target = \"aniso\""), "data.target"),
        (CONFIG.replace("target = \"iso\"", "target = \"phone\""), "data.target"),
        (format!("{CONFIG}\n[ablation]\nrows = [\"no_masks\"]\n"), "ablation.rows[0]"),
        (format!("preset = \"desk\"\n{}", CONFIG.replace("[train]", "[train.arch]\nscale = 4\nup_width = 4\nhourglass_depth = 1\nmask_width = 4\ndown_width = 4\ndown_blocks = 1\ndisc_width = 4\n\n[train]")), "preset"),
    ];
    for (text, path) in cases {
        let out = dada(&write_config(tmp.path(), &text), &["prepare-data"]);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "{path}: {stderr}");
        assert!(stderr.contains(&format!("`{path}`")), "{path}: {stderr}");
    }
}

#[test]
fn diverging_training_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("[train]", "[train]\npretrain_learning_rate = 1e300");
    let cfg = write_config(tmp.path(), &text);
    ok(dada(&cfg, &["prepare-data"]));
    let out = dada(&cfg, &["pretrain"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn overrides_and_presets_change_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let base = ExperimentConfig::load(&cfg, &Overrides::default()).unwrap();
    assert_eq!(base.data.root, tmp.path().join("lab"));
    let seeded = ExperimentConfig::load(&cfg, &Overrides {
        seed: Some(9),
        ..Overrides::default()
    })
    .unwrap();
    assert_eq!(seeded.train.seed, 9);
    assert_ne!(seeded.hash(), base.hash());
    let large = ExperimentConfig::load(&cfg, &Overrides {
        preset: Some(dada::networks::Preset::PaperLike),
        ..Overrides::default()
    })
    .unwrap();
    assert_eq!(large.train.arch.up_width, 64);
    let rows = ExperimentConfig::from_toml(&format!("{CONFIG}\n[ablation]\nrows = [\"all\", \"full\"]\n"))
        .unwrap()
        .ablation_rows()
        .unwrap();
    let names: Vec<_> = rows.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["full", "no_inter_aa", "no_intra_aa", "no_dia"]);
}

fn strip_elapsed(log: &str) -> Vec<serde_json::Value> {
    log.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("elapsed_s");
            v
        })
        .collect()
}

#[test]
fn pipeline_writes_every_artifact_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{CONFIG}\n[ablation]\nrows = [\"all\"]\n");
    let cfg = write_config(tmp.path(), &text);
    ok(dada(&cfg, &["prepare-data"]));
    ok(dada(&cfg, &["pretrain", "--baselines"]));
    ok(dada(&cfg, &["train-dada"]));
    let out = tmp.path().join("out");

    // Four runs, told apart by their config hashes and toggles.
    let runs: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("runs.json")).unwrap()).unwrap();
    let runs = runs["runs"].as_object().unwrap();
    assert_eq!(runs.len(), 4);
    let hashes: std::collections::BTreeSet<_> = runs.values().map(|r| r["config_hash"].as_str().unwrap()).collect();
    assert_eq!(hashes.len(), 4);
    for (row, r) in runs {
        let stored: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(row).join("config.json")).unwrap()).unwrap();
        assert_eq!(stored["config_hash"], r["config_hash"]);
    }
    let log = |row: &str| fs::read_to_string(out.join(row).join("train_log.jsonl")).unwrap();
    assert!(log("no_inter_aa").lines().all(|l| !l.contains("inter_s_g") && l.contains("intra_s_g")));
    assert!(log("full").lines().all(|l| l.contains("inter_s_g")));

    let stdout = ok(dada(&cfg, &["eval"]));
    assert_eq!(stdout.lines().count(), 6);
    let csv = fs::read_to_string(out.join("eval/dada_full__iso.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1 + 1);
    assert!(csv.lines().next().unwrap().contains("psnr_y") && csv.contains("ssim"));
    assert!(csv.lines().last().unwrap().contains("mean"));

    let files = dada::cli::plot(&ExperimentConfig::load(&cfg, &Overrides::default()).unwrap()).unwrap();
    assert_eq!(files.loss_curves.len(), 5);
    assert_eq!(files.difference_maps.len(), 6);
    assert!(files.kernel_heatmaps.len() >= 2);
    assert_eq!(files.matrices.len(), 1);
    for p in files.loss_curves.iter().chain(&files.difference_maps).chain(&files.kernel_heatmaps).chain(&files.matrices) {
        assert!(p.exists() && p.with_extension("txt").exists(), "{}", p.display());
    }

    // A second invocation overwrites everything with the same bytes, apart
    // from wall-clock fields.
    let model = fs::read(out.join("full/model.ckpt")).unwrap();
    let before = strip_elapsed(&log("no_dia"));
    let report = fs::read(out.join("no_dia/report.json")).unwrap();
    let source_only = fs::read(out.join("source_only.ckpt")).unwrap();
    ok(dada(&cfg, &["pretrain", "--baselines"]));
    ok(dada(&cfg, &["train-dada"]));
    assert_eq!(fs::read(out.join("full/model.ckpt")).unwrap(), model);
    assert_eq!(strip_elapsed(&log("no_dia")), before);
    assert_eq!(fs::read(out.join("no_dia/report.json")).unwrap(), report);
    assert_eq!(fs::read(out.join("source_only.ckpt")).unwrap(), source_only);

    // Resuming under another seed is rejected.
    let out = dada(&cfg, &["--seed", "5", "train-dada", "--resume"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_of_a_missing_checkpoint_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    ok(dada(&cfg, &["prepare-data"]));
    let out = dada(&cfg, &["eval", "--model", "ghost=nowhere.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.ckpt"));
    let out = dada(&cfg, &["eval"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn estimate_kernel_on_an_explicit_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    ok(dada(&cfg, &["prepare-data"]));
    let lab = tmp.path().join("lab/aniso/test");
    let id = fs::read_dir(lab.join("HR")).unwrap().next().unwrap().unwrap().file_name();
    let (hr, lr) = (lab.join("HR").join(&id), lab.join("LR").join(&id));
    ok(dada(&cfg, &["estimate-kernel", "--hr", hr.to_str().unwrap(), "--lr", lr.to_str().unwrap()]));
    let text = fs::read_to_string(tmp.path().join("out/kernels/pair.txt")).unwrap();
    let k = dada::degradation::Kernel::from_text_grid(&text).unwrap();
    assert_eq!(k.size(), 25);
    assert!(tmp.path().join("out/kernels/pair.png").exists());
}
