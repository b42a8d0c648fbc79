mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::{check_input_grad, check_param_grads, random};
use dada::cli::{self, ExperimentConfig, Overrides, SOURCE_ONLY_FILE};
use dada::data::{write_split, ColorSpace, Image, PairedSample, Split, UnpairedSample};
use dada::degradation::{
    blur_downsample, degrade, estimate_kernel, make_camera_profile, synthetic_corpus, synthetic_scene, KernelSpec,
};
use dada::eval::{difference_map, psnr_y, ssim};
use dada::losses::{
    adv_d_loss_from_logits, adv_d_loss_var, adv_g_loss_from_logits, gw_loss, gw_loss_var, l1_loss, perceptual_loss,
    perceptual_loss_var, total_objective, LossReport, LossWeights,
};
use dada::networks::{
    ArchConfig, DiscInput, Discriminator, Downsampler, IdentityExtractor, Module, RandomConvExtractor, SourceModel,
};
use dada::nn::{ParamId, ParamStore};
use dada::trainer::{
    make_pseudo_labels, run_experiment, DadaTrainer, ExperimentOutcome, GeneratorPass, RunOptions, TrainConfig, MODEL_FILE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [0, 1, 2];
const ROWS: [&str; 4] = ["full", "no_inter_aa", "no_intra_aa", "no_dia"];
/// Wall-clock budget for one seed's prepare, pretrain, baselines and full row.
const BUDGET_S: f64 = 30.0 * 60.0;

fn lab_config(seed: u64) -> String {
    format!(
        r#"
preset = "desk"
out = "out"

[train]
pretrain_iters = 2000
max_iters = 500
learning_rate = 1e-4
pretrain_learning_rate = 1e-3
seed = {seed}

[data]
root = "lab"
source = "aniso"
target = "iso"

[data.synthetic]
count = 25
size = 128
train_fraction = 0.8
seed = {seed}

[[data.synthetic.cameras]]
name = "aniso"
kernel = {{ kind = "aniso_gauss", sigma_x = 3.0, sigma_y = 1.0, angle_deg = 0.0 }}

[[data.synthetic.cameras]]
name = "iso"
kernel = {{ kind = "iso_gauss", sigma = 0.8 }}

[ablation]
rows = ["all"]
"#
    )
}

struct SeedRun {
    seed: u64,
    source_only: f64,
    target_only: f64,
    rows: BTreeMap<String, f64>,
    /// prepare + pretrain + baselines + the full row.
    seconds: f64,
    kernel_wins: usize,
    kernel_total: usize,
}

fn run_seed(seed: u64) -> SeedRun {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, lab_config(seed)).unwrap();
    let cfg = ExperimentConfig::load(&path, &Overrides::default()).unwrap();

    let start = Instant::now();
    cli::prepare_data(&cfg).unwrap();
    cli::pretrain(&cfg, true).unwrap();
    let setup = start.elapsed().as_secs_f64();
    let outcomes = cli::train_dada(&cfg, false).unwrap();
    let full_row = outcomes
        .iter()
        .find(|(n, _)| n == "full")
        .and_then(|(_, o)| o.log.last())
        .map(|r| r.elapsed_s)
        .unwrap();
    let rows = outcomes
        .iter()
        .map(|(n, o)| (n.clone(), o.evaluation.as_ref().unwrap().psnr_y))
        .collect();

    let matrix = cli::eval(&cfg, &[]).unwrap();
    let col = matrix.cols.iter().position(|c| c == "iso").unwrap();
    let score = |model: &str| {
        let r = matrix.rows.iter().position(|m| m == model).unwrap();
        matrix.cells[r][col].psnr_y
    };
    let models = vec![
        ("source_only".to_string(), cfg.out.join(SOURCE_ONLY_FILE)),
        ("dada_full".to_string(), cfg.out.join("full").join(MODEL_FILE)),
    ];
    let report = cli::estimate_kernels(&cfg, &models).unwrap();
    let (kernel_wins, kernel_total) = report.closer_count("dada_full", "source_only");
    SeedRun {
        seed,
        source_only: score("source_only"),
        target_only: score("target_only"),
        rows,
        seconds: setup + full_row,
        kernel_wins,
        kernel_total,
    }
}

fn adaptation_gain(runs: &[SeedRun]) -> Result<String, String> {
    let mut ok = 0;
    let mut parts = Vec::new();
    let mut slowest: f64 = 0.0;
    for r in runs {
        let dada = r.rows["full"];
        let holds = r.source_only + 0.2 <= dada && dada <= r.target_only;
        ok += usize::from(holds);
        slowest = slowest.max(r.seconds);
        parts.push(format!(
            "seed {} SO {:.3} DADA {:.3} TO {:.3} {} ({:.0}s)",
            r.seed,
            r.source_only,
            dada,
            r.target_only,
            if holds { "ok" } else { "miss" },
            r.seconds
        ));
    }
    let msg = format!("{ok}/3 seeds; {}", parts.join("; "));
    if ok >= 2 && slowest <= BUDGET_S {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ablation_ordering(runs: &[SeedRun]) -> Result<String, String> {
    let mean = |row: &str| runs.iter().map(|r| r.rows[row]).sum::<f64>() / runs.len() as f64;
    let full = mean("full");
    let parts: Vec<String> = ROWS.iter().map(|r| format!("{r} {:.3}", mean(r))).collect();
    let msg = format!("mean PSNR-Y {}", parts.join(", "));
    if ROWS[1..].iter().all(|r| full >= mean(r) - 0.05) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn kernel_gap(runs: &[SeedRun]) -> Result<String, String> {
    let wins: usize = runs.iter().map(|r| r.kernel_wins).sum();
    let total: usize = runs.iter().map(|r| r.kernel_total).sum();
    let msg = format!("DADA estimate closer on {wins}/{total} target test images");
    if total > 0 && 2 * wins > total {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn kernel_recovery() -> Result<String, String> {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for (i, spec) in [
        KernelSpec::AnisoGauss { sigma_x: 3.0, sigma_y: 1.0, angle_deg: 30.0 },
        KernelSpec::IsoGauss { sigma: 1.6 },
        KernelSpec::AnisoGauss { sigma_x: 2.0, sigma_y: 1.2, angle_deg: -60.0 },
    ]
    .iter()
    .enumerate()
    {
        let hr = synthetic_scene(256, 5 + i as u64);
        let profile = make_camera_profile("t", spec, 4, 0.0).unwrap();
        let lr = degrade(&hr, &profile, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let start = Instant::now();
        let est = estimate_kernel(&hr, &lr, 25, 4, 5000, 1e-12).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let truth = profile.kernel.weights();
        let err = est.raw_weights.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        let again = blur_downsample(&hr, &est.kernel, 4).unwrap();
        let num = again.data().iter().zip(lr.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = lr.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = (worst.0.max(err / norm), worst.1.max(num / den), worst.2.max(secs));
    }
    let msg = format!(
        "worst of 3: kernel error {:.2}%, forward residual {:.3}%, {:.1}s",
        100.0 * worst.0,
        100.0 * worst.1,
        worst.2
    );
    if worst.0 < 0.05 && worst.1 < 0.01 && worst.2 < 60.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, ColorSpace::Rgb, |_, _, _| rng.random_range(0.0..1.0))
}

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() < 1e-9, "{what}: {a} vs {b}");
}

fn l1_oracle(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64
}

fn gw_oracle(pred: &Image, target: &Image) -> f64 {
    let (w, h) = (target.width() as isize, target.height() as isize);
    let at = |x: isize, y: isize, c| target.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize, c);
    let mut g = vec![0.0f64; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let gx = (at(x + 1, y, c) - at(x - 1, y, c)) / 2.0;
                let gy = (at(x, y + 1, c) - at(x, y - 1, c)) / 2.0;
                let cell = &mut g[(y * w + x) as usize];
                *cell = cell.max((gx * gx + gy * gy).sqrt());
            }
        }
    }
    let gmax = g.iter().cloned().fold(0.0, f64::max);
    let mut s = 0.0;
    for y in 0..h as usize {
        for x in 0..w as usize {
            let wt = 1.0 + if gmax > 0.0 { g[y * w as usize + x] / gmax } else { 0.0 };
            for c in 0..3 {
                s += wt * (pred.get(x, y, c) - target.get(x, y, c)).abs();
            }
        }
    }
    s / (w * h * 3) as f64
}

/// Zero-padded 3×3 convolutions and ReLUs as plain loops.
fn naive_features(e: &RandomConvExtractor, img: &Image) -> Vec<f64> {
    let mut x: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|c| (0..img.height()).map(|y| (0..img.width()).map(|xx| img.get(xx, y, c)).collect()).collect())
        .collect();
    for (li, l) in e.layers.iter().enumerate() {
        let [co, ci, k, _] = l.weight.shape();
        let (h, wd) = (x[0].len() as isize, x[0][0].len() as isize);
        let s = l.stride as isize;
        let oh = ((h + 2 - k as isize) / s + 1) as usize;
        let ow = ((wd + 2 - k as isize) / s + 1) as usize;
        let mut out = vec![vec![vec![0.0; ow]; oh]; co];
        for (o, plane) in out.iter_mut().enumerate() {
            for (oy, row) in plane.iter_mut().enumerate() {
                for (ox, v) in row.iter_mut().enumerate() {
                    let mut acc = l.bias.at(o, 0, 0, 0);
                    for (i, xi) in x.iter().enumerate().take(ci) {
                        for ky in 0..k {
                            for kx in 0..k {
                                let yy = oy as isize * s + ky as isize - 1;
                                let xx = ox as isize * s + kx as isize - 1;
                                if yy >= 0 && yy < h && xx >= 0 && xx < wd {
                                    acc += l.weight.at(o, i, ky, kx) * xi[yy as usize][xx as usize];
                                }
                            }
                        }
                    }
                    *v = if li + 1 < e.layers.len() { acc.max(0.0) } else { acc };
                }
            }
        }
        x = out;
    }
    x.into_iter().flatten().flatten().collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn loss_suite() -> Result<String, String> {
    let (a, b) = (random_image(9, 7, 1), random_image(9, 7, 2));
    close(l1_loss(&a, &b).unwrap(), l1_oracle(&a, &b), "l1");
    close(gw_loss(&a, &b).unwrap(), gw_oracle(&a, &b), "gw");
    let flat = Image::filled(9, 7, ColorSpace::Rgb, 0.37);
    assert_eq!(gw_loss(&a, &flat).unwrap(), l1_loss(&a, &flat).unwrap());

    let desk = RandomConvExtractor::new();
    let (fa, fb) = (naive_features(&desk, &a), naive_features(&desk, &b));
    let oracle = fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum::<f64>() / fa.len() as f64;
    close(perceptual_loss(&a, &b, &desk).unwrap(), oracle, "perceptual");
    assert_eq!(perceptual_loss(&a, &b, &IdentityExtractor).unwrap(), l1_loss(&a, &b).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let real: Vec<f64> = (0..50).map(|_| rng.random_range(-8.0..8.0)).collect();
    let fake: Vec<f64> = (0..50).map(|_| rng.random_range(-8.0..8.0)).collect();
    let d_oracle = -real.iter().map(|&z| sigmoid(z).ln()).sum::<f64>() / 50.0
        - fake.iter().map(|&z| (1.0 - sigmoid(z)).ln()).sum::<f64>() / 50.0;
    let g_oracle = -fake.iter().map(|&z| sigmoid(z).ln()).sum::<f64>() / 50.0;
    close(adv_d_loss_from_logits(&real, &fake).unwrap(), d_oracle, "adv_d");
    close(adv_g_loss_from_logits(&fake).unwrap(), g_oracle, "adv_g");

    let ones = LossReport {
        con_s: 1.0,
        con_t: 1.0,
        rec: 1.0,
        vgg: 1.0,
        inter_s_g: Some(1.0),
        inter_t_g: Some(1.0),
        intra_s_g: Some(1.0),
        intra_t_g: Some(1.0),
        ..Default::default()
    };
    assert_eq!(total_objective(&ones, &LossWeights::default()).unwrap(), 2.13);

    let x = random([1, 3, 5, 5], 0.0, 1.0, 1);
    let t = random([1, 3, 5, 5], 0.0, 1.0, 2);
    let t1 = t.clone();
    check_input_grad(&x, move |g, v| {
        let c = g.constant(t1.clone());
        g.l1(v, c)
    });
    let t2 = t.clone();
    check_input_grad(&x, move |g, v| gw_loss_var(g, v, &t2));
    let t3 = t.clone();
    check_input_grad(&x, move |g, v| perceptual_loss_var(g, v, &t3, &desk));
    let logits = random([1, 1, 5, 5], -5.0, 5.0, 3);
    check_input_grad(&logits, |g, v| g.bce_logits(v, 1.0));
    check_input_grad(&logits, |g, v| g.bce_logits(v, 0.0));

    let mut store = ParamStore::new();
    let d = Discriminator::new(&mut store, "d", DiscInput::Y, 2, &mut ChaCha8Rng::seed_from_u64(7));
    let (r, f) = (random([1, 3, 16, 16], 0.0, 1.0, 1), random([1, 3, 16, 16], 0.0, 1.0, 2));
    let n = check_param_grads(&store, &d.params(), |g| {
        let rv = g.constant(r.clone());
        let fv = g.constant(f.clone());
        adv_d_loss_var(g, &d, rv, fv)
    });
    Ok(format!("6 value oracles, 2.13 exact, 6 gradient checks ({n} discriminator scalars)"))
}

fn paired(n: usize, spec: &KernelSpec, seed: u64) -> Vec<PairedSample> {
    let profile = make_camera_profile("cam", spec, 4, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthetic_corpus(n, 64, seed)
        .into_iter()
        .enumerate()
        .map(|(i, hr)| PairedSample::new(degrade(&hr, &profile, &mut rng).unwrap(), hr, format!("{i:03}")).unwrap())
        .collect()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        pretrain_iters: 2,
        max_iters: 4,
        batch_pairs: 2,
        learning_rate: 1e-3,
        eval_every: 2,
        ..TrainConfig::default()
    }
}

fn all_zero(pass: &GeneratorPass, ids: &[ParamId]) -> bool {
    ids.iter().all(|id| pass.grads.get(id).is_none_or(|g| g.data().iter().all(|&v| v == 0.0)))
}

fn structural_suite() -> Result<String, String> {
    let source = paired(3, &KernelSpec::IsoGauss { sigma: 0.8 }, 1);
    let target: Vec<UnpairedSample> = paired(3, &KernelSpec::AnisoGauss { sigma_x: 3.0, sigma_y: 1.0, angle_deg: 0.0 }, 2)
        .into_iter()
        .map(|s| UnpairedSample { lr: s.lr, id: s.id })
        .collect();
    let config = small_config();
    let mut t = DadaTrainer::new(&config, &SourceModel::new(&config.arch, 5).unwrap()).unwrap();
    let frozen = t.model.frozen_params();
    let frozen_sum = t.model.checksum(&frozen);
    for _ in 0..3 {
        t.train_iteration(&source, &target).unwrap();
        assert_eq!(t.model.checksum(&frozen), frozen_sum, "frozen source branch moved");
    }
    assert_eq!(t.model.u_s.mask_params(), t.model.u_t.mask_params());
    for s in &target {
        let (_, ms, _) = t.model.u_s.upsample(&t.model.store, &s.lr).unwrap();
        let (_, mt, _) = t.model.u_t.upsample(&t.model.store, &s.lr).unwrap();
        assert_eq!(ms, mt, "masks differ");
    }

    let (gen, disc) = (t.model.generator_params(), t.model.discriminator_params());
    let batch = t.sample_batch(&source, &target).unwrap();
    let (g0, d0) = (t.model.checksum(&gen), t.model.checksum(&disc));
    let (_, outputs) = t.generator_phase(&batch).unwrap();
    let g1 = t.model.checksum(&gen);
    assert!(g1 != g0 && t.model.checksum(&disc) == d0, "generator phase touched discriminators");
    t.discriminator_phase(&outputs).unwrap();
    assert!(t.model.checksum(&gen) == g1 && t.model.checksum(&disc) != d0, "discriminator phase touched generators");

    let mut con_t = [0.0; 8];
    con_t[1] = 1.0;
    for dia in [true, false] {
        let mut c = small_config();
        c.toggles.dia = dia;
        let mut t = DadaTrainer::new(&c, &SourceModel::new(&c.arch, 5).unwrap()).unwrap();
        t.train_iteration(&source, &target).unwrap();
        let batch = t.sample_batch(&source, &target).unwrap();
        let pass = t.generator_pass(&batch, &con_t).unwrap();
        assert!(pass.report.con_t > 0.0);
        let u_s = if dia { t.model.u_s.body_params() } else { t.model.u_s.params() };
        assert!(all_zero(&pass, &u_s), "target content loss reached the source branch");
        let label = make_pseudo_labels(&t.model, &target[0].lr).unwrap();
        assert_eq!(label.content_target, t.model.u_s.upsample(&t.model.store, &target[0].lr).unwrap().0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = SourceModel::new(&ArchConfig::default(), 4).unwrap();
    let mut store = ParamStore::new();
    let down = Downsampler::new(&mut store, "d", &ArchConfig::default(), &mut rng);
    let sizes = 12;
    for _ in 0..sizes {
        let (w, h) = (rng.random_range(3..25), rng.random_range(3..25));
        let lr = random_image(w, h, rng.random());
        let sr = model.super_resolve(&lr).unwrap();
        assert_eq!((sr.width(), sr.height(), sr.channels()), (4 * w, 4 * h, 3));
        let back = down.downsample(&store, &sr).unwrap();
        assert_eq!((back.width(), back.height(), back.channels()), (w, h, 3));
    }
    Ok(format!("masks, frozen checksum, G/D separation, zero u_s gradient, {sizes} random shape pairs"))
}

fn metric_suite() -> Result<String, String> {
    let base = Image::from_fn(20, 16, ColorSpace::Rgb, |x, y, c| 0.1 + 0.7 * ((x + 2 * y + c) % 5) as f64 / 5.0);
    let p = psnr_y(&base.map(|v| v + 0.1), &base).unwrap();
    close(p, 20.0, "psnr");
    let a = random_image(24, 24, 1);
    let s = ssim(&a, &a).unwrap();
    close(s, 1.0, "ssim");
    let b = random_image(24, 24, 2);
    let d = difference_map(&a, &b).unwrap();
    assert_eq!(d.mean(), l1_loss(&a, &b).unwrap());
    Ok(format!("psnr {p:.12} dB, ssim(x,x) {s:.12}, difference map mean equals l1"))
}

fn write_small_lab(root: &Path) {
    let src = paired(3, &KernelSpec::IsoGauss { sigma: 0.8 }, 11);
    let tgt = paired(4, &KernelSpec::AnisoGauss { sigma_x: 3.0, sigma_y: 1.0, angle_deg: 0.0 }, 12);
    write_split(root, "src", Split::Train, &src, true).unwrap();
    write_split(root, "tgt", Split::Train, &tgt[..3], false).unwrap();
    write_split(root, "tgt", Split::Test, &tgt[3..], true).unwrap();
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    write_small_lab(dir.path());
    let (src, tgt) = (dir.path().join("src"), dir.path().join("tgt"));
    let config = TrainConfig {
        max_iters: 6,
        ..small_config()
    };
    let run = |name: &str, opts: RunOptions| run_experiment(&config, &src, &tgt, &dir.path().join(name), opts).unwrap();
    let a = run("a", RunOptions::default());
    let b = run("b", RunOptions::default());
    let reports = |o: &ExperimentOutcome| o.log.iter().map(|r| r.report.clone()).collect::<Vec<_>>();
    assert_eq!(reports(&a), reports(&b));
    let json = |o: &ExperimentOutcome| serde_json::to_string(o.evaluation.as_ref().unwrap()).unwrap();
    assert_eq!(json(&a), json(&b));
    assert_eq!(
        std::fs::read(dir.path().join("a").join(MODEL_FILE)).unwrap(),
        std::fs::read(dir.path().join("b").join(MODEL_FILE)).unwrap()
    );

    let first = run("c", RunOptions { resume: false, stop_after: Some(3) });
    assert!(!first.completed);
    let rest = run("c", RunOptions { resume: true, stop_after: None });
    let mut joined = reports(&first);
    joined.extend(reports(&rest));
    assert_eq!(joined, reports(&a));
    assert_eq!(json(&rest), json(&a));
    assert_eq!(rest.trainer, a.trainer);
    Ok(format!("{} LossReports and evaluation identical across runs and across a resume at 3", a.log.len()))
}

fn check(f: impl FnOnce() -> Result<String, String>) -> Result<String, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, Result<String, String>)> = vec![
        (3, check(kernel_recovery)),
        (5, check(loss_suite)),
        (6, check(structural_suite)),
        (7, check(metric_suite)),
        (8, check(determinism)),
    ];
    let runs = catch_unwind(|| {
        SEEDS
            .iter()
            .map(|&s| {
                eprintln!("lab seed {s}");
                run_seed(s)
            })
            .collect::<Vec<_>>()
    });
    match runs {
        Ok(runs) => {
            results.push((1, check(|| adaptation_gain(&runs))));
            results.push((2, check(|| ablation_ordering(&runs))));
            results.push((4, check(|| kernel_gap(&runs))));
        }
        Err(_) => {
            for n in [1, 2, 4] {
                results.push((n, Err("lab pipeline failed".into())));
            }
        }
    }
    results.sort_by_key(|(n, _)| *n);
    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Ok(m) => println!("criterion {n}: PASS {m}"),
            Err(m) => {
                failed += 1;
                println!("criterion {n}: FAIL {m}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
