use dada::data::{ColorSpace, Dihedral, Image, PairedSample};
use dada::eval::{
    cross_device_matrix, difference_map, evaluate, psnr_y, psnr_y_with_border, ssim, ssim_with_border,
    EvalOptions, SuperResolver, PSNR_CAP,
};
use dada::losses::l1_loss;
use dada::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, ColorSpace::Rgb, |_, _, _| rng.random_range(0.0..1.0))
}

fn smooth_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.05..0.4));
    Image::from_fn(w, h, ColorSpace::Rgb, |x, y, c| {
        0.5 + 0.25 * ((x as f64 * f[c]).sin() + (y as f64 * f[c + 3]).cos()) + 0.02 * rng.random_range(-1.0..1.0)
    })
}

#[test]
fn psnr_cases() {
    let a = random_image(20, 16, 1);
    assert_eq!(psnr_y(&a, &a).unwrap(), PSNR_CAP);

    let base = Image::from_fn(20, 16, ColorSpace::Rgb, |x, y, c| 0.1 + 0.7 * ((x + 2 * y + c) % 5) as f64 / 5.0);
    let shifted = base.map(|v| v + 0.1);
    assert!((psnr_y(&shifted, &base).unwrap() - 20.0).abs() < 1e-9);

    let b = random_image(20, 16, 2);
    let mut se = 0.0;
    let mut n = 0.0;
    for y in 4..12 {
        for x in 4..16 {
            let ya = 0.299 * a.get(x, y, 0) + 0.587 * a.get(x, y, 1) + 0.114 * a.get(x, y, 2);
            let yb = 0.299 * b.get(x, y, 0) + 0.587 * b.get(x, y, 1) + 0.114 * b.get(x, y, 2);
            se += (ya - yb) * (ya - yb);
            n += 1.0;
        }
    }
    let oracle = 10.0 * (1.0 / (se / n)).log10();
    assert!((psnr_y(&a, &b).unwrap() - oracle).abs() < 1e-9);
    assert!(psnr_y(&a, &random_image(16, 20, 0)).is_err());
}

#[test]
fn psnr_strictly_drops_under_perturbation() {
    let a = smooth_image(24, 24, 3);
    let mut last = PSNR_CAP;
    for k in 1..6 {
        let p = a.map(|v| v + 0.01 * k as f64);
        let q = psnr_y(&p, &a).unwrap();
        assert!(q < last);
        last = q;
    }
}

/// Direct windowed statistics at every valid position.
fn ssim_oracle(a: &Image, b: &Image) -> f64 {
    let k = 11;
    let mut w = [[0.0f64; 11]; 11];
    let mut s = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            s += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for c in 0..3 {
        let mut acc = 0.0;
        let mut count = 0.0;
        for y0 in 0..=a.height() - k {
            for x0 in 0..=a.width() - k {
                let (mut ma, mut mb, mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..k {
                    for j in 0..k {
                        let wt = w[i][j] / s;
                        let (p, q) = (a.get(x0 + j, y0 + i, c), b.get(x0 + j, y0 + i, c));
                        ma += wt * p;
                        mb += wt * q;
                        vaa += wt * p * p;
                        vbb += wt * q * q;
                        vab += wt * p * q;
                    }
                }
                let (sa, sb, sab) = (vaa - ma * ma, vbb - mb * mb, vab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * sab + c2)) / ((ma * ma + mb * mb + c1) * (sa + sb + c2));
                count += 1.0;
            }
        }
        total += acc / count;
    }
    total / 3.0
}

#[test]
fn ssim_cases() {
    let a = smooth_image(30, 26, 4);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let neg = a.map(|v| 1.0 - v);
    assert!(ssim_with_border(&neg, &a, 0).unwrap() < 0.0);

    let b = random_image(30, 26, 5);
    let got = ssim_with_border(&a, &b, 0).unwrap();
    assert!((got - ssim_oracle(&a, &b)).abs() < 1e-6);
    assert!((got - ssim_with_border(&b, &a, 0).unwrap()).abs() < 1e-12);
    // The default crop removes 4 pixels per side before windowing.
    let cropped = ssim_oracle(&a.crop(4, 4, 22, 18).unwrap(), &b.crop(4, 4, 22, 18).unwrap());
    assert!((ssim(&a, &b).unwrap() - cropped).abs() < 1e-6);
    assert!(ssim(&random_image(12, 12, 0), &random_image(12, 12, 1)).is_err());
}

#[test]
fn difference_map_cases() {
    let a = random_image(9, 8, 6);
    let b = random_image(9, 8, 7);
    let same = difference_map(&a, &a).unwrap();
    assert!(same.raw.data().iter().all(|&v| v == 0.0));
    assert!(same.display.data().iter().all(|&v| v == 0.0));
    let ones = difference_map(&Image::filled(4, 4, ColorSpace::Rgb, 0.0), &Image::filled(4, 4, ColorSpace::Rgb, 1.0))
        .unwrap();
    assert!(ones.display.data().iter().all(|&v| v == 1.0));
    let d = difference_map(&a, &b).unwrap();
    assert_eq!(d.mean(), l1_loss(&a, &b).unwrap());
    assert!(d.display.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(d.display.data().iter().any(|&v| v == 1.0));
}

#[test]
fn metrics_are_dihedral_invariant() {
    let a = smooth_image(28, 28, 8);
    let b = smooth_image(28, 28, 9);
    let (p, s) = (psnr_y(&a, &b).unwrap(), ssim(&a, &b).unwrap());
    for t in Dihedral::all() {
        let (ta, tb) = (t.apply(&a), t.apply(&b));
        assert!((psnr_y(&ta, &tb).unwrap() - p).abs() < 1e-9);
        assert!((ssim(&ta, &tb).unwrap() - s).abs() < 1e-9);
    }
}

/// Nearest-neighbour ×2 upscaling with a brightness offset.
struct Nearest(f64);

impl SuperResolver for Nearest {
    fn super_resolve(&self, lr: &Image) -> Result<Image> {
        Ok(Image::from_fn(lr.width() * 2, lr.height() * 2, ColorSpace::Rgb, |x, y, c| {
            (lr.get(x / 2, y / 2, c) + self.0).clamp(0.0, 1.0)
        }))
    }
}

fn test_set(seed: u64, n: usize) -> Vec<PairedSample> {
    (0..n)
        .map(|i| {
            let hr = smooth_image(32, 32, seed + i as u64);
            let lr = Image::from_fn(16, 16, ColorSpace::Rgb, |x, y, c| hr.get(2 * x, 2 * y, c));
            PairedSample::new(lr, hr, format!("img{i:02}")).unwrap()
        })
        .collect()
}

#[test]
fn single_cell_matrix_equals_direct_evaluation() {
    let set = test_set(10, 3);
    let m = Nearest(0.0);
    let opts = EvalOptions::default();
    let direct = evaluate(&m, &set, "cam", "nearest", &opts).unwrap();
    let matrix = cross_device_matrix(&[("nearest", &m)], &[("cam", &set)], &opts).unwrap();
    assert_eq!(matrix.cells[0][0], direct);
    assert_eq!(direct.n_images, 3);
    let ids: Vec<_> = direct.per_image.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["img00", "img01", "img02"]);
    let mean = direct.per_image.iter().map(|s| s.psnr_y).sum::<f64>() / 3.0;
    assert_eq!(direct.psnr_y, mean);
}

#[test]
fn matrix_cells_do_not_depend_on_model_order() {
    let (s1, s2) = (test_set(20, 2), test_set(30, 2));
    let (m1, m2) = (Nearest(0.0), Nearest(0.05));
    let opts = EvalOptions::default();
    let a = cross_device_matrix(&[("a", &m1), ("b", &m2)], &[("x", &s1), ("y", &s2)], &opts).unwrap();
    let b = cross_device_matrix(&[("b", &m2), ("a", &m1)], &[("x", &s1), ("y", &s2)], &opts).unwrap();
    assert_eq!(a.cells[0], b.cells[1]);
    assert_eq!(a.cells[1], b.cells[0]);
    assert!(a.psnr_grid()[0][0] > a.psnr_grid()[1][0]);
}

#[test]
fn reports_export_to_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let set = test_set(40, 2);
    let r = evaluate(&Nearest(0.0), &set, "cam", "m", &EvalOptions::default()).unwrap();
    r.write_csv(&dir.path().join("r.csv")).unwrap();
    r.write_json(&dir.path().join("r.json")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().last().unwrap().contains("mean"));
    let back: dada::eval::EvalReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(back, r);
    assert!(psnr_y_with_border(&set[0].hr, &set[0].hr, 0).unwrap() == PSNR_CAP);
}
