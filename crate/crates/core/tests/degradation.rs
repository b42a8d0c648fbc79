use std::time::Instant;

use dada::data::{ColorSpace, Image};
use dada::degradation::{
    blur_downsample, degrade, estimate_kernel, kernel_distance, make_camera_profile, synthetic_scene, Kernel,
    KernelSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mirror index without edge repeat, written out case by case.
fn mirror(i: isize, n: isize) -> usize {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Dense operator matrix for (hr ⊗ k)↓s on one channel: row = LR pixel,
/// column = HR pixel.
fn dense_operator(w: usize, h: usize, k: &Kernel, s: usize) -> Vec<Vec<f64>> {
    let r = k.radius() as isize;
    let mut rows = Vec::new();
    for ly in 0..h / s {
        for lx in 0..w / s {
            let mut row = vec![0.0; w * h];
            for i in 0..k.size() {
                for j in 0..k.size() {
                    let sy = mirror((ly * s) as isize - (i as isize - r), h as isize);
                    let sx = mirror((lx * s) as isize - (j as isize - r), w as isize);
                    row[sy * w + sx] += k.at(i, j);
                }
            }
            rows.push(row);
        }
    }
    rows
}

#[test]
fn degrade_matches_dense_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let hr = Image::from_fn(32, 24, ColorSpace::Rgb, |_, _, _| rng.random_range(0.0..1.0));
    let profile = make_camera_profile("iso", &KernelSpec::IsoGauss { sigma: 2.0 }, 4, 0.0).unwrap();
    let lr = degrade(&hr, &profile, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let op = dense_operator(32, 24, &profile.kernel, 4);
    for c in 0..3 {
        let plane: Vec<f64> = (0..24 * 32).map(|p| hr.get(p % 32, p / 32, c)).collect();
        for (row_idx, row) in op.iter().enumerate() {
            let expect: f64 = row.iter().zip(&plane).map(|(a, b)| a * b).sum();
            let got = lr.get(row_idx % 8, row_idx / 8, c);
            assert!((expect - got).abs() < 1e-6, "c{c} row {row_idx}: {expect} vs {got}");
        }
    }
}

#[test]
fn recovers_known_kernel_from_noiseless_pair() {
    let hr = synthetic_scene(256, 5);
    let spec = KernelSpec::AnisoGauss {
        sigma_x: 3.0,
        sigma_y: 1.0,
        angle_deg: 30.0,
    };
    let profile = make_camera_profile("t", &spec, 4, 0.0).unwrap();
    let lr = degrade(&hr, &profile, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();

    let start = Instant::now();
    let est = estimate_kernel(&hr, &lr, 25, 4, 5000, 1e-12).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let truth = profile.kernel.weights();
    let err: f64 = est.raw_weights.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!(
        "iters {} converged {} rel_err {:.3e} rel_res {:.3e} in {secs:.2}s",
        est.iterations,
        est.converged,
        err / norm,
        est.relative_residual
    );
    assert!(err / norm < 0.05);
    assert!(est.relative_residual < 1e-2);
    assert!(secs < 60.0);

    // CG on the normal equations never increases ‖Ak − b‖².
    for w in est.residual_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
    }

    // Re-degrading with the estimate reproduces the LR.
    let again = blur_downsample(&hr, &est.kernel, 4).unwrap();
    let num: f64 = again.data().iter().zip(lr.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = lr.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(num / den < 1e-2);
}

#[test]
fn delta_degradation_yields_peaked_estimate() {
    let hr = synthetic_scene(128, 9);
    let profile = make_camera_profile("d", &KernelSpec::Delta, 4, 0.0).unwrap();
    let lr = degrade(&hr, &profile, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let est = estimate_kernel(&hr, &lr, 25, 4, 5000, 1e-12).unwrap();
    let w = est.kernel.weights();
    let peak = w[12 * 25 + 12];
    let off: f64 = w.iter().map(|v| v.abs()).sum::<f64>() - peak.abs();
    assert!(off / w.iter().map(|v| v.abs()).sum::<f64>() < 0.05, "off-peak mass {off}");
}

#[test]
fn kernel_distance_of_estimates_is_symmetric_and_zero_on_self() {
    let a = Kernel::iso_gauss(25, 1.0).unwrap();
    let b = Kernel::aniso_gauss(25, 3.0, 1.0, 0.0).unwrap();
    assert_eq!(kernel_distance(&a, &a).unwrap(), 0.0);
    assert_eq!(kernel_distance(&a, &b).unwrap(), kernel_distance(&b, &a).unwrap());
}
