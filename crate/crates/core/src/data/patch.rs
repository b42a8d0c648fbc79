use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Image, PairedSample, UnpairedSample};
use crate::{Error, Result};

/// Aligned random crop: an `lr_size²` LR window and the HR window at exactly
/// `scale ×` its offset.
pub fn extract_patch(sample: &PairedSample, lr_size: usize, rng: &mut impl Rng) -> Result<PairedSample> {
    let (x0, y0) = random_offset(&sample.lr, lr_size, rng)?;
    let s = sample.scale();
    Ok(PairedSample {
        lr: sample.lr.crop(x0, y0, lr_size, lr_size)?,
        hr: sample.hr.crop(x0 * s, y0 * s, lr_size * s, lr_size * s)?,
        id: sample.id.clone(),
    })
}

pub fn extract_lr_patch(sample: &UnpairedSample, lr_size: usize, rng: &mut impl Rng) -> Result<UnpairedSample> {
    let (x0, y0) = random_offset(&sample.lr, lr_size, rng)?;
    Ok(UnpairedSample {
        lr: sample.lr.crop(x0, y0, lr_size, lr_size)?,
        id: sample.id.clone(),
    })
}

fn random_offset(img: &Image, size: usize, rng: &mut impl Rng) -> Result<(usize, usize)> {
    if img.width() < size || img.height() < size {
        return Err(Error::shape(format!(
            "{}x{} image is smaller than a {size}x{size} patch",
            img.width(),
            img.height()
        )));
    }
    let x0 = rng.random_range(0..=img.width() - size);
    let y0 = rng.random_range(0..=img.height() - size);
    Ok((x0, y0))
}

/// One element of the dihedral group of the square: an optional horizontal
/// flip followed by `rotation` quarter turns clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dihedral {
    pub flip: bool,
    pub rotation: u8,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        flip: false,
        rotation: 0,
    };

    pub fn all() -> [Dihedral; 8] {
        std::array::from_fn(|i| Dihedral {
            flip: i >= 4,
            rotation: (i % 4) as u8,
        })
    }

    pub fn random(rng: &mut impl Rng) -> Dihedral {
        let i = rng.random_range(0..8usize);
        Dihedral::all()[i]
    }

    pub fn apply(self, img: &Image) -> Image {
        let mut out = if self.flip { flip_horizontal(img) } else { img.clone() };
        for _ in 0..self.rotation % 4 {
            out = rotate_cw(&out);
        }
        out
    }

    pub fn invert(self, img: &Image) -> Image {
        let mut out = img.clone();
        for _ in 0..(4 - self.rotation % 4) % 4 {
            out = rotate_cw(&out);
        }
        if self.flip {
            out = flip_horizontal(&out);
        }
        out
    }
}

fn flip_horizontal(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(w, img.height(), img.colorspace(), |x, y, c| img.get(w - 1 - x, y, c))
        .with_tag(img.device_tag.clone())
}

fn rotate_cw(img: &Image) -> Image {
    let h = img.height();
    Image::from_fn(h, img.width(), img.colorspace(), |x, y, c| img.get(y, h - 1 - x, c))
        .with_tag(img.device_tag.clone())
}

/// Applies one random dihedral transform to LR and HR alike.
pub fn augment(patch: &PairedSample, rng: &mut impl Rng) -> PairedSample {
    augment_with(patch, Dihedral::random(rng))
}

pub fn augment_with(patch: &PairedSample, t: Dihedral) -> PairedSample {
    PairedSample {
        lr: t.apply(&patch.lr),
        hr: t.apply(&patch.hr),
        id: patch.id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::ColorSpace;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, ColorSpace::Rgb, |x, y, c| ((x * 13 + y * 7 + c) % 97) as f64 / 97.0)
    }

    fn pair(lw: usize, lh: usize, s: usize) -> PairedSample {
        PairedSample::new(ramp(lw, lh), ramp(lw * s, lh * s), "p").unwrap()
    }

    #[test]
    fn patch_offsets_are_aligned() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = pair(100, 100, 4);
        for _ in 0..10 {
            let p = extract_patch(&s, 48, &mut rng).unwrap();
            assert_eq!(p.lr.dims(), (48, 48, 3));
            assert_eq!(p.hr.dims(), (192, 192, 3));
            // Locate the LR offset, then check the HR window sits at 4x it.
            let (x0, y0) = (0..=52)
                .flat_map(|y| (0..=52).map(move |x| (x, y)))
                .find(|&(x, y)| s.lr.crop(x, y, 48, 48).unwrap() == p.lr)
                .unwrap();
            assert_eq!(p.hr, s.hr.crop(4 * x0, 4 * y0, 192, 192).unwrap());
        }
    }

    #[test]
    fn full_size_patch_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = pair(48, 48, 4);
        assert_eq!(extract_patch(&s, 48, &mut rng).unwrap(), s);
    }

    #[test]
    fn undersized_image_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(extract_patch(&pair(40, 60, 4), 48, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_patch() {
        let s = pair(100, 90, 2);
        let a = extract_patch(&s, 32, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = extract_patch(&s, 32, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dihedral_inverse_restores() {
        let img = ramp(5, 3);
        for t in Dihedral::all() {
            assert_eq!(t.invert(&t.apply(&img)), img);
        }
    }

    #[test]
    fn identity_transform_is_noop() {
        let p = pair(6, 6, 2);
        assert_eq!(augment_with(&p, Dihedral::IDENTITY), p);
    }

    #[test]
    fn dihedral_orbit_is_eight_distinct_permutations() {
        let img = Image::from_fn(4, 4, ColorSpace::Y, |x, y, _| (y * 4 + x) as f64);
        let mut sorted_orig = img.data().to_vec();
        sorted_orig.sort_by(f64::total_cmp);
        let mut seen = Vec::new();
        for t in Dihedral::all() {
            let out = t.apply(&img);
            let mut v = out.data().to_vec();
            v.sort_by(f64::total_cmp);
            assert_eq!(v, sorted_orig);
            assert!(!seen.contains(&out));
            seen.push(out);
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn quarter_turn_rotates_both_images_consistently() {
        let p = pair(4, 3, 2);
        let t = Dihedral {
            flip: false,
            rotation: 1,
        };
        let a = augment_with(&p, t);
        assert_eq!(a.lr.dims(), (4, 3, 3));
        assert_eq!(a.hr.dims(), (8, 6, 3));
        assert_eq!(t.invert(&a.lr), p.lr);
        assert_eq!(t.invert(&a.hr), p.hr);
        assert_eq!(PairedSample::new(a.lr.clone(), a.hr.clone(), "x").unwrap().scale(), 2);
    }
}
