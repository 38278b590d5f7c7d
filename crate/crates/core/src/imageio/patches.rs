use rand::Rng;

use crate::image::Image;

/// Random crops from one image.
#[derive(Clone, Debug)]
pub struct Patches {
    pub images: Vec<Image>,
    /// Top-left corner of each crop.
    pub offsets: Vec<(usize, usize)>,
    /// Set when the source was smaller than the patch size and was returned whole.
    pub undersized: bool,
}

/// Draws `count` top-left offsets so that a `size`-square crop fits inside
/// a `width`×`height` image. Returns `None` if it cannot fit.
pub fn sample_offsets<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    size: usize,
    count: usize,
    rng: &mut R,
) -> Option<Vec<(usize, usize)>> {
    if size == 0 || width < size || height < size {
        return None;
    }
    Some(
        (0..count)
            .map(|_| {
                (
                    rng.random_range(0..=width - size),
                    rng.random_range(0..=height - size),
                )
            })
            .collect(),
    )
}

pub fn extract_patches<R: Rng + ?Sized>(
    img: &Image,
    size: usize,
    count: usize,
    rng: &mut R,
) -> Patches {
    match sample_offsets(img.width(), img.height(), size, count, rng) {
        Some(offsets) => Patches {
            images: offsets
                .iter()
                .map(|&(x, y)| img.crop(x, y, size, size).expect("offset inside bounds"))
                .collect(),
            offsets,
            undersized: false,
        },
        None => Patches {
            images: vec![img.clone()],
            offsets: vec![(0, 0)],
            undersized: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::image::Domain;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, Domain::LinearHdr, |x, y| [x as f32, y as f32, (x * y) as f32])
    }

    #[test]
    fn exact_size_returns_source() {
        let img = ramp(600, 600);
        let p = extract_patches(&img, 600, 3, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(!p.undersized);
        assert!(p.images.iter().all(|i| i.data() == img.data()));
    }

    #[test]
    fn offsets_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(x, y) in &sample_offsets(97, 61, 32, 1000, &mut rng).unwrap() {
            assert!(x + 32 <= 97 && y + 32 <= 61);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sample_offsets(300, 200, 64, 50, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_offsets(300, 200, 64, 50, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn crop_content_matches_offset() {
        let img = ramp(50, 40);
        let p = extract_patches(&img, 16, 5, &mut ChaCha8Rng::seed_from_u64(9));
        for (patch, &(x0, y0)) in p.images.iter().zip(&p.offsets) {
            assert_eq!(patch.get(3, 5), img.get(x0 + 3, y0 + 5));
        }
    }

    #[test]
    fn small_source_is_flagged() {
        let img = ramp(20, 30);
        let p = extract_patches(&img, 32, 4, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(p.undersized);
        assert_eq!(p.images.len(), 1);
        assert_eq!(p.images[0].width(), 20);
    }
}
