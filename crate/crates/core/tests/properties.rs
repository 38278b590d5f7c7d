use lhdr::imageio::{read_pfm, read_ppm, read_rgbe, write_pfm, write_ppm, write_rgbe};
use lhdr::net::masks::{bright_invalid, bright_valid};
use lhdr::train::{postprocess_gamma, preprocess_gamma, GAMMA};
use lhdr::{Domain, Image};
use proptest::prelude::*;

fn image(domain: Domain, lo: f32, hi: f32) -> impl Strategy<Value = Image> {
    (1usize..12, 1usize..12).prop_flat_map(move |(w, h)| {
        prop::collection::vec(lo..hi, w * h * 3).prop_map(move |d| Image::from_vec(w, h, d, domain).unwrap())
    })
}

/// Values spread over many orders of magnitude.
fn hdr_image() -> impl Strategy<Value = Image> {
    (1usize..20, 1usize..6).prop_flat_map(|(w, h)| {
        prop::collection::vec(-6.0f64..6.0, w * h * 3).prop_map(move |e| {
            let d = e.iter().map(|x| 10f64.powf(*x) as f32).collect();
            Image::from_vec(w, h, d, Domain::LinearHdr).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn masks_partition_and_bounds(p in 0.0f64..=1.0, t in 0.5f64..0.99) {
        let v = bright_valid(p, t);
        let i = bright_invalid(p, t);
        prop_assert!((0.0..=1.0).contains(&v) && (0.0..=1.0).contains(&i));
        if p >= t {
            prop_assert!((v + i - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(v, 0.0);
            prop_assert_eq!(i, 1.0);
        }
    }

    #[test]
    fn pfm_roundtrip_is_bit_exact(img in image(Domain::LinearHdr, 0.0, 1e6)) {
        let back = read_pfm(&write_pfm(&img)).unwrap();
        prop_assert_eq!(back.width(), img.width());
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rgbe_roundtrip_within_a_mantissa_step(img in hdr_image()) {
        let back = read_rgbe(&write_rgbe(&img)).unwrap();
        for (a, b) in img.pixels().zip(back.pixels()) {
            let m = a.iter().fold(0f32, |m, v| m.max(*v));
            for c in 0..3 {
                prop_assert!(((a[c] - b[c]) / m).abs() < 1.0 / 256.0, "{:?} -> {:?}", a, b);
            }
        }
    }

    #[test]
    fn ppm_roundtrip_is_stable(img in image(Domain::NonlinearSdr, 0.0, 1.0), deep in any::<bool>()) {
        let bits = if deep { 16 } else { 8 };
        let once = read_ppm(&write_ppm(&img, bits).unwrap()).unwrap();
        let levels = ((1u32 << bits) - 1) as f32;
        for (a, b) in img.data().iter().zip(once.data()) {
            prop_assert!((a - b).abs() <= 0.5 / levels + 1e-6);
        }
        let twice = read_ppm(&write_ppm(&once, bits).unwrap()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn gamma_roundtrip(img in hdr_image()) {
        let (pre, max) = preprocess_gamma(&img, GAMMA).unwrap();
        let back = postprocess_gamma(&pre, GAMMA);
        for (a, b) in img.data().iter().zip(back.data()) {
            let r = (*b as f64 * max - *a as f64).abs() / *a as f64;
            prop_assert!(r < 1e-5, "{} vs {}", a, b);
        }
    }

    #[test]
    fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = read_pfm(&bytes);
        let _ = read_ppm(&bytes);
        let _ = read_rgbe(&bytes);
    }

    #[test]
    fn parsers_survive_damaged_headers(tail in prop::collection::vec(any::<u8>(), 0..64), which in 0usize..3) {
        let mut bytes = [&b"PF\n3 2\n-1.0\n"[..], b"P6\n3 2\n255\n", b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 2 +X 3\n"][which].to_vec();
        bytes.extend_from_slice(&tail);
        let _ = read_pfm(&bytes);
        let _ = read_ppm(&bytes);
        let _ = read_rgbe(&bytes);
    }
}
