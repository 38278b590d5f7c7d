use crate::image::Image;
use crate::{Error, Result};

/// `10 log10(peak² / MSE)` over all samples; `inf` for identical inputs.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> f64 {
    assert!(a.same_size(b), "psnr needs equal sizes");
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable valid-mode filter of a `w`×`h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ 1.5) over valid
/// positions, averaged over channels.
pub fn ssim(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::invalid("ssim needs equal sizes"));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let k = gaussian_kernel();
    let mut total = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = a.pixels().map(|p| p[c] as f64).collect();
        let pb: Vec<f64> = b.pixels().map(|p| p[c] as f64).collect();
        let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u * v).collect::<Vec<_>>();
        let mu_a = filter_valid(&pa, w, h, &k);
        let mu_b = filter_valid(&pb, w, h, &k);
        let aa = filter_valid(&prod(&pa, &pa), w, h, &k);
        let bb = filter_valid(&prod(&pb, &pb), w, h, &k);
        let ab = filter_valid(&prod(&pa, &pb), w, h, &k);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Domain;

    fn textured() -> Image {
        Image::from_fn(32, 24, Domain::GammaHdr, |x, y| {
            [((x * 7 + y * 3) % 17) as f32 / 16.0, (x as f32 / 31.0), ((x ^ y) % 5) as f32 / 4.0]
        })
    }

    #[test]
    fn psnr_closed_form() {
        let a = Image::filled(8, 8, [0.5; 3], Domain::GammaHdr);
        let b = a.map(|v| v + 1.0 / 255.0);
        assert!((psnr(&a, &b, 1.0) - 20.0 * 255f64.log10()).abs() < 1e-4);
        assert_eq!(psnr(&a, &a, 1.0), f64::INFINITY);
        assert_eq!(psnr(&a, &b, 1.0), psnr(&b, &a, 1.0));
    }

    #[test]
    fn ssim_properties() {
        let a = textured();
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        let inv = a.map(|v| 1.0 - v);
        let s = ssim(&a, &inv, 1.0).unwrap();
        assert!(s < 1.0 && s >= -1.0);
        assert!((s - ssim(&inv, &a, 1.0).unwrap()).abs() < 1e-9);
        assert!(ssim(&Image::new(10, 40, Domain::GammaHdr), &Image::new(10, 40, Domain::GammaHdr), 1.0).is_err());
    }
}
