//! JPEG-style quantization roundtrip: YCbCr with 4:2:0 chroma, 8×8 DCT,
//! standard tables scaled by quality factor. No entropy coding and no 8-bit
//! rounding of the reconstruction.

use std::sync::OnceLock;

use crate::image::{Domain, Image};

const LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51,
    87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99,
];

/// Quality-scaled table (IJG convention), entries in `[1, 255]`.
pub fn quant_table(base: &[u16; 64], qf: u8) -> [f64; 64] {
    let qf = qf.clamp(1, 100) as u32;
    let s = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
    base.map(|b| ((b as u32 * s + 50) / 100).clamp(1, 255) as f64)
}

fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let cu = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.25f64.sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = cu * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos();
            }
        }
        b
    })
}

/// Quantizes one plane in place. Dimensions must be multiples of 8.
fn quantize_plane(plane: &mut [f64], width: usize, height: usize, table: &[f64; 64]) {
    let b = dct_basis();
    let mut block = [0.0f64; 64];
    let mut tmp = [0.0f64; 64];
    for by in (0..height).step_by(8) {
        for bx in (0..width).step_by(8) {
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = plane[(by + y) * width + bx + x] - 128.0;
                }
            }
            // Rows then columns.
            for y in 0..8 {
                for u in 0..8 {
                    tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
                }
            }
            for u in 0..8 {
                for v in 0..8 {
                    let c: f64 = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
                    let q = table[v * 8 + u];
                    block[v * 8 + u] = (c / q).round() * q;
                }
            }
            for v in 0..8 {
                for x in 0..8 {
                    tmp[v * 8 + x] = (0..8).map(|u| b[u][x] * block[v * 8 + u]).sum();
                }
            }
            for y in 0..8 {
                for x in 0..8 {
                    let s: f64 = (0..8).map(|v| b[v][y] * tmp[v * 8 + x]).sum();
                    plane[(by + y) * width + bx + x] = s + 128.0;
                }
            }
        }
    }
}

pub fn jpeg_sim(img: &Image, qf: u8) -> Image {
    let (w, h) = (img.width(), img.height());
    let pw = w.div_ceil(16) * 16;
    let ph = h.div_ceil(16) * 16;
    let (cw, ch) = (pw / 2, ph / 2);
    let mut y_plane = vec![0.0f64; pw * ph];
    let mut cb_full = vec![0.0f64; pw * ph];
    let mut cr_full = vec![0.0f64; pw * ph];
    for y in 0..ph {
        for x in 0..pw {
            let p = img.get(x.min(w - 1), y.min(h - 1));
            let [r, g, b] = p.map(|v| v.clamp(0.0, 1.0) as f64 * 255.0);
            let i = y * pw + x;
            y_plane[i] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb_full[i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
            cr_full[i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
        }
    }
    let down = |full: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; cw * ch];
        for y in 0..ch {
            for x in 0..cw {
                let i = 2 * y * pw + 2 * x;
                out[y * cw + x] = 0.25 * (full[i] + full[i + 1] + full[i + pw] + full[i + pw + 1]);
            }
        }
        out
    };
    let mut cb = down(&cb_full);
    let mut cr = down(&cr_full);

    quantize_plane(&mut y_plane, pw, ph, &quant_table(&LUMA, qf));
    let ct = quant_table(&CHROMA, qf);
    quantize_plane(&mut cb, cw, ch, &ct);
    quantize_plane(&mut cr, cw, ch, &ct);

    let mut out = Image::new(w, h, Domain::NonlinearSdr);
    out.max_luminance = img.max_luminance;
    for y in 0..h {
        for x in 0..w {
            let l = y_plane[y * pw + x];
            let c = (y / 2) * cw + x / 2;
            let (u, v) = (cb[c] - 128.0, cr[c] - 128.0);
            let r = l + 1.402 * v;
            let g = l - 0.344136 * u - 0.714136 * v;
            let b = l + 1.772 * u;
            out.set(x, y, [r, g, b].map(|s| (s / 255.0).clamp(0.0, 1.0) as f32));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::psnr;

    /// Smooth, photo-like content: a shot of a procedural HDR scene.
    fn scene(w: usize, h: usize) -> Image {
        use rand::SeedableRng;
        let hdr = crate::degrade::synthetic_hdr(w, h, &mut rand_chacha::ChaCha8Rng::seed_from_u64(11));
        crate::degrade::virtual_shot(&hdr, &Default::default()).unwrap()
    }

    /// Luma detail over slowly varying colour, like most photographs.
    fn photo_like(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, Domain::NonlinearSdr, |x, y| {
            let (fx, fy) = (x as f32 / w as f32, y as f32 / h as f32);
            let luma = 0.45 + 0.2 * (fx * 23.0 + fy * 7.0).sin() * (fy * 17.0).cos() + 0.1 * ((x * y) as f32 * 0.05).sin();
            [luma + 0.1 * fx, luma, luma + 0.08 * (1.0 - fy)]
        })
    }

    #[test]
    fn tables() {
        assert_eq!(quant_table(&LUMA, 50)[0], 16.0);
        assert!(quant_table(&LUMA, 100).iter().all(|&q| q == 1.0));
        assert_eq!(quant_table(&LUMA, 75)[0], 8.0);
        assert_eq!(quant_table(&CHROMA, 1)[63], 255.0);
    }

    #[test]
    fn constant_within_one_dc_step() {
        let img = Image::filled(19, 13, [0.37, 0.37, 0.37], Domain::NonlinearSdr);
        let out = jpeg_sim(&img, 30);
        // DC step for an orthonormal 8×8 DCT is q / 8 in sample units.
        let step = quant_table(&LUMA, 30)[0] / 8.0 / 255.0;
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!(((a - b).abs() as f64) <= step, "{a} {b}");
        }
    }

    #[test]
    fn quality_ordering() {
        let img = photo_like(96, 64);
        let hi = psnr(&img, &jpeg_sim(&img, 100), 1.0);
        let mid = psnr(&img, &jpeg_sim(&img, 75), 1.0);
        let lo = psnr(&img, &jpeg_sim(&img, 10), 1.0);
        assert!(hi > 45.0, "{hi}");
        assert!(lo < mid && mid < hi, "{lo} {mid} {hi}");
        // Hard-edged colour regions lose chroma detail to 4:2:0 even at quality 100.
        let edgy = scene(96, 64);
        let q = psnr(&edgy, &jpeg_sim(&edgy, 10), 1.0);
        assert!(q < psnr(&edgy, &jpeg_sim(&edgy, 75), 1.0));
    }

    #[test]
    fn nearly_idempotent() {
        // Block-aligned size and mid-range content, so neither edge padding
        // nor output clamping interferes.
        let img = scene(64, 48).map(|v| 0.2 + 0.6 * v);
        let once = jpeg_sim(&img, 60);
        let twice = jpeg_sim(&once, 60);
        let d = once.data().iter().zip(twice.data()).fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
        assert!(d < 1e-4, "{d}");
    }
}
