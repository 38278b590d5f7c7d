//! Procedural linear-HDR scenes: smooth shading, gratings, flat objects and
//! a few very bright emitters that saturate a normal exposure.

use rand::Rng;

use crate::image::{Domain, Image};

struct Light {
    cx: f32,
    cy: f32,
    radius: f32,
    rgb: [f32; 3],
}

struct Patch {
    x0: f32,
    y0: f32,
    x1: f32,
    y1: f32,
    rgb: [f32; 3],
}

fn color<R: Rng + ?Sized>(rng: &mut R, lo: f32, hi: f32) -> [f32; 3] {
    let base = rng.random_range(lo..hi);
    [0; 3].map(|_| base * rng.random_range(0.6..1.0))
}

/// Scene radiance spans roughly `1e-3` to a few tens; emitters saturate at
/// exposure 1.
pub fn synthetic_hdr<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Image {
    let (w, h) = (width as f32, height as f32);
    let size = w.min(h);
    let grad: [[f32; 3]; 3] = [0; 3].map(|_| [rng.random_range(0.02..0.3), rng.random_range(-0.15..0.2), rng.random_range(-0.15..0.2)]);
    let gratings: Vec<(f32, f32, f32, f32)> = (0..3)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f32::consts::PI);
            let freq = rng.random_range(2.0..12.0) / size;
            (theta.cos() * freq, theta.sin() * freq, rng.random_range(0.0..6.3), rng.random_range(0.05..0.25))
        })
        .collect();
    let patches: Vec<Patch> = (0..rng.random_range(2..6))
        .map(|_| {
            let (x0, y0) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
            let (pw, ph) = (rng.random_range(0.1..0.4) * w, rng.random_range(0.1..0.4) * h);
            Patch { x0, y0, x1: x0 + pw, y1: y0 + ph, rgb: color(rng, 0.02, 0.7) }
        })
        .collect();
    let lights: Vec<Light> = (0..rng.random_range(1..4))
        .map(|_| Light {
            cx: rng.random_range(0.0..w),
            cy: rng.random_range(0.0..h),
            radius: rng.random_range(0.03..0.12) * size,
            rgb: color(rng, 2.0, 40.0),
        })
        .collect();

    Image::from_fn(width, height, Domain::LinearHdr, |x, y| {
        let (fx, fy) = (x as f32 / w, y as f32 / h);
        let mut p = [0.0f32; 3];
        for (c, g) in grad.iter().enumerate() {
            p[c] = (g[0] + g[1] * fx + g[2] * fy).max(0.002);
        }
        if let Some(obj) = patches
            .iter()
            .rev()
            .find(|o| (x as f32) >= o.x0 && (x as f32) < o.x1 && (y as f32) >= o.y0 && (y as f32) < o.y1)
        {
            p = obj.rgb;
        }
        let texture: f32 = gratings
            .iter()
            .map(|&(kx, ky, phase, amp)| amp * ((kx * x as f32 + ky * y as f32) * std::f32::consts::TAU + phase).sin())
            .sum();
        let t = (1.0 + texture).max(0.05);
        for v in &mut p {
            *v *= t;
        }
        for l in &lights {
            let d2 = ((x as f32 - l.cx).powi(2) + (y as f32 - l.cy).powi(2)) / (l.radius * l.radius);
            let falloff = (-0.5 * d2).exp();
            for c in 0..3 {
                p[c] += l.rgb[c] * falloff;
            }
        }
        p
    })
}
