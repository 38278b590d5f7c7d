use crate::image::Image;

/// Bilinear resampling with pixel-centre alignment.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Image {
    let (w, h) = (img.width(), img.height());
    if (w, h) == (width, height) {
        return img.clone();
    }
    let sx = w as f64 / width as f64;
    let sy = h as f64 / height as f64;
    let taps = |o: usize, scale: f64, n: usize| {
        let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..width).map(|x| taps(x, sx, w)).collect();
    let mut out = Image::new(width, height, img.domain);
    out.max_luminance = img.max_luminance;
    for y in 0..height {
        let (y0, y1, fy) = taps(y, sy, h);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
            let mut p = [0.0f32; 3];
            for k in 0..3 {
                let top = a[k] + (b[k] - a[k]) * fx;
                let bottom = c[k] + (d[k] - c[k]) * fx;
                p[k] = top + (bottom - top) * fy;
            }
            out.set(x, y, p);
        }
    }
    out
}
