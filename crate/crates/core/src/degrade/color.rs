use crate::image::{Domain, Image};
use crate::{Error, Result};

/// Row-major 3×3 colour matrix applied as `out = m · rgb`.
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Camera RAW to display RGB. Rows sum to one so white is preserved; the
/// inverse has only positive entries, so display-range colours map into
/// `[0, 1]` RAW values.
pub const DEFAULT_CAMERA_MATRIX: Mat3 = [
    [1.60, -0.45, -0.15],
    [-0.20, 1.45, -0.25],
    [0.00, -0.50, 1.50],
];

pub const TRANSFER_GAMMA: f64 = 2.2;

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn invert3(m: &Mat3) -> Result<Mat3> {
    let det = det3(m);
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if !det.is_finite() || det.abs() <= 1e-12 * scale.powi(3).max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(format!("colour matrix is singular (det {det:e})")));
    }
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    Ok(adj.map(|row| row.map(|v| v / det)))
}

pub fn cst_pixel(m: &Mat3, p: [f32; 3]) -> [f32; 3] {
    let [r, g, b] = p.map(f64::from);
    m.map(|row| (row[0] * r + row[1] * g + row[2] * b) as f32)
}

/// Per-pixel matrix multiply. Fails on a singular matrix.
pub fn cst_apply(img: &Image, m: &Mat3) -> Result<Image> {
    invert3(m)?;
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let q = cst_pixel(m, [p[0], p[1], p[2]]);
        p.copy_from_slice(&q);
    }
    Ok(out)
}

/// Power-law display encoding, input clamped to `[0, 1]`.
pub fn srgb_encode(linear: &Image) -> Image {
    let k = (1.0 / TRANSFER_GAMMA) as f32;
    linear.map(|v| v.clamp(0.0, 1.0).powf(k)).with_domain(Domain::NonlinearSdr)
}

pub fn srgb_decode(nonlinear: &Image) -> Image {
    let k = TRANSFER_GAMMA as f32;
    nonlinear.map(|v| v.clamp(0.0, 1.0).powf(k)).with_domain(Domain::LinearHdr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_is_inverse() {
        let inv = invert3(&DEFAULT_CAMERA_MATRIX).unwrap();
        for (i, row) in DEFAULT_CAMERA_MATRIX.iter().enumerate() {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| row[k] * inv[k][j]).sum();
                assert!((v - (i == j) as u8 as f64).abs() < 1e-12);
            }
        }
        assert!(inv.iter().flatten().all(|&v| v > 0.0), "{inv:?}");
    }

    #[test]
    fn singular_rejected() {
        let m = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 0.0]];
        assert!(invert3(&m).is_err());
        assert!(cst_apply(&Image::new(1, 1, Domain::LinearHdr), &m).is_err());
    }

    #[test]
    fn transfer_values() {
        let img = Image::from_fn(3, 1, Domain::LinearHdr, |x, _| [[0.0, 0.25, 1.0][x]; 3]);
        let e = srgb_encode(&img);
        assert_eq!(e.get(0, 0)[0], 0.0);
        assert_eq!(e.get(2, 0)[0], 1.0);
        assert!((e.get(1, 0)[0] - 0.5325).abs() < 1e-4);
        assert!((srgb_decode(&e).get(1, 0)[0] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn permutation_swaps_channels() {
        let swap = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        let img = Image::from_fn(2, 2, Domain::LinearHdr, |x, y| [x as f32, y as f32, 0.3]);
        let out = cst_apply(&img, &swap).unwrap();
        assert_eq!(out.get(1, 0), [0.3, 0.0, 1.0]);
        assert_eq!(cst_apply(&img, &IDENTITY).unwrap().data(), img.data());
    }
}
