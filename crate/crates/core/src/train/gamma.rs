use crate::image::{Domain, Image};
use crate::{Error, Result};

pub const GAMMA: f64 = 0.45;

/// `(y / max(y))^gamma`, returning `max(y)` for the inverse.
pub fn preprocess_gamma(y: &Image, gamma: f64) -> Result<(Image, f64)> {
    let max = y.max_value() as f64;
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::invalid("cannot normalize an image whose maximum is not positive"));
    }
    let inv = 1.0 / max;
    let mut out = y.map(|v| ((v.max(0.0) as f64 * inv).powf(gamma)) as f32).with_domain(Domain::GammaHdr);
    out.max_luminance = Some(max as f32);
    Ok((out, max))
}

/// `y′^(1/gamma)`: relative linear HDR. Multiply by the recorded maximum to
/// recover absolute values.
pub fn postprocess_gamma(y: &Image, gamma: f64) -> Image {
    let k = 1.0 / gamma;
    y.map(|v| (v.max(0.0) as f64).powf(k) as f32).with_domain(Domain::LinearHdr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let y = Image::from_fn(2, 1, Domain::LinearHdr, |x, _| [[1.0, 4.0][x]; 3]);
        let (p, max) = preprocess_gamma(&y, GAMMA).unwrap();
        assert_eq!(max, 4.0);
        assert!((p.get(0, 0)[0] - 0.5359).abs() < 1e-4);
        assert_eq!(p.get(1, 0)[0], 1.0);
        let c = Image::filled(3, 3, [7.0; 3], Domain::LinearHdr);
        assert!(preprocess_gamma(&c, GAMMA).unwrap().0.data().iter().all(|&v| v == 1.0));
        assert!(preprocess_gamma(&Image::new(2, 2, Domain::LinearHdr), GAMMA).is_err());
    }

    #[test]
    fn inverse_values() {
        let img = Image::from_fn(3, 1, Domain::GammaHdr, |x, _| [[0.0, 0.5359, 1.0][x]; 3]);
        let lin = postprocess_gamma(&img, GAMMA);
        assert_eq!(lin.get(0, 0)[0], 0.0);
        assert!((lin.get(1, 0)[0] - 0.25).abs() < 1e-4);
        assert_eq!(lin.get(2, 0)[0], 1.0);
    }
}
