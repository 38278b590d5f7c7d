//! Interleaved RGB float raster with a domain tag.

use lhdr_tensor::{Element, Tensor};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Scene-linear radiance, values ≥ 0.
    LinearHdr,
    /// Max-normalized HDR after the 0.45 gamma, values ≥ 0. This is what the
    /// network predicts and where losses and metrics are computed.
    GammaHdr,
    /// Display-referred SDR, values in [0, 1].
    NonlinearSdr,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::LinearHdr => "linear_hdr",
            Domain::GammaHdr => "gamma045",
            Domain::NonlinearSdr => "nonlinear_sdr",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
    pub domain: Domain,
    pub max_luminance: Option<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, domain: Domain) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
            domain,
            max_luminance: None,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3], domain: Domain) -> Self {
        let mut img = Image::new(width, height, domain);
        img.data.chunks_exact_mut(3).for_each(|p| p.copy_from_slice(&rgb));
        img
    }

    /// Wraps interleaved RGB data, checking length and finiteness.
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>, domain: Domain) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {width}x{height}x3",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("image contains non-finite value {v}")));
        }
        Ok(Image {
            width,
            height,
            data,
            domain,
            max_luminance: None,
        })
    }

    pub fn from_fn(width: usize, height: usize, domain: Domain, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
            domain,
            max_luminance: None,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(3)
    }

    pub fn pixels_mut(&mut self) -> impl Iterator<Item = &mut [f32]> {
        self.data.chunks_exact_mut(3)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn with_domain(mut self, domain: Domain) -> Image {
        self.domain = domain;
        self
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Checks the value-range invariant of the domain tag.
    pub fn check_domain(&self) -> Result<()> {
        let bad = match self.domain {
            Domain::LinearHdr | Domain::GammaHdr => self.data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()),
            Domain::NonlinearSdr => self.data.iter().find(|v| !(0.0..=1.0).contains(*v)),
        };
        match bad {
            Some(v) => Err(Error::invalid(format!("value {v} outside the {} range", self.domain.name()))),
            None => Ok(()),
        }
    }

    /// Copies `w x h` pixels starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let row = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[row..row + w * 3]);
        }
        Ok(Image {
            width: w,
            height: h,
            data,
            domain: self.domain,
            max_luminance: self.max_luminance,
        })
    }

    /// Planar `(1, 3, h, w)` tensor.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        Tensor::from_fn([1, 3, self.height, self.width], |[_, c, y, x]| {
            T::of(self.data[(y * self.width + x) * 3 + c] as f64)
        })
    }

    /// Reads sample `n` of a 3-channel tensor back into an image.
    pub fn from_tensor<T: Element>(t: &Tensor<T>, n: usize, domain: Domain) -> Result<Image> {
        let d = t.dims();
        if d.c != 3 || n >= d.n {
            return Err(Error::invalid(format!("cannot read sample {n} of {d} as an RGB image")));
        }
        let data = (0..d.h * d.w * 3)
            .map(|i| {
                let (p, c) = (i / 3, i % 3);
                t.at(n, c, p / d.w, p % d.w).as_f64() as f32
            })
            .collect();
        Image::from_vec(d.w, d.h, data, domain)
    }
}

/// Integer-coded RGB raster (PPM samples), interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeImage {
    width: usize,
    height: usize,
    maxval: u16,
    codes: Vec<u16>,
}

impl CodeImage {
    pub fn new(width: usize, height: usize, maxval: u16, codes: Vec<u16>) -> Result<Self> {
        if codes.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "code image has {} samples, expected {width}x{height}x3",
                codes.len()
            )));
        }
        if maxval == 0 {
            return Err(Error::invalid("maxval must be positive"));
        }
        if let Some(c) = codes.iter().find(|&&c| c > maxval) {
            return Err(Error::invalid(format!("code {c} exceeds maxval {maxval}")));
        }
        Ok(CodeImage {
            width,
            height,
            maxval,
            codes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn maxval(&self) -> u16 {
        self.maxval
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[u16]> {
        self.codes.chunks_exact(3)
    }

    pub fn get(&self, x: usize, y: usize) -> [u16; 3] {
        let i = (y * self.width + x) * 3;
        [self.codes[i], self.codes[i + 1], self.codes[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u16; 3]) {
        let i = (y * self.width + x) * 3;
        self.codes[i..i + 3].copy_from_slice(&rgb);
    }

    /// `code / maxval` as nonlinear SDR.
    pub fn to_image(&self) -> Image {
        let inv = 1.0 / self.maxval as f32;
        Image {
            width: self.width,
            height: self.height,
            data: self.codes.iter().map(|&c| c as f32 * inv).collect(),
            domain: Domain::NonlinearSdr,
            max_luminance: None,
        }
    }
}

impl Image {
    /// Quantizes to integer codes: clamp to [0, 1], scale by `maxval`, round
    /// half away from zero.
    pub fn to_codes(&self, maxval: u16) -> CodeImage {
        let m = maxval as f32;
        CodeImage {
            width: self.width,
            height: self.height,
            maxval,
            codes: self
                .data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * m).round() as u16)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_roundtrip() {
        let img = Image::from_fn(5, 3, Domain::NonlinearSdr, |x, y| {
            [x as f32 / 5.0, y as f32 / 3.0, 0.5]
        });
        let t = img.to_tensor::<f32>();
        assert_eq!(t.at(0, 0, 2, 4), 0.8);
        assert_eq!(Image::from_tensor(&t, 0, Domain::NonlinearSdr).unwrap(), img);
    }

    #[test]
    fn domain_checks() {
        assert!(Image::filled(2, 2, [1.5, 0.0, 0.0], Domain::NonlinearSdr).check_domain().is_err());
        assert!(Image::filled(2, 2, [1.5, 0.0, 0.0], Domain::LinearHdr).check_domain().is_ok());
        assert!(Image::filled(2, 2, [-0.1, 0.0, 0.0], Domain::LinearHdr).check_domain().is_err());
        assert!(Image::from_vec(1, 1, vec![f32::NAN, 0.0, 0.0], Domain::LinearHdr).is_err());
    }

    #[test]
    fn crop_bounds() {
        let img = Image::from_fn(4, 4, Domain::LinearHdr, |x, y| [x as f32, y as f32, 0.0]);
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.get(0, 0), [1.0, 2.0, 0.0]);
        assert!(img.crop(3, 3, 2, 2).is_err());
    }
}
