//! Binary PPM (P6), 8-bit or 16-bit big-endian samples.
//!
//! Float to code conversion is `round(v * maxval)` with halves rounded away
//! from zero, after clamping to [0, 1].

use super::Header;
use crate::image::{CodeImage, Image};
use crate::{Error, Result};

fn maxval_for(bit_depth: u8) -> Result<u16> {
    match bit_depth {
        8 => Ok(255),
        16 => Ok(65535),
        b => Err(Error::invalid(format!("unsupported PPM bit depth {b}; use 8 or 16"))),
    }
}

pub fn read_ppm_codes(bytes: &[u8]) -> Result<CodeImage> {
    let mut h = Header::new(bytes, "ppm", true);
    let magic = h.token()?;
    if magic != "P6" {
        return Err(Error::parse("ppm", format!("bad magic {magic:?}; only binary P6 is supported")));
    }
    let width = h.dim("width")?;
    let height = h.dim("height")?;
    let tok = h.token()?;
    let maxval: u16 = match tok {
        "255" => 255,
        "65535" => 65535,
        _ => return Err(Error::parse("ppm", format!("unsupported maxval {tok}; expected 255 or 65535"))),
    };
    let payload = h.payload()?;
    let bytes_per = if maxval == 255 { 1 } else { 2 };
    let need = width * height * 3 * bytes_per;
    if payload.len() < need {
        return Err(Error::parse(
            "ppm",
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let codes = if bytes_per == 1 {
        payload[..need].iter().map(|&b| b as u16).collect()
    } else {
        payload[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    CodeImage::new(width, height, maxval, codes)
}

pub fn read_ppm(bytes: &[u8]) -> Result<Image> {
    Ok(read_ppm_codes(bytes)?.to_image())
}

pub fn write_ppm_codes(codes: &CodeImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n{}\n", codes.width(), codes.height(), codes.maxval()).into_bytes();
    if codes.maxval() <= 255 {
        out.extend(codes.codes().iter().map(|&c| c as u8));
    } else {
        for c in codes.codes() {
            out.extend_from_slice(&c.to_be_bytes());
        }
    }
    out
}

pub fn write_ppm(img: &Image, bit_depth: u8) -> Result<Vec<u8>> {
    let maxval = maxval_for(bit_depth)?;
    Ok(write_ppm_codes(&img.to_codes(maxval)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Domain;

    #[test]
    fn code_mapping() {
        let img = read_ppm(b"P6\n1 1\n255\n\xff\x00\x80").unwrap();
        assert_eq!(img.get(0, 0), [1.0, 0.0, 128.0 / 255.0]);
        let half = Image::filled(1, 1, [0.5, 0.5, 0.5], Domain::NonlinearSdr);
        let bytes = write_ppm(&half, 8).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[128, 128, 128]);
    }

    #[test]
    fn sixteen_bit_ramp_roundtrip() {
        let codes: Vec<u16> = (0..=65535u32).flat_map(|c| [c as u16; 3]).collect();
        let img = CodeImage::new(256, 256, 65535, codes).unwrap();
        let back = read_ppm_codes(&write_ppm_codes(&img)).unwrap();
        assert_eq!(back, img);
        let via_float = read_ppm(&write_ppm(&img.to_image(), 16).unwrap()).unwrap();
        assert_eq!(via_float.to_codes(65535), img);
    }

    #[test]
    fn header_comments() {
        let img = read_ppm_codes(b"P6 # made by hand\n1 1\n# max\n255\n\x01\x02\x03").unwrap();
        assert_eq!(img.codes(), &[1, 2, 3]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_ppm(b"P6\n1 1\n1023\n\0\0\0\0\0\0").is_err());
        assert!(read_ppm(b"P6\n2 2\n255\n\0\0\0").is_err());
        assert!(read_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(write_ppm(&Image::new(1, 1, Domain::NonlinearSdr), 12).is_err());
    }
}
