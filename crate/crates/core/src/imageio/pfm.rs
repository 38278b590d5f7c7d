//! Portable float map: `PF`, dimensions, scale, then rows bottom to top.
//! A negative scale means little-endian samples.

use super::Header;
use crate::image::{Domain, Image};
use crate::{Error, Result};

pub fn read_pfm(bytes: &[u8]) -> Result<Image> {
    let mut h = Header::new(bytes, "pfm", false);
    match h.token()? {
        "PF" => {}
        "Pf" => return Err(Error::parse("pfm", "grayscale Pf maps are not supported; expected color PF")),
        t => return Err(Error::parse("pfm", format!("bad magic {t:?}"))),
    }
    let width = h.dim("width")?;
    let height = h.dim("height")?;
    let scale_tok = h.token()?;
    let scale: f32 = scale_tok
        .parse()
        .map_err(|_| Error::parse("pfm", format!("bad scale {scale_tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse("pfm", format!("scale must be finite and nonzero, got {scale}")));
    }
    let little = scale < 0.0;
    let payload = h.payload()?;
    let need = width * height * 12;
    if payload.len() < need {
        return Err(Error::parse(
            "pfm",
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let mut data = vec![0.0f32; width * height * 3];
    for (i, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::parse("pfm", format!("sample {v} is not a finite non-negative value")));
        }
        // File rows run bottom to top.
        let (row, rest) = (i / (width * 3), i % (width * 3));
        data[(height - 1 - row) * width * 3 + rest] = v;
    }
    Image::from_vec(width, height, data, Domain::LinearHdr)
}

/// Little-endian PFM with scale -1.
pub fn write_pfm(img: &Image) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut out = format!("PF\n{w} {h}\n-1\n").into_bytes();
    out.reserve(w * h * 12);
    for row in (0..h).rev() {
        for v in &img.data()[row * w * 3..(row + 1) * w * 3] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_roundtrip() {
        let img = Image::from_fn(7, 3, Domain::LinearHdr, |x, y| {
            [x as f32 * 1.1e-3, y as f32 * 3.7e4, std::f32::consts::PI]
        });
        let back = read_pfm(&write_pfm(&img)).unwrap();
        assert_eq!(back.data(), img.data());
        assert_eq!((back.width(), back.height()), (7, 3));
    }

    #[test]
    fn single_black_pixel_payload() {
        let bytes = write_pfm(&Image::new(1, 1, Domain::LinearHdr));
        let header = b"PF\n1 1\n-1\n".len();
        assert_eq!(bytes.len() - header, 12);
    }

    #[test]
    fn big_endian_and_row_order() {
        let mut bytes = b"PF\n1 2\n1.0\n".to_vec();
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img = read_pfm(&bytes).unwrap();
        // First stored row is the bottom row.
        assert_eq!(img.get(0, 1), [1.0, 2.0, 3.0]);
        assert_eq!(img.get(0, 0), [4.0, 5.0, 6.0]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_pfm(b"PF\n0 4\n-1\n").is_err());
        assert!(read_pfm(b"PF\n2 2\n-1\n\0\0").is_err());
        let err = read_pfm(b"Pf\n1 1\n-1\n\0\0\0\0").unwrap_err().to_string();
        assert!(err.contains("Pf"), "{err}");
        assert!(read_pfm(b"P6\n1 1\n255\n").is_err());
        assert!(read_pfm(b"PF\n1 1\n0\n").is_err());
        assert!(read_pfm(b"").is_err());
    }
}
