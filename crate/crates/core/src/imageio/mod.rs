//! Raster file formats and dataset-level helpers.
//!
//! Formats are limited to PFM, Radiance RGBE and binary PPM. Every parser
//! bounds its work by the input length and rejects malformed input with an
//! error rather than panicking.

mod patches;
mod pfm;
mod ppm;
mod rgbe;
mod stats;

use std::path::Path;

pub use patches::{extract_patches, sample_offsets, Patches};
pub use pfm::{read_pfm, write_pfm};
pub use ppm::{read_ppm, read_ppm_codes, write_ppm, write_ppm_codes};
pub use rgbe::{decode_rgbe_pixel, encode_rgbe_pixel, read_rgbe, write_rgbe};
pub use stats::{dataset_stats, exposure_stats, DatasetReport, ImageStats};

use crate::image::Image;
use crate::{Error, Result};

/// Largest accepted width or height.
pub const MAX_DIM: usize = 1 << 16;

/// File formats recognized by extension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Pfm,
    Rgbe,
    Ppm,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Format> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("pfm") => Ok(Format::Pfm),
            Some("hdr") => Ok(Format::Rgbe),
            Some("ppm") => Ok(Format::Ppm),
            _ => Err(Error::invalid(format!(
                "{}: unsupported extension (expected .pfm, .hdr or .ppm)",
                path.display()
            ))),
        }
    }

    pub fn is_hdr(self) -> bool {
        matches!(self, Format::Pfm | Format::Rgbe)
    }
}

/// Reads an image, dispatching on the file extension.
pub fn read_image(path: &Path) -> Result<Image> {
    let format = Format::from_path(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    match format {
        Format::Pfm => read_pfm(&bytes),
        Format::Rgbe => read_rgbe(&bytes),
        Format::Ppm => read_ppm(&bytes),
    }
    .map_err(|e| e.in_file(path))
}

/// Writes an image, dispatching on the file extension. PPM output is 8-bit.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let bytes = match Format::from_path(path)? {
        Format::Pfm => write_pfm(img),
        Format::Rgbe => write_rgbe(img),
        Format::Ppm => write_ppm(img, 8)?,
    };
    std::fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

/// Whitespace-separated ASCII header shared by PFM and PPM.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: &'static str,
    comments: bool,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8], format: &'static str, comments: bool) -> Self {
        Header {
            bytes,
            pos: 0,
            format,
            comments,
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') if self.comments => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::parse(self.format, "truncated header")),
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
            if self.pos - start > 64 {
                return Err(Error::parse(self.format, "header token too long"));
            }
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(self.format, "header is not ASCII"))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        let v: usize = t
            .parse()
            .map_err(|_| Error::parse(self.format, format!("bad {what} {t:?}")))?;
        if v == 0 || v > MAX_DIM {
            return Err(Error::parse(self.format, format!("{what} {v} out of range 1..={MAX_DIM}")));
        }
        Ok(v)
    }

    /// Consumes the single whitespace byte that ends the header.
    fn payload(mut self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => self.pos += 1,
            _ => return Err(Error::parse(self.format, "missing whitespace before payload")),
        }
        Ok(&self.bytes[self.pos..])
    }
}
