//! Radiance RGBE (`.hdr`).
//!
//! Pixels share one exponent: `value = mantissa / 256 * 2^(e - 128)`, with
//! `e = 0` meaning black. Reading accepts flat and adaptive run-length
//! scanlines; writing always uses adaptive RLE when the width allows it.

use crate::image::{Domain, Image};
use crate::{Error, Result};

use super::MAX_DIM;

const MAX_HEADER: usize = 1 << 16;
const MIN_RLE_WIDTH: usize = 8;
const MAX_RLE_WIDTH: usize = 0x7fff;

pub fn decode_rgbe_pixel(p: [u8; 4]) -> [f32; 3] {
    if p[3] == 0 {
        return [0.0; 3];
    }
    let f = 2f64.powi(p[3] as i32 - 128) / 256.0;
    [
        (p[0] as f64 * f) as f32,
        (p[1] as f64 * f) as f32,
        (p[2] as f64 * f) as f32,
    ]
}

/// Rounds each channel to the nearest mantissa step of the shared exponent.
pub fn encode_rgbe_pixel(rgb: [f32; 3]) -> [u8; 4] {
    let max = rgb.iter().copied().fold(0.0f32, f32::max) as f64;
    if !(max > 1e-38) {
        return [0; 4];
    }
    // frexp: max = m * 2^e with m in [0.5, 1).
    let mut e = max.log2().floor() as i32 + 1;
    while max / 2f64.powi(e) >= 1.0 {
        e += 1;
    }
    while max / 2f64.powi(e) < 0.5 {
        e -= 1;
    }
    if max / 2f64.powi(e) * 256.0 >= 255.5 {
        e += 1;
    }
    if e + 128 > 255 {
        return [255, 255, 255, 255];
    }
    if e + 128 < 1 {
        return [0; 4];
    }
    let scale = 256.0 / 2f64.powi(e);
    let q = |v: f32| ((v.max(0.0) as f64 * scale).round()).min(255.0) as u8;
    [q(rgb[0]), q(rgb[1]), q(rgb[2]), (e + 128) as u8]
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .take(MAX_HEADER)
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse("rgbe", "unterminated header line"))?;
        self.pos += end + 1;
        if self.pos > MAX_HEADER {
            return Err(Error::parse("rgbe", "header too long"));
        }
        std::str::from_utf8(&rest[..end]).map_err(|_| Error::parse("rgbe", "header is not text"))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse("rgbe", "truncated scanline data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn parse_resolution(line: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let [ya, h, xa, w] = parts[..] else {
        return Err(Error::parse("rgbe", format!("unsupported resolution line {line:?}")));
    };
    if ya != "-Y" || xa != "+X" {
        return Err(Error::parse(
            "rgbe",
            format!("unsupported resolution line {line:?}; only -Y H +X W is handled"),
        ));
    }
    let dim = |s: &str| -> Result<usize> {
        let v: usize = s
            .parse()
            .map_err(|_| Error::parse("rgbe", format!("bad dimension {s:?}")))?;
        if v == 0 || v > MAX_DIM {
            return Err(Error::parse("rgbe", format!("dimension {v} out of range")));
        }
        Ok(v)
    };
    Ok((dim(w)?, dim(h)?))
}

fn read_scanline(cur: &mut Cursor<'_>, width: usize, line: &mut [u8]) -> Result<()> {
    let rle_possible = (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&width);
    let head = cur.take(4.min(width * 4))?;
    if !rle_possible || head[0] != 2 || head[1] != 2 || head[2] & 0x80 != 0 {
        line[..head.len()].copy_from_slice(head);
        let rest = cur.take(width * 4 - head.len())?;
        line[head.len()..].copy_from_slice(rest);
        return Ok(());
    }
    let encoded = ((head[2] as usize) << 8) | head[3] as usize;
    if encoded != width {
        return Err(Error::parse(
            "rgbe",
            format!("scanline length mismatch: {encoded} encoded, {width} expected"),
        ));
    }
    // Components are stored as four separate runs of `width` bytes.
    for comp in 0..4 {
        let mut x = 0;
        while x < width {
            let count = cur.byte()? as usize;
            if count > 128 {
                let n = count - 128;
                if x + n > width {
                    return Err(Error::parse("rgbe", "run overflows scanline"));
                }
                let v = cur.byte()?;
                for i in 0..n {
                    line[(x + i) * 4 + comp] = v;
                }
                x += n;
            } else {
                if count == 0 || x + count > width {
                    return Err(Error::parse("rgbe", "bad literal run length"));
                }
                for (i, &v) in cur.take(count)?.iter().enumerate() {
                    line[(x + i) * 4 + comp] = v;
                }
                x += count;
            }
        }
    }
    Ok(())
}

pub fn read_rgbe(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0 };
    let sig = cur.line()?;
    if !(sig.starts_with("#?RADIANCE") || sig.starts_with("#?RGBE")) {
        return Err(Error::parse("rgbe", format!("bad signature {sig:?}")));
    }
    loop {
        let line = cur.line()?;
        if line.trim().is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt.trim() != "32-bit_rle_rgbe" {
                return Err(Error::parse("rgbe", format!("unsupported pixel format {fmt:?}")));
            }
        }
    }
    let (width, height) = parse_resolution(cur.line()?)?;
    let mut data = Vec::with_capacity(width * height * 3);
    let mut line = vec![0u8; width * 4];
    for _ in 0..height {
        read_scanline(&mut cur, width, &mut line)?;
        for p in line.chunks_exact(4) {
            data.extend_from_slice(&decode_rgbe_pixel([p[0], p[1], p[2], p[3]]));
        }
    }
    Image::from_vec(width, height, data, Domain::LinearHdr)
}

fn write_rle_component(out: &mut Vec<u8>, data: &[u8]) {
    const MIN_RUN: usize = 4;
    let mut i = 0;
    while i < data.len() {
        // Find the next run of at least MIN_RUN equal bytes.
        let mut run_start = i;
        let mut run_len = 0;
        while run_start < data.len() {
            run_len = 1;
            while run_start + run_len < data.len()
                && run_len < 127
                && data[run_start + run_len] == data[run_start]
            {
                run_len += 1;
            }
            if run_len >= MIN_RUN {
                break;
            }
            run_start += run_len;
        }
        if run_start >= data.len() {
            run_len = 0;
        }
        // Literals up to the run.
        while i < run_start {
            let n = (run_start - i).min(128);
            out.push(n as u8);
            out.extend_from_slice(&data[i..i + n]);
            i += n;
        }
        if run_len >= MIN_RUN {
            out.push(128 + run_len as u8);
            out.push(data[run_start]);
            i = run_start + run_len;
        }
    }
}

pub fn write_rgbe(img: &Image) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut out = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n").into_bytes();
    let rle = (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&w);
    let mut comps = vec![vec![0u8; w]; 4];
    for y in 0..h {
        if !rle {
            for x in 0..w {
                out.extend_from_slice(&encode_rgbe_pixel(img.get(x, y)));
            }
            continue;
        }
        for x in 0..w {
            let p = encode_rgbe_pixel(img.get(x, y));
            for c in 0..4 {
                comps[c][x] = p[c];
            }
        }
        out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
        for comp in &comps {
            write_rle_component(&mut out, comp);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_formula() {
        assert_eq!(decode_rgbe_pixel([128, 128, 128, 130]), [2.0, 2.0, 2.0]);
        assert_eq!(decode_rgbe_pixel([0, 0, 0, 0]), [0.0, 0.0, 0.0]);
        assert_eq!(decode_rgbe_pixel([200, 10, 0, 0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn encode_handles_carry_and_black() {
        assert_eq!(encode_rgbe_pixel([0.0; 3]), [0; 4]);
        assert_eq!(encode_rgbe_pixel([2.0; 3]), [128, 128, 128, 130]);
        // 0.9999 would round to mantissa 256; the exponent must carry.
        let p = encode_rgbe_pixel([0.9999, 0.5, 0.0]);
        assert_eq!(p[3], 129);
        assert_eq!(p[0], 128);
    }

    #[test]
    fn roundtrip_within_shared_exponent_precision() {
        let img = Image::from_fn(40, 9, Domain::LinearHdr, |x, y| {
            let v = 10f32.powf((x as f32 / 39.0) * 12.0 - 6.0);
            [v, v * (1.0 + y as f32 * 0.05), v * 0.5]
        });
        let back = read_rgbe(&write_rgbe(&img)).unwrap();
        for (a, b) in img.pixels().zip(back.pixels()) {
            let m = a.iter().copied().fold(0.0, f32::max);
            for c in 0..3 {
                assert!(((a[c] - b[c]) / m).abs() < 1.0 / 256.0, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn write_read_write_is_byte_stable() {
        let img = Image::from_fn(33, 5, Domain::LinearHdr, |x, y| {
            [x as f32 * 0.37, (x * y) as f32 * 1.3, if x % 9 < 4 { 5.0 } else { 0.01 }]
        });
        let first = write_rgbe(&img);
        let second = write_rgbe(&read_rgbe(&first).unwrap());
        assert_eq!(first, second);
    }

    #[test]
    fn narrow_images_use_flat_scanlines() {
        let img = Image::from_fn(3, 2, Domain::LinearHdr, |x, y| [x as f32 + 1.0, y as f32, 0.5]);
        let bytes = write_rgbe(&img);
        let header = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 2 +X 3\n".len();
        assert_eq!(bytes.len() - header, 3 * 2 * 4);
        assert!(read_rgbe(&bytes).is_ok());
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_rgbe(b"#?JUNK\n\n-Y 1 +X 1\n\0\0\0\0").is_err());
        assert!(read_rgbe(b"#?RADIANCE\n\n+Y 1 +X 1\n\0\0\0\0").is_err());
        assert!(read_rgbe(b"#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n\0\0\0\0").is_err());
        // RLE header claims width 9 for a width-8 image.
        let mut bad = b"#?RADIANCE\n\n-Y 1 +X 8\n".to_vec();
        bad.extend_from_slice(&[2, 2, 0, 9]);
        let err = read_rgbe(&bad).unwrap_err().to_string();
        assert!(err.contains("length mismatch"), "{err}");
        assert!(read_rgbe(b"#?RADIANCE\n\n-Y 2 +X 1\n\0\0\0\0").is_err());
    }
}
