use std::fmt::Write;

use crate::image::CodeImage;
use crate::kv::KeyValues;
use crate::{Error, Result};

/// Under/over-exposed pixel fractions of an integer-coded SDR image.
///
/// A pixel is over-exposed when its largest channel code is `>= over_code`
/// and under-exposed when its largest channel code is `<= under_code`.
pub fn exposure_stats(sdr: &CodeImage, over_code: u16, under_code: u16) -> (f64, f64) {
    let n = sdr.width() * sdr.height();
    if n == 0 {
        return (0.0, 0.0);
    }
    let (mut under, mut over) = (0usize, 0usize);
    for p in sdr.pixels() {
        let m = p[0].max(p[1]).max(p[2]);
        under += (m <= under_code) as usize;
        over += (m >= over_code) as usize;
    }
    (under as f64 / n as f64, over as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageStats {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub under: f64,
    pub over: f64,
}

/// Aggregated exposure statistics. Standard deviations use the population
/// formula (divide by N).
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetReport {
    pub over_code: u16,
    pub under_code: u16,
    pub images: Vec<ImageStats>,
    pub under_mean: f64,
    pub under_stdev: f64,
    pub over_mean: f64,
    pub over_stdev: f64,
}

fn mean_stdev(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `images` pairs a display name with each coded image.
pub fn dataset_stats(
    images: &[(String, CodeImage)],
    over_code: u16,
    under_code: u16,
) -> Result<DatasetReport> {
    let Some((_, first)) = images.first() else {
        return Err(Error::invalid("dataset_stats needs at least one image"));
    };
    if let Some((name, _)) = images.iter().find(|(_, i)| i.maxval() != first.maxval()) {
        return Err(Error::invalid(format!(
            "{name}: bit depth differs from the first image (maxval {})",
            first.maxval()
        )));
    }
    let stats: Vec<ImageStats> = images
        .iter()
        .map(|(name, img)| {
            let (under, over) = exposure_stats(img, over_code, under_code);
            ImageStats {
                name: name.clone(),
                width: img.width(),
                height: img.height(),
                under,
                over,
            }
        })
        .collect();
    let (under_mean, under_stdev) = mean_stdev(stats.iter().map(|s| s.under));
    let (over_mean, over_stdev) = mean_stdev(stats.iter().map(|s| s.over));
    Ok(DatasetReport {
        over_code,
        under_code,
        images: stats,
        under_mean,
        under_stdev,
        over_mean,
        over_stdev,
    })
}

impl DatasetReport {
    /// Smallest and largest resolution as `(w, h)` by pixel count.
    pub fn resolution_range(&self) -> ((usize, usize), (usize, usize)) {
        let key = |s: &&ImageStats| s.width * s.height;
        let lo = self.images.iter().min_by_key(key).unwrap();
        let hi = self.images.iter().max_by_key(key).unwrap();
        ((lo.width, lo.height), (hi.width, hi.height))
    }

    /// Aligned table, percentages with three decimals.
    pub fn to_text(&self) -> String {
        let width = self
            .images
            .iter()
            .map(|s| s.name.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>11}  {:>9}  {:>9}",
            "image", "resolution", "under(%)", "over(%)"
        );
        for s in &self.images {
            let _ = writeln!(
                out,
                "{:<width$}  {:>11}  {:>9.3}  {:>9.3}",
                s.name,
                format!("{}x{}", s.width, s.height),
                s.under * 100.0,
                s.over * 100.0
            );
        }
        let ((lw, lh), (hw, hh)) = self.resolution_range();
        let _ = writeln!(
            out,
            "{} images, resolution {lw}x{lh} .. {hw}x{hh}, under <= {}, over >= {}",
            self.images.len(),
            self.under_code,
            self.over_code
        );
        let _ = writeln!(
            out,
            "under avg {:.3}%  stdev {:.3}%",
            self.under_mean * 100.0,
            self.under_stdev * 100.0
        );
        let _ = writeln!(
            out,
            "over  avg {:.3}%  stdev {:.3}%",
            self.over_mean * 100.0,
            self.over_stdev * 100.0
        );
        out
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("count", self.images.len());
        kv.set("over_code", self.over_code);
        kv.set("under_code", self.under_code);
        kv.set("under.mean", self.under_mean);
        kv.set("under.stdev", self.under_stdev);
        kv.set("over.mean", self.over_mean);
        kv.set("over.stdev", self.over_stdev);
        let ((lw, lh), (hw, hh)) = self.resolution_range();
        kv.set("resolution.min", format!("{lw}x{lh}"));
        kv.set("resolution.max", format!("{hw}x{hh}"));
        for (i, s) in self.images.iter().enumerate() {
            kv.set(&format!("image.{i}.name"), &s.name);
            kv.set(&format!("image.{i}.under"), s.under);
            kv.set(&format!("image.{i}.over"), s.over);
        }
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_over(w: usize, h: usize, over: usize, code: u16) -> CodeImage {
        let mut codes = vec![128u16; w * h * 3];
        for p in 0..over {
            codes[p * 3 + 1] = code;
        }
        CodeImage::new(w, h, 255, codes).unwrap()
    }

    #[test]
    fn counts_by_pixel_max() {
        let img = with_over(100, 100, 500, 255);
        assert_eq!(exposure_stats(&img, 255, 0), (0.0, 0.05));
        let gray = with_over(10, 10, 0, 0);
        assert_eq!(exposure_stats(&gray, 255, 0), (0.0, 0.0));
    }

    #[test]
    fn threshold_248_counts_upper_band() {
        let mut codes = vec![100u16; 10 * 3];
        for (i, c) in [247u16, 248, 250, 255].into_iter().enumerate() {
            codes[i * 3] = c;
        }
        let img = CodeImage::new(10, 1, 255, codes).unwrap();
        assert_eq!(exposure_stats(&img, 248, 0).1, 0.3);
        assert_eq!(exposure_stats(&img, 255, 0).1, 0.1);
    }

    #[test]
    fn aggregate_mean_and_population_stdev() {
        let imgs = vec![
            ("a".to_string(), with_over(10, 10, 2, 255)),
            ("b".to_string(), with_over(10, 10, 4, 255)),
        ];
        let r = dataset_stats(&imgs, 255, 0).unwrap();
        assert!((r.over_mean - 0.03).abs() < 1e-12);
        assert!((r.over_stdev - 0.01).abs() < 1e-12);
        let one = dataset_stats(&imgs[..1], 255, 0).unwrap();
        assert_eq!(one.over_stdev, 0.0);
        assert!(r.to_text().contains("over  avg 3.000%"));
        assert_eq!(r.to_kv().get::<f64>("over.mean").unwrap().unwrap(), r.over_mean);
    }

    #[test]
    fn empty_or_mixed_depth_is_error() {
        assert!(dataset_stats(&[], 255, 0).is_err());
        let deep = CodeImage::new(1, 1, 65535, vec![0; 3]).unwrap();
        let imgs = vec![("a".into(), with_over(1, 1, 0, 0)), ("b".into(), deep)];
        assert!(dataset_stats(&imgs, 255, 0).is_err());
    }
}
