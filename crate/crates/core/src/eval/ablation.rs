use std::fmt::Write;

use super::{psnr, ssim, to_metric_domain};
use crate::degrade::DegradationConfig;
use crate::image::Image;
use crate::kv::KeyValues;
use crate::net::{count_macs, count_params, infer, ModelConfig};
use crate::train::{train_loop, TrainConfig, TrainPair};
use crate::{Error, Result};

/// One configuration of the comparison.
#[derive(Clone, Debug)]
pub struct AblationEntry {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub degrade: DegradationConfig,
}

impl AblationEntry {
    pub fn baseline(model: &ModelConfig, train: &TrainConfig, degrade: &DegradationConfig) -> Self {
        AblationEntry {
            name: "baseline".into(),
            model: model.clone(),
            train: train.clone(),
            degrade: degrade.clone(),
        }
    }

    /// Alternative degradation recipe: light compression, no rescale.
    pub fn other_recipe(&self) -> Self {
        AblationEntry {
            name: "other recipe".into(),
            degrade: DegradationConfig {
                jpeg_qf1_range: (90, 95),
                jpeg_qf2: 95,
                rescale_range: (1.0, 1.0),
                ..self.degrade.clone()
            },
            ..self.clone()
        }
    }

    /// Trained on clean SDR.
    pub fn no_degradation(&self) -> Self {
        AblationEntry {
            name: "w/o degradation".into(),
            train: TrainConfig {
                degrade: false,
                ..self.train.clone()
            },
            ..self.clone()
        }
    }

    pub fn no_partial_conv(&self) -> Self {
        AblationEntry {
            name: "w/o partial conv".into(),
            model: ModelConfig {
                use_partial_conv: false,
                ..self.model.clone()
            },
            ..self.clone()
        }
    }

    pub fn no_group_conv(&self) -> Self {
        AblationEntry {
            name: "w/o group conv".into(),
            model: ModelConfig {
                groups: 1,
                ..self.model.clone()
            },
            ..self.clone()
        }
    }
}

/// Shared data for every entry: training pairs and a test set of
/// `(linear HDR reference, degraded SDR input)`.
pub struct AblationSetup<'a> {
    pub train: &'a [TrainPair],
    pub test: &'a [(Image, Image)],
    pub seeds: &'a [u64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    pub params: usize,
    pub macs: u64,
    /// Mean final training loss over seeds.
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>7}  {:>8}  {:>9}  {:>10}",
            "config", "PSNR", "SSIM", "params", "MACs@1080", "train loss"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8.3}  {:>7.4}  {:>8}  {:>8.1}G  {:>10.5}",
                r.name,
                r.psnr,
                r.ssim,
                r.params,
                r.macs as f64 / 1e9,
                r.final_loss
            );
        }
        s
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        for (i, r) in self.rows.iter().enumerate() {
            kv.set(&format!("row.{i}.name"), &r.name);
            kv.set(&format!("row.{i}.psnr"), r.psnr);
            kv.set(&format!("row.{i}.ssim"), r.ssim);
            kv.set(&format!("row.{i}.params"), r.params);
            kv.set(&format!("row.{i}.macs"), r.macs);
        }
        kv
    }
}

/// Trains every entry once per seed and scores it on the shared test set.
pub fn ablation_suite(entries: &[AblationEntry], setup: &AblationSetup<'_>) -> Result<AblationReport> {
    if setup.seeds.is_empty() || setup.test.is_empty() {
        return Err(Error::invalid("ablation needs at least one seed and one test image"));
    }
    if let Some((h, s)) = setup.test.iter().find(|(h, s)| !h.same_size(s)) {
        return Err(Error::invalid(format!(
            "test pair sizes differ: {}x{} vs {}x{}",
            h.width(),
            h.height(),
            s.width(),
            s.height()
        )));
    }
    let references = setup
        .test
        .iter()
        .map(|(h, _)| to_metric_domain(h))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let (mut p, mut s, mut l) = (0.0, 0.0, 0.0);
        for &seed in setup.seeds {
            let train = TrainConfig { seed, ..e.train.clone() };
            let out = train_loop(&e.model, &train, &e.degrade, setup.train, |_| {})?;
            l += out.log.last().map_or(f64::NAN, |r| r.total);
            let model = &out.checkpoint.model;
            for ((_, sdr), reference) in setup.test.iter().zip(&references) {
                let pred = infer(model, sdr)?;
                p += psnr(&pred, reference, 1.0);
                s += ssim(&pred, reference, 1.0)?;
            }
        }
        let n = (setup.seeds.len() * setup.test.len()) as f64;
        rows.push(AblationRow {
            name: e.name.clone(),
            psnr: p / n,
            ssim: s / n,
            params: count_params(&e.model),
            macs: count_macs(&e.model, 1080, 1920),
            final_loss: l / setup.seeds.len() as f64,
        });
    }
    Ok(AblationReport { rows })
}
