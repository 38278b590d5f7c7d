//! Batch command-line front end.
//!
//! [`run`] parses arguments, echoes the resolved configuration and returns
//! the process exit code: [`EXIT_OK`] when everything succeeded,
//! [`EXIT_PARTIAL`] when some input files failed, [`EXIT_FAILURE`] when
//! nothing useful was produced. Logs go to `out`, diagnostics to `err`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::degrade::{conventional_degrade, image_rng, virtual_shot, DegradationConfig};
use crate::eval::{bench_forward, tonemap_preview, MetricsReport, Runtime};
use crate::image::{Domain, Image};
use crate::imageio::{dataset_stats, read_image, read_ppm_codes, write_image, write_ppm_codes, Format};
use crate::kv::KeyValues;
use crate::net::{count_macs, count_params, infer, layer_inventory, mac_breakdown, Checkpoint, ModelConfig};
use crate::train::{loss_log_text, postprocess_gamma, train_loop, TrainConfig, TrainPair, GAMMA};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "lhdr", version, about = "Lightweight SDR-to-HDR reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize degraded legacy SDR from HDR (or clean SDR) images.
    Degrade(DegradeArgs),
    /// Under/over-exposure statistics of a folder of PPM images.
    Stats(StatsArgs),
    /// Train from HDR images and write a checkpoint plus loss log.
    Train(TrainArgs),
    /// Reconstruct linear HDR from one SDR image.
    Infer(InferArgs),
    /// PSNR/SSIM of a checkpoint against HDR references.
    Eval(EvalArgs),
    /// Parameter and MAC counts with a per-layer breakdown.
    Info(InfoArgs),
    /// Median forward wall time.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Degradation config (key=value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 255)]
    over: u16,
    #[arg(long, default_value_t = 0)]
    under: u16,
    /// Also write the report as key=value.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Folder of linear HDR images (.pfm/.hdr).
    #[arg(long)]
    hdr: PathBuf,
    /// Folder of matching clean SDR renderings (<stem>.ppm). Without it the
    /// SDR side is rendered with the virtual camera.
    #[arg(long)]
    sdr: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Loss log path; defaults to the checkpoint path with `.log` appended.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    degrade_config: Option<PathBuf>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    /// Train on clean SDR without the conventional degradations.
    #[arg(long)]
    no_degrade: bool,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Linear HDR output, .pfm or .hdr.
    #[arg(long)]
    out: PathBuf,
    /// Tonemapped 8-bit PPM preview.
    #[arg(long)]
    preview: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Folder of linear HDR references.
    #[arg(long)]
    hdr: PathBuf,
    /// Folder of matching SDR inputs; rendered from the references when absent.
    #[arg(long)]
    sdr: Option<PathBuf>,
    /// Apply the conventional degradations to the SDR inputs first.
    #[arg(long)]
    degrade: bool,
    #[arg(long)]
    degrade_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InfoArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "1920x1080", value_parser = parse_resolution)]
    resolution: (usize, usize),
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "1920x1080", value_parser = parse_resolution)]
    resolution: (usize, usize),
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

fn parse_resolution(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.parse().map_err(|e| format!("width {w:?}: {e}"))?;
    let h: usize = h.parse().map_err(|e| format!("height {h:?}: {e}"))?;
    if w == 0 || h == 0 {
        return Err("resolution must be positive".into());
    }
    Ok((w, h))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_FAILURE
            } else {
                // --help and --version
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Degrade(a) => cmd_degrade(&a, out, err),
        Command::Stats(a) => cmd_stats(&a, out, err),
        Command::Train(a) => cmd_train(&a, out),
        Command::Infer(a) => cmd_infer(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Info(a) => cmd_info(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn echo(out: &mut dyn Write, section: &str, kv: &KeyValues) -> Result<()> {
    writeln!(out, "[{section}]")?;
    write!(out, "{}", kv.to_text())?;
    Ok(())
}

fn load_kv(path: &Path, known: &[&str]) -> Result<KeyValues> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    let kv = KeyValues::parse(&text).map_err(|e| e.in_file(path))?;
    kv.reject_unknown(known).map_err(|e| e.in_file(path))?;
    Ok(kv)
}

fn model_config(path: Option<&Path>) -> Result<ModelConfig> {
    match path {
        Some(p) => ModelConfig::from_kv(&load_kv(p, ModelConfig::keys())?).map_err(|e| e.in_file(p)),
        None => Ok(ModelConfig::default()),
    }
}

fn degrade_config(path: Option<&Path>) -> Result<DegradationConfig> {
    match path {
        Some(p) => DegradationConfig::load(p),
        None => Ok(DegradationConfig::default()),
    }
}

/// Supported image files in `dir`, sorted by name.
fn list_images(dir: &Path, accept: impl Fn(Format) -> bool) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::from(e).in_file(dir))?.path();
        if path.is_file() && Format::from_path(&path).is_ok_and(&accept) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Invalid(format!("no input images in {}", dir.display())));
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn exit_for(failed: usize, total: usize) -> i32 {
    match failed {
        0 => EXIT_OK,
        f if f < total => EXIT_PARTIAL,
        _ => EXIT_FAILURE,
    }
}

fn report_failures(err: &mut dyn Write, failures: &[(PathBuf, Error)], total: usize) -> Result<()> {
    for (p, e) in failures {
        writeln!(err, "failed: {}: {e}", p.display())?;
    }
    if !failures.is_empty() {
        writeln!(err, "{} of {total} files failed", failures.len())?;
    }
    Ok(())
}

fn cmd_degrade(a: &DegradeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut cfg = degrade_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    echo(out, "degrade", &cfg.to_kv())?;
    let files = list_images(&a.input, |_| true)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::from(e).in_file(&a.out))?;

    let results: Vec<Result<String>> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let img = read_image(path)?;
            let sdr = if img.domain == Domain::NonlinearSdr {
                img
            } else {
                virtual_shot(&img, &cfg)?
            };
            let mut rng = image_rng(cfg.seed, i as u64);
            let (degraded, manifest) = conventional_degrade(&sdr, &cfg, &mut rng)?;
            let name = stem(path);
            write_image(&a.out.join(format!("{name}.ppm")), &degraded)?;
            let mut kv = KeyValues::new();
            kv.set("source", path.display());
            kv.set("index", i);
            kv.set("seed", cfg.seed);
            kv.extend(&manifest.to_kv(""));
            let mpath = a.out.join(format!("{name}.manifest"));
            std::fs::write(&mpath, kv.to_text()).map_err(|e| Error::from(e).in_file(&mpath))?;
            Ok(format!(
                "{name}: sigma={:.5} qf1={} qf2={} scale={:.4}",
                manifest.sigma, manifest.qf1, manifest.qf2, manifest.scale
            ))
        })
        .collect();

    let mut failures = Vec::new();
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok(line) => writeln!(out, "{line}")?,
            Err(e) => failures.push((path.clone(), e)),
        }
    }
    report_failures(err, &failures, files.len())?;
    writeln!(out, "degraded {} of {} images", files.len() - failures.len(), files.len())?;
    Ok(exit_for(failures.len(), files.len()))
}

fn cmd_stats(a: &StatsArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut kv = KeyValues::new();
    kv.set("over_code", a.over);
    kv.set("under_code", a.under);
    echo(out, "stats", &kv)?;
    let files = list_images(&a.input, |f| f == Format::Ppm)?;
    let mut images = Vec::new();
    let mut failures = Vec::new();
    for path in &files {
        let loaded = std::fs::read(path)
            .map_err(Error::from)
            .and_then(|b| read_ppm_codes(&b))
            .map_err(|e| e.in_file(path));
        match loaded {
            Ok(codes) => images.push((stem(path), codes)),
            Err(e) => failures.push((path.clone(), e)),
        }
    }
    report_failures(err, &failures, files.len())?;
    if images.is_empty() {
        return Ok(EXIT_FAILURE);
    }
    let report = dataset_stats(&images, a.over, a.under)?;
    write!(out, "{}", report.to_text())?;
    if let Some(p) = &a.out {
        std::fs::write(p, report.to_kv().to_text()).map_err(|e| Error::from(e).in_file(p))?;
    }
    Ok(exit_for(failures.len(), files.len()))
}

/// HDR references from `hdr_dir` paired with SDR from `sdr_dir` (matched
/// by stem) or rendered by the virtual camera.
fn load_pairs(hdr_dir: &Path, sdr_dir: Option<&Path>, shot: &DegradationConfig) -> Result<Vec<(String, TrainPair)>> {
    let files = list_images(hdr_dir, Format::is_hdr)?;
    files
        .par_iter()
        .map(|path| {
            let hdr = read_image(path)?;
            let name = stem(path);
            let sdr = match sdr_dir {
                Some(d) => read_image(&d.join(format!("{name}.ppm")))?,
                None => virtual_shot(&hdr, shot)?,
            };
            Ok((name, TrainPair::new(hdr, sdr).map_err(|e| e.in_file(path))?))
        })
        .collect()
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let model = model_config(a.model_config.as_deref())?;
    let mut train = match &a.train_config {
        Some(p) => TrainConfig::from_kv(&load_kv(p, TrainConfig::keys())?).map_err(|e| e.in_file(p))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.iters {
        train.max_iters = v;
    }
    if let Some(v) = a.seed {
        train.seed = v;
    }
    if let Some(v) = a.batch {
        train.batch = v;
    }
    if let Some(v) = a.patch_size {
        train.patch_size = v;
    }
    if let Some(v) = a.lr0 {
        train.lr0 = v;
    }
    if a.no_degrade {
        train.degrade = false;
    }
    train.validate()?;
    let degrade = degrade_config(a.degrade_config.as_deref())?;
    echo(out, "model", &model.to_kv())?;
    echo(out, "train", &train.to_kv())?;
    echo(out, "degrade", &degrade.to_kv())?;

    let pairs: Vec<TrainPair> = load_pairs(&a.hdr, a.sdr.as_deref(), &degrade)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    writeln!(out, "training on {} image pairs", pairs.len())?;
    let every = (train.max_iters / 20).max(1);
    let mut log_err = None;
    let outcome = train_loop(&model, &train, &degrade, &pairs, |r| {
        if r.iter % every == 0 || r.iter + 1 == train.max_iters {
            if let Err(e) = writeln!(out, "{r}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    outcome.checkpoint.save(&a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".log");
        PathBuf::from(s)
    });
    std::fs::write(&log_path, loss_log_text(&outcome.log)).map_err(|e| Error::from(e).in_file(&log_path))?;
    writeln!(out, "wrote {} and {}", a.out.display(), log_path.display())?;
    Ok(EXIT_OK)
}

fn checkpoint_gamma(ck: &Checkpoint) -> Result<f64> {
    Ok(ck.meta.get("train.gamma")?.unwrap_or(GAMMA))
}

/// Checks that an image can serve as network input.
fn as_sdr(img: Image, path: &Path) -> Result<Image> {
    if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("SDR input values must lie in [0, 1]").in_file(path));
    }
    Ok(img.with_domain(Domain::NonlinearSdr))
}

fn cmd_infer(a: &InferArgs, out: &mut dyn Write) -> Result<i32> {
    if !Format::from_path(&a.out)?.is_hdr() {
        return Err(Error::invalid(format!("{}: output must be .pfm or .hdr", a.out.display())));
    }
    if let Some(p) = &a.preview {
        if Format::from_path(p)? != Format::Ppm {
            return Err(Error::invalid(format!("{}: preview must be .ppm", p.display())));
        }
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let gamma = checkpoint_gamma(&ck)?;
    echo(out, "model", &ck.model.config().to_kv())?;
    let mut kv = KeyValues::new();
    kv.set("checkpoint", a.checkpoint.display());
    kv.set("gamma", gamma);
    echo(out, "infer", &kv)?;

    let sdr = as_sdr(read_image(&a.input)?, &a.input)?;
    let start = Instant::now();
    let y = infer(&ck.model, &sdr)?;
    let seconds = start.elapsed().as_secs_f64();
    let hdr = postprocess_gamma(&y, gamma);
    write_image(&a.out, &hdr)?;
    if let Some(p) = &a.preview {
        std::fs::write(p, write_ppm_codes(&tonemap_preview(&hdr))).map_err(|e| Error::from(e).in_file(p))?;
    }
    writeln!(
        out,
        "{}x{} in {seconds:.3}s, max {:.4} -> {}",
        sdr.width(),
        sdr.height(),
        hdr.max_value(),
        a.out.display()
    )?;
    Ok(EXIT_OK)
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut degrade = degrade_config(a.degrade_config.as_deref())?;
    if let Some(seed) = a.seed {
        degrade.seed = seed;
    }
    echo(out, "model", &ck.model.config().to_kv())?;
    let mut kv = degrade.to_kv();
    kv.set("apply_degradation", a.degrade);
    echo(out, "eval", &kv)?;

    let pairs = load_pairs(&a.hdr, a.sdr.as_deref(), &degrade)?;
    let mut scored = Vec::with_capacity(pairs.len());
    let mut seconds = 0.0;
    for (i, (name, pair)) in pairs.iter().enumerate() {
        let mut sdr = pair.sdr.clone();
        if a.degrade {
            sdr = conventional_degrade(&sdr, &degrade, &mut image_rng(degrade.seed, i as u64))?.0;
        }
        let start = Instant::now();
        let pred = infer(&ck.model, &sdr).map_err(|e| e.in_file(name))?;
        seconds += start.elapsed().as_secs_f64();
        scored.push((pred, pair.hdr.clone()));
    }
    let mut report = MetricsReport::evaluate(&scored, ck.model.config())?;
    let first = &pairs[0].1.hdr;
    report.runtime = Some(Runtime {
        seconds: seconds / pairs.len() as f64,
        height: first.height(),
        width: first.width(),
    });
    write!(out, "{}", report.to_text())?;
    if let Some(p) = &a.out {
        std::fs::write(p, report.to_kv().to_text()).map_err(|e| Error::from(e).in_file(p))?;
    }
    Ok(EXIT_OK)
}

fn cmd_info(a: &InfoArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = model_config(a.config.as_deref())?;
    let (w, h) = a.resolution;
    echo(out, "model", &cfg.to_kv())?;
    let macs = mac_breakdown(&cfg, h, w);
    let inventory = layer_inventory(&cfg);
    writeln!(out, "{:<26} {:>9} {:>16}", "layer", "params", "MACs")?;
    for (layer, (name, m)) in inventory.iter().zip(&macs) {
        let p = layer.conv.weight_dims().len() + layer.conv.bias_dims().len();
        writeln!(out, "{name:<26} {p:>9} {m:>16}")?;
    }
    let total = count_macs(&cfg, h, w);
    writeln!(out, "params {}", count_params(&cfg))?;
    writeln!(out, "macs {total} ({:.2}G at {w}x{h})", total as f64 / 1e9)?;
    Ok(EXIT_OK)
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = model_config(a.config.as_deref())?;
    let (w, h) = a.resolution;
    echo(out, "model", &cfg.to_kv())?;
    let report = bench_forward(&cfg, h, w, a.repeats)?;
    write!(out, "{}", report.to_text())?;
    Ok(EXIT_OK)
}
