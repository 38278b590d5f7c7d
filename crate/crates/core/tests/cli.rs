use std::path::Path;

use lhdr::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL};
use lhdr::degrade::{image_rng, synthetic_hdr, virtual_shot, DegradationConfig};
use lhdr::imageio::{read_image, read_rgbe, write_image, write_pfm, write_ppm};
use lhdr::KeyValues;
use tempfile::TempDir;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn lhdr(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("lhdr").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn hdr_folder(count: u64, size: usize) -> TempDir {
    let dir = TempDir::new().unwrap();
    for i in 0..count {
        let img = synthetic_hdr(size, size, &mut image_rng(3, i));
        std::fs::write(dir.path().join(format!("scene{i}.pfm")), write_pfm(&img)).unwrap();
    }
    dir
}

const TINY_MODEL: &str = "dense_growth=4\nunet_base_channels=4\ncond_channels=4\nglobal_mlp_channels=8\nmodulation_channels=4\n";

#[test]
fn info_reports_counts_and_additive_breakdown() {
    let r = lhdr(&["info"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.starts_with("[model]\n"));
    let mut params = 0usize;
    let mut macs = 0u64;
    let (mut total_params, mut total_macs) = (0usize, 0u64);
    for line in r.out.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["params", v] => total_params = v.parse().unwrap(),
            ["macs", v, ..] => total_macs = v.parse().unwrap(),
            [name, a, b] if name.contains('.') => {
                params += a.parse::<usize>().unwrap();
                macs += b.parse::<u64>().unwrap();
            }
            _ => {}
        }
    }
    assert!((200_000..=250_000).contains(&total_params));
    assert!((130_000_000_000..=190_000_000_000).contains(&total_macs));
    assert_eq!(params, total_params);
    assert_eq!(macs, total_macs);
}

#[test]
fn usage_errors_exit_with_failure() {
    assert_eq!(lhdr(&["info", "--bogus"]).code, EXIT_FAILURE);
    assert_eq!(lhdr(&["frobnicate"]).code, EXIT_FAILURE);
    assert_eq!(lhdr(&["info", "--resolution", "12by4"]).code, EXIT_FAILURE);
    assert_eq!(lhdr(&["--help"]).code, EXIT_OK);
}

#[test]
fn config_files_reject_unknown_keys() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("model.cfg");
    std::fs::write(&cfg, "groups=1\nwidth=3\n").unwrap();
    let r = lhdr(&["info", "--config", p(&cfg)]);
    assert_eq!(r.code, EXIT_FAILURE);
    assert!(r.err.contains("unknown key width"), "{}", r.err);

    std::fs::write(&cfg, "groups=1\n").unwrap();
    let r = lhdr(&["info", "--config", p(&cfg)]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("groups=1\n"));
}

#[test]
fn degrade_empty_folder() {
    let input = TempDir::new().unwrap();
    let output = TempDir::new().unwrap();
    let r = lhdr(&["degrade", "--in", p(input.path()), "--out", p(output.path())]);
    assert_ne!(r.code, EXIT_OK);
    assert!(r.err.contains("no input images"), "{}", r.err);
}

#[test]
fn degrade_is_reproducible_and_writes_manifests() {
    let input = hdr_folder(3, 40);
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for out in [&a, &b] {
        let r = lhdr(&["degrade", "--in", p(input.path()), "--out", p(out.path()), "--seed", "7"]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        assert!(r.out.contains("seed=7\n"));
    }
    for i in 0..3 {
        for ext in ["ppm", "manifest"] {
            let name = format!("scene{i}.{ext}");
            let x = std::fs::read(a.path().join(&name)).unwrap();
            let y = std::fs::read(b.path().join(&name)).unwrap();
            assert_eq!(x, y, "{name} differs between runs");
        }
        let kv = KeyValues::parse(&std::fs::read_to_string(a.path().join(format!("scene{i}.manifest"))).unwrap()).unwrap();
        let sigma: f64 = kv.get("sigma").unwrap().unwrap();
        assert!((0.001..=0.003).contains(&sigma), "sigma {sigma}");
        assert_eq!(
            kv.get_str("stages"),
            Some("linearize,to_raw,noise,from_raw,encode,jpeg1,rescale,jpeg2,rescale_back")
        );
    }
}

#[test]
fn degrade_reports_partial_failure() {
    let input = hdr_folder(2, 24);
    std::fs::write(input.path().join("broken.hdr"), b"#?RADIANCE\nnonsense").unwrap();
    std::fs::write(input.path().join("notes.txt"), b"ignored").unwrap();
    let out = TempDir::new().unwrap();
    let r = lhdr(&["degrade", "--in", p(input.path()), "--out", p(out.path())]);
    assert_eq!(r.code, EXIT_PARTIAL);
    assert!(r.err.contains("broken.hdr"), "{}", r.err);
    assert!(r.err.contains("1 of 3 files failed"));
    assert!(out.path().join("scene0.ppm").exists());
}

#[test]
fn stats_on_ppm_folder() {
    let dir = TempDir::new().unwrap();
    let shot = DegradationConfig::default();
    for i in 0..2 {
        let sdr = virtual_shot(&synthetic_hdr(32, 32, &mut image_rng(5, i)), &shot).unwrap();
        std::fs::write(dir.path().join(format!("{i}.ppm")), write_ppm(&sdr, 8).unwrap()).unwrap();
    }
    let report = dir.path().join("report.txt");
    let r = lhdr(&["stats", "--in", p(dir.path()), "--over", "248", "--out", p(&report)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("over_code=248"));
    let kv = KeyValues::parse(&std::fs::read_to_string(report).unwrap()).unwrap();
    let over: f64 = kv.get("over.mean").unwrap().unwrap();
    assert!(over > 0.0 && over < 1.0);
}

#[test]
fn train_infer_eval_roundtrip() {
    let data = hdr_folder(3, 32);
    let work = TempDir::new().unwrap();
    let model_cfg = work.path().join("model.cfg");
    std::fs::write(&model_cfg, TINY_MODEL).unwrap();
    let ck = work.path().join("tiny.lhdr");
    let r = lhdr(&[
        "train",
        "--hdr",
        p(data.path()),
        "--out",
        p(&ck),
        "--model-config",
        p(&model_cfg),
        "--iters",
        "4",
        "--patch-size",
        "16",
        "--seed",
        "3",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("[train]\n") && r.out.contains("max_iters=4\n"));
    let log = std::fs::read_to_string(work.path().join("tiny.lhdr.log")).unwrap();
    let rows: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("0, "));

    // Inference on a virtual shot of the first scene.
    let hdr = read_image(&data.path().join("scene0.pfm")).unwrap();
    let sdr = virtual_shot(&hdr, &DegradationConfig::default()).unwrap();
    let input = work.path().join("in.ppm");
    write_image(&input, &sdr).unwrap();
    let outs: Vec<_> = ["a.pfm", "b.pfm"].iter().map(|n| work.path().join(n)).collect();
    for o in &outs {
        let r = lhdr(&["infer", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(o)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
    }
    let a = std::fs::read(&outs[0]).unwrap();
    assert_eq!(a, std::fs::read(&outs[1]).unwrap());
    let pred = read_image(&outs[0]).unwrap();
    assert!(pred.data().iter().all(|&v| v >= 0.0));

    let rgbe = work.path().join("c.hdr");
    let preview = work.path().join("c.ppm");
    let r = lhdr(&["infer", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(&rgbe), "--preview", p(&preview)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let back = read_rgbe(&std::fs::read(&rgbe).unwrap()).unwrap();
    for (x, y) in pred.pixels().zip(back.pixels()) {
        let m = x.iter().fold(0f32, |m, v| m.max(*v));
        for c in 0..3 {
            assert!((x[c] - y[c]).abs() <= m / 256.0 + 1e-30);
        }
    }
    assert_eq!(read_image(&preview).unwrap().width(), 32);

    let bad = lhdr(&["infer", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(&work.path().join("x.ppm"))]);
    assert_eq!(bad.code, EXIT_FAILURE);

    let metrics = work.path().join("metrics.txt");
    let r = lhdr(&[
        "eval",
        "--checkpoint",
        p(&ck),
        "--hdr",
        p(data.path()),
        "--degrade",
        "--out",
        p(&metrics),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let kv = KeyValues::parse(&std::fs::read_to_string(metrics).unwrap()).unwrap();
    assert_eq!(kv.get_str("metric_domain"), Some("gamma045"));
    assert_eq!(kv.get::<usize>("images").unwrap(), Some(3));
    let ssim: f64 = kv.get("ssim").unwrap().unwrap();
    assert!(ssim.is_finite() && ssim <= 1.0);
}

#[test]
fn infer_rejects_damaged_checkpoint() {
    let work = TempDir::new().unwrap();
    let ck = work.path().join("bad.lhdr");
    let mut bytes = b"LHDR".to_vec();
    bytes.extend_from_slice(&7u16.to_le_bytes());
    bytes.extend_from_slice(&[0; 8]);
    std::fs::write(&ck, bytes).unwrap();
    let input = work.path().join("in.ppm");
    write_image(&input, &lhdr::Image::filled(8, 8, [0.5; 3], lhdr::Domain::NonlinearSdr)).unwrap();
    let r = lhdr(&["infer", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(&work.path().join("o.pfm"))]);
    assert_eq!(r.code, EXIT_FAILURE);
    assert!(r.err.contains("version"), "{}", r.err);
}

#[test]
fn bench_small_resolution() {
    let r = lhdr(&["bench", "--resolution", "32x16", "--repeats", "3"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("32x16"), "{}", r.out);
    assert!(r.out.contains("repeats"), "{}", r.out);
    assert_eq!(lhdr(&["bench", "--repeats", "2", "--resolution", "8x8"]).code, EXIT_FAILURE);
}
