use std::path::Path;
use std::process::{Command, Output};

use smite_core::synthetic::MovingSquare;
use smite_core::{LabelVideo, ReferenceExample};

const CONFIG: &str = "\
phase1_iters = 3
phase2_iters = 2
phase2_lr = 0.001
window_size = 3
denoising_steps = 2
guidance_iters_per_step = 2
";

fn smite(args: &[&str], envs: &[(&str, &str)]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smite"))
        .args(args)
        .env_remove("SMITE_MEMORY_BUDGET_MB")
        .env_remove("SMITE_TRACKER_CMD")
        .envs(envs.iter().copied())
        .output()
        .unwrap()
}

fn ok(args: &[&str], envs: &[(&str, &str)]) {
    let out = smite(args, envs);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Reference image, 8-frame clip, sparse ground truth and a trained checkpoint.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let (img, labels) = MovingSquare::new(1, 64, 24, (0, 0), 3).render().unwrap();
        ReferenceExample::new("square", img.frames()[0].clone(), labels.frame(0).to_owned(), 1)
            .unwrap()
            .save(&root.join("refs"))
            .unwrap();
        let (video, gt) = MovingSquare::new(8, 64, 24, (2, 1), 5).render().unwrap();
        video.save_dir(&root.join("video")).unwrap();
        std::fs::create_dir_all(root.join("gt")).unwrap();
        for f in [0, 5] {
            smite_core::pngio::write_index_mask(&root.join(format!("gt/{f:05}.png")), &gt.frame(f).to_owned()).unwrap();
        }
        std::fs::write(root.join("config.toml"), CONFIG).unwrap();
        let w = Workspace { dir };
        ok(
            &[
                "train",
                "--refs",
                s(&w.p("refs")),
                "--out",
                s(&w.p("ckpt")),
                "--config",
                s(&w.p("config.toml")),
                "--latent-factor",
                "4",
                "--seed",
                "1",
            ],
            &[],
        );
        w
    }

    fn p(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn segment(&self, out: &str, extra: &[&str], envs: &[(&str, &str)]) -> Output {
        let (ckpt, cfg, video, out) = (self.p("ckpt"), self.p("config.toml"), self.p("video"), self.p(out));
        let mut args = vec![
            "segment",
            "--video",
            s(&video),
            "--ckpt",
            s(&ckpt),
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--latent-factor",
            "4",
        ];
        args.extend_from_slice(extra);
        smite(&args, envs)
    }
}

#[test]
fn train_segment_eval_round_trip() {
    let w = Workspace::new();
    assert!(w.p("ckpt/embeddings.bin").exists());
    let loss = std::fs::read_to_string(w.p("ckpt/loss.csv")).unwrap();
    assert!(loss.starts_with("iter,phase,loss_ce,loss_mse,loss_ldm,total"));
    assert_eq!(loss.lines().count(), 1 + 5);

    ok(
        &[
            "track",
            "--video",
            s(&w.p("video")),
            "--out",
            s(&w.p("tracks.bin")),
            "--window",
            "3",
            "--latent-factor",
            "4",
        ],
        &[],
    );
    let dumps = w.p("maps");
    let out = w.segment(
        "pred",
        &["--tracks", s(&w.p("tracks.bin")), "--dump-maps", s(&dumps)],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let labels = LabelVideo::load_dir(&w.p("pred"), 1).unwrap();
    assert_eq!(labels.frames(), 8);
    assert!(dumps.join("scores.png").exists() && dumps.join("tracked.png").exists());

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(w.p("pred/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["guidance"], true);
    assert_eq!(meta["config"]["window_size"], 3);
    assert_eq!(meta["steps"].as_array().unwrap().len(), 2);
    assert_eq!(meta["steps"][0]["energies"].as_array().unwrap().len(), 2);

    ok(
        &[
            "eval",
            "--pred",
            s(&w.p("pred")),
            "--gt",
            s(&w.p("gt")),
            "--out",
            s(&w.p("report.csv")),
        ],
        &[],
    );
    let mut rows = csv::Reader::from_path(w.p("report.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    let miou: f64 = rows.last().unwrap()[3].parse().unwrap();
    assert!((0.0..=1.0).contains(&miou));
}

#[test]
fn segment_variants() {
    let w = Workspace::new();
    let plain = w.segment("plain", &["--no-guidance"], &[]);
    assert!(plain.status.success(), "{}", String::from_utf8_lossy(&plain.stderr));
    let meta = std::fs::read_to_string(w.p("plain/meta.json")).unwrap();
    assert!(meta.contains("\"guidance\": false"));

    let refined = w.segment("refined", &["--crop-refine"], &[]);
    assert!(refined.status.success(), "{}", String::from_utf8_lossy(&refined.stderr));
    assert_eq!(LabelVideo::load_dir(&w.p("refined"), 1).unwrap().frames(), 8);

    // 8 joint frames exceed the budget; 4-frame slices fit
    let sliced = w.segment("sliced", &[], &[("SMITE_MEMORY_BUDGET_MB", "8")]);
    assert!(sliced.status.success(), "{}", String::from_utf8_lossy(&sliced.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(w.p("sliced/meta.json")).unwrap()).unwrap();
    assert!(meta["slices"].as_array().unwrap().len() > 1);
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let w = Workspace::new();
    let (ckpt, cfg, video, gt, out) = (
        w.p("ckpt"),
        w.p("config.toml"),
        w.p("video"),
        w.p("gt"),
        w.p("ablate.csv"),
    );
    for variant in ["per-frame", "+lp-reg"] {
        ok(
            &[
                "ablate",
                "--variant",
                variant,
                "--video",
                s(&video),
                "--gt",
                s(&gt),
                "--ckpt",
                s(&ckpt),
                "--config",
                s(&cfg),
                "--out",
                s(&out),
                "--latent-factor",
                "4",
                "--category",
                "cars",
            ],
            &[],
        );
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.contains(&format!("video:{variant}")), "{text}");
        assert!(text.contains("cars"));
    }
}

#[test]
fn bad_inputs_fail_cleanly() {
    let w = Workspace::new();
    let out = smite(
        &[
            "ablate",
            "--variant",
            "+magic",
            "--video",
            s(&w.p("video")),
            "--gt",
            s(&w.p("gt")),
            "--ckpt",
            s(&w.p("ckpt")),
            "--out",
            s(&w.p("x.csv")),
        ],
        &[],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("+magic"));

    std::fs::write(w.p("bad.toml"), "window_size = 3\nwarp_factor = 9\n").unwrap();
    let out = smite(
        &[
            "segment",
            "--video",
            s(&w.p("video")),
            "--ckpt",
            s(&w.p("ckpt")),
            "--config",
            s(&w.p("bad.toml")),
            "--out",
            s(&w.p("o")),
        ],
        &[],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_factor"));
}
