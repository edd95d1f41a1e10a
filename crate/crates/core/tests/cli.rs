use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ghostcolor::io::{load_raw, RawImage};

fn ghostcolor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghostcolor"))
        .args(args)
        .env_remove("GHOSTCOLOR_OUT")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ghostcolor(args);
    assert!(
        out.status.success(),
        "ghostcolor {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Temp dir holding bundled 16x16 scenes and a two-channel config.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        ok(&[
            "--out",
            s(&dir.path().join("scenes")),
            "scenes",
            "--size",
            "16",
        ]);
        let ws = Workspace { dir };
        ws.write_config("exp.toml", "");
        ws
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn write_config(&self, name: &str, extra: &str) -> PathBuf {
        let text = format!(
            "seed = 3\nn_frames = 2000\nframe_budgets = [200, 400, 600, 800]\n{extra}\n\
             [[channels]]\nprobe_wavelength_nm = 785.0\ndisplay_wavelength_nm = 532.0\n\
             reflectance = \"scenes/metamer_785nm.png\"\n\n\
             [[channels]]\nprobe_wavelength_nm = 830.0\ndisplay_wavelength_nm = 635.0\n\
             reflectance = \"scenes/metamer_830nm.png\"\n\n\
             [[comparison]]\nname = \"metamer\"\nvisible = \"scenes/metamer_visible.png\"\n\
             reflectance = [\"scenes/metamer_785nm.png\", \"scenes/metamer_830nm.png\"]\n\n\
             [[comparison]]\nname = \"gray\"\nvisible = \"scenes/binary_target.png\"\n\
             reflectance = [\"scenes/checker_785nm.png\", \"scenes/checker_830nm.png\"]\n"
        );
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let ws = Workspace::new();
    let cfg = ws.write_config("bad.toml", "frobnicate = 1");
    let out = ghostcolor(&["--out", s(&ws.path("o")), "simulate", "-c", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));

    let out = ghostcolor(&[
        "--out",
        s(&ws.path("o")),
        "simulate",
        "-c",
        s(&ws.path("exp.toml")),
        "--set",
        "mask.bogus=1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(ghostcolor(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(ghostcolor(&["simulate"]).status.code(), Some(2));
}

#[test]
fn missing_scene_is_a_runtime_error_naming_the_path() {
    let ws = Workspace::new();
    std::fs::remove_file(ws.path("scenes/metamer_830nm.png")).unwrap();
    let out = ghostcolor(&[
        "--out",
        s(&ws.path("o")),
        "simulate",
        "-c",
        s(&ws.path("exp.toml")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metamer_830nm.png"));
}

#[test]
fn simulate_then_reconstruct_two_channels() {
    let ws = Workspace::new();
    let sim = ws.path("sim");
    ok(&["--out", s(&sim), "simulate", "-c", s(&ws.path("exp.toml"))]);
    let m = manifest(&sim);
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["n_frames"], 2000);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);

    let (c0, c1) = (sim.join("ch0_785-532nm.gca"), sim.join("ch1_830-635nm.gca"));
    let both = ws.path("both");
    ok(&["--out", s(&both), "reconstruct", s(&c0), s(&c1)]);
    let pngs: Vec<_> = std::fs::read_dir(&both)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    assert_eq!(pngs.len(), 3, "{pngs:?}");
    assert!(both.join("color.png").exists());
    assert!(matches!(
        load_raw(&both.join("color.raw")).unwrap(),
        RawImage::Color(_)
    ));

    let one = ws.path("one");
    ok(&["--out", s(&one), "reconstruct", s(&c1)]);
    let pngs = std::fs::read_dir(&one)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|e| e == "png")
        })
        .count();
    assert_eq!(pngs, 1);
}

#[test]
fn reconstruct_rejects_mismatched_checkpoints() {
    let ws = Workspace::new();
    let small = ws.write_config("small.toml", "");
    ok(&[
        "--out",
        s(&ws.path("a")),
        "simulate",
        "-c",
        s(&small),
        "--frames",
        "10",
    ]);
    std::fs::write(
        ws.path("big.toml"),
        std::fs::read_to_string(&small)
            .unwrap()
            .replace("scenes/", "big/"),
    )
    .unwrap();
    ok(&["--out", s(&ws.path("big")), "scenes", "--size", "20"]);
    ok(&[
        "--out",
        s(&ws.path("b")),
        "simulate",
        "-c",
        s(&ws.path("big.toml")),
        "--frames",
        "10",
    ]);
    let out = ghostcolor(&[
        "--out",
        s(&ws.path("r")),
        "reconstruct",
        s(&ws.path("a/ch0_785-532nm.gca")),
        s(&ws.path("b/ch1_830-635nm.gca")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = ghostcolor(&[
        "merge-checkpoints",
        "--output",
        s(&ws.path("m.gca")),
        s(&ws.path("a/ch0_785-532nm.gca")),
        s(&ws.path("b/ch0_785-532nm.gca")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn merged_shards_reconstruct_like_a_single_run() {
    let ws = Workspace::new();
    let cfg = ws.path("exp.toml");
    ok(&["--out", s(&ws.path("single")), "simulate", "-c", s(&cfg)]);
    let mut shards = Vec::new();
    for k in 0..3 {
        ok(&[
            "--out",
            s(&ws.path("shards")),
            "simulate",
            "-c",
            s(&cfg),
            "--shard",
            &format!("{k}/3"),
        ]);
        shards.push(ws.path(&format!("shards/ch0_785-532nm_shard{k}of3.gca")));
    }
    let merged = ws.path("merged.gca");
    let mut args = vec!["merge-checkpoints", "--output", s(&merged)];
    args.extend(shards.iter().map(|p| s(p)));
    ok(&args);
    ok(&[
        "--out",
        s(&ws.path("rs")),
        "reconstruct",
        s(&ws.path("single/ch0_785-532nm.gca")),
    ]);
    ok(&["--out", s(&ws.path("rm")), "reconstruct", s(&merged)]);
    let load = |d: &str| match load_raw(&ws.path(d).join("channel0_532nm_g.raw")).unwrap() {
        RawImage::Gray(g) => g,
        _ => panic!("expected a gray map"),
    };
    let (a, b) = (load("rs"), load("rm"));
    assert!(ghostcolor::grid::relative_max_error(b.as_slice(), a.as_slice()) <= 1e-10);
    assert_eq!(
        ghostcolor(&["simulate", "-c", s(&cfg), "--shard", "3/3"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn metrics_on_identical_images() {
    let ws = Workspace::new();
    let img = ws.path("scenes/metamer_visible.png");
    let out = ok(&["--out", s(&ws.path("m")), "metrics", s(&img), s(&img)]);
    assert!(out.contains("psnr_db=inf"), "{out}");
    assert!(out.contains("ssim=1.000000"), "{out}");
    let csv = std::fs::read_to_string(ws.path("m/metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "inf");
    assert_eq!(row[2].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn convergence_writes_one_row_per_budget() {
    let ws = Workspace::new();
    let out = ws.path("conv");
    ok(&[
        "--out",
        s(&out),
        "convergence",
        "-c",
        s(&ws.path("exp.toml")),
    ]);
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    for n in [200, 400, 600, 800] {
        assert!(out.join(format!("color_{n}.png")).exists());
    }
    ok(&[
        "--out",
        s(&ws.path("conv2")),
        "convergence",
        "-c",
        s(&ws.path("exp.toml")),
        "--budgets",
        "50,100",
    ]);
    let csv = std::fs::read_to_string(ws.path("conv2/convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn compare_reports_zero_for_grayscale_reference() {
    let ws = Workspace::new();
    let out = ws.path("cmp");
    ok(&[
        "--out",
        s(&out),
        "compare",
        "-c",
        s(&ws.path("exp.toml")),
        "--frames",
        "500",
    ]);
    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let gray = csv.lines().find(|l| l.starts_with("gray,")).unwrap();
    assert_eq!(gray.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.0);
}

#[test]
fn seed_override_and_determinism() {
    let ws = Workspace::new();
    let cfg = ws.path("exp.toml");
    for d in ["s1", "s2", "s3"] {
        let seed = if d == "s3" { "11" } else { "5" };
        ok(&[
            "--seed",
            seed,
            "--out",
            s(&ws.path(d)),
            "convergence",
            "-c",
            s(&cfg),
            "--budgets",
            "100,300",
        ]);
    }
    assert_eq!(manifest(&ws.path("s1"))["config"]["seed"], 5);
    let read = |d: &str, f: &str| std::fs::read(ws.path(d).join(f)).unwrap();
    for f in ["convergence.csv", "color_300.raw", "g_300_ch0_532nm.raw"] {
        assert_eq!(read("s1", f), read("s2", f), "{f}");
    }
    assert_ne!(
        read("s1", "g_300_ch0_532nm.raw"),
        read("s3", "g_300_ch0_532nm.raw")
    );
}

#[test]
fn output_directory_falls_back_to_environment() {
    let ws = Workspace::new();
    let target = ws.path("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_ghostcolor"))
        .args(["simulate", "-c", s(&ws.path("exp.toml")), "--frames", "20"])
        .env("GHOSTCOLOR_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("ch0_785-532nm.gca").exists());
}

#[test]
fn compose_tints_and_adds_channels() {
    let ws = Workspace::new();
    let a = format!("{}:532", s(&ws.path("scenes/metamer_785nm.png")));
    let b = format!("{}:635", s(&ws.path("scenes/metamer_830nm.png")));
    ok(&[
        "--out",
        s(&ws.path("c")),
        "compose",
        "--channel",
        &a,
        "--channel",
        &b,
    ]);
    assert!(ws.path("c").read_dir().unwrap().any(|e| e
        .unwrap()
        .path()
        .extension()
        .is_some_and(|x| x == "png")));
    let bad = format!("{}:900", s(&ws.path("scenes/metamer_785nm.png")));
    assert_eq!(
        ghostcolor(&["--out", s(&ws.path("c")), "compose", "--channel", &bad])
            .status
            .code(),
        Some(1)
    );
}
