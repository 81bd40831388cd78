use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use slogan_core::toy::write_toy_dataset;

const TOY_CONFIG: &str = "\
# small toy run
batch_size=4
image_width=96
max_decode_len=6
arch_scale=8
checkpoint_every=5
seed=3
";

fn slogan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slogan"))
        .args(args)
        .env_remove("SLOGAN_SEED")
        .output()
        .expect("spawn slogan")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    config: PathBuf,
    run_dir: PathBuf,
}

/// A toy dataset and a 10-iteration training run shared by the tests.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        let manifest = write_toy_dataset(root.join("toy"), 16, 5).unwrap();
        let config = root.join("toy.cfg");
        std::fs::write(&config, TOY_CONFIG).unwrap();
        let run_dir = root.join("run");
        let o = slogan(&[
            "train",
            "--config",
            p(&config),
            "--data",
            p(&manifest),
            "--max-iters",
            "10",
            "--out-dir",
            p(&run_dir),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        Fixture {
            _dir: dir,
            root,
            manifest,
            config,
            run_dir,
        }
    })
}

fn checkpoint() -> PathBuf {
    fixture().run_dir.join("final.ckpt")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn log_iterations(path: &Path) -> Vec<u64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn train_writes_checkpoints_log_and_manifest() {
    let f = fixture();
    assert!(checkpoint().exists());
    assert!(f.run_dir.join("checkpoint-00000005.ckpt").exists());
    let log = f.run_dir.join("loss.log");
    assert_eq!(log_iterations(&log), (1..=10).collect::<Vec<_>>());
    let first = std::fs::read_to_string(&log).unwrap();
    let first = first.lines().next().unwrap();
    assert!(first.contains(" d.join_adv=") && first.contains(" g.idt="), "{first}");

    let m = read_json(&f.run_dir.join("run.json"));
    assert_eq!(m["command"], "train");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["arch_scale"], "8");
    assert_eq!(m["checkpoint_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn resume_continues_the_loss_log() {
    let f = fixture();
    let dir = f.root.join("resumed");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::copy(f.run_dir.join("loss.log"), dir.join("loss.log")).unwrap();
    let o = slogan(&[
        "train",
        "--data",
        p(&f.manifest),
        "--resume",
        p(&checkpoint()),
        "--max-iters",
        "12",
        "--out-dir",
        p(&dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(log_iterations(&dir.join("loss.log")), (1..=12).collect::<Vec<_>>());
}

#[test]
fn seed_override_from_environment() {
    let f = fixture();
    let dir = f.root.join("seeded");
    let o = Command::new(env!("CARGO_BIN_EXE_slogan"))
        .args(["train", "--config", p(&f.config), "--data", p(&f.manifest), "--max-iters", "1"])
        .args(["--out-dir", p(&dir)])
        .env("SLOGAN_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_json(&dir.join("run.json"));
    assert_eq!(m["seed"], 99);
    assert_eq!(m["config"]["seed"], "99");

    let o = Command::new(env!("CARGO_BIN_EXE_slogan"))
        .args(["train", "--data", p(&f.manifest), "--max-iters", "1", "--out-dir", p(&dir)])
        .env("SLOGAN_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("SLOGAN_SEED"));
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let f = fixture();
    let cfg = f.root.join("bad.cfg");
    std::fs::write(&cfg, "batch_size=4\nlearning_rate=0.1\n").unwrap();
    let o = slogan(&["train", "--config", p(&cfg), "--data", p(&f.manifest), "--out-dir", p(&f.root.join("bad"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let f = fixture();
    let o = slogan(&["train", "--data", p(&f.root.join("nope.tsv")), "--out-dir", p(&f.root.join("missing"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.tsv"));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = slogan(&["paint"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn generate_requires_checkpoint_flag() {
    let o = slogan(&["generate", "--text", "abc", "--style-random", "--out", "x.png"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--checkpoint"), "{}", stderr(&o));
}

#[test]
fn generate_writes_image_and_manifest() {
    let f = fixture();
    let out = f.root.join("gen_writer.png");
    let o = slogan(&["generate", "--checkpoint", p(&checkpoint()), "--text", "cab abc", "--style-id", "writer1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = slogan_core::TextImage::load(&out).unwrap();
    assert_eq!(img.height(), 64);
    assert_eq!(img.width() % 16, 0);
    let m = read_json(&out.with_extension("run.json"));
    assert_eq!(m["command"], "generate");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["outputs"][0], p(&out));

    let o = slogan(&["generate", "--checkpoint", p(&checkpoint()), "--text", "ab", "--style-id", "nobody", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nobody"));
}

#[test]
fn random_style_generation_is_reproducible() {
    let f = fixture();
    let run = |name: &str| {
        let out = f.root.join(name);
        let o = slogan(&[
            "generate",
            "--checkpoint",
            p(&checkpoint()),
            "--text",
            "abcabc",
            "--style-random",
            "--seed",
            "4",
            "--curve-radius",
            "150",
            "--curve-span",
            "0.8",
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("r1.png"), run("r2.png"));
}

#[test]
fn style_file_generation() {
    let f = fixture();
    let inspect = slogan(&["inspect-style", "--checkpoint", p(&checkpoint()), "--style-id", "writer0"]);
    assert!(inspect.status.success(), "{}", stderr(&inspect));
    let text = String::from_utf8(inspect.stdout).unwrap();
    assert!(text.starts_with("writer=writer0\nindex=0\n"), "{text}");
    let values: Vec<&str> = text
        .lines()
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()) && l.contains('\t'))
        .map(|l| l.split('\t').nth(1).unwrap())
        .collect();
    let dim: usize = text.lines().find_map(|l| l.strip_prefix("dim=")).unwrap().parse().unwrap();
    assert_eq!(values.len(), dim);
    let style = f.root.join("style.txt");
    std::fs::write(&style, values.join("\n")).unwrap();
    let out = f.root.join("from_file.png");
    let o = slogan(&["generate", "--checkpoint", p(&checkpoint()), "--text", "ba", "--style-file", p(&style), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    std::fs::write(&style, "0.5\nhello\n").unwrap();
    let o = slogan(&["generate", "--checkpoint", p(&checkpoint()), "--text", "ba", "--style-file", p(&style), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn synth_dataset_then_fid() {
    let f = fixture();
    let lexicon = f.root.join("lexicon.txt");
    std::fs::write(&lexicon, "abc\n\ncab\n# comment\nba\n").unwrap();
    let synth = |dir: &Path, style: &str| {
        slogan(&[
            "synth-dataset",
            "--checkpoint",
            p(&checkpoint()),
            "--lexicon",
            p(&lexicon),
            "--count",
            "6",
            "--seed",
            "8",
            "--style",
            style,
            "--out-dir",
            p(dir),
        ])
    };
    let (a, b) = (f.root.join("synth_a"), f.root.join("synth_b"));
    for dir in [&a, &b] {
        let o = synth(dir, "cycle");
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let manifest = std::fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.starts_with('#')).count(), 6);
    assert_eq!(manifest, std::fs::read_to_string(b.join("manifest.tsv")).unwrap());
    assert_eq!(std::fs::read(a.join("images/000003.png")).unwrap(), std::fs::read(b.join("images/000003.png")).unwrap());
    assert_eq!(read_json(&a.join("run.json"))["seed"], 8);

    let o = synth(&f.root.join("synth_bad"), "sometimes");
    assert_eq!(o.status.code(), Some(2));

    let report = f.root.join("fid.txt");
    let o = slogan(&[
        "eval",
        "fid",
        "--real-manifest",
        p(&f.manifest),
        "--fake-manifest",
        p(&a.join("manifest.tsv")),
        "--per-writer",
        "--checkpoint",
        p(&checkpoint()),
        "--report",
        p(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&report).unwrap();
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(value("fid").is_finite() && value("fid") >= 0.0);
    assert!(value("per_writer_fid") >= 0.0);
    assert_eq!(value("fake_images"), 6.0);
    assert_eq!(read_json(&report.with_extension("run.json"))["command"], "eval fid");
}

#[test]
fn eval_cer_report() {
    let f = fixture();
    let (r, h) = (f.root.join("ref.txt"), f.root.join("hyp.txt"));
    std::fs::write(&r, "abc abc\nab\n").unwrap();
    std::fs::write(&h, "abd abc\nab\n").unwrap();
    let manifest = f.root.join("cer.run.json");
    let o = slogan(&["eval", "cer", "--ref-file", p(&r), "--hyp-file", p(&h), "--run-manifest", p(&manifest)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("cer=0.1111111111111111\n"), "{out}");
    assert!(out.contains("wer=0.3333333333333333\n"), "{out}");
    assert!(out.contains("lines=2\n"));
    assert_eq!(read_json(&manifest)["status"], "ok");

    std::fs::write(&h, "abc\n").unwrap();
    let o = slogan(&["eval", "cer", "--ref-file", p(&r), "--hyp-file", p(&h), "--run-manifest", p(&manifest)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(read_json(&manifest)["status"], "failed");
}

#[test]
fn inspect_lists_writers() {
    let o = slogan(&["inspect-style", "--checkpoint", p(&checkpoint())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("writers=2\n"), "{text}");
    assert!(text.contains("0\twriter0\n") && text.contains("1\twriter1\n"), "{text}");
}

#[test]
fn interrupt_checkpoints_and_exits_1() {
    let f = fixture();
    let dir = f.root.join("interrupted");
    let mut child = Command::new(env!("CARGO_BIN_EXE_slogan"))
        .args(["train", "--config", p(&f.config), "--data", p(&f.manifest), "--max-iters", "100000"])
        .args(["--out-dir", p(&dir)])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let log = dir.join("loss.log");
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(120);
    while std::fs::read_to_string(&log).map_or(true, |s| s.lines().count() < 2) {
        assert!(std::time::Instant::now() < deadline, "training never started");
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(1));
    let m = read_json(&dir.join("run.json"));
    assert_eq!(m["status"], "interrupted");
    let done = log_iterations(&log).len();
    let ckpt = dir.join(format!("checkpoint-{done:08}.ckpt"));
    assert!(ckpt.exists(), "{} missing", ckpt.display());
    let resumed = slogan_model::Checkpoint::load(&ckpt).unwrap();
    assert_eq!(resumed.iteration, done as u64);
}
