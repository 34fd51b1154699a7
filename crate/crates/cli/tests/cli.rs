use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tactloc::datagen::Dataset;
use tactloc::filter::ActionDir;
use tactloc::models::load_motion_net;

const TINY: &str = r#"
seed = 3

[grid]
height = 16
width = 16

[data]
dir = "data"
train = 4
val = 2
test_primitive = 2
test_composite = 2
transition_episodes = 40
transition_length = 25

[train]
obs_epochs = 1
obs_lr = 0.003
queries_per_epoch = 64
queries_per_scene = 8
scenes_per_batch = 2
val_queries = 8
motion_epochs = 3
motion_lr = 0.01

[eval]
episodes_per_scene = 2

[models]
dir = "runs"
"#;

fn tactloc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tactloc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn gen_reports_counts_and_is_reproducible() {
    let dir = setup(TINY);
    let o = tactloc(dir.path(), &["gen", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("10 scenes"), "{}", stdout(&o));
    let ds = Dataset::open(&dir.path().join("data")).unwrap();
    assert_eq!(ds.manifest().num_scenes, 10);
    assert_eq!(ds.manifest().num_samples, 10 * 16 * 16);

    let o2 = tactloc(dir.path(), &["gen", "--config", "run.toml", "--out", "data2"]);
    assert!(o2.status.success());
    assert_eq!(files(&dir.path().join("data")), files(&dir.path().join("data2")));

    let refused = tactloc(dir.path(), &["gen", "--config", "run.toml"]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(stderr(&refused).contains("--force"));
    let forced = tactloc(dir.path(), &["gen", "--config", "run.toml", "--force", "--seed", "4"]);
    assert!(forced.status.success());
    assert_ne!(files(&dir.path().join("data")), files(&dir.path().join("data2")));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = setup("[grid]\nhieght = 16\n");
    let o = tactloc(dir.path(), &["gen", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hieght"), "{}", stderr(&o));

    let o = tactloc(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = tactloc(dir.path(), &["gen", "--config", "absent.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_with_two() {
    let dir = setup(TINY);
    let o = tactloc(dir.path(), &["train", "motion", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = tactloc(dir.path(), &["eval", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for f in ["motion.tloc", "naive.tloc", "full.tloc"] {
        assert!(err.contains(f), "{err}");
    }
}

#[test]
fn motion_training_on_noise_free_data_gives_delta_kernels() {
    let cfg = TINY.replace("seed = 3", "seed = 3\n[sim]\nmotion_noise = 0.0\n");
    let dir = setup(&cfg);
    assert!(tactloc(dir.path(), &["gen", "--config", "run.toml"]).status.success());
    let cfg = cfg
        .replace("motion_epochs = 3", "motion_epochs = 60")
        .replace("motion_lr = 0.01", "motion_lr = 0.05");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let o = tactloc(dir.path(), &["train", "motion", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("east:"));
    let net = load_motion_net(&dir.path().join("runs/motion.tloc")).unwrap();
    for a in ActionDir::ALL {
        let (dx, dy) = a.delta();
        assert!(net.kernel(a).at(dx, dy) > 0.99, "{a:?}: {:?}", net.kernel(a).weights());
    }
}

#[test]
fn full_pipeline_on_a_tiny_world() {
    let dir = setup(TINY);
    let d = dir.path();
    assert!(tactloc(d, &["gen", "--config", "run.toml"]).status.success());

    let o = tactloc(d, &["train", "obs", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(d.join("runs/full.log")).unwrap();
    let train_loss: f64 = log
        .lines()
        .find(|l| l.contains("split=train"))
        .and_then(|l| l.split_whitespace().find_map(|f| f.strip_prefix("loss=")))
        .unwrap()
        .parse()
        .unwrap();
    assert!(train_loss < 16f64.ln(), "{log}");

    // resuming with a larger budget continues the epoch counter
    fs::write(d.join("run.toml"), TINY.replace("obs_epochs = 1", "obs_epochs = 2")).unwrap();
    let o = tactloc(d, &["train", "obs", "--config", "run.toml", "--resume"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch=2 split=train"), "{}", stderr(&o));
    assert!(!stderr(&o).contains("epoch=1 split=train"));

    for which in ["naive", "motion"] {
        let o = tactloc(d, &["train", which, "--config", "run.toml"]);
        assert!(o.status.success(), "{which}: {}", stderr(&o));
    }
    let inspect = tactloc(d, &["inspect", "runs/full.ckpt"]);
    assert!(stdout(&inspect).contains("meta.epoch"), "{}", stdout(&inspect));

    let a = tactloc(d, &["eval", "--config", "run.toml", "--out", "eval_a"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let table = stdout(&a);
    let header = table.lines().next().unwrap();
    for col in ["uniform", "naive", "full"] {
        assert!(header.contains(col), "{table}");
    }
    assert!(table.contains("Primitive") && table.contains("Composite"), "{table}");
    let b = tactloc(d, &["eval", "--config", "run.toml", "--out", "eval_b"]);
    assert!(b.status.success());
    assert_eq!(
        fs::read(d.join("eval_a/eval_report.txt")).unwrap(),
        fs::read(d.join("eval_b/eval_report.txt")).unwrap()
    );
}

#[test]
fn run_writes_heatmaps_and_trace() {
    let dir = setup(TINY);
    let d = dir.path();
    fs::write(
        d.join("scene.txt"),
        "grid 16 16\nseed 0\nmotion_noise 0\nsensor_noise 0\nfamily primitive\nbox 8 7 1 1 0.8\n",
    )
    .unwrap();
    let o = tactloc(
        d,
        &["run", "scene.txt", "--config", "run.toml", "--start", "0,7", "--model", "oracle", "--out", "frames"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let frame0 = fs::read(d.join("frames/frame_000.pgm")).unwrap();
    let header = b"P5\n16 16\n255\n";
    assert_eq!(&frame0[..header.len()], header);
    let px = &frame0[header.len()..];
    // uniform prior renders flat gray apart from the true-state marker
    assert_eq!(px.iter().filter(|&&p| p == 255).count(), 1);
    assert_eq!(px[7 * 16], 255);
    assert!(px.iter().filter(|&&p| p != 255).all(|&p| p == 200));
    // 15 moves east: the prior plus 16 filtered beliefs
    assert!(d.join("frames/frame_016.pgm").exists());
    assert!(!d.join("frames/frame_017.pgm").exists());
    let trace = fs::read_to_string(d.join("frames/trace.txt")).unwrap();
    assert_eq!(trace.lines().count(), 2 + 16);
    assert!(stdout(&o).contains("final error 0"), "{}", stdout(&o));

    let o = tactloc(d, &["run", "scene.txt", "--config", "run.toml", "--start", "16,2", "--model", "oracle"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("outside"));
}
