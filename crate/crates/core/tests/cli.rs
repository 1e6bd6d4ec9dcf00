use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use comprint::GrayImage;

fn comprint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comprint"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = comprint(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data(name: &str) -> String {
    format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn make_fixtures(out: &Path, count: usize, size: usize, seed: u64) {
    ok(&[
        "make-fixtures",
        "--out",
        s(out),
        "--count",
        &count.to_string(),
        "--size",
        &size.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
}

fn summary_value(report: &str, key: &str) -> String {
    let prefix = format!("{key} = ");
    report
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in report"))
        .to_string()
}

#[test]
fn inspect_reports_the_standard_quality() {
    let text = ok(&["inspect", &data("q50_gray.jpg")]);
    assert!(text.contains("nearest QF 50, L1 distance 0"), "{text}");

    let color = ok(&["inspect", &data("q75_color.jpg")]);
    assert!(color.matches("nearest QF").count() >= 2, "{color}");
}

#[test]
fn inspect_rejects_non_jpeg_input() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("flat.png");
    GrayImage::filled(16, 16, 128.0).save_png(&png).unwrap();
    let out = comprint(&["inspect", s(&png)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flat.png"));
}

#[test]
fn usage_errors_and_missing_inputs() {
    assert_eq!(comprint(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(comprint(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = comprint(&[
        "pretrain",
        "--corpus",
        s(&missing),
        "--out",
        s(&dir.path().join("o")),
        "--preset",
        "desk",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn fixtures_are_deterministic_with_rectangular_masks() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    make_fixtures(&a, 3, 64, 11);
    make_fixtures(&b, 3, 64, 11);
    for sub in ["fake", "masks", "real"] {
        let mut names: Vec<PathBuf> = fs::read_dir(a.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        assert_eq!(names.len(), 3);
        for n in names {
            let other = b.join(sub).join(n.file_name().unwrap());
            assert_eq!(fs::read(&n).unwrap(), fs::read(other).unwrap(), "{}", n.display());
        }
    }

    let index = fs::read_to_string(a.join("fixtures.tsv")).unwrap();
    for line in index.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let [x, y, w, h]: [usize; 4] = [3, 4, 5, 6].map(|i| f[i].parse().unwrap());
        let mask = GrayImage::load(a.join("masks").join(format!("{}_mask.png", f[0]))).unwrap();
        for row in 0..mask.height() {
            for col in 0..mask.width() {
                let inside = (x..x + w).contains(&col) && (y..y + h).contains(&row);
                let want = if inside { 255.0 } else { 0.0 };
                assert_eq!(mask.get(col, row), want, "{} at ({col}, {row})", f[0]);
            }
        }
    }
}

#[test]
fn analyze_fuses_providers_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    make_fixtures(&dir.path().join("fx"), 1, 64, 3);
    let image = dir.path().join("fx/fake/fixture_000.png");
    let run = |out: &str| {
        let out = dir.path().join(out);
        let stdout = ok(&[
            "analyze",
            "--image",
            s(&image),
            "--out",
            s(&out),
            "--provider",
            "highpass",
            "--provider",
            "highpass",
            "--preset",
            "desk",
        ]);
        (out, stdout)
    };
    let (first, stdout) = run("one");
    let (second, _) = run("two");
    assert!(stdout.contains("highpass + highpass"), "{stdout}");
    for f in ["heatmap.pfm", "fingerprint0_highpass.pfm", "fingerprint1_highpass.pfm"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let heat = GrayImage::read_pfm(first.join("heatmap.pfm")).unwrap();
    assert_eq!((heat.width(), heat.height()), (64, 64));
    assert!(heat.samples().iter().all(|v| (0.0..=1.0).contains(v)));

    let summary = fs::read_to_string(first.join("summary.toml")).unwrap();
    let score: f64 = summary_value(&summary, "score").parse().unwrap();
    assert!((0.0..=1.0).contains(&score));
    let config = fs::read_to_string(first.join("config.toml")).unwrap();
    assert!(config.contains("[localization"), "{config}");
}

#[test]
fn analyze_needs_a_model_per_comprint_provider() {
    let dir = tempfile::tempdir().unwrap();
    make_fixtures(&dir.path().join("fx"), 1, 64, 3);
    let out = comprint(&[
        "analyze",
        "--image",
        s(&dir.path().join("fx/fake/fixture_000.png")),
        "--out",
        s(&dir.path().join("o")),
        "--provider",
        "comprint",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_counts_every_image_once() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    make_fixtures(&fx, 4, 64, 5);
    fs::remove_file(fx.join("masks/fixture_002_mask.png")).unwrap();
    let out = dir.path().join("eval");
    let table = ok(&[
        "evaluate",
        "--fake",
        s(&fx.join("fake")),
        "--masks",
        s(&fx.join("masks")),
        "--real",
        s(&fx.join("real")),
        "--out",
        s(&out),
        "--provider",
        "highpass",
        "--preset",
        "desk",
        "--workers",
        "2",
    ]);
    assert!(table.contains("skipped"), "{table}");
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    let n = |k: &str| summary_value(&report, k).parse::<usize>().unwrap();
    assert_eq!(n("total"), 8);
    assert_eq!(n("skipped"), 1);
    assert_eq!(n("succeeded") + n("skipped") + n("failed"), n("total"));
    let auc: f64 = summary_value(&report, "auc").parse().unwrap();
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn training_round_trip_on_a_tiny_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    make_fixtures(&fx, 5, 64, 9);
    let corpus = fx.join("real");
    let schedule = [
        "--preset",
        "desk",
        "--epochs",
        "1",
        "--batches-per-epoch",
        "2",
        "--batch-size",
        "2",
        "--seed",
        "4",
    ];
    let pretrain = |out: &Path| {
        let mut args = vec!["pretrain", "--corpus", s(&corpus), "--out", s(out), "--depth", "2", "--channels", "4"];
        args.extend(schedule);
        ok(&args);
    };
    let (p1, p2) = (dir.path().join("p1"), dir.path().join("p2"));
    pretrain(&p1);
    pretrain(&p2);
    let loss = fs::read_to_string(p1.join("loss.csv")).unwrap();
    assert_eq!(loss, fs::read_to_string(p2.join("loss.csv")).unwrap());
    assert_eq!(loss.lines().next(), Some("epoch,batch,loss"));
    assert_eq!(loss.lines().count(), 3);
    assert!(p1.join("config.toml").exists());

    let trained = dir.path().join("t");
    let pretrained = p1.join("model.cprt");
    let mut args = vec!["train", "--pretrained", s(&pretrained), "--corpus", s(&corpus), "--out", s(&trained)];
    args.extend(schedule);
    ok(&args);
    for f in ["model.cprt", "loss.csv", "epochs.csv", "config.toml"] {
        assert!(trained.join(f).exists(), "{f}");
    }

    let model = trained.join("model.cprt");
    let stdout = ok(&[
        "analyze",
        "--image",
        s(&fx.join("fake/fixture_000.png")),
        "--out",
        s(&dir.path().join("a")),
        "--model",
        s(&model),
        "--preset",
        "desk",
    ]);
    assert!(stdout.contains("detection score"), "{stdout}");
}
