use std::fs;
use std::path::{Path, PathBuf};

use fisens::classifier::{Activation, ClassifierModel, ImageShape, LabeledDataset};
use fisens_cli::run;

/// 60 tiny 6×6 images in three classes: a bright row, column or diagonal.
fn write_toy_idx(dir: &Path) -> (PathBuf, PathBuf) {
    let shape = ImageShape::grayscale(6, 6);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..60 {
        let class = i % 3;
        let k = (i / 3) % 6;
        let mut img = vec![0.0; 36];
        for j in 0..6 {
            let q = match class {
                0 => k * 6 + j,
                1 => j * 6 + k,
                _ => j * 6 + (j + k) % 6,
            };
            img[q] = 1.0;
        }
        img[(i * 7) % 36] = ((i * 37) % 256) as f64 / 255.0;
        images.push(img);
        labels.push(class);
    }
    let data = LabeledDataset::new(images, labels, shape).unwrap();
    let (img, lab) = (dir.join("toy-images.gz"), dir.join("toy-labels.gz"));
    fisens::io::write_idx(&data, &img, &lab).unwrap();
    (img, lab)
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn fisens(args: &[&str]) -> i32 {
    run(std::iter::once("fisens").chain(args.iter().copied()))
}

fn train_toy(dir: &Path, img: &Path, lab: &Path, epochs: &str) -> PathBuf {
    let out = dir.join("model");
    let code = fisens(&[
        "train", "--images", &s(img), "--labels", &s(lab), "--arch", "36,8,3", "--epochs", epochs,
        "--batch-size", "8", "--learning-rate", "1.0", "--seed", "5", "--out-dir", &s(&out),
    ]);
    assert_eq!(code, 0);
    out.join("model.json")
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fisens(&["no-such-command"]), 2);
    assert_eq!(fisens(&["train", "--no-such-flag"]), 2);
    assert_eq!(fisens(&["fi-sample", "--target", "input"]), 2);
    assert_eq!(fisens(&["fi-sample", "--model", "m.json", "--target", "nowhere"]), 2);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_toy_idx(dir.path());
    let out = s(&dir.path().join("out"));
    let missing = s(&dir.path().join("missing.json"));
    assert_eq!(fisens(&["fi-sample", "--model", &missing, "--images", &s(&img), "--labels", &s(&lab), "--out-dir", &out]), 1);
    // architecture does not match the 36-pixel images
    assert_eq!(fisens(&["train", "--images", &s(&img), "--labels", &s(&lab), "--arch", "10,3", "--out-dir", &out]), 1);
    let model = train_toy(dir.path(), &img, &lab, "1");
    let base = ["--model", &s(&model), "--images", &s(&img), "--labels", &s(&lab), "--out-dir", &out];
    assert_eq!(fisens(&[&["fi-pixels"][..], &base[..], &["--scales", "2"]].concat()), 1);
    assert_eq!(fisens(&[&["fi-sample"][..], &base[..], &["--ids", "999"]].concat()), 1);
    assert_eq!(fisens(&[&["fi-sample"][..], &base[..], &["--target", "layer:7"]].concat()), 1);
}

#[test]
fn zero_epoch_training_saves_the_initialized_model() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_toy_idx(dir.path());
    let model = fisens::io::load_model(train_toy(dir.path(), &img, &lab, "0")).unwrap();
    let expected = ClassifierModel::random(&[36, 8, 3], Activation::Sigmoid, 5).unwrap();
    assert_eq!(model, expected);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("model/summary-train.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["train"]["epochs"], 0);
    assert_eq!(summary["seeds"]["init_and_shuffle"], 5);
    assert!(summary["timings"]["total_seconds"].is_number());
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_toy_idx(dir.path());
    let model = s(&train_toy(dir.path(), &img, &lab, "30"));
    let (img_s, lab_s) = (s(&img), s(&lab));
    let data = ["--images", &img_s, "--labels", &lab_s];
    let out = |name: &str| s(&dir.path().join(name));

    let sample_dir = out("sample");
    let args = [&["fi-sample", "--model", &model, "--target", "input", "--objective", "true-label"][..], &data[..], &["--out-dir", &sample_dir]].concat();
    assert_eq!(fisens(&args), 0);
    let records = fisens::io::read_records(dir.path().join("sample/records.csv")).unwrap();
    assert_eq!(records.len(), 60);
    assert!(records.iter().all(|r| r.fi.unwrap() >= 0.0 && r.jacobian_norm.unwrap() >= 0.0 && r.cook_max.is_none()));

    let layers_dir = out("layers");
    assert_eq!(fisens(&[&["fi-layers", "--model", &model][..], &data[..], &["--limit", "10", "--out-dir", &layers_dir]].concat()), 0);
    let layers = fisens::io::read_records(dir.path().join("layers/layers.csv")).unwrap();
    assert_eq!(layers.len(), 10 * 3);
    for chunk in layers.chunks(3) {
        assert_eq!(chunk[2].target, "all-params");
        assert!(chunk[0].fi.unwrap() <= chunk[2].fi.unwrap() + 1e-8);
        assert!(chunk[1].fi.unwrap() <= chunk[2].fi.unwrap() + 1e-8);
    }

    let dataset_dir = out("dataset");
    let args = [
        &["fi-dataset", "--model", &model][..],
        &data[..],
        &["--test-images", &img_s, "--test-labels", &lab_s, "--test-limit", "20", "--out-dir", &dataset_dir],
    ]
    .concat();
    assert_eq!(fisens(&args), 0);
    let pct = fs::read_to_string(dir.path().join("dataset/percentiles-test.csv")).unwrap();
    assert_eq!(pct.lines().count(), 1 + 8);

    let pixels_dir = out("pixels");
    assert_eq!(fisens(&[&["fi-pixels", "--model", &model][..], &data[..], &["--ids", "4", "--scales", "1,3,5,7", "--out-dir", &pixels_dir]].concat()), 0);
    for k in [1, 3, 5, 7] {
        let text = fs::read_to_string(dir.path().join(format!("pixels/pixel-map-4-k{k}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 1 + 36);
    }

    let sim_dir = out("sim");
    assert_eq!(fisens(&[&["outliers", "simulate"][..], &data[..], &["--count", "6", "--seed", "3", "--out-dir", &sim_dir]].concat()), 0);
    let mixed_img = out("sim/mixed-images-idx3-ubyte.gz");
    let mixed_lab = out("sim/mixed-labels-idx1-ubyte.gz");
    let mixed = fisens::io::read_idx(&mixed_img, &mixed_lab).unwrap();
    assert_eq!(mixed.len(), 66);
    let scan_dir = out("scan");
    let args = ["outliers", "scan", "--model", &model, "--images", &mixed_img, "--labels", &mixed_lab, "--measures", "fi,jacobian,cook", "--out-dir", &scan_dir];
    assert_eq!(fisens(&args), 0);
    let eval_dir = out("eval");
    let records_path = out("scan/records.csv");
    assert_eq!(fisens(&["outliers", "eval", "--records", &records_path, "--outliers-from", "60", "--out-dir", &eval_dir]), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("eval/summary-outliers-eval.json")).unwrap()).unwrap();
    for m in ["fi", "jacobian_norm", "cook_max"] {
        let auc = summary["results"]["areas"][m]["roc_auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert!(dir.path().join(format!("eval/pr-{m}.csv")).exists());
    }

    let attack_dir = out("attack");
    assert_eq!(fisens(&[&["attack", "one-pixel", "--model", &model][..], &data[..], &["--ids", "0,1,2", "--random-trials", "5", "--out-dir", &attack_dir]].concat()), 0);
    let text = fs::read_to_string(dir.path().join("attack/attacks.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 6);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_toy_idx(dir.path());
    let model = s(&train_toy(dir.path(), &img, &lab, "5"));
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out = s(&dir.path().join(format!("w{workers}")));
        let base = ["--model", &model, "--images", &s(&img), "--labels", &s(&lab), "--workers", workers, "--out-dir", &out];
        assert_eq!(fisens(&[&["fi-sample", "--measures", "fi,jacobian,cook", "--target", "layer:1"][..], &base[..]].concat()), 0);
        assert_eq!(fisens(&[&["attack", "one-pixel", "--limit", "6"][..], &base[..]].concat()), 0);
        assert_eq!(fisens(&[&["fi-layers", "--limit", "6"][..], &base[..]].concat()), 0);
        let read = |f: &str| fs::read(dir.path().join(format!("w{workers}/{f}"))).unwrap();
        outputs.push((read("records.csv"), read("attacks.csv"), read("layers.csv")));
    }
    assert!(outputs[0] == outputs[1]);
}
