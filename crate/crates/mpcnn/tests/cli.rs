//! Command-level tests driving the `run_*` implementations and, where exit
//! codes matter, the compiled binary itself.

use std::path::{Path, PathBuf};
use std::process::Command;

use mpcnn::commands::{
    run_detect, run_eval, run_segment, run_synth, run_train, DetectArgs, EvalArgs, SegmentArgs,
    SynthArgs, ThresholdArg, TrainArgs,
};
use mpcnn::image_io::{load_image, load_label_image, save_map_png16};
use mpcnn::model_io::{load_model, save_model};
use mpcnn::Precision;
use mpcnn_core::map::Map;
use mpcnn_core::network::Model;
use mpcnn_core::optim::{ClassWeightSpec, OptimizerKind};
use mpcnn_core::rng::SplitMix64;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpcnn"))
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// Small synthetic dataset on disk plus a quickly trained model.
fn prepared_workspace(dir: &Path, images: usize, size: usize, epochs: usize) -> PathBuf {
    run_synth(&SynthArgs {
        out_dir: dir.to_path_buf(),
        images,
        rows: size,
        cols: size,
        seed: 7,
    })
    .unwrap();
    let model_path = dir.join("model.mpcnn");
    run_train(&TrainArgs {
        config: config_path("window16.cfg"),
        manifest: dir.join("manifest.csv"),
        model_out: model_path.clone(),
        epochs,
        optimizer: OptimizerKind::SgdArmijo,
        seed: 7,
        class_weights: ClassWeightSpec::Auto,
        log: None,
        augment: false,
        precision: Precision::Double,
    })
    .unwrap();
    model_path
}

#[test]
fn train_writes_model_and_log_with_epoch_rows() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = prepared_workspace(dir.path(), 6, 40, 2);
    assert!(model_path.exists());
    let log = std::fs::read_to_string(dir.path().join("model.log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,meanLoss,valPixelError,acceptedAlphaMean,skippedSteps"
    );
    assert!(lines.count() >= 1);
    // The model loads back and carries the configured architecture.
    let model = load_model(&model_path).unwrap();
    assert_eq!(model.arch.window_rows, 16);
}

#[test]
fn train_rejects_zero_epochs_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    run_synth(&SynthArgs {
        out_dir: dir.path().to_path_buf(),
        images: 4,
        rows: 40,
        cols: 40,
        seed: 1,
    })
    .unwrap();
    let status = bin()
        .args([
            "train",
            "--config",
            config_path("window16.cfg").to_str().unwrap(),
            "--manifest",
            dir.path().join("manifest.csv").to_str().unwrap(),
            "--model",
            dir.path().join("m.mpcnn").to_str().unwrap(),
            "--epochs",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "{status:?}");
}

#[test]
fn train_rejects_single_precision_with_exit_code_2() {
    let status = bin()
        .args([
            "train",
            "--config",
            config_path("window16.cfg").to_str().unwrap(),
            "--manifest",
            "nonexistent.csv",
            "--model",
            "out.mpcnn",
            "--precision",
            "single",
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn missing_required_flag_is_exit_code_2() {
    let status = bin().args(["segment", "--image", "x.png", "--out", "y"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn unreadable_image_is_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.mpcnn");
    let arch = mpcnn::arch_config::parse_arch(
        &std::fs::read_to_string(config_path("window16.cfg")).unwrap(),
    )
    .unwrap();
    save_model(&model_path, &Model::<f64>::init(arch, 0).unwrap()).unwrap();
    let status = bin()
        .args([
            "segment",
            "--model",
            model_path.to_str().unwrap(),
            "--image",
            dir.path().join("missing.png").to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));
}

#[test]
fn segment_outputs_match_input_dimensions_and_quantized_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let arch = mpcnn::arch_config::parse_arch(
        &std::fs::read_to_string(config_path("window16.cfg")).unwrap(),
    )
    .unwrap();
    let model = Model::<f64>::init(arch, 5).unwrap();
    let model_path = dir.path().join("m.mpcnn");
    save_model(&model_path, &model).unwrap();

    let mut rng = SplitMix64::new(3);
    let image = Map::from_fn(24, 31, |_, _| rng.next_f64());
    let image_path = dir.path().join("img.png");
    save_map_png16(&image_path, &image).unwrap();

    run_segment(&SegmentArgs {
        model: model_path,
        image: image_path.clone(),
        out_prefix: dir.path().join("seg"),
        precision: Precision::Double,
    })
    .unwrap();

    // Dimensions preserved.
    let prob0 = load_image(&dir.path().join("seg_prob_c0.png")).unwrap();
    assert_eq!((prob0.rows(), prob0.cols()), (24, 31));
    let argmax = load_label_image(&dir.path().join("seg_argmax.png")).unwrap();
    assert_eq!((argmax.rows(), argmax.cols()), (24, 31));

    // Bit-for-bit match with the quantized patch oracle.
    let loaded = load_image(&image_path).unwrap();
    let oracle = mpcnn_core::oracle::dense_via_patches(&loaded, &model).unwrap();
    for ch in 0..2 {
        let written = load_image(&dir.path().join(format!("seg_prob_c{ch}.png"))).unwrap();
        for (w, o) in written.values().iter().zip(oracle[ch].values()) {
            let q = (o.clamp(0.0, 1.0) * 65535.0).round() / 65535.0;
            assert_eq!(w.to_bits(), q.to_bits());
        }
    }
}

#[test]
fn segment_with_zero_weight_model_is_all_class_zero() {
    let dir = tempfile::tempdir().unwrap();
    let arch = mpcnn::arch_config::parse_arch(
        &std::fs::read_to_string(config_path("window16.cfg")).unwrap(),
    )
    .unwrap();
    let model_path = dir.path().join("m.mpcnn");
    save_model(&model_path, &Model::<f64>::zeros(arch).unwrap()).unwrap();
    let image_path = dir.path().join("img.png");
    save_map_png16(&image_path, &Map::from_fn(20, 20, |r, c| ((r + c) % 7) as f64 / 7.0)).unwrap();

    run_segment(&SegmentArgs {
        model: model_path,
        image: image_path,
        out_prefix: dir.path().join("z"),
        precision: Precision::Double,
    })
    .unwrap();
    let argmax = load_label_image(&dir.path().join("z_argmax.png")).unwrap();
    assert!(argmax.labels().iter().all(|&l| l == 0));
}

#[test]
fn detect_threshold_edges() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = prepared_workspace(dir.path(), 8, 40, 4);

    // Threshold 0: every image with at least one predicted defect pixel is
    // flagged. A huge threshold flags nothing.
    for (threshold, expect_any_flag) in [(0usize, true), (10_000_000usize, false)] {
        let out = dir.path().join(format!("det_{threshold}.csv"));
        run_detect(&DetectArgs {
            model: model_path.clone(),
            manifest: dir.path().join("manifest.csv"),
            defect_class: 1,
            threshold: ThresholdArg::Fixed(threshold),
            sweep: None,
            out: out.clone(),
            precision: Precision::Double,
        })
        .unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let flagged: Vec<bool> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("id,"))
            .map(|l| l.split(',').nth(3).unwrap() == "true")
            .collect();
        if expect_any_flag {
            // Every image here has defect pixels predicted by a trained model.
            assert!(flagged.iter().any(|&f| f), "nothing flagged at threshold 0");
        } else {
            assert!(flagged.iter().all(|&f| !f), "flagged above image area");
        }
    }
}

#[test]
fn detect_auto_without_validation_split_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = prepared_workspace(dir.path(), 6, 40, 1);
    // Rewrite the manifest with every item marked test.
    let manifest = dir.path().join("manifest.csv");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let rewritten: String = text
        .lines()
        .map(|l| {
            if l.starts_with("id,") {
                l.to_string()
            } else {
                let mut parts: Vec<&str> = l.split(',').collect();
                parts[3] = "test";
                parts.join(",")
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&manifest, rewritten + "\n").unwrap();

    let err = run_detect(&DetectArgs {
        model: model_path,
        manifest,
        defect_class: 1,
        threshold: ThresholdArg::Auto,
        sweep: None,
        out: dir.path().join("d.csv"),
        precision: Precision::Double,
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn eval_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = prepared_workspace(dir.path(), 10, 48, 6);

    let run_once = |seed: u64, out: &Path| {
        run_eval(&EvalArgs {
            model: model_path.clone(),
            manifest: dir.path().join("manifest.csv"),
            n_pos: 300,
            n_neg: 300,
            positive_class: 1,
            seed,
            out: out.to_path_buf(),
            precision: Precision::Double,
        })
        .unwrap()
    };
    let a = run_once(11, &dir.path().join("a.csv"));
    let b = run_once(11, &dir.path().join("b.csv"));
    assert_eq!(a.balanced_error.to_bits(), b.balanced_error.to_bits());
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
    // A different seed must still run (it samples different pixels).
    run_once(12, &dir.path().join("c.csv"));
}

#[test]
fn eval_insufficient_pixels_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = prepared_workspace(dir.path(), 6, 40, 1);
    let err = run_eval(&EvalArgs {
        model: model_path,
        manifest: dir.path().join("manifest.csv"),
        n_pos: 10_000_000,
        n_neg: 10,
        positive_class: 1,
        seed: 0,
        out: dir.path().join("e.csv"),
        precision: Precision::Double,
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
