//! End-to-end pipeline behaviour that spans several commands: detection on
//! partially defective data, evaluation baselines, and the
//! segment-then-evaluate composition.

use std::path::{Path, PathBuf};

use mpcnn::commands::{
    run_bench, run_detect, run_eval, run_segment, run_train, BenchArgs, DetectArgs, EvalArgs,
    SegmentArgs, ThresholdArg, TrainArgs,
};
use mpcnn::image_io::{load_label_image, save_labels_png8, save_map_png16};
use mpcnn::manifest::{write_manifest, ManifestEntry};
use mpcnn::model_io::save_model;
use mpcnn::Precision;
use mpcnn_core::arch::{ArchSpec, LayerSpec};
use mpcnn_core::conv::Activation;
use mpcnn_core::data::{synth_texture_dataset, Split};
use mpcnn_core::loss::LabelImage;
use mpcnn_core::map::Map;
use mpcnn_core::network::Model;
use mpcnn_core::optim::{ClassWeightSpec, OptimizerKind};
use mpcnn_core::rng::SplitMix64;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// Write a detection-style dataset: roughly 30% of images carry a defect
/// rectangle, the rest are pure background texture with all-zero labels.
fn write_detection_dataset(dir: &Path, n_images: usize, size: usize, seed: u64) -> PathBuf {
    let with_defects = synth_texture_dataset(n_images, size, size, seed).unwrap();
    let mut rng = SplitMix64::new(seed ^ 0xdef);
    let mut entries = Vec::new();
    for (i, item) in with_defects.items.iter().enumerate() {
        // Keep the defect in ~30% of images; replace the rest with pure
        // background (vertical stripes, labels all zero).
        let (image, labels) = if i % 10 < 3 {
            (item.image.clone(), item.labels.clone())
        } else {
            let phase = rng.next_below(4);
            let image = Map::from_fn(size, size, |_, c| {
                let base = if ((c + phase) / 2) % 2 == 0 { 0.7 } else { 0.3 };
                (base + rng.uniform(-0.04, 0.04)).clamp(0.0, 1.0)
            });
            (
                image,
                LabelImage::new(size, size, vec![0; size * size], 2).unwrap(),
            )
        };
        let image_path = dir.join(format!("det_{i:03}.png"));
        let label_path = dir.join(format!("det_{i:03}_labels.png"));
        save_map_png16(&image_path, &image).unwrap();
        save_labels_png8(&label_path, &labels).unwrap();
        entries.push(ManifestEntry {
            id: format!("det_{i:03}"),
            image_path,
            label_path: Some(label_path),
            split: item.split,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries).unwrap();
    manifest
}

#[test]
fn detect_auto_threshold_on_partially_defective_data() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_detection_dataset(dir.path(), 20, 48, 31);

    let model_path = dir.path().join("m.mpcnn");
    run_train(&TrainArgs {
        config: config_path("window16.cfg"),
        manifest: manifest.clone(),
        model_out: model_path.clone(),
        epochs: 10,
        optimizer: OptimizerKind::SgdArmijo,
        seed: 3,
        class_weights: ClassWeightSpec::Auto,
        log: None,
        augment: false,
        precision: Precision::Double,
    })
    .unwrap();

    let out = dir.path().join("detect.csv");
    run_detect(&DetectArgs {
        model: model_path,
        manifest,
        defect_class: 1,
        threshold: ThresholdArg::Auto,
        sweep: None,
        out: out.clone(),
        precision: Precision::Double,
    })
    .unwrap();

    let text = std::fs::read_to_string(&out).unwrap();
    let test_error: f64 = text
        .lines()
        .find(|l| l.starts_with("# testErrorPercent="))
        .expect("summary line present")
        .trim_start_matches("# testErrorPercent=")
        .parse()
        .unwrap();
    assert!(
        test_error <= 5.0,
        "auto-threshold test detection error {test_error}%"
    );
}

#[test]
fn untrained_model_evaluates_near_chance() {
    // An untrained (randomly initialized) model's predictions carry no label
    // information; balanced error over 5K+5K sampled pixels sits at 50+-2%.
    let dir = tempfile::tempdir().unwrap();
    let dataset = synth_texture_dataset(30, 64, 64, 911).unwrap();
    let mut entries = Vec::new();
    for item in &dataset.items {
        let image_path = dir.path().join(format!("{}.png", item.id));
        let label_path = dir.path().join(format!("{}_labels.png", item.id));
        save_map_png16(&image_path, &item.image).unwrap();
        save_labels_png8(&label_path, &item.labels).unwrap();
        entries.push(ManifestEntry {
            id: item.id.clone(),
            image_path,
            label_path: Some(label_path),
            split: item.split,
        });
    }
    let manifest = dir.path().join("manifest.csv");
    write_manifest(&manifest, &entries).unwrap();

    let arch = mpcnn::arch_config::parse_arch(
        &std::fs::read_to_string(config_path("window16.cfg")).unwrap(),
    )
    .unwrap();
    let model_path = dir.path().join("m.mpcnn");
    save_model(&model_path, &Model::<f64>::init(arch, 9302).unwrap()).unwrap();

    let report = run_eval(&EvalArgs {
        model: model_path,
        manifest,
        n_pos: 5000,
        n_neg: 5000,
        positive_class: 1,
        seed: 4,
        out: dir.path().join("eval.csv"),
        precision: Precision::Double,
    })
    .unwrap();
    assert!(
        (report.balanced_error - 0.5).abs() <= 0.02,
        "untrained model scored {:.4}, expected 0.50 +- 0.02",
        report.balanced_error
    );
}

#[test]
fn segment_then_eval_composes() {
    // Evaluating the argmax images cmd_segment wrote must give the same
    // confusion counts as the in-memory evaluation.
    let dir = tempfile::tempdir().unwrap();
    let dataset = synth_texture_dataset(12, 40, 40, 55).unwrap();
    let mut entries = Vec::new();
    for item in &dataset.items {
        let image_path = dir.path().join(format!("{}.png", item.id));
        let label_path = dir.path().join(format!("{}_labels.png", item.id));
        save_map_png16(&image_path, &item.image).unwrap();
        save_labels_png8(&label_path, &item.labels).unwrap();
        entries.push(ManifestEntry {
            id: item.id.clone(),
            image_path,
            label_path: Some(label_path),
            split: item.split,
        });
    }
    let manifest = dir.path().join("manifest.csv");
    write_manifest(&manifest, &entries).unwrap();

    let model_path = dir.path().join("m.mpcnn");
    run_train(&TrainArgs {
        config: config_path("window16.cfg"),
        manifest: manifest.clone(),
        model_out: model_path.clone(),
        epochs: 3,
        optimizer: OptimizerKind::SgdArmijo,
        seed: 21,
        class_weights: ClassWeightSpec::Auto,
        log: None,
        augment: false,
        precision: Precision::Double,
    })
    .unwrap();

    let report = run_eval(&EvalArgs {
        model: model_path.clone(),
        manifest,
        n_pos: 100,
        n_neg: 100,
        positive_class: 1,
        seed: 1,
        out: dir.path().join("eval.csv"),
        precision: Precision::Double,
    })
    .unwrap();

    // Recompute the confusion matrix from saved argmax images.
    let mut confusion = vec![vec![0usize; 2]; 2];
    for (item, entry) in dataset.items.iter().zip(&entries) {
        if item.split != Split::Test {
            continue;
        }
        let prefix = dir.path().join(format!("seg_{}", item.id));
        run_segment(&SegmentArgs {
            model: model_path.clone(),
            image: entry.image_path.clone(),
            out_prefix: prefix.clone(),
            precision: Precision::Double,
        })
        .unwrap();
        let pred =
            load_label_image(&PathBuf::from(format!("{}_argmax.png", prefix.display())))
                .unwrap();
        for (t, p) in item.labels.labels().iter().zip(pred.labels()) {
            confusion[*t as usize][*p as usize] += 1;
        }
    }
    assert_eq!(confusion, report.confusion);
}

#[test]
fn eval_scores_zero_on_labels_the_model_predicts() {
    // A model evaluated against its own predictions is by definition
    // perfect; the balanced sampled error must be exactly zero.
    let dir = tempfile::tempdir().unwrap();
    let arch = mpcnn::arch_config::parse_arch(
        &std::fs::read_to_string(config_path("window16.cfg")).unwrap(),
    )
    .unwrap();
    let model = Model::<f64>::init(arch, 77).unwrap();
    let model_path = dir.path().join("m.mpcnn");
    save_model(&model_path, &model).unwrap();

    let source = synth_texture_dataset(6, 40, 40, 13).unwrap();
    let mut entries = Vec::new();
    let mut rng = SplitMix64::new(2);
    for (i, item) in source.items.iter().enumerate() {
        let plan = mpcnn_core::plan_geometry(&model.arch, 40, 40).unwrap();
        let (probs, _) = mpcnn_core::forward_dense(&item.image, &model, &plan).unwrap();
        let predicted = mpcnn_core::loss::argmax_labels(&probs).unwrap();
        let _ = rng.next_u64();
        let image_path = dir.path().join(format!("p{i}.png"));
        let label_path = dir.path().join(format!("p{i}_labels.png"));
        save_map_png16(&image_path, &item.image).unwrap();
        save_labels_png8(&label_path, &predicted).unwrap();
        entries.push(ManifestEntry {
            id: format!("p{i}"),
            image_path,
            label_path: Some(label_path),
            split: Split::Test,
        });
    }
    let manifest = dir.path().join("manifest.csv");
    write_manifest(&manifest, &entries).unwrap();

    let report = run_eval(&EvalArgs {
        model: model_path,
        manifest,
        n_pos: 40,
        n_neg: 40,
        positive_class: 1,
        seed: 6,
        out: dir.path().join("eval.csv"),
        precision: Precision::Double,
    })
    .unwrap();
    assert_eq!(report.balanced_error, 0.0);
}

#[test]
fn any_conv_architecture_beats_patch_mode() {
    // Even a minimal window-8 network on a 2x-window image shows a speedup:
    // patch mode redoes shared work by construction.
    let dir = tempfile::tempdir().unwrap();
    let arch = ArchSpec {
        window_rows: 8,
        window_cols: 8,
        layers: vec![
            LayerSpec::Conv {
                k_rows: 3,
                k_cols: 3,
                n_out: 2,
                activation: Activation::Tanh,
            },
            LayerSpec::Mpf { k: 2 },
            LayerSpec::Conv {
                k_rows: 3,
                k_cols: 3,
                n_out: 2,
                activation: Activation::Tanh,
            },
            LayerSpec::FcHead {
                hidden: vec![],
                classes: 2,
                hidden_activation: Activation::Tanh,
            },
        ],
    };
    let model_path = dir.path().join("m.mpcnn");
    save_model(&model_path, &Model::<f64>::init(arch, 2).unwrap()).unwrap();
    let report = run_bench(&BenchArgs {
        model: model_path,
        size: 16,
        repeats: 3,
        seed: 0,
        precision: Precision::Double,
        out: Some(dir.path().join("bench.csv")),
    })
    .unwrap();
    assert!(
        report.speedup_factor > 1.0,
        "speedup {} not above 1",
        report.speedup_factor
    );
    assert!(dir.path().join("bench.csv").exists());
}

#[test]
fn bench_runs_in_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    let arch = mpcnn::arch_config::parse_arch(
        &std::fs::read_to_string(config_path("window16.cfg")).unwrap(),
    )
    .unwrap();
    let model_path = dir.path().join("m.mpcnn");
    save_model(&model_path, &Model::<f64>::init(arch, 8).unwrap()).unwrap();
    let report = run_bench(&BenchArgs {
        model: model_path,
        size: 32,
        repeats: 1,
        seed: 1,
        precision: Precision::Single,
        out: None,
    })
    .unwrap();
    assert_eq!(report.precision, "single");
    assert!(report.speedup_factor > 1.0);
}
