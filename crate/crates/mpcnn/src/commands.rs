//! Implementations behind the CLI verbs. Each `run_*` returns through
//! [`crate::error::AppError`], whose exit code the binary propagates.

use std::path::PathBuf;
use std::time::Instant;

use mpcnn_core::data::{dihedral_augment, synth_texture_dataset, DatasetItem, Split};
use mpcnn_core::geometry::plan_geometry;
use mpcnn_core::loss::argmax_labels;
use mpcnn_core::map::Map;
use mpcnn_core::network::{forward_dense, Model};
use mpcnn_core::optim::{train, ClassWeightSpec, OptimizerKind, TrainConfig};
use mpcnn_core::oracle::dense_via_patches;
use mpcnn_core::rng::SplitMix64;
use mpcnn_core::scalar::Scalar;
use mpcnn_core::LabelImage;

use crate::error::{core_config_err, core_data_err, AppError, Result};
use crate::image_io::{load_image, save_labels_png8, save_map_png16};
use crate::manifest::{load_dataset, write_manifest, ManifestEntry};
use crate::model_io::{load_model, save_model};
use crate::report::{
    bench_table, write_bench_report, write_detect_report, write_epoch_log, write_eval_report,
    BenchReport, DetectRow, EvalReport,
};
use crate::{arch_config, Precision};

/// Compact architecture label for reports, e.g.
/// `w32x32:C5x5x8-MPF2-C5x5x8-MPF2-C5x5x8-FC100-FC2`.
pub fn arch_id(arch: &mpcnn_core::ArchSpec) -> String {
    use mpcnn_core::LayerSpec;
    let mut parts = Vec::new();
    for layer in &arch.layers {
        match layer {
            LayerSpec::Conv {
                k_rows,
                k_cols,
                n_out,
                ..
            } => parts.push(format!("C{k_rows}x{k_cols}x{n_out}")),
            LayerSpec::Mpf { k } => parts.push(format!("MPF{k}")),
            LayerSpec::FcHead {
                hidden, classes, ..
            } => {
                for h in hidden {
                    parts.push(format!("FC{h}"));
                }
                parts.push(format!("FC{classes}"));
            }
        }
    }
    format!(
        "w{}x{}:{}",
        arch.window_rows,
        arch.window_cols,
        parts.join("-")
    )
}

fn require_double(precision: Precision, verb: &str) -> Result<()> {
    if precision != Precision::Double {
        return Err(AppError::config(format!(
            "--precision single is supported by 'bench' only; '{verb}' runs in double precision"
        )));
    }
    Ok(())
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub manifest: PathBuf,
    pub model_out: PathBuf,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub class_weights: ClassWeightSpec,
    pub log: Option<PathBuf>,
    pub augment: bool,
    pub precision: Precision,
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    require_double(args.precision, "train")?;
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| AppError::config(format!("{}: {e}", args.config.display())))?;
    let arch = arch_config::parse_arch(&text)?;

    let mut dataset = load_dataset(&args.manifest)?;
    if args.augment {
        let mut extra = Vec::new();
        for item in dataset.items_in(Split::Train) {
            for t in 1..8 {
                let (image, labels) =
                    dihedral_augment(&item.image, &item.labels, t).map_err(core_data_err)?;
                extra.push(DatasetItem {
                    id: format!("{}_d{t}", item.id),
                    image,
                    labels,
                    split: Split::Train,
                });
            }
        }
        dataset.items.extend(extra);
    }

    // Geometry problems with the provided images are data errors; surface
    // them before training starts.
    for item in &dataset.items {
        plan_geometry(&arch, item.image.rows(), item.image.cols()).map_err(|e| {
            AppError::data(format!("item '{}': {e}", item.id))
        })?;
    }

    let mut model = Model::<f64>::init(arch, args.seed).map_err(core_config_err)?;
    let cfg = TrainConfig {
        optimizer: args.optimizer,
        epochs: args.epochs,
        shuffle_seed: args.seed,
        class_weights: args.class_weights.clone(),
        ..TrainConfig::default()
    };
    let log = train(&dataset, &mut model, &cfg, None).map_err(core_config_err)?;

    save_model(&args.model_out, &model)?;
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.model_out.with_extension("log.csv"));
    write_epoch_log(&log_path, &log)?;

    for w in &log.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(last) = log.epochs.last() {
        println!(
            "trained {} epochs; final mean loss {:.6}, validation pixel error {}",
            log.epochs.len(),
            last.mean_loss,
            last.val_pixel_error
                .map(|v| format!("{:.2}%", 100.0 * v))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    println!("model written to {}", args.model_out.display());
    println!("epoch log written to {}", log_path.display());
    Ok(())
}

pub struct SegmentArgs {
    pub model: PathBuf,
    pub image: PathBuf,
    pub out_prefix: PathBuf,
    pub precision: Precision,
}

pub fn run_segment(args: &SegmentArgs) -> Result<()> {
    require_double(args.precision, "segment")?;
    let model = load_model(&args.model)?;
    let image = load_image(&args.image)?;
    let plan = plan_geometry(&model.arch, image.rows(), image.cols())
        .map_err(|e| AppError::data(format!("{}: {e}", args.image.display())))?;
    let (probs, _) = forward_dense(&image, &model, &plan).map_err(core_data_err)?;

    let prefix = args.out_prefix.to_string_lossy();
    for (ch, map) in probs.iter().enumerate() {
        let path = PathBuf::from(format!("{prefix}_prob_c{ch}.png"));
        save_map_png16(&path, map)?;
        println!("wrote {}", path.display());
    }
    let labels = argmax_labels(&probs).map_err(core_data_err)?;
    let argmax_path = PathBuf::from(format!("{prefix}_argmax.png"));
    save_labels_png8(&argmax_path, &labels)?;
    println!("wrote {}", argmax_path.display());
    Ok(())
}

/// Predicted label map for one dataset item.
fn predict_labels(model: &Model<f64>, image: &Map<f64>) -> Result<LabelImage> {
    let plan =
        plan_geometry(&model.arch, image.rows(), image.cols()).map_err(core_data_err)?;
    let (probs, _) = forward_dense(image, model, &plan).map_err(core_data_err)?;
    argmax_labels(&probs).map_err(core_data_err)
}

#[derive(Debug, Clone)]
pub enum ThresholdArg {
    Auto,
    Fixed(usize),
}

pub struct DetectArgs {
    pub model: PathBuf,
    pub manifest: PathBuf,
    pub defect_class: usize,
    pub threshold: ThresholdArg,
    /// Sweep range (min, max, step) for auto thresholding; default is steps
    /// of 1% of the largest image area.
    pub sweep: Option<(usize, usize, usize)>,
    pub out: PathBuf,
    pub precision: Precision,
}

struct DetectItem {
    split: Split,
    defect_pixels: usize,
    ground_truth: bool,
}

fn detection_error_pct(items: &[DetectItem], split: Split, threshold: usize) -> Option<f64> {
    let of_split: Vec<&DetectItem> = items.iter().filter(|i| i.split == split).collect();
    if of_split.is_empty() {
        return None;
    }
    let wrong = of_split
        .iter()
        .filter(|i| (i.defect_pixels > threshold) != i.ground_truth)
        .count();
    Some(100.0 * wrong as f64 / of_split.len() as f64)
}

pub fn run_detect(args: &DetectArgs) -> Result<()> {
    require_double(args.precision, "detect")?;
    let model = load_model(&args.model)?;
    let dataset = load_dataset(&args.manifest)?;
    if args.defect_class >= model.classes() {
        return Err(AppError::config(format!(
            "defect class {} out of range for {} classes",
            args.defect_class,
            model.classes()
        )));
    }

    let mut items = Vec::with_capacity(dataset.items.len());
    let mut rows = Vec::with_capacity(dataset.items.len());
    for item in &dataset.items {
        let pred = predict_labels(&model, &item.image)?;
        let defect_pixels = pred
            .labels()
            .iter()
            .filter(|&&l| l as usize == args.defect_class)
            .count();
        let ground_truth = item
            .labels
            .labels()
            .iter()
            .any(|&l| l as usize == args.defect_class);
        items.push(DetectItem {
            split: item.split,
            defect_pixels,
            ground_truth,
        });
        rows.push((item.id.clone(), item.split));
    }

    let threshold = match args.threshold {
        ThresholdArg::Fixed(t) => t,
        ThresholdArg::Auto => {
            if !items.iter().any(|i| i.split == Split::Validation) {
                return Err(AppError::config(
                    "threshold 'auto' needs validation items in the manifest",
                ));
            }
            let max_area = dataset
                .items
                .iter()
                .map(|i| i.image.rows() * i.image.cols())
                .max()
                .unwrap_or(1);
            let (min, max, step) = args.sweep.unwrap_or((0, max_area, (max_area / 100).max(1)));
            if step == 0 {
                return Err(AppError::config("sweep step must be positive"));
            }
            let mut best = (f64::INFINITY, min);
            let mut t = min;
            while t <= max {
                let err = detection_error_pct(&items, Split::Validation, t)
                    .expect("validation split checked above");
                if err < best.0 {
                    best = (err, t);
                }
                t += step;
            }
            best.1
        }
    };

    let val_error = detection_error_pct(&items, Split::Validation, threshold);
    let test_error = detection_error_pct(&items, Split::Test, threshold);

    let report_rows: Vec<DetectRow> = rows
        .iter()
        .zip(&items)
        .map(|((id, split), it)| DetectRow {
            id: id.clone(),
            split: split.as_str().to_string(),
            defect_pixels: it.defect_pixels,
            flagged: it.defect_pixels > threshold,
            ground_truth: it.ground_truth,
        })
        .collect();
    write_detect_report(&args.out, threshold, val_error, test_error, &report_rows)?;

    println!("threshold: {threshold}");
    if let Some(v) = val_error {
        println!("validation detection error: {v:.2}%");
    }
    if let Some(v) = test_error {
        println!("test detection error: {v:.2}%");
    }
    println!("report written to {}", args.out.display());
    Ok(())
}

pub struct EvalArgs {
    pub model: PathBuf,
    pub manifest: PathBuf,
    pub n_pos: usize,
    pub n_neg: usize,
    pub positive_class: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub precision: Precision,
}

pub fn run_eval(args: &EvalArgs) -> Result<EvalReport> {
    require_double(args.precision, "eval")?;
    let model = load_model(&args.model)?;
    let dataset = load_dataset(&args.manifest)?;
    let classes = model.classes();
    if args.positive_class >= classes {
        return Err(AppError::config(format!(
            "positive class {} out of range for {classes} classes",
            args.positive_class
        )));
    }

    // (true, predicted) for every test pixel, in deterministic order.
    let mut pos: Vec<(usize, usize)> = Vec::new();
    let mut neg: Vec<(usize, usize)> = Vec::new();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut any_test = false;
    for item in dataset.items_in(Split::Test) {
        any_test = true;
        let pred = predict_labels(&model, &item.image)?;
        for (t, p) in item.labels.labels().iter().zip(pred.labels()) {
            let (t, p) = (*t as usize, *p as usize);
            confusion[t][p] += 1;
            if t == args.positive_class {
                pos.push((t, p));
            } else {
                neg.push((t, p));
            }
        }
    }
    if !any_test {
        return Err(AppError::data("manifest has no test items"));
    }
    if pos.len() < args.n_pos || neg.len() < args.n_neg {
        return Err(AppError::data(format!(
            "need {} positive and {} negative test pixels, found {} and {}",
            args.n_pos,
            args.n_neg,
            pos.len(),
            neg.len()
        )));
    }

    let mut rng = SplitMix64::new(args.seed);
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);
    let wrong = pos[..args.n_pos]
        .iter()
        .chain(&neg[..args.n_neg])
        .filter(|(t, p)| t != p)
        .count();
    let balanced_error = wrong as f64 / (args.n_pos + args.n_neg) as f64;

    let report = EvalReport {
        balanced_error,
        n_pos: args.n_pos,
        n_neg: args.n_neg,
        positive_class: args.positive_class,
        seed: args.seed,
        confusion,
    };
    write_eval_report(&args.out, &report)?;
    println!(
        "balanced pixel error on {}+{} sampled test pixels: {:.2}%",
        args.n_pos,
        args.n_neg,
        100.0 * balanced_error
    );
    println!("report written to {}", args.out.display());
    Ok(report)
}

pub struct BenchArgs {
    pub model: PathBuf,
    pub size: usize,
    pub repeats: usize,
    pub seed: u64,
    pub precision: Precision,
    pub out: Option<PathBuf>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Run both modes at one scalar precision; returns (dense rate, patch rate)
/// in output pixels per second, after checking the two modes agree.
fn bench_at<S: Scalar>(
    model: &Model<S>,
    image: &Map<S>,
    repeats: usize,
    tolerance: f64,
) -> Result<(f64, f64)> {
    let plan = plan_geometry(&model.arch, image.rows(), image.cols()).map_err(core_data_err)?;
    let pixels = (image.rows() * image.cols()) as f64;

    // Correctness guard: the result being timed must match the oracle.
    let (dense_probs, _) = forward_dense(image, model, &plan).map_err(core_data_err)?;
    let patch_probs = dense_via_patches(image, model).map_err(core_data_err)?;
    let mut worst = 0.0f64;
    for (d, p) in dense_probs.iter().zip(&patch_probs) {
        for (a, b) in d.values().iter().zip(p.values()) {
            worst = worst.max((a.to_f64() - b.to_f64()).abs());
        }
    }
    if worst > tolerance {
        return Err(AppError::internal(format!(
            "dense and patch outputs disagree by {worst:e} (tolerance {tolerance:e})"
        )));
    }

    let mut dense_rates = Vec::with_capacity(repeats);
    let mut patch_rates = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        let _ = forward_dense(image, model, &plan).map_err(core_data_err)?;
        dense_rates.push(pixels / t0.elapsed().as_secs_f64());

        let t1 = Instant::now();
        let _ = dense_via_patches(image, model).map_err(core_data_err)?;
        patch_rates.push(pixels / t1.elapsed().as_secs_f64());
    }
    Ok((median(dense_rates), median(patch_rates)))
}

pub fn run_bench(args: &BenchArgs) -> Result<BenchReport> {
    let model = load_model(&args.model)?;
    if args.size < model.arch.window_rows || args.size < model.arch.window_cols {
        return Err(AppError::config(format!(
            "image size {} smaller than the {}x{} window",
            args.size, model.arch.window_rows, model.arch.window_cols
        )));
    }
    if args.repeats == 0 {
        return Err(AppError::config("repeats must be >= 1"));
    }
    let mut rng = SplitMix64::new(args.seed);
    let image = Map::from_fn(args.size, args.size, |_, _| rng.next_f64());

    let (dense_rate, patch_rate) = match args.precision {
        Precision::Double => bench_at(&model, &image, args.repeats, 1e-10)?,
        Precision::Single => {
            let model32: Model<f32> = model.convert();
            let image32: Map<f32> = image.convert();
            bench_at(&model32, &image32, args.repeats, 2e-4)?
        }
    };

    let report = BenchReport {
        dense_patches_per_sec: dense_rate,
        patch_mode_patches_per_sec: patch_rate,
        speedup_factor: dense_rate / patch_rate,
        image_rows: args.size,
        image_cols: args.size,
        arch_id: arch_id(&model.arch),
        precision: match args.precision {
            Precision::Double => "double".into(),
            Precision::Single => "single".into(),
        },
    };
    print!("{}", bench_table(&report));
    if let Some(out) = &args.out {
        write_bench_report(out, &report)?;
        println!("report written to {}", out.display());
    }
    Ok(report)
}

pub struct SynthArgs {
    pub out_dir: PathBuf,
    pub images: usize,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

/// Generate the synthetic two-texture dataset on disk: images as 16-bit
/// PNGs, labels as 8-bit PNGs, plus `manifest.csv`.
pub fn run_synth(args: &SynthArgs) -> Result<()> {
    let dataset = synth_texture_dataset(args.images, args.rows, args.cols, args.seed)
        .map_err(core_config_err)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| AppError::data(format!("{}: {e}", args.out_dir.display())))?;

    let mut entries = Vec::with_capacity(dataset.items.len());
    for item in &dataset.items {
        let image_path = args.out_dir.join(format!("{}.png", item.id));
        let label_path = args.out_dir.join(format!("{}_labels.png", item.id));
        save_map_png16(&image_path, &item.image)?;
        save_labels_png8(&label_path, &item.labels)?;
        entries.push(ManifestEntry {
            id: item.id.clone(),
            image_path,
            label_path: Some(label_path),
            split: item.split,
        });
    }
    let manifest_path = args.out_dir.join("manifest.csv");
    write_manifest(&manifest_path, &entries)?;
    let (n_train, n_val, n_test) = (
        dataset.items_in(Split::Train).count(),
        dataset.items_in(Split::Validation).count(),
        dataset.items_in(Split::Test).count(),
    );
    println!(
        "wrote {} images ({n_train} train / {n_val} validation / {n_test} test) to {}",
        dataset.items.len(),
        args.out_dir.display()
    );
    println!("manifest written to {}", manifest_path.display());
    Ok(())
}

/// Parse `--class-weights auto|w0,w1,...`.
pub fn parse_class_weights(s: &str) -> Result<ClassWeightSpec> {
    if s == "auto" {
        return Ok(ClassWeightSpec::Auto);
    }
    let weights = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| AppError::config(format!("bad class weights '{s}'")))?;
    Ok(ClassWeightSpec::Explicit(weights))
}

/// Parse `--sweep min,max,step`.
pub fn parse_sweep(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(AppError::config("sweep takes min,max,step"));
    }
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| AppError::config(format!("bad sweep value '{t}'")))
    };
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}
